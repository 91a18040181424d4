import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from config import Config
from core.exceptions import ConfigurationError, KernelDomainError
from utils.logger import get_logger
from utils.utils import aligned_cell_count

logger = get_logger(__name__)

ArrayLike = Union[float, np.ndarray]

# ∫_{-1}^{1} (1-u^2)^{5/2} du = 5π/16
_REACTIVE_NORMALIZATION = 16.0 / (5.0 * math.pi)


@dataclass(frozen=True)
class KernelParams:
    """
    非局所カーネルのパラメータ。

    Attributes:
        eta (float): カーネルの台の半径 η (長さ)。
        delta (float): 反応項カーネルのシフト δ (長さ)。
    """
    eta: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigurationError(Config._RANGE_ERROR_MESSAGE.format(what="kernel.eta", value=self.eta, interval="(0, ∞)"))
        if abs(self.delta) > self.eta * (1.0 + 1e-12):
            raise ConfigurationError(
                Config._RANGE_ERROR_MESSAGE.format(what="kernel.delta", value=self.delta, interval=f"[-{self.eta}, {self.eta}]")
            )

    @property
    def convective_peak(self) -> float:
        """ω_η(0) = 2/η"""
        return 2.0 / self.eta

    @property
    def convective_slope(self) -> float:
        """‖ω_η'‖∞ = 2/η²"""
        return 2.0 / self.eta ** 2


@dataclass(frozen=True, eq=False)
class KernelWeights:
    """
    セル積分された離散畳み込み重み。

    Attributes:
        convective (np.ndarray): γ_p, p = 0..N-1。
        reactive (np.ndarray): γ̂_h, h = first_reactive_offset..first_reactive_offset+len-1。
        first_reactive_offset (int): 反応項ステンシルの最初のオフセット。
    """
    convective: np.ndarray
    reactive: np.ndarray
    first_reactive_offset: int

    def __post_init__(self):
        self.convective.setflags(write=False)
        self.reactive.setflags(write=False)

    @property
    def convective_reach(self) -> int:
        return len(self.convective)

    @property
    def last_reactive_offset(self) -> int:
        return self.first_reactive_offset + len(self.reactive) - 1


class NonlocalKernels:
    """
    対流カーネル ω_η と反応カーネル ω_{η,δ} の評価と離散化を行うクラス。
    """

    @staticmethod
    def eval_convective_kernel(x: ArrayLike, params: KernelParams) -> ArrayLike:
        """
        ω_η(x) = 2(η - x)/η² を評価する。

        Args:
            x (float | np.ndarray): 評価点 (0 ≤ x ≤ η)。
            params (KernelParams): カーネルパラメータ。

        Returns:
            float | np.ndarray: カーネル値 (1/長さ)。

        Raises:
            KernelDomainError: x が [0, η] の外にある場合。
        """
        eta = params.eta
        x_arr = np.asarray(x, dtype=float)
        if np.any(x_arr < 0.0) or np.any(x_arr > eta):
            raise KernelDomainError(Config._RANGE_ERROR_MESSAGE.format(what="x", value=x, interval=f"[0, {eta}]"))
        values = 2.0 * (eta - x_arr) / eta ** 2
        return float(values) if values.ndim == 0 else values

    @staticmethod
    def eval_reactive_kernel(x: ArrayLike, params: KernelParams) -> ArrayLike:
        """
        ω_{η,δ}(x) = (1/η⁶)(16/(5π))(η² - (x-δ)²)^{5/2} を評価する。

        Args:
            x (float | np.ndarray): 評価点 (δ-η ≤ x ≤ δ+η)。
            params (KernelParams): カーネルパラメータ。

        Returns:
            float | np.ndarray: カーネル値 (1/長さ)。

        Raises:
            KernelDomainError: x が [δ-η, δ+η] の外にある場合。
        """
        eta, delta = params.eta, params.delta
        x_arr = np.asarray(x, dtype=float)
        slack = 1e-12 * eta
        if np.any(x_arr < delta - eta - slack) or np.any(x_arr > delta + eta + slack):
            raise KernelDomainError(
                Config._RANGE_ERROR_MESSAGE.format(what="x", value=x, interval=f"[{delta - eta}, {delta + eta}]")
            )
        values = NonlocalKernels._reactive_profile(x_arr, eta, delta)
        return float(values) if values.ndim == 0 else values

    @staticmethod
    def _reactive_profile(x: np.ndarray, eta: float, delta: float) -> np.ndarray:
        base = np.clip(eta ** 2 - (x - delta) ** 2, 0.0, None)
        return _REACTIVE_NORMALIZATION * base ** 2.5 / eta ** 6

    @staticmethod
    def discretize_convective_weights(params: KernelParams, dx: float) -> np.ndarray:
        """
        γ_p = ∫_{pΔx}^{(p+1)Δx} ω_η(s) ds を閉形式で計算し、和が 1 になるよう正規化する。

        Args:
            params (KernelParams): カーネルパラメータ。
            dx (float): 格子幅。

        Returns:
            np.ndarray: γ_0, ..., γ_{N-1} (N = η/Δx)。

        Raises:
            ConfigurationError: η が Δx の整数倍でない場合。
        """
        eta = params.eta
        n_weights = aligned_cell_count(eta, dx, "kernel.eta")
        if n_weights < 1:
            raise ConfigurationError(Config._ALIGNMENT_ERROR_MESSAGE.format(what="kernel.eta", value=eta, dx=dx))

        edges = np.arange(n_weights + 1, dtype=float) * dx
        antiderivative = (2.0 / eta ** 2) * (eta * edges - 0.5 * edges ** 2)
        weights = np.diff(antiderivative)
        logger.debug(f"対流重み: N={n_weights}, γ_0={weights[0]:.6g}, 正規化前の和={weights.sum():.17g}")
        return weights / weights.sum()

    @staticmethod
    def discretize_reactive_weights(params: KernelParams, dx: float, order: int = None) -> Tuple[np.ndarray, int]:
        """
        γ̂_h = ∫_{hΔx}^{(h+1)Δx} ω_{η,δ}(s) ds をセルごとの Gauss-Legendre 求積で計算し、正規化する。

        Args:
            params (KernelParams): カーネルパラメータ。
            dx (float): 格子幅。
            order (int, optional): 求積の次数. Defaults to None (Config.GAUSS_LEGENDRE_ORDER を使用).

        Returns:
            Tuple[np.ndarray, int]: (γ̂_h の配列, 最初のオフセット h = (δ-η)/Δx)。

        Raises:
            ConfigurationError: 台 [δ-η, δ+η] が格子に揃っていない場合。
        """
        quad_order = order if order is not None else Config.GAUSS_LEGENDRE_ORDER
        eta, delta = params.eta, params.delta
        first = aligned_cell_count(delta - eta, dx, "kernel.delta - kernel.eta")
        last = aligned_cell_count(delta + eta, dx, "kernel.delta + kernel.eta")
        if last <= first:
            raise ConfigurationError(Config._ALIGNMENT_ERROR_MESSAGE.format(what="kernel.eta", value=eta, dx=dx))

        nodes, node_weights = leggauss(quad_order)
        offsets = np.arange(first, last, dtype=float)[:, None]
        points = (offsets + 0.5 + 0.5 * nodes[None, :]) * dx
        cell_integrals = 0.5 * dx * (NonlocalKernels._reactive_profile(points, eta, delta) @ node_weights)
        logger.debug(
            f"反応重み: オフセット {first}..{last - 1}, 正規化前の和={cell_integrals.sum():.17g}"
        )
        return cell_integrals / cell_integrals.sum(), first

    @staticmethod
    def build_weights(params: KernelParams, dx: float, order: int = None) -> KernelWeights:
        """
        対流・反応の両方の重みをまとめて構築する。

        Args:
            params (KernelParams): カーネルパラメータ。
            dx (float): 格子幅。
            order (int, optional): 反応重みの求積次数。

        Returns:
            KernelWeights: 離散重み。
        """
        convective = NonlocalKernels.discretize_convective_weights(params, dx)
        reactive, first = NonlocalKernels.discretize_reactive_weights(params, dx, order)
        return KernelWeights(convective=convective, reactive=reactive, first_reactive_offset=first)
