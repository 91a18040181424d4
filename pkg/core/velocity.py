from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from config import Config
from core.exceptions import ConfigurationError
from utils.logger import get_logger

logger = get_logger(__name__)

_SAMPLE_POINTS = 20001


@dataclass(frozen=True, eq=False)
class VelocityLaw:
    """
    速度関数 v(ρ)。引数は [0, 1] に切り詰めてから評価するため、v は ℝ から [0, 1] への写像になる。

    kind:
        affine    : v(ρ) = v_max (1 - ρ)
        tabulated : (densities, values) を単調 PCHIP 補間
    """
    kind: str = "affine"
    v_max: float = 1.0
    densities: Tuple[float, ...] = ()
    values: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in Config.VALID_VELOCITY_KINDS:
            raise ConfigurationError(f"velocity.kind: 未知の速度関数 {self.kind!r}")
        if self.kind == "affine":
            if not 0.0 < self.v_max <= 1.0:
                raise ConfigurationError(Config._RANGE_ERROR_MESSAGE.format(what="velocity.v_max", value=self.v_max, interval="(0, 1]"))
            return
        rho = np.asarray(self.densities, dtype=float)
        vel = np.asarray(self.values, dtype=float)
        if rho.size < 2 or rho.shape != vel.shape:
            raise ConfigurationError("velocity: densities と values は同じ長さ (2 以上) である必要があります。")
        if not (np.isclose(rho[0], 0.0) and np.isclose(rho[-1], 1.0)) or np.any(np.diff(rho) <= 0):
            raise ConfigurationError("velocity.densities は 0 から 1 までの狭義単調増加列である必要があります。")
        if np.any(np.diff(vel) > 0):
            raise ConfigurationError("velocity.values は非増加である必要があります (v' ≤ 0)。")
        if np.any(vel < 0) or np.any(vel > 1):
            raise ConfigurationError("velocity.values は [0, 1] に含まれる必要があります。")
        if not np.any(vel > 0):
            raise ConfigurationError("velocity: ‖v‖∞ > 0 である必要があります。")

    @classmethod
    def affine(cls, v_max: float = 1.0) -> "VelocityLaw":
        return cls(kind="affine", v_max=float(v_max))

    @classmethod
    def tabulated(cls, densities, values) -> "VelocityLaw":
        return cls(kind="tabulated", densities=tuple(float(r) for r in densities), values=tuple(float(v) for v in values))

    @cached_property
    def _interpolant(self) -> PchipInterpolator:
        return PchipInterpolator(np.asarray(self.densities), np.asarray(self.values), extrapolate=False)

    def __call__(self, rho):
        r = np.clip(np.asarray(rho, dtype=float), 0.0, 1.0)
        if self.kind == "affine":
            out = self.v_max * (1.0 - r)
        else:
            out = np.clip(self._interpolant(r), 0.0, 1.0)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, rho, order: int = 1):
        r = np.clip(np.asarray(rho, dtype=float), 0.0, 1.0)
        if self.kind == "affine":
            out = np.full_like(r, -self.v_max if order == 1 else 0.0)
        else:
            out = self._interpolant.derivative(order)(r)
        return float(out) if np.ndim(out) == 0 else out

    def flux(self, rho):
        """f(ρ) = ρ v(ρ)"""
        return np.asarray(rho, dtype=float) * self(rho)

    @cached_property
    def _samples(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, _SAMPLE_POINTS)

    @cached_property
    def sup_norm(self) -> float:
        """‖v‖∞ on [0, 1]"""
        if self.kind == "affine":
            return self.v_max
        return float(np.max(np.abs(self(self._samples))))

    @cached_property
    def derivative_sup_norm(self) -> float:
        """‖v'‖∞ on [0, 1]"""
        if self.kind == "affine":
            return self.v_max
        return float(np.max(np.abs(self.derivative(self._samples, 1))))

    @cached_property
    def second_derivative_sup_norm(self) -> float:
        """‖v''‖∞ on [0, 1]"""
        if self.kind == "affine":
            return 0.0
        return float(np.max(np.abs(self.derivative(self._samples, 2))))

    @cached_property
    def flux_maximizer(self) -> float:
        """f(ρ) = ρv(ρ) の最大点 ρ*。"""
        if self.kind == "affine":
            return 0.5
        return float(self._samples[np.argmax(self.flux(self._samples))])

    @cached_property
    def max_flux_slope(self) -> float:
        """max |f'(ρ)| on [0, 1]"""
        if self.kind == "affine":
            return self.v_max
        s = self._samples
        slope = self(s) + s * self.derivative(s, 1)
        return float(np.max(np.abs(slope)))

    def to_dict(self) -> dict:
        if self.kind == "affine":
            return {"kind": "affine", "v_max": self.v_max}
        return {"kind": "tabulated", "densities": list(self.densities), "values": list(self.values)}
