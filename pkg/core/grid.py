import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from config import Config
from core.exceptions import ConfigurationError, DataError
from utils.logger import get_logger
from utils.utils import aligned_cell_count

logger = get_logger(__name__)


@dataclass(frozen=True)
class Grid:
    """
    一様な空間格子。セル j は [x_left + jΔx, x_left + (j+1)Δx] を占める。

    Attributes:
        x_left (float): 領域の左端。
        x_right (float): 領域の右端。
        dx (float): セル幅 Δx。
        n_cells (int): セル数。
    """
    x_left: float
    x_right: float
    dx: float
    n_cells: int

    @property
    def cell_centers(self) -> np.ndarray:
        return self.x_left + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def interfaces(self) -> np.ndarray:
        return self.x_left + np.arange(self.n_cells + 1) * self.dx

    def cell_range(self, start: float, end: float, what: str = "区間") -> range:
        """
        格子に揃った区間 [start, end] を占めるセル番号の範囲。

        Raises:
            ConfigurationError: 区間が領域外、空、または端点が格子に揃っていない場合。
        """
        if not self.x_left <= start < end <= self.x_right:
            raise ConfigurationError(f"{what}: 区間 [{start}, {end}] が領域 [{self.x_left}, {self.x_right}] 内の空でない区間ではありません。")
        first = aligned_cell_count(start - self.x_left, self.dx, f"{what}[0]")
        last = aligned_cell_count(end - self.x_left, self.dx, f"{what}[1]")
        return range(first, last)

    def is_compatible(self, other: "Grid") -> bool:
        """2つの格子が同じセルを持つかどうか。"""
        return (
            self.n_cells == other.n_cells
            and math.isclose(self.x_left, other.x_left, abs_tol=1e-12)
            and math.isclose(self.dx, other.dx, rel_tol=1e-12)
        )


@dataclass(frozen=True, eq=False)
class RampGeometry:
    """
    オンランプ・オフランプの位置と離散指示関数。

    Attributes:
        on_start, on_end, off_start, off_end (float): ランプ端点。ランプが無い場合は nan。
        ramp_length (float): ランプ長 L。ランプが無い場合は inf。
        on_cells, off_cells (range): Ω_on^k, Ω_off^k に対応するセル番号の範囲。
        indicator_on, indicator_off (np.ndarray): 1_on,j, 1_off,j (単位 1/長さ)。
    """
    on_start: float
    on_end: float
    off_start: float
    off_end: float
    ramp_length: float
    on_cells: range
    off_cells: range
    indicator_on: np.ndarray
    indicator_off: np.ndarray

    def __post_init__(self):
        self.indicator_on.setflags(write=False)
        self.indicator_off.setflags(write=False)

    @property
    def has_ramps(self) -> bool:
        return len(self.on_cells) > 0 or len(self.off_cells) > 0

    @classmethod
    def empty(cls, grid: Grid) -> "RampGeometry":
        """ランプの無い幾何 (指示関数はすべて 0)。"""
        zeros = np.zeros(grid.n_cells)
        return cls(
            on_start=math.nan, on_end=math.nan, off_start=math.nan, off_end=math.nan,
            ramp_length=math.inf, on_cells=range(0), off_cells=range(0),
            indicator_on=zeros.copy(), indicator_off=zeros.copy(),
        )


@dataclass(frozen=True, eq=False)
class RateSchedule:
    """
    ランプの流入・流出率 q(t) のスケジュール。

    kind:
        constant   : q(t) = amplitude
        sinusoidal : q(t) = amplitude·(sin(πt) + 1)/2
        tabulated  : (times, values) の区分線形補間 (範囲外は端の値)
    """
    kind: str
    amplitude: float = 0.0
    times: Tuple[float, ...] = ()
    values: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in Config.VALID_RATE_KINDS:
            raise ConfigurationError(f"未知のレートスケジュール: {self.kind!r}")
        if self.kind == "tabulated":
            times = np.asarray(self.times, dtype=float)
            values = np.asarray(self.values, dtype=float)
            if times.size < 1 or times.shape != values.shape:
                raise ConfigurationError("tabulated スケジュールの times と values の長さが一致しません。")
            if np.any(np.diff(times) <= 0):
                raise ConfigurationError("tabulated スケジュールの times は狭義単調増加である必要があります。")
            if np.any(values < 0):
                raise ConfigurationError("レートは非負である必要があります。")
        elif self.amplitude < 0:
            raise ConfigurationError(Config._RANGE_ERROR_MESSAGE.format(what="rate", value=self.amplitude, interval="[0, ∞)"))

    @classmethod
    def constant(cls, value: float) -> "RateSchedule":
        return cls(kind="constant", amplitude=float(value))

    @classmethod
    def sinusoidal(cls, amplitude: float) -> "RateSchedule":
        return cls(kind="sinusoidal", amplitude=float(amplitude))

    @classmethod
    def tabulated(cls, times: Sequence[float], values: Sequence[float]) -> "RateSchedule":
        return cls(kind="tabulated", times=tuple(float(t) for t in times), values=tuple(float(v) for v in values))

    def value(self, t: float) -> float:
        if self.kind == "constant":
            return self.amplitude
        if self.kind == "sinusoidal":
            return self.amplitude * 0.5 * (math.sin(math.pi * t) + 1.0)
        return float(np.interp(t, self.times, self.values))

    def integral(self, t0: float, t1: float) -> float:
        """∫_{t0}^{t1} q(t) dt (constant / sinusoidal は閉形式、tabulated は折れ点での台形則)。"""
        if self.kind == "constant":
            return self.amplitude * (t1 - t0)
        if self.kind == "sinusoidal":
            return 0.5 * self.amplitude * ((t1 - t0) - (math.cos(math.pi * t1) - math.cos(math.pi * t0)) / math.pi)
        times = np.asarray(self.times)
        inner = times[(times > t0) & (times < t1)]
        nodes = np.concatenate(([t0], inner, [t1]))
        vals = np.interp(nodes, self.times, self.values)
        return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(nodes)))

    def average(self, t0: float, t1: float) -> float:
        """q^{n+1/2} = (1/Δt) ∫_{t^n}^{t^{n+1}} q(t) dt"""
        return self.integral(t0, t1) / (t1 - t0)

    def sup_norm(self, final_time: float) -> float:
        """‖q‖_{L∞([0, T])}"""
        if self.kind == "constant":
            return self.amplitude
        if self.kind == "sinusoidal":
            if final_time >= 0.5:
                return self.amplitude
            return self.value(final_time)
        times = np.asarray(self.times)
        nodes = np.concatenate(([0.0], times[(times > 0) & (times < final_time)], [final_time]))
        return float(np.max(np.interp(nodes, self.times, self.values)))

    def scaled(self, factor: float) -> "RateSchedule":
        """q(t) を factor 倍したスケジュール。"""
        if self.kind == "tabulated":
            return RateSchedule.tabulated(self.times, [factor * v for v in self.values])
        return RateSchedule(kind=self.kind, amplitude=factor * self.amplitude)

    def l1_norm(self, t: float) -> float:
        """‖q‖_{L1([0, t])} (q ≥ 0 なので積分に等しい)。"""
        return self.integral(0.0, t)

    def to_dict(self) -> dict:
        if self.kind == "tabulated":
            return {"kind": self.kind, "times": list(self.times), "values": list(self.values)}
        return {"kind": self.kind, "value": self.amplitude}


@dataclass(frozen=True, eq=False)
class RampRates:
    """q_on(t), q_off(t) の組。"""
    q_on: RateSchedule
    q_off: RateSchedule

    @classmethod
    def zero(cls) -> "RampRates":
        return cls(q_on=RateSchedule.constant(0.0), q_off=RateSchedule.constant(0.0))

    def averages(self, t0: float, t1: float) -> Tuple[float, float]:
        return self.q_on.average(t0, t1), self.q_off.average(t0, t1)

    def sup_norms(self, final_time: float) -> Tuple[float, float]:
        return self.q_on.sup_norm(final_time), self.q_off.sup_norm(final_time)


@dataclass(eq=False)
class DensityField:
    """
    ある時刻におけるセル平均密度 ρ_j (ρ_max = 1 に正規化)。ゴーストセルは含まない。
    """
    values: np.ndarray
    time: float

    def copy(self) -> "DensityField":
        return DensityField(values=self.values.copy(), time=self.time)


@dataclass(frozen=True, eq=False)
class InitialDatum:
    """
    初期データ ρ_0 の指定。

    kind:
        constant : value
        step     : x ≤ position で left、x > position で right
        bump     : center を中心とする幅 width の cos² 型の山 (高さ height)
        function : 任意の呼び出し可能オブジェクト func (中点則で射影)
    """
    kind: str
    value: float = 0.0
    left: float = 0.0
    right: float = 0.0
    position: float = 0.0
    center: float = 0.0
    width: float = 0.0
    height: float = 0.0
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @classmethod
    def constant(cls, value: float) -> "InitialDatum":
        return cls(kind="constant", value=float(value))

    @classmethod
    def step(cls, left: float, right: float, position: float) -> "InitialDatum":
        return cls(kind="step", left=float(left), right=float(right), position=float(position))

    @classmethod
    def bump(cls, center: float, width: float, height: float) -> "InitialDatum":
        return cls(kind="bump", center=float(center), width=float(width), height=float(height))

    @classmethod
    def function(cls, func: Callable[[np.ndarray], np.ndarray]) -> "InitialDatum":
        return cls(kind="function", func=func)

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "step":
            return {"kind": "step", "left": self.left, "right": self.right, "position": self.position}
        if self.kind == "bump":
            return {"kind": "bump", "center": self.center, "width": self.width, "height": self.height}
        return {"kind": "function"}


@dataclass(frozen=True)
class BoundaryPolicy:
    """
    ゴーストセルの埋め方。各辺で outflow (定数外挿), dirichlet (固定値), periodic (両辺のみ) を選ぶ。
    """
    left: str = "outflow"
    right: str = "outflow"
    left_value: float = 0.0
    right_value: float = 0.0

    def __post_init__(self):
        for side, kind in (("left", self.left), ("right", self.right)):
            if kind not in Config.VALID_BOUNDARY_KINDS:
                raise ConfigurationError(f"boundary.{side}: 未知の境界条件 {kind!r}")
        if (self.left == "periodic") != (self.right == "periodic"):
            raise ConfigurationError("boundary: periodic は左右両方に指定する必要があります。")
        for side, value in (("left_value", self.left_value), ("right_value", self.right_value)):
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(Config._RANGE_ERROR_MESSAGE.format(what=f"boundary.{side}", value=value, interval="[0, 1]"))

    @property
    def is_periodic(self) -> bool:
        return self.left == "periodic"

    def pad(self, values: np.ndarray, n_left: int, n_right: int) -> np.ndarray:
        """
        ゴーストセルを付加した配列を返す。

        Args:
            values (np.ndarray): 内部セルの値。
            n_left (int): 左側ゴースト数。
            n_right (int): 右側ゴースト数。

        Returns:
            np.ndarray: 長さ n_left + len(values) + n_right の配列。
        """
        if self.is_periodic:
            return np.pad(values, (n_left, n_right), mode="wrap")
        left_fill = values[0] if self.left == "outflow" else self.left_value
        right_fill = values[-1] if self.right == "outflow" else self.right_value
        return np.concatenate((np.full(n_left, left_fill), values, np.full(n_right, right_fill)))

    def boundary_jumps(self, values: np.ndarray) -> float:
        """Dirichlet ゴースト値と端のセルの間の跳びの大きさの和。"""
        jumps = 0.0
        if self.left == "dirichlet":
            jumps += abs(values[0] - self.left_value)
        if self.right == "dirichlet":
            jumps += abs(values[-1] - self.right_value)
        return jumps

    def to_dict(self) -> dict:
        return {"left": self.left, "right": self.right, "left_value": self.left_value, "right_value": self.right_value}


class GridBuilder:
    """
    格子、ランプ幾何、初期データのセル平均を構築するクラス。
    """

    @staticmethod
    def build_grid(x_left: float, x_right: float, dx: float) -> Grid:
        """
        一様格子を構築する。

        Args:
            x_left (float): 左端。
            x_right (float): 右端。
            dx (float): セル幅。

        Returns:
            Grid: 構築された格子。

        Raises:
            ConfigurationError: x_left ≥ x_right, dx ≤ 0, または幅が dx で割り切れない場合。
        """
        if not x_left < x_right:
            raise ConfigurationError(f"domain: x_left ({x_left}) < x_right ({x_right}) である必要があります。")
        if not dx > 0:
            raise ConfigurationError(Config._RANGE_ERROR_MESSAGE.format(what="domain.dx", value=dx, interval="(0, ∞)"))
        n_cells = aligned_cell_count(x_right - x_left, dx, "domain.x_right - domain.x_left")
        logger.debug(f"格子を構築: [{x_left}, {x_right}], dx={dx}, セル数={n_cells}")
        return Grid(x_left=float(x_left), x_right=float(x_right), dx=float(dx), n_cells=n_cells)

    @staticmethod
    def _ramp_cells(grid: Grid, interval: Sequence[float], ell: int, label: str) -> range:
        start, end = float(interval[0]), float(interval[1])
        if start < grid.x_left or end > grid.x_right:
            raise ConfigurationError(f"ramps.{label}: 区間 [{start}, {end}] が領域 [{grid.x_left}, {grid.x_right}] の外にあります。")
        first = aligned_cell_count(start - grid.x_left, grid.dx, f"ramps.{label}[0]")
        last = aligned_cell_count(end - grid.x_left, grid.dx, f"ramps.{label}[1]")
        if last - first != ell:
            raise ConfigurationError(f"ramps.{label}: 区間の長さ {end - start} がランプ長と一致しません。")
        return range(first, last)

    @staticmethod
    def build_ramps(
            grid: Grid,
            on_interval: Optional[Sequence[float]],
            off_interval: Optional[Sequence[float]],
            ramp_length: float,
    ) -> RampGeometry:
        """
        オン・オフランプの幾何と離散指示関数を構築する。

        Args:
            grid (Grid): 格子。
            on_interval (Sequence[float], optional): オンランプ区間 [x_on_lo, x_on_hi]。
            off_interval (Sequence[float], optional): オフランプ区間 [x_off_lo, x_off_hi]。
            ramp_length (float): ランプ長 L (= ℓΔx)。

        Returns:
            RampGeometry: 指示関数は ランプ上で 1/L、それ以外で 0。

        Raises:
            ConfigurationError: 格子に揃っていない、領域外、またはオン・オフランプが重なる場合。
        """
        if on_interval is None and off_interval is None:
            return RampGeometry.empty(grid)
        if not ramp_length > 0:
            raise ConfigurationError(Config._RANGE_ERROR_MESSAGE.format(what="ramps.length", value=ramp_length, interval="(0, ∞)"))
        ell = aligned_cell_count(ramp_length, grid.dx, "ramps.length")
        if ell < 1:
            raise ConfigurationError(Config._ALIGNMENT_ERROR_MESSAGE.format(what="ramps.length", value=ramp_length, dx=grid.dx))

        on_cells = GridBuilder._ramp_cells(grid, on_interval, ell, "on") if on_interval is not None else range(0)
        off_cells = GridBuilder._ramp_cells(grid, off_interval, ell, "off") if off_interval is not None else range(0)
        if set(on_cells) & set(off_cells):
            raise ConfigurationError("ramps: オンランプとオフランプが重なっています。")

        indicator_on = np.zeros(grid.n_cells)
        indicator_off = np.zeros(grid.n_cells)
        indicator_on[on_cells.start:on_cells.stop] = 1.0 / ramp_length
        indicator_off[off_cells.start:off_cells.stop] = 1.0 / ramp_length
        logger.debug(f"ランプ: on セル {on_cells}, off セル {off_cells}, ℓ={ell}")

        def _endpoints(interval):
            return (float(interval[0]), float(interval[1])) if interval is not None else (math.nan, math.nan)

        on_start, on_end = _endpoints(on_interval)
        off_start, off_end = _endpoints(off_interval)
        return RampGeometry(
            on_start=on_start, on_end=on_end, off_start=off_start, off_end=off_end,
            ramp_length=float(ramp_length), on_cells=on_cells, off_cells=off_cells,
            indicator_on=indicator_on, indicator_off=indicator_off,
        )

    @staticmethod
    def project_initial_datum(datum: InitialDatum, grid: Grid) -> DensityField:
        """
        ρ_j^0 = (1/Δx) ∫ ρ_0(x) dx を計算する。定数・段差・山型は厳密、関数は中点則。

        Args:
            datum (InitialDatum): 初期データの指定。
            grid (Grid): 格子。

        Returns:
            DensityField: 時刻 0 のセル平均。

        Raises:
            DataError: ρ_0 が [0, 1] の外の値をとる場合。
        """
        def _check(name, value):
            if not 0.0 <= value <= 1.0:
                raise DataError(Config._RANGE_ERROR_MESSAGE.format(what=f"initial.{name}", value=value, interval="[0, 1]"))

        if datum.kind == "constant":
            _check("value", datum.value)
            values = np.full(grid.n_cells, datum.value)
        elif datum.kind == "step":
            _check("left", datum.left)
            _check("right", datum.right)
            edges = grid.interfaces
            left_fraction = np.clip((datum.position - edges[:-1]) / grid.dx, 0.0, 1.0)
            values = datum.left * left_fraction + datum.right * (1.0 - left_fraction)
        elif datum.kind == "bump":
            _check("height", datum.height)
            if not datum.width > 0:
                raise DataError(Config._RANGE_ERROR_MESSAGE.format(what="initial.width", value=datum.width, interval="(0, ∞)"))
            half = 0.5 * datum.width
            s = np.clip(grid.interfaces - datum.center, -half, half)
            antiderivative = datum.height * (0.5 * s + datum.width / (4.0 * math.pi) * np.sin(2.0 * math.pi * s / datum.width))
            values = np.diff(antiderivative) / grid.dx
        elif datum.kind == "function":
            values = np.asarray(datum.func(grid.cell_centers), dtype=float)
            if values.shape != (grid.n_cells,):
                values = np.array([float(datum.func(x)) for x in grid.cell_centers])
            if np.any(values < 0.0) or np.any(values > 1.0):
                raise DataError(Config._RANGE_ERROR_MESSAGE.format(what="initial", value=(values.min(), values.max()), interval="[0, 1]"))
        else:
            raise DataError(f"未知の初期データ: {datum.kind!r}")

        return DensityField(values=values, time=0.0)
