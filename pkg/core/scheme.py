import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import TYPE_CHECKING, Callable, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from config import Config
from core.exceptions import ConfigurationError, SchemeInvariantError
from core.grid import (
    BoundaryPolicy,
    DensityField,
    Grid,
    GridBuilder,
    InitialDatum,
    RampGeometry,
    RampRates,
)
from core.kernels import KernelParams, KernelWeights, NonlocalKernels
from core.velocity import VelocityLaw
from utils.logger import get_logger

if TYPE_CHECKING:
    from core.diagnostics import DiagnosticsReport

logger = get_logger(__name__)


class ModelVariant(IntEnum):
    """オンランプ源項 S_on の種類。"""
    MODEL0 = 0
    MODEL1 = 1
    MODEL2 = 2

    @classmethod
    def parse(cls, value: Union[int, str, "ModelVariant"]) -> "ModelVariant":
        """0 / "1" / "model2" / ModelVariant を受け付ける。"""
        if isinstance(value, ModelVariant):
            return value
        text = str(value).strip().lower()
        if text.startswith("model"):
            text = text[len("model"):]
        try:
            return cls(int(text))
        except ValueError as e:
            raise ConfigurationError(f"models: 未知のモデル {value!r} (0, 1, 2 のいずれか)") from e

    @property
    def label(self) -> str:
        return f"model{int(self)}"

    @property
    def has_max_principle(self) -> bool:
        return self is not ModelVariant.MODEL0


@dataclass(frozen=True, eq=False)
class ModelConfig:
    """
    1 回の非局所シミュレーションに必要なすべての構成要素。
    """
    grid: Grid
    kernel: KernelParams
    velocity: VelocityLaw
    variant: ModelVariant
    ramps: RampGeometry
    rates: RampRates
    boundary: BoundaryPolicy
    initial: InitialDatum
    final_time: float
    output_times: Tuple[float, ...] = ()
    cfl_safety: float = Config.CFL_SAFETY
    strict_max_principle: bool = True
    name: str = "run"

    def __post_init__(self):
        if self.final_time < 0:
            raise ConfigurationError(Config._RANGE_ERROR_MESSAGE.format(what="time.final", value=self.final_time, interval="[0, ∞)"))
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ConfigurationError(Config._RANGE_ERROR_MESSAGE.format(what="numerics.cfl_safety", value=self.cfl_safety, interval="(0, 1]"))
        outputs = self.output_times or (self.final_time,)
        if any(t < 0 or t > self.final_time * (1 + 1e-12) for t in outputs):
            raise ConfigurationError(f"time.outputs: 出力時刻 {list(outputs)} は [0, {self.final_time}] に含まれる必要があります。")
        object.__setattr__(self, "output_times", tuple(sorted(float(t) for t in outputs)))

    def with_variant(self, variant: ModelVariant) -> "ModelConfig":
        return replace(self, variant=ModelVariant.parse(variant))


@dataclass
class SchemeState:
    """
    時間発展の状態。

    Attributes:
        field (DensityField): 現在の密度 ρ^n (時刻 t^n を含む)。
        halfstep (np.ndarray, optional): 直前のステップの ρ^{n+1/2}。
        step (int): ステップ番号 n。
    """
    field: DensityField
    halfstep: Optional[np.ndarray] = None
    step: int = 0

    @property
    def time(self) -> float:
        return self.field.time


@dataclass(frozen=True, eq=False)
class PaddedField:
    """ゴーストセル付きの配列。values[n_left : n_left + n_cells] が内部セル。"""
    values: np.ndarray
    n_left: int
    n_cells: int

    @property
    def n_right(self) -> int:
        return len(self.values) - self.n_left - self.n_cells

    @property
    def interior(self) -> np.ndarray:
        return self.values[self.n_left:self.n_left + self.n_cells]


@dataclass(eq=False)
class StepRecord:
    """
    1 ステップ分の中間量。診断 (質量収支、エントロピー残差) に使う。

    Attributes:
        step (int): 更新後のステップ番号 n+1。
        time (float): 更新後の時刻 t^{n+1}。
        dt (float): Δt。
        lam (float): λ = Δt/Δx。
        rho_prev (np.ndarray): ρ^n。
        rho_left (float): 左ゴースト ρ_{-1}^n。
        r_flux (np.ndarray, optional): R_{j+1/2}^n, j = -1..n-1 (局所スキームでは None)。
        fluxes (np.ndarray): 数値流束 F_{j+1/2}, j = -1..n-1。
        halfstep (np.ndarray): ρ^{n+1/2}。
        r_on (np.ndarray, optional): R_on,j^{n+1/2} (局所スキームでは None)。
        s_on, s_off (np.ndarray): 源項。
        rho_next (np.ndarray): ρ^{n+1}。
        q_on, q_off (float): 時間平均レート q^{n+1/2}。
    """
    step: int
    time: float
    dt: float
    lam: float
    rho_prev: np.ndarray
    rho_left: float
    r_flux: Optional[np.ndarray]
    fluxes: np.ndarray
    halfstep: np.ndarray
    r_on: Optional[np.ndarray]
    s_on: np.ndarray
    s_off: np.ndarray
    rho_next: np.ndarray
    q_on: float
    q_off: float


@dataclass(eq=False)
class Trajectory:
    """
    出力時刻ごとのスナップショットと実行情報。

    Attributes:
        name (str): 実行名。
        label (str): モデル名 (model0/1/2 や local)。
        grid (Grid): 格子。
        snapshots (List[DensityField]): 出力時刻順のスナップショット。
        steps (int): 実行したステップ数。
        dt (float): CFL 条件から決まる Δt。
        report (Optional[DiagnosticsReport]): 診断レポート (無効時は None)。
    """
    name: str
    label: str
    grid: Grid
    snapshots: List[DensityField] = field(default_factory=list)
    steps: int = 0
    dt: float = math.nan
    report: Optional["DiagnosticsReport"] = None

    @property
    def times(self) -> List[float]:
        return [s.time for s in self.snapshots]

    def snapshot_at(self, time: float) -> DensityField:
        for snapshot in self.snapshots:
            if math.isclose(snapshot.time, time, rel_tol=1e-12, abs_tol=1e-12):
                return snapshot
        raise KeyError(f"時刻 {time} のスナップショットがありません: {self.times}")

    @property
    def final(self) -> DensityField:
        return self.snapshots[-1]


# ----------------------- Algorithm の各部品 -----------------------

def compute_cfl_dt(
        velocity: VelocityLaw,
        weights: KernelWeights,
        ramps: RampGeometry,
        rates: RampRates,
        dx: float,
        final_time: float,
        safety: float = Config.CFL_SAFETY,
) -> float:
    """
    Δt = safety · min{ Δx/(γ_0‖v'‖ + ‖v‖), L/(‖q_on‖ + ‖q_off‖) }

    q_on = q_off = 0 またはランプが無い場合、第2項は +∞ とみなす。

    Args:
        velocity (VelocityLaw): 速度関数。
        weights (KernelWeights): 離散重み (γ_0 を使う)。
        ramps (RampGeometry): ランプ幾何 (L を使う)。
        rates (RampRates): レート (‖q‖∞ on [0, T] を使う)。
        dx (float): 格子幅。
        final_time (float): 終了時刻 T。
        safety (float): 安全係数 (0, 1]。

    Returns:
        float: Δt
    """
    convective_bound = dx / (weights.convective[0] * velocity.derivative_sup_norm + velocity.sup_norm)
    q_on_sup, q_off_sup = rates.sup_norms(final_time)
    rate_sum = q_on_sup + q_off_sup
    if ramps.has_ramps and rate_sum > 0:
        source_bound = ramps.ramp_length / rate_sum
    else:
        source_bound = math.inf
    logger.debug(f"CFL: 対流項 {convective_bound:.6g}, 源項 {source_bound:.6g}, 安全係数 {safety}")
    return safety * min(convective_bound, source_bound)


def convolution_flux(padded: PaddedField, weights: KernelWeights) -> np.ndarray:
    """
    R_{j+1/2} = Σ_{p=0}^{N-1} γ_p ρ_{j+p+1}, j = -1..n-1。

    Args:
        padded (PaddedField): ゴースト付き ρ^n。
        weights (KernelWeights): 離散重み。

    Returns:
        np.ndarray: 長さ n+1 の R_{j+1/2}。

    Raises:
        SchemeInvariantError: ゴースト幅が不足する場合。
    """
    reach = weights.convective_reach
    if padded.n_left < 1 or padded.n_right < reach:
        raise SchemeInvariantError(
            Config._GHOST_WIDTH_ERROR_MESSAGE.format(needed=(1, reach), actual=(padded.n_left, padded.n_right))
        )
    averages = np.correlate(padded.values, weights.convective, mode="valid")
    return averages[padded.n_left:padded.n_left + padded.n_cells + 1]


def convolution_reactive(padded: PaddedField, weights: KernelWeights) -> np.ndarray:
    """
    R_on,j = Σ_h γ̂_h ρ_{j+h}, j = 0..n-1。

    Args:
        padded (PaddedField): ゴースト付き ρ^{n+1/2}。
        weights (KernelWeights): 離散重み。

    Returns:
        np.ndarray: 長さ n の R_on,j。

    Raises:
        SchemeInvariantError: ゴースト幅が不足する場合。
    """
    first, last = weights.first_reactive_offset, weights.last_reactive_offset
    if padded.n_left < -first or padded.n_right < last:
        raise SchemeInvariantError(
            Config._GHOST_WIDTH_ERROR_MESSAGE.format(needed=(-first, last), actual=(padded.n_left, padded.n_right))
        )
    averages = np.correlate(padded.values, weights.reactive, mode="valid")
    start = padded.n_left + first
    return averages[start:start + padded.n_cells]


def convective_step(padded: PaddedField, r_flux: np.ndarray, lam: float, velocity: VelocityLaw) -> Tuple[np.ndarray, np.ndarray]:
    """
    ρ_j^{n+1/2} = ρ_j^n - λ(ρ_j^n v(R_{j+1/2}) - ρ_{j-1}^n v(R_{j-1/2}))

    Args:
        padded (PaddedField): ゴースト付き ρ^n。
        r_flux (np.ndarray): R_{j+1/2}, j = -1..n-1。
        lam (float): λ = Δt/Δx。
        velocity (VelocityLaw): 速度関数。

    Returns:
        Tuple[np.ndarray, np.ndarray]: (ρ^{n+1/2}, 数値流束 F_{j+1/2}, j = -1..n-1)
    """
    upwind = padded.values[padded.n_left - 1:padded.n_left + padded.n_cells]
    fluxes = upwind * velocity(r_flux)
    halfstep = padded.interior - lam * (fluxes[1:] - fluxes[:-1])
    return halfstep, fluxes


def source_on(variant: ModelVariant, rho, r_on, indicator_on, q_on: float):
    """
    オンランプ源項 S_on,j。

    Model 0: 1_on q (1 - R_on)
    Model 1: 1_on q (1 - ρ)(1 - R_on)
    Model 2: 1_on q (1 - max{ρ, R_on})
    """
    rho = np.asarray(rho, dtype=float)
    r_on = np.asarray(r_on, dtype=float)
    if variant is ModelVariant.MODEL0:
        factor = 1.0 - r_on
    elif variant is ModelVariant.MODEL1:
        factor = (1.0 - rho) * (1.0 - r_on)
    else:
        factor = 1.0 - np.maximum(rho, r_on)
    return np.asarray(indicator_on) * q_on * factor


def source_off(rho, indicator_off, q_off: float):
    """オフランプ吸込み項 S_off,j = 1_off q_off ρ。"""
    return np.asarray(indicator_off) * q_off * np.asarray(rho, dtype=float)


def source_step(
        halfstep: np.ndarray,
        r_on: np.ndarray,
        ramps: RampGeometry,
        q_on: float,
        q_off: float,
        dt: float,
        variant: ModelVariant,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    ρ_j^{n+1} = ρ_j^{n+1/2} + Δt S_on,j - Δt S_off,j

    Args:
        halfstep (np.ndarray): ρ^{n+1/2}。
        r_on (np.ndarray): R_on^{n+1/2}。
        ramps (RampGeometry): 指示関数。
        q_on (float): q_on^{n+1/2}。
        q_off (float): q_off^{n+1/2}。
        dt (float): Δt。
        variant (ModelVariant): S_on の種類。

    Returns:
        Tuple[np.ndarray, np.ndarray, np.ndarray]: (ρ^{n+1}, S_on, S_off)
    """
    s_on = source_on(variant, halfstep, r_on, ramps.indicator_on, q_on)
    s_off = source_off(halfstep, ramps.indicator_off, q_off)
    return halfstep + dt * s_on - dt * s_off, s_on, s_off


# ----------------------- 時間発展 -----------------------

class SplittingScheme:
    """
    対流ステップの後に源項ステップを適用する演算子分割スキームの共通部分。
    サブクラスは time_step, _convective_half_step, _reactive_average を実装する。
    源項ステップは source_variant の S_on で source_step を適用する。
    """

    label = "splitting"
    source_variant = ModelVariant.MODEL1

    def __init__(self, grid: Grid, ramps: RampGeometry, rates: RampRates, boundary: BoundaryPolicy,
                 pad_left: int, pad_right: int, check_max_principle: bool = False):
        self.grid = grid
        self.ramps = ramps
        self.rates = rates
        self.boundary = boundary
        self.pad_left = pad_left
        self.pad_right = pad_right
        self.check_max_principle = check_max_principle
        self.logger = get_logger(type(self).__module__)

    @property
    def time_step(self) -> float:
        raise NotImplementedError

    def pad(self, values: np.ndarray) -> PaddedField:
        return PaddedField(self.boundary.pad(values, self.pad_left, self.pad_right), self.pad_left, self.grid.n_cells)

    def _convective_half_step(self, padded: PaddedField, lam: float) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        raise NotImplementedError

    def _reactive_average(self, halfstep: np.ndarray) -> Optional[np.ndarray]:
        """R_on^{n+1/2}。None なら局所源項 (R_on = 0)。"""
        raise NotImplementedError

    def advance(self, state: SchemeState, dt: Optional[float] = None) -> Tuple[SchemeState, StepRecord]:
        """
        1 ステップ進める: ゴースト埋め → 対流ステップ → 源項ステップ。

        Args:
            state (SchemeState): 現在の状態。
            dt (float, optional): 時間刻み. Defaults to None (CFL から決まる Δt)。

        Returns:
            Tuple[SchemeState, StepRecord]: 新しい状態と中間量。

        Raises:
            SchemeInvariantError: 最大値原理の検査が有効で、結果が [0, 1] から外れた場合。
        """
        dt = self.time_step if dt is None else dt
        t0 = state.time
        lam = dt / self.grid.dx
        rho = state.field.values

        padded = self.pad(rho)
        halfstep, fluxes, r_flux = self._convective_half_step(padded, lam)
        q_on, q_off = self.rates.averages(t0, t0 + dt)
        r_on = self._reactive_average(halfstep)
        rho_next, s_on, s_off = source_step(
            halfstep, np.zeros_like(halfstep) if r_on is None else r_on, self.ramps, q_on, q_off, dt, self.source_variant
        )

        step = state.step + 1
        if self.check_max_principle:
            self._assert_bounds(rho_next, step)

        record = StepRecord(
            step=step, time=t0 + dt, dt=dt, lam=lam, rho_prev=rho, rho_left=float(padded.values[padded.n_left - 1]),
            r_flux=r_flux, fluxes=fluxes, halfstep=halfstep, r_on=r_on, s_on=s_on, s_off=s_off,
            rho_next=rho_next, q_on=q_on, q_off=q_off,
        )
        new_state = SchemeState(field=DensityField(values=rho_next, time=t0 + dt), halfstep=halfstep, step=step)
        return new_state, record

    @staticmethod
    def _assert_bounds(values: np.ndarray, step: int):
        tol = Config.MAX_PRINCIPLE_TOL
        bad = np.flatnonzero((values < -tol) | (values > 1.0 + tol))
        if bad.size:
            cell = int(bad[0])
            raise SchemeInvariantError(
                Config._MAX_PRINCIPLE_ERROR_MESSAGE.format(step=step, cell=cell, value=float(values[cell])),
                step=step, cell=cell,
            )

    def run(
            self,
            initial: DensityField,
            output_times: Tuple[float, ...],
            observer: Optional[Callable[[StepRecord], None]] = None,
            progress: bool = False,
    ) -> Tuple[List[DensityField], int]:
        """
        各出力時刻にちょうど到達するよう最後の Δt を切り詰めながら時間発展する。

        Args:
            initial (DensityField): 初期状態。
            output_times (Tuple[float, ...]): 昇順の出力時刻。
            observer (Callable[[StepRecord], None], optional): 各ステップ後に呼ばれる関数。
            progress (bool): tqdm の進捗表示を出すかどうか。

        Returns:
            Tuple[List[DensityField], int]: (スナップショット, ステップ数)
        """
        state = SchemeState(field=initial.copy())
        snapshots: List[DensityField] = []
        dt_cfl = self.time_step
        final_time = output_times[-1] if output_times else 0.0

        with tqdm(total=final_time, disable=not progress, desc=self.label, unit="t",
                  bar_format="{l_bar}{bar}| {n:.3f}/{total:.3f}") as bar:
            for target in output_times:
                eps = 1e-12 * max(1.0, abs(target))
                while state.time < target - eps:
                    dt = dt_cfl
                    landing = state.time + dt >= target - eps
                    if landing:
                        dt = target - state.time
                    previous_time = state.time
                    state, record = self.advance(state, dt)
                    if landing:
                        state.field.time = target
                        record.time = target
                    if observer is not None:
                        observer(record)
                    bar.update(state.time - previous_time)
                snapshot = state.field.copy()
                snapshot.time = target
                snapshots.append(snapshot)
        return snapshots, state.step


class UpwindScheme(SplittingScheme):
    """
    非局所流束の風上型スキームとオンランプ/オフランプ源項の演算子分割。
    """

    def __init__(self, config: ModelConfig):
        self.config = config
        self.weights = NonlocalKernels.build_weights(config.kernel, config.grid.dx)
        pad_left = max(1, -self.weights.first_reactive_offset)
        pad_right = max(self.weights.convective_reach, self.weights.last_reactive_offset, 0)
        super().__init__(
            grid=config.grid, ramps=config.ramps, rates=config.rates, boundary=config.boundary,
            pad_left=pad_left, pad_right=pad_right,
            check_max_principle=config.strict_max_principle and config.variant.has_max_principle,
        )
        self.velocity = config.velocity
        self.variant = config.variant
        self.source_variant = config.variant
        self.label = config.variant.label
        self._dt = compute_cfl_dt(
            self.velocity, self.weights, config.ramps, config.rates, config.grid.dx, config.final_time, config.cfl_safety
        )
        self.logger.debug(f"{self.label}: Δt={self._dt:.6g}, ゴースト幅 ({pad_left}, {pad_right})")

    @property
    def time_step(self) -> float:
        return self._dt

    def initial_state(self) -> SchemeState:
        return SchemeState(field=GridBuilder.project_initial_datum(self.config.initial, self.grid))

    def _convective_half_step(self, padded, lam):
        r_flux = convolution_flux(padded, self.weights)
        halfstep, fluxes = convective_step(padded, r_flux, lam, self.velocity)
        return halfstep, fluxes, r_flux

    def _reactive_average(self, halfstep):
        return convolution_reactive(self.pad(halfstep), self.weights)


def advance(state: SchemeState, config: ModelConfig, dt: Optional[float] = None) -> SchemeState:
    """
    ModelConfig から UpwindScheme を構築して 1 ステップ進める。

    Args:
        state (SchemeState): 現在の状態。
        config (ModelConfig): 構成。
        dt (float, optional): 時間刻み. Defaults to None (CFL の Δt)。

    Returns:
        SchemeState: 時刻 t^{n+1} の状態。
    """
    new_state, _ = UpwindScheme(config).advance(state, dt)
    return new_state


def simulate(config: ModelConfig, diagnostics: bool = True, kappas: Optional[np.ndarray] = None,
             progress: bool = False) -> Trajectory:
    """
    出力時刻ごとのスナップショットと診断レポートを計算する。

    Args:
        config (ModelConfig): 検証済みの構成。
        diagnostics (bool): 診断を計算するかどうか。
        kappas (np.ndarray, optional): エントロピー検査の κ 格子 (Model 1 のみ使用)。
        progress (bool): 進捗表示。

    Returns:
        Trajectory: スナップショットと DiagnosticsReport。
    """
    scheme = UpwindScheme(config)
    initial = scheme.initial_state().field
    monitor = None
    if diagnostics:
        # 循環インポートを避けるため動的にインポート
        from core.diagnostics import DiagnosticsMonitor
        monitor = DiagnosticsMonitor.for_nonlocal(config, scheme, initial, kappas=kappas)

    logger.info(f"{config.name}/{scheme.label}: シミュレーション開始 (セル数 {config.grid.n_cells}, Δt={scheme.time_step:.6g}, T={config.final_time})")
    snapshots, steps = scheme.run(initial, config.output_times, observer=monitor.observe if monitor else None, progress=progress)
    logger.info(f"{config.name}/{scheme.label}: {steps} ステップで完了")

    return Trajectory(
        name=config.name, label=scheme.label, grid=config.grid, snapshots=snapshots, steps=steps,
        dt=scheme.time_step, report=monitor.report() if monitor else None,
    )
