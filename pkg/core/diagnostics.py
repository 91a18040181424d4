import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.integrate import quad

from config import Config
from core.exceptions import DataError
from core.grid import BoundaryPolicy, DensityField, GridBuilder, RampRates
from core.scheme import ModelConfig, ModelVariant, StepRecord, Trajectory, UpwindScheme
from core.velocity import VelocityLaw
from utils.logger import get_logger

logger = get_logger(__name__)

FieldLike = Union[DensityField, np.ndarray, Sequence[float]]


def _values(field_like: FieldLike) -> np.ndarray:
    if isinstance(field_like, DensityField):
        return field_like.values
    return np.asarray(field_like, dtype=float)


def _safe_exp(x: float) -> float:
    """e^x。オーバーフローは inf。"""
    with np.errstate(over="ignore"):
        return float(np.exp(float(x)))


def _grown(factor: float, amount: float) -> float:
    """factor · amount。amount = 0 なら factor = inf でも 0。"""
    if amount == 0.0:
        return 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.float64(factor) * np.float64(amount))


def l1_norm(field_like: FieldLike, dx: float) -> float:
    """Δx · Σ_j |ρ_j|"""
    return float(dx * np.sum(np.abs(_values(field_like))))


def l1_distance(field_a: FieldLike, field_b: FieldLike, dx: float) -> float:
    """
    Δx · Σ_j |ρ_j - ρ̃_j|

    Raises:
        DataError: 2つの場のセル数が異なる場合。
    """
    a, b = _values(field_a), _values(field_b)
    if a.shape != b.shape:
        raise DataError(f"格子が一致しません: {a.shape} と {b.shape}")
    return float(dx * np.sum(np.abs(a - b)))


def total_variation(field_like: FieldLike) -> float:
    """Σ_j |ρ_{j+1} - ρ_j| (内部セルのみ)"""
    return float(np.sum(np.abs(np.diff(_values(field_like)))))


@dataclass
class MaxPrincipleReport:
    """
    [−tol, 1+tol] から外れた (step, cell) の記録。記録数は Config.MAX_RECORDED_VIOLATIONS まで。
    """
    tol: float = Config.MAX_PRINCIPLE_TOL
    violation_count: int = 0
    violations: List[tuple] = field(default_factory=list)
    min_density: float = math.inf
    max_density: float = -math.inf

    @property
    def max_overshoot(self) -> float:
        return max(0.0, self.max_density - 1.0)

    @property
    def max_undershoot(self) -> float:
        return max(0.0, -self.min_density)

    @property
    def ok(self) -> bool:
        return self.violation_count == 0

    def update(self, step: int, values: np.ndarray):
        self.min_density = min(self.min_density, float(values.min()))
        self.max_density = max(self.max_density, float(values.max()))
        bad = np.flatnonzero((values < -self.tol) | (values > 1.0 + self.tol))
        if bad.size == 0:
            return
        self.violation_count += int(bad.size)
        room = Config.MAX_RECORDED_VIOLATIONS - len(self.violations)
        for cell in bad[:max(room, 0)]:
            self.violations.append((step, int(cell), float(values[cell])))


def check_max_principle(fields: Iterable[FieldLike], tol: float = Config.MAX_PRINCIPLE_TOL) -> MaxPrincipleReport:
    """
    列の各要素 (ステップ番号は列の位置) について 0 ≤ ρ ≤ 1 を検査する。

    Args:
        fields (Iterable): DensityField / 配列の列、または Trajectory。
        tol (float): 許容誤差。

    Returns:
        MaxPrincipleReport: 違反の一覧と最大のはみ出し量。
    """
    if isinstance(fields, Trajectory):
        fields = fields.snapshots
    report = MaxPrincipleReport(tol=tol)
    for step, item in enumerate(fields):
        report.update(step, _values(item))
    return report


def entropy_residual(
        rho_prev: np.ndarray,
        rho_left: float,
        rho_next: np.ndarray,
        r_flux: np.ndarray,
        s_on: np.ndarray,
        s_off: np.ndarray,
        lam: float,
        dt: float,
        kappas: np.ndarray,
        velocity: VelocityLaw,
) -> float:
    """
    1 ステップ分の離散エントロピー不等式の左辺の最大値を返す (≤ 0 が期待値)。

    |ρ_j^{n+1}-κ| - |ρ_j^n-κ| + λ(𝓕^κ_{j+1/2}(ρ_j^n) - 𝓕^κ_{j-1/2}(ρ_{j-1}^n))
        - Δt sgn(ρ_j^{n+1}-κ)(S_on,j - S_off,j) + λ sgn(ρ_j^{n+1}-κ) κ (v(R_{j+1/2}) - v(R_{j-1/2}))

    ここで 𝓕^κ_{j+1/2}(u) = v(R_{j+1/2}) |u - κ|。

    Args:
        rho_prev (np.ndarray): ρ^n。
        rho_left (float): 左ゴースト ρ_{-1}^n。
        rho_next (np.ndarray): ρ^{n+1}。
        r_flux (np.ndarray): R_{j+1/2}^n, j = -1..n-1。
        s_on (np.ndarray): S_on^{n+1/2}。
        s_off (np.ndarray): S_off^{n+1/2}。
        lam (float): λ。
        dt (float): Δt。
        kappas (np.ndarray): κ の集合。
        velocity (VelocityLaw): 速度関数。

    Returns:
        float: 全セル・全 κ にわたる最大値。
    """
    vel = velocity(r_flux)
    v_plus, v_minus = vel[1:], vel[:-1]
    rho_upwind = np.concatenate(([rho_left], rho_prev[:-1]))
    kappa = np.asarray(kappas, dtype=float)[:, None]

    sign = np.sign(rho_next - kappa)
    residual = (
        np.abs(rho_next - kappa)
        - np.abs(rho_prev - kappa)
        + lam * (v_plus * np.abs(rho_prev - kappa) - v_minus * np.abs(rho_upwind - kappa))
        - dt * sign * (s_on - s_off)
        + lam * sign * kappa * (v_plus - v_minus)
    )
    return float(residual.max())


def default_kappas(step: float = None) -> np.ndarray:
    """{0, step, 2·step, ..., 1}"""
    kappa_step = step if step is not None else Config.KAPPA_STEP
    count = int(round(1.0 / kappa_step))
    return np.linspace(0.0, 1.0, count + 1)


@dataclass(frozen=True)
class BoundConstants:
    """
    L1・TV 評価と安定性評価に現れる定数。

    Attributes:
        omega0 (float): ω_η(0) = 2/η。
        omega_slope (float): ‖ω_η'‖∞ = 2/η²。
        script_l (float): 𝓛 = ‖v‖∞ + ‖v'‖∞。
        h (float): H = (1/L)(2‖q_on‖ + ‖q_off‖) + ω_η(0)𝓛。
        rate_per_length (float): (‖q_on‖ + ‖q_off‖)/L。
        tv_source_rate (float): 2(‖q_on‖ + ‖q_off‖)/L。各ランプの両端で指示関数が跳ぶ分。
        q_on_per_length (float): ‖q_on‖/L。
        l1_initial (float): ‖ρ0‖_{L1}。
        tv_initial (float): TV(ρ0) (Dirichlet ゴーストとの跳びを含む)。
        final_time (float): T。
        w (float): 𝒲 (C₁(T) で評価)。
        c_xt (float): C_xt(T)。
        q_on_sup, q_off_sup, v_prime_sup (float): ‖q_on‖, ‖q_off‖, ‖v'‖。
    """
    omega0: float
    omega_slope: float
    script_l: float
    h: float
    rate_per_length: float
    tv_source_rate: float
    q_on_per_length: float
    l1_initial: float
    tv_initial: float
    final_time: float
    w: float
    c_xt: float
    q_on_sup: float
    q_off_sup: float
    v_prime_sup: float
    rates: RampRates = field(repr=False, compare=False, default=None)

    def c1(self, t: float, boundary_inflow: float = 0.0) -> float:
        """C₁(t) = ‖ρ0‖ + ‖q_on‖_{L1([0,t])} (+ 境界からの正味の流入量)"""
        q_on_l1 = self.rates.q_on.l1_norm(t) if self.rates is not None else 0.0
        return self.l1_initial + q_on_l1 + boundary_inflow

    def tv_bound(self, t: float) -> float:
        """e^{tH}(TV(ρ0) + 2t(‖q_on‖ + ‖q_off‖)/L)"""
        return _grown(_safe_exp(t * self.h), self.tv_initial + t * self.tv_source_rate)

    def space_time_bound(self, c1_final: Optional[float] = None) -> float:
        """T · C_xt(T)"""
        if c1_final is None:
            return self.final_time * self.c_xt
        return self.final_time * self._c_xt(c1_final)

    def _c_xt(self, c1_final: float) -> float:
        T = self.final_time
        return _c_xt(T, self.h, self.script_l, self.tv_initial, self.tv_source_rate, self.rate_per_length, c1_final, self.q_on_per_length)

    def stability_constant(self, sup_tv: float) -> float:
        """C = 2‖q_on‖ + ‖q_off‖ + ω_η(0)‖v'‖ sup_t TV(ρ(t)) + 𝒲 (sup TV は離散解で代用)"""
        return 2.0 * self.q_on_sup + self.q_off_sup + self.omega0 * self.v_prime_sup * sup_tv + self.w

    def to_dict(self) -> dict:
        return {
            "omega0": self.omega0,
            "omega_slope": self.omega_slope,
            "script_L": self.script_l,
            "H": self.h,
            "W": self.w,
            "C_xt": self.c_xt,
            "C1_T": self.c1(self.final_time),
            "l1_initial": self.l1_initial,
            "tv_initial": self.tv_initial,
            "final_time": self.final_time,
        }


def _c_xt(T: float, h: float, script_l: float, tv_initial: float, tv_source_rate: float,
          rate_per_length: float, c1_final: float, q_on_per_length: float) -> float:
    """C_xt(T) = e^{TH}(1 + 2𝓛)(TV(ρ0) + 2T(‖q_on‖ + ‖q_off‖)/L) + (‖q_on‖ + ‖q_off‖)C₁(T)/L + ‖q_on‖/L"""
    growth = _grown(_safe_exp(T * h) * (1.0 + 2.0 * script_l), tv_initial + T * tv_source_rate)
    return growth + rate_per_length * c1_final + q_on_per_length


def compute_bound_constants(config: ModelConfig, initial: Optional[DensityField] = None) -> BoundConstants:
    """
    構成から各定数を評価する。C₁ は最小値の項を落とした保守的な形。

    Args:
        config (ModelConfig): 構成。
        initial (DensityField, optional): 射影済みの初期データ。None なら構成から射影する。

    Returns:
        BoundConstants: 定数。
    """
    if initial is None:
        initial = GridBuilder.project_initial_datum(config.initial, config.grid)
    T = config.final_time
    q_on_sup, q_off_sup = config.rates.sup_norms(T)
    ramp_length = config.ramps.ramp_length if config.ramps.has_ramps else math.inf

    omega0 = config.kernel.convective_peak
    omega_slope = config.kernel.convective_slope
    velocity = config.velocity
    script_l = velocity.sup_norm + velocity.derivative_sup_norm
    h = (2.0 * q_on_sup + q_off_sup) / ramp_length + omega0 * script_l
    rate_per_length = (q_on_sup + q_off_sup) / ramp_length
    tv_source_rate = 2.0 * rate_per_length
    q_on_per_length = q_on_sup / ramp_length

    l1_initial = l1_norm(initial, config.grid.dx)
    tv_initial = total_variation(initial) + config.boundary.boundary_jumps(initial.values)
    c1_final = l1_initial + config.rates.q_on.l1_norm(T)

    w = (2.0 * omega0 ** 2 * velocity.second_derivative_sup_norm + velocity.derivative_sup_norm * omega_slope) * c1_final \
        + 2.0 * omega0 * velocity.derivative_sup_norm
    c_xt = _c_xt(T, h, script_l, tv_initial, tv_source_rate, rate_per_length, c1_final, q_on_per_length)

    return BoundConstants(
        omega0=omega0, omega_slope=omega_slope, script_l=script_l, h=h,
        rate_per_length=rate_per_length, tv_source_rate=tv_source_rate, q_on_per_length=q_on_per_length,
        l1_initial=l1_initial, tv_initial=tv_initial, final_time=T, w=w, c_xt=c_xt,
        q_on_sup=q_on_sup, q_off_sup=q_off_sup, v_prime_sup=velocity.derivative_sup_norm,
        rates=config.rates,
    )


@dataclass
class MassLedger:
    """質量収支の累積値 (すべて長さ×密度の単位)。"""
    on_ramp_in: float = 0.0
    off_ramp_out: float = 0.0
    left_in: float = 0.0
    right_out: float = 0.0

    @property
    def net_boundary_inflow(self) -> float:
        return self.left_in - self.right_out

    @property
    def net_change(self) -> float:
        return self.on_ramp_in - self.off_ramp_out + self.net_boundary_inflow

    def to_dict(self) -> dict:
        return {
            "on_ramp_in": self.on_ramp_in,
            "off_ramp_out": self.off_ramp_out,
            "left_in": self.left_in,
            "right_out": self.right_out,
            "net_change": self.net_change,
        }


_STEP_COLUMNS = [
    "step", "time", "min_rho", "max_rho", "l1", "c1", "tv", "tv_bound", "entropy_residual",
    "on_ramp_in", "off_ramp_out", "left_in", "right_out",
]


@dataclass
class DiagnosticsReport:
    """
    1 回の実行の診断結果。ステップごとの系列と要約。
    """
    label: str
    constants: BoundConstants
    max_principle: MaxPrincipleReport
    ledger: MassLedger
    rows: Dict[str, List[float]]
    initial_mass: float
    final_mass: float
    l1_violations: int
    tv_violations: int
    r_on_tv_violations: int
    entropy_checked: bool
    worst_entropy_residual: float
    entropy_violations: int
    space_time_tv: float
    space_time_tv_bound: float
    sup_tv: float
    bounds_asserted: bool

    @property
    def steps(self) -> int:
        return len(self.rows["step"])

    @property
    def stability_constant(self) -> float:
        return self.constants.stability_constant(self.sup_tv)

    @property
    def mass_balance_error(self) -> float:
        """ledger から予測される質量と実際の質量の差。"""
        return self.final_mass - (self.initial_mass + self.ledger.net_change)

    @property
    def passed(self) -> bool:
        """最大値原理・L1・TV・エントロピー検査の総合判定 (Model 0 は対象外で常に True)。"""
        if not self.bounds_asserted:
            return True
        return (
            self.max_principle.ok and self.l1_violations == 0 and self.tv_violations == 0
            and self.entropy_violations == 0
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=_STEP_COLUMNS)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "steps": self.steps,
            "bounds_asserted": self.bounds_asserted,
            "passed": self.passed,
            "min_density": self.max_principle.min_density,
            "max_density": self.max_principle.max_density,
            "max_overshoot": self.max_principle.max_overshoot,
            "max_principle_violations": self.max_principle.violation_count,
            "first_violations": [list(v) for v in self.max_principle.violations[:10]],
            "l1_violations": self.l1_violations,
            "tv_violations": self.tv_violations,
            "r_on_tv_violations": self.r_on_tv_violations,
            "entropy_checked": self.entropy_checked,
            "worst_entropy_residual": self.worst_entropy_residual if self.entropy_checked else None,
            "entropy_violations": self.entropy_violations,
            "initial_mass": self.initial_mass,
            "final_mass": self.final_mass,
            "mass_balance_error": self.mass_balance_error,
            "mass_ledger": self.ledger.to_dict(),
            "space_time_tv": self.space_time_tv,
            "space_time_tv_bound": self.space_time_tv_bound,
            "sup_tv": self.sup_tv,
            "stability_constant": self.stability_constant,
            "constants": self.constants.to_dict(),
        }


class DiagnosticsMonitor:
    """
    StepRecord を 1 ステップずつ受け取り、最大値原理、L1 評価、TV 評価、
    エントロピー不等式、R_on の TV 縮小性、質量収支を記録する。
    """

    def __init__(
            self,
            label: str,
            constants: BoundConstants,
            boundary: BoundaryPolicy,
            dx: float,
            velocity: VelocityLaw,
            initial: DensityField,
            kappas: Optional[np.ndarray] = None,
            scheme: Optional[UpwindScheme] = None,
            bounds_asserted: bool = True,
    ):
        self.label = label
        self.constants = constants
        self.boundary = boundary
        self.dx = dx
        self.velocity = velocity
        self.kappas = kappas
        self.scheme = scheme
        self.bounds_asserted = bounds_asserted

        self.max_principle = MaxPrincipleReport()
        self.max_principle.update(0, initial.values)
        self.ledger = MassLedger()
        self.rows: Dict[str, List[float]] = {name: [] for name in _STEP_COLUMNS}
        self.initial_mass = self.dx * float(np.sum(initial.values))
        self.final_mass = self.initial_mass
        self.l1_violations = 0
        self.tv_violations = 0
        self.r_on_tv_violations = 0
        self.worst_entropy = -math.inf
        self.entropy_violations = 0
        self.sup_tv = total_variation(initial)
        self.space_time_tv = 0.0

    @classmethod
    def for_nonlocal(cls, config: ModelConfig, scheme: UpwindScheme, initial: DensityField,
                     kappas: Optional[np.ndarray] = None) -> "DiagnosticsMonitor":
        """
        非局所スキーム用のモニタを作る。エントロピー検査は Model 1 のみ。
        """
        entropy_kappas = None
        if config.variant is ModelVariant.MODEL1:
            entropy_kappas = kappas if kappas is not None else default_kappas()
        return cls(
            label=config.variant.label,
            constants=compute_bound_constants(config, initial),
            boundary=config.boundary,
            dx=config.grid.dx,
            velocity=config.velocity,
            initial=initial,
            kappas=entropy_kappas,
            scheme=scheme,
            bounds_asserted=config.variant.has_max_principle,
        )

    def observe(self, record: StepRecord):
        rho = record.rho_next
        rel = Config.BOUND_RTOL

        self.ledger.on_ramp_in += record.dt * self.dx * float(np.sum(record.s_on))
        self.ledger.off_ramp_out += record.dt * self.dx * float(np.sum(record.s_off))
        self.ledger.left_in += record.dt * float(record.fluxes[0])
        self.ledger.right_out += record.dt * float(record.fluxes[-1])

        self.max_principle.update(record.step, rho)

        l1 = l1_norm(rho, self.dx)
        c1 = self.constants.c1(record.time, self.ledger.net_boundary_inflow)
        if l1 > c1 + rel * max(1.0, abs(c1)):
            self.l1_violations += 1

        tv = total_variation(rho)
        tv_bound = self.constants.tv_bound(record.time)
        if tv > tv_bound + rel * max(1.0, tv_bound):
            self.tv_violations += 1
        self.sup_tv = max(self.sup_tv, tv)
        self.space_time_tv += record.dt * total_variation(record.rho_prev) + self.dx * float(np.sum(np.abs(rho - record.rho_prev)))

        if record.r_on is not None and self.scheme is not None:
            padded_tv = float(np.sum(np.abs(np.diff(self.scheme.pad(record.halfstep).values))))
            if total_variation(record.r_on) > padded_tv + rel * max(1.0, padded_tv):
                self.r_on_tv_violations += 1

        residual = math.nan
        if self.kappas is not None and record.r_flux is not None:
            residual = entropy_residual(
                record.rho_prev, record.rho_left, rho, record.r_flux, record.s_on, record.s_off,
                record.lam, record.dt, self.kappas, self.velocity,
            )
            self.worst_entropy = max(self.worst_entropy, residual)
            if residual > Config.ENTROPY_TOL:
                self.entropy_violations += 1

        self.final_mass = self.dx * float(np.sum(rho))
        row = (
            record.step, record.time, float(rho.min()), float(rho.max()), l1, c1, tv, tv_bound, residual,
            self.ledger.on_ramp_in, self.ledger.off_ramp_out, self.ledger.left_in, self.ledger.right_out,
        )
        for name, value in zip(_STEP_COLUMNS, row):
            self.rows[name].append(value)

    def report(self) -> DiagnosticsReport:
        c1_final = self.constants.c1(self.constants.final_time, self.ledger.net_boundary_inflow)
        report = DiagnosticsReport(
            label=self.label,
            constants=self.constants,
            max_principle=self.max_principle,
            ledger=self.ledger,
            rows=self.rows,
            initial_mass=self.initial_mass,
            final_mass=self.final_mass,
            l1_violations=self.l1_violations,
            tv_violations=self.tv_violations,
            r_on_tv_violations=self.r_on_tv_violations,
            entropy_checked=self.kappas is not None,
            worst_entropy_residual=self.worst_entropy,
            entropy_violations=self.entropy_violations,
            space_time_tv=self.space_time_tv,
            space_time_tv_bound=self.constants.space_time_bound(c1_final),
            sup_tv=self.sup_tv,
            bounds_asserted=self.bounds_asserted,
        )
        if self.max_principle.max_overshoot > 0:
            logger.warning(f"{self.label}: 最大値 {self.max_principle.max_density:.6g} が 1 を超えました (はみ出し {self.max_principle.max_overshoot:.3g})")
        if self.bounds_asserted and not report.passed:
            logger.error(
                f"{self.label}: 検査違反 (最大値原理 {self.max_principle.violation_count}, L1 {self.l1_violations}, "
                f"TV {self.tv_violations}, エントロピー {self.entropy_violations})"
            )
        return report


def _rate_difference_l1(rates_a: RampRates, rates_b: RampRates, t: float) -> float:
    if t <= 0:
        return 0.0
    total = 0.0
    for a, b in ((rates_a.q_on, rates_b.q_on), (rates_a.q_off, rates_b.q_off)):
        value, _ = quad(lambda s: abs(a.value(s) - b.value(s)), 0.0, t, limit=200)
        total += value
    return total


def stability_report(
        trajectory_a: Trajectory,
        trajectory_b: Trajectory,
        initial_a: DensityField,
        initial_b: DensityField,
        rates_a: RampRates,
        rates_b: RampRates,
        constants: BoundConstants,
        sup_tv: float,
) -> pd.DataFrame:
    """
    2 つの実行の L1 距離と Gronwall 型の上界
    (‖ρ0 - ρ̃0‖ + ‖q_on - q̃_on‖_{L1([0,t])} + ‖q_off - q̃_off‖_{L1([0,t])}) e^{Ct} を並べる。
    判定は行わない。

    Returns:
        pd.DataFrame: 列 time, l1_distance, bound。
    """
    if not trajectory_a.grid.is_compatible(trajectory_b.grid):
        raise DataError("stability_report: 2 つの実行の格子が一致しません。")
    dx = trajectory_a.grid.dx
    c = constants.stability_constant(sup_tv)
    initial_gap = l1_distance(initial_a, initial_b, dx)

    rows = []
    for snapshot in trajectory_a.snapshots:
        try:
            other = trajectory_b.snapshot_at(snapshot.time)
        except KeyError:
            continue
        t = snapshot.time
        bound = _grown(_safe_exp(c * t), initial_gap + _rate_difference_l1(rates_a, rates_b, t))
        rows.append({"time": t, "l1_distance": l1_distance(snapshot, other, dx), "bound": bound})
    return pd.DataFrame(rows, columns=["time", "l1_distance", "bound"])
