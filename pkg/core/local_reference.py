import math
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from config import Config
from core.exceptions import ConfigurationError
from core.grid import BoundaryPolicy, Grid, GridBuilder, InitialDatum, RampGeometry, RampRates
from core.scheme import ModelConfig, SplittingScheme, Trajectory
from core.velocity import VelocityLaw
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class LocalConfig:
    """
    局所モデル ρ_t + f(ρ)_x = S_on - S_off の構成。ModelConfig からカーネルとモデル種別を除いたもの。
    """
    grid: Grid
    velocity: VelocityLaw
    ramps: RampGeometry
    rates: RampRates
    boundary: BoundaryPolicy
    initial: InitialDatum
    final_time: float
    output_times: Tuple[float, ...] = ()
    cfl_safety: float = Config.CFL_SAFETY
    name: str = "run"

    def __post_init__(self):
        if self.final_time < 0:
            raise ConfigurationError(Config._RANGE_ERROR_MESSAGE.format(what="time.final", value=self.final_time, interval="[0, ∞)"))
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ConfigurationError(Config._RANGE_ERROR_MESSAGE.format(what="numerics.cfl_safety", value=self.cfl_safety, interval="(0, 1]"))
        outputs = self.output_times or (self.final_time,)
        object.__setattr__(self, "output_times", tuple(sorted(float(t) for t in outputs)))

    @classmethod
    def from_model_config(cls, config: ModelConfig) -> "LocalConfig":
        return cls(
            grid=config.grid, velocity=config.velocity, ramps=config.ramps, rates=config.rates,
            boundary=config.boundary, initial=config.initial, final_time=config.final_time,
            output_times=config.output_times, cfl_safety=config.cfl_safety, name=config.name,
        )

    def with_outputs(self, output_times: Tuple[float, ...]) -> "LocalConfig":
        return replace(self, output_times=tuple(output_times))


def godunov_flux(rho_left, rho_right, velocity: VelocityLaw):
    """
    凹流束 f(ρ) = ρv(ρ) のリーマン問題の厳密解から決まる Godunov 流束。

    ρ_L ≤ ρ_R なら [ρ_L, ρ_R] 上の f の最小値 (端点のどちらか)、
    ρ_L > ρ_R なら [ρ_R, ρ_L] 上の f の最大値 f(clip(ρ*, ρ_R, ρ_L))。

    Args:
        rho_left (float | np.ndarray): 左状態。
        rho_right (float | np.ndarray): 右状態。
        velocity (VelocityLaw): 速度関数。

    Returns:
        float | np.ndarray: 数値流束。
    """
    left = np.asarray(rho_left, dtype=float)
    right = np.asarray(rho_right, dtype=float)
    f_left = velocity.flux(left)
    f_right = velocity.flux(right)
    shock_side = np.minimum(f_left, f_right)
    fan_side = velocity.flux(np.clip(velocity.flux_maximizer, right, left))
    out = np.where(left <= right, shock_side, fan_side)
    return float(out) if out.ndim == 0 else out


def compute_local_cfl_dt(config: LocalConfig) -> float:
    """Δt = safety · min{ Δx/max|f'|, L/(‖q_on‖ + ‖q_off‖) }"""
    convective_bound = config.grid.dx / config.velocity.max_flux_slope
    q_on_sup, q_off_sup = config.rates.sup_norms(config.final_time)
    rate_sum = q_on_sup + q_off_sup
    source_bound = config.ramps.ramp_length / rate_sum if config.ramps.has_ramps and rate_sum > 0 else math.inf
    return config.cfl_safety * min(convective_bound, source_bound)


class LocalGodunovScheme(SplittingScheme):
    """
    Godunov 流束と局所源項 S_on = 1_on q_on (1 - ρ), S_off = 1_off q_off ρ による演算子分割。
    局所源項は Model 1 の S_on で R_on = 0 としたものに一致する。
    """

    label = "local"

    def __init__(self, config: LocalConfig):
        self.config = config
        super().__init__(
            grid=config.grid, ramps=config.ramps, rates=config.rates, boundary=config.boundary,
            pad_left=1, pad_right=1, check_max_principle=False,
        )
        self.velocity = config.velocity
        self._dt = compute_local_cfl_dt(config)

    @property
    def time_step(self) -> float:
        return self._dt

    def _convective_half_step(self, padded, lam):
        values = padded.values
        fluxes = godunov_flux(values[:-1], values[1:], self.velocity)
        halfstep = padded.interior - lam * (fluxes[1:] - fluxes[:-1])
        return halfstep, fluxes, None

    def _reactive_average(self, halfstep):
        return None


def simulate_local(config: LocalConfig, progress: bool = False) -> Trajectory:
    """
    局所参照解を計算する。

    Args:
        config (LocalConfig): 構成。
        progress (bool): 進捗表示。

    Returns:
        Trajectory: スナップショット (report は None)。
    """
    scheme = LocalGodunovScheme(config)
    initial = GridBuilder.project_initial_datum(config.initial, config.grid)
    logger.info(f"{config.name}/local: Godunov 参照解の計算開始 (Δt={scheme.time_step:.6g})")
    snapshots, steps = scheme.run(initial, config.output_times, progress=progress)
    logger.info(f"{config.name}/local: {steps} ステップで完了")
    return Trajectory(name=config.name, label="local", grid=config.grid, snapshots=snapshots, steps=steps, dt=scheme.time_step)
