import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

from result import Err, Ok, Result

from config import Config
from core.exceptions import SimulationError
from core.grid import (
    BoundaryPolicy,
    Grid,
    GridBuilder,
    InitialDatum,
    RampGeometry,
    RampRates,
    RateSchedule,
)
from core.kernels import KernelParams, NonlocalKernels
from core.local_reference import LocalConfig
from core.presets import PRESETS, get_preset
from core.scheme import ModelConfig, ModelVariant
from core.velocity import VelocityLaw
from utils.logger import get_logger
from utils.utils import deep_merge

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class RunConfig:
    """
    検証済みの実行設定。

    Attributes:
        name (str): 実行名 (出力ファイル名の接頭辞)。
        grid (Grid): 格子。
        velocity (VelocityLaw): 速度関数。
        kernel (KernelParams): η, δ。
        variants (Tuple[ModelVariant, ...]): 実行するモデル。
        ramps (RampGeometry): ランプ幾何。
        rates (RampRates): q_on, q_off。
        boundary (BoundaryPolicy): 境界条件。
        initial (InitialDatum): 初期データ。
        final_time (float): T。
        output_times (Tuple[float, ...]): 出力時刻。
        cfl_safety (float): CFL 安全係数。
        kappa_step (float): エントロピー検査の κ 刻み。
        eta_list (Tuple[float, ...]): 収束実験の η の列。
        convergence_window (Tuple[float, float], optional): 収束実験で L1 距離を測る区間 (None なら領域全体)。
        output_directory (str): 出力先。
        plot_script (bool): プロット用スクリプトを生成するかどうか。
        diagnostics (bool): 診断を計算するかどうか。
        notes (Tuple[str, ...]): 再現性に関する注記。
        tree (dict): 設定ツリー (プリセット展開後)。
    """
    name: str
    grid: Grid
    velocity: VelocityLaw
    kernel: KernelParams
    variants: Tuple[ModelVariant, ...]
    ramps: RampGeometry
    rates: RampRates
    boundary: BoundaryPolicy
    initial: InitialDatum
    final_time: float
    output_times: Tuple[float, ...]
    cfl_safety: float = Config.CFL_SAFETY
    kappa_step: float = Config.KAPPA_STEP
    eta_list: Tuple[float, ...] = tuple(Config.DEFAULT_ETA_LIST)
    convergence_window: Optional[Tuple[float, float]] = None
    output_directory: str = Config.OUTPUT_DIRECTORY
    plot_script: bool = True
    diagnostics: bool = True
    notes: Tuple[str, ...] = ()
    tree: dict = field(default_factory=dict, repr=False)

    def model_config(self, variant, output_times: Optional[Tuple[float, ...]] = None) -> ModelConfig:
        return ModelConfig(
            grid=self.grid, kernel=self.kernel, velocity=self.velocity, variant=ModelVariant.parse(variant),
            ramps=self.ramps, rates=self.rates, boundary=self.boundary, initial=self.initial,
            final_time=self.final_time, output_times=output_times or self.output_times,
            cfl_safety=self.cfl_safety, name=self.name,
        )

    def local_config(self, output_times: Optional[Tuple[float, ...]] = None) -> LocalConfig:
        return LocalConfig(
            grid=self.grid, velocity=self.velocity, ramps=self.ramps, rates=self.rates, boundary=self.boundary,
            initial=self.initial, final_time=self.final_time, output_times=output_times or self.output_times,
            cfl_safety=self.cfl_safety, name=self.name,
        )

    def comparison_cells(self) -> range:
        """収束実験で L1 距離を測るセルの範囲。"""
        if self.convergence_window is None:
            return range(self.grid.n_cells)
        return self.grid.cell_range(*self.convergence_window, what="convergence.window")

    def with_kernel(self, eta: float, delta: Optional[float] = None) -> "RunConfig":
        """η (と δ) を差し替えた設定。格子との整合性を検査する。"""
        kernel = KernelParams(eta=float(eta), delta=self.kernel.delta if delta is None else float(delta))
        NonlocalKernels.build_weights(kernel, self.grid.dx)
        return replace(self, kernel=kernel)

    def with_overrides(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        """設定のエコー (JSON 用)。"""
        return {
            "name": self.name,
            "domain": {"x_left": self.grid.x_left, "x_right": self.grid.x_right, "dx": self.grid.dx, "n_cells": self.grid.n_cells},
            "time": {"final": self.final_time, "outputs": list(self.output_times)},
            "velocity": self.velocity.to_dict(),
            "kernel": {"eta": self.kernel.eta, "delta": self.kernel.delta},
            "models": [int(v) for v in self.variants],
            "initial": self.initial.to_dict(),
            "ramps": None if not self.ramps.has_ramps else {
                "length": self.ramps.ramp_length,
                "on": None if math.isnan(self.ramps.on_start) else [self.ramps.on_start, self.ramps.on_end],
                "off": None if math.isnan(self.ramps.off_start) else [self.ramps.off_start, self.ramps.off_end],
                "q_on": self.rates.q_on.to_dict(),
                "q_off": self.rates.q_off.to_dict(),
            },
            "boundary": self.boundary.to_dict(),
            "numerics": {"cfl_safety": self.cfl_safety, "kappa_step": self.kappa_step},
            "convergence": {
                "eta_list": list(self.eta_list),
                "window": None if self.convergence_window is None else list(self.convergence_window),
            },
            "notes": list(self.notes),
        }


class _ErrorCollector:
    """フィールドパス付きの検証エラーを集める。"""

    def __init__(self):
        self.errors: List[str] = []

    def attempt(self, path: str, builder: Callable):
        try:
            return builder()
        except (SimulationError, KeyError, TypeError, ValueError) as e:
            message = e.args[0] if isinstance(e, KeyError) and e.args else str(e)
            if isinstance(e, KeyError) and not str(message).startswith(path):
                message = f"必須キー {message!r} がありません"
            self.add(path, str(message))
            return None

    def add(self, path: str, message: str):
        self.errors.append(message if message.startswith(path) else f"{path}: {message}")


def _read_tree(source: str) -> Result[dict, List[str]]:
    if os.path.isfile(source):
        try:
            with open(source, "r", encoding="utf-8") as f:
                tree = json.load(f)
        except OSError as e:
            return Err([f"{source}: 読み込みに失敗しました: {e}"])
        except json.JSONDecodeError as e:
            return Err([f"{source}: JSON の解析に失敗しました: {e}"])
        if not isinstance(tree, dict):
            return Err([f"{source}: 最上位はオブジェクトである必要があります。"])
        return Ok(tree)
    if source in PRESETS:
        return Ok({"preset": source})
    return Err([f"{source}: ファイルもプリセットも見つかりません。"])


def _expand_preset(tree: dict) -> Result[dict, List[str]]:
    preset = tree.get("preset")
    if preset is None:
        return Ok(tree)
    try:
        base = get_preset(str(preset))
    except KeyError as e:
        return Err([f"preset: {e.args[0]}"])
    own = {k: v for k, v in tree.items() if k != "preset"}
    return Ok(deep_merge(base, own))


def _build_rate(spec: dict) -> RateSchedule:
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return RateSchedule.constant(float(spec["value"]))
    if kind == "sinusoidal":
        return RateSchedule.sinusoidal(float(spec.get("value", 1.0)))
    if kind == "tabulated":
        return RateSchedule.tabulated(spec["times"], spec["values"])
    raise ValueError(f"未知のレート種別 {kind!r} ({', '.join(Config.VALID_RATE_KINDS)})")


def _build_initial(spec: dict) -> InitialDatum:
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return InitialDatum.constant(spec["value"])
    if kind == "step":
        return InitialDatum.step(spec["left"], spec["right"], spec["position"])
    if kind == "bump":
        return InitialDatum.bump(spec["center"], spec["width"], spec["height"])
    raise ValueError(f"未知の初期データ種別 {kind!r} ({', '.join(Config.VALID_INITIAL_KINDS)})")


def _build_velocity(spec: dict) -> VelocityLaw:
    kind = spec.get("kind", "affine")
    if kind == "affine":
        return VelocityLaw.affine(spec.get("v_max", 1.0))
    if kind == "tabulated":
        return VelocityLaw.tabulated(spec["densities"], spec["values"])
    raise ValueError(f"未知の速度関数 {kind!r} ({', '.join(Config.VALID_VELOCITY_KINDS)})")


def _build_times(spec: dict) -> Tuple[float, Tuple[float, ...]]:
    final_time = float(spec["final"])
    if final_time < 0:
        raise ValueError(Config._RANGE_ERROR_MESSAGE.format(what="time.final", value=final_time, interval="[0, ∞)"))
    outputs = tuple(sorted(float(t) for t in spec.get("outputs", [final_time])))
    if not outputs:
        outputs = (final_time,)
    if outputs[0] < 0 or outputs[-1] > final_time:
        raise ValueError(f"time.outputs: 出力時刻 {list(outputs)} は [0, {final_time}] に含まれる必要があります。")
    return final_time, outputs


def _build_window(spec, grid: Optional[Grid]) -> Optional[Tuple[float, float]]:
    if spec is None:
        return None
    start, end = (float(x) for x in spec)
    if grid is not None:
        grid.cell_range(start, end, "convergence.window")
    return start, end


def _build_models(spec) -> Tuple[ModelVariant, ...]:
    items = spec if isinstance(spec, list) else [spec]
    if not items:
        raise ValueError("models: 少なくとも 1 つのモデルを指定してください。")
    return tuple(ModelVariant.parse(item) for item in items)


def build_run_config(tree: dict) -> Result[RunConfig, List[str]]:
    """
    設定ツリーを検証して RunConfig を構築する。エラーはすべて集めて返す。

    Args:
        tree (dict): プリセット展開済みの設定ツリー。

    Returns:
        Result[RunConfig, List[str]]: 成功時は Ok(RunConfig)、失敗時は Err(フィールドパス付きエラーの一覧)。
    """
    collector = _ErrorCollector()

    domain = tree.get("domain")
    grid = None
    if not isinstance(domain, dict):
        collector.add("domain", "domain セクションがありません。")
    else:
        grid = collector.attempt("domain", lambda: GridBuilder.build_grid(float(domain["x_left"]), float(domain["x_right"]), float(domain["dx"])))

    times = collector.attempt("time", lambda: _build_times(tree["time"]))
    velocity = collector.attempt("velocity", lambda: _build_velocity(tree.get("velocity", {})))
    variants = collector.attempt("models", lambda: _build_models(tree.get("models", [1, 2])))
    boundary = collector.attempt("boundary", lambda: BoundaryPolicy(**tree.get("boundary", {})))
    initial = collector.attempt("initial", lambda: _build_initial(tree["initial"]))

    kernel_spec = tree.get("kernel", {})
    kernel = collector.attempt("kernel", lambda: KernelParams(eta=float(kernel_spec["eta"]), delta=float(kernel_spec.get("delta", 0.0))))
    if kernel is not None and grid is not None:
        collector.attempt("kernel", lambda: NonlocalKernels.build_weights(kernel, grid.dx))

    ramp_spec = tree.get("ramps")
    ramps, rates = None, None
    if ramp_spec is None:
        if grid is not None:
            ramps = RampGeometry.empty(grid)
        rates = RampRates.zero()
    else:
        rates = collector.attempt("ramps", lambda: RampRates(
            q_on=_build_rate(ramp_spec.get("q_on", {"kind": "constant", "value": 0.0})),
            q_off=_build_rate(ramp_spec.get("q_off", {"kind": "constant", "value": 0.0})),
        ))
        if grid is not None:
            ramps = collector.attempt("ramps", lambda: GridBuilder.build_ramps(
                grid, ramp_spec.get("on"), ramp_spec.get("off"), float(ramp_spec.get("length", 0.0)),
            ))

    if initial is not None and grid is not None:
        collector.attempt("initial", lambda: GridBuilder.project_initial_datum(initial, grid))

    numerics = tree.get("numerics", {})
    cfl_safety = float(numerics.get("cfl_safety", Config.CFL_SAFETY))
    if not 0.0 < cfl_safety <= 1.0:
        collector.add("numerics.cfl_safety", Config._RANGE_ERROR_MESSAGE.format(what="numerics.cfl_safety", value=cfl_safety, interval="(0, 1]"))
    kappa_step = float(numerics.get("kappa_step", Config.KAPPA_STEP))
    if not 0.0 < kappa_step <= 1.0:
        collector.add("numerics.kappa_step", Config._RANGE_ERROR_MESSAGE.format(what="numerics.kappa_step", value=kappa_step, interval="(0, 1]"))

    eta_list = tuple(float(e) for e in tree.get("convergence", {}).get("eta_list", Config.DEFAULT_ETA_LIST))
    # 既定の η の列は収束実験の実行時に検査する
    if grid is not None and "convergence" in tree:
        for i, eta in enumerate(eta_list):
            collector.attempt(f"convergence.eta_list[{i}]", lambda eta=eta: NonlocalKernels.discretize_convective_weights(KernelParams(eta=eta), grid.dx))
    window = collector.attempt("convergence.window", lambda: _build_window(tree.get("convergence", {}).get("window"), grid))

    if collector.errors:
        return Err(collector.errors)

    output = tree.get("output", {})
    final_time, output_times = times
    return Ok(RunConfig(
        name=str(tree.get("name", "run")),
        grid=grid,
        velocity=velocity,
        kernel=kernel,
        variants=variants,
        ramps=ramps,
        rates=rates,
        boundary=boundary,
        initial=initial,
        final_time=final_time,
        output_times=output_times,
        cfl_safety=cfl_safety,
        kappa_step=kappa_step,
        eta_list=eta_list,
        convergence_window=window,
        output_directory=str(output.get("directory", Config.OUTPUT_DIRECTORY)),
        plot_script=bool(output.get("plot_script", True)),
        notes=tuple(tree.get("notes", ())),
        tree=tree,
    ))


def load_config(source: str, overrides: Optional[dict] = None) -> Result[RunConfig, List[str]]:
    """
    JSON 設定ファイル (またはプリセット名) を読み込み、検証済みの RunConfig を返す。

    Args:
        source (str): 設定ファイルのパス、またはプリセット名 (example1 など)。
        overrides (dict, optional): 設定ツリーに上書きする値 (CLI フラグ由来)。

    Returns:
        Result[RunConfig, List[str]]: 成功時は Ok(RunConfig)、失敗時は Err(エラーメッセージの一覧)。
    """
    tree_result = _read_tree(source).and_then(_expand_preset)
    if tree_result.is_err():
        return tree_result

    tree = tree_result.unwrap()
    if overrides:
        tree = deep_merge(tree, overrides)

    result = build_run_config(tree)
    if result.is_ok():
        config = result.unwrap()
        logger.debug(f"設定を読み込みました: {source} (セル数 {config.grid.n_cells}, モデル {[v.label for v in config.variants]})")
        for note in config.notes:
            logger.warning(f"{config.name}: {note}")
    return result
