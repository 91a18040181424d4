import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config import Config
from core.config_loader import RunConfig
from core.data_saver import DataSaver, snapshot_filename
from core.diagnostics import compute_bound_constants, default_kappas, l1_distance, stability_report
from core.grid import GridBuilder, RampRates
from core.local_reference import simulate_local
from core.scheme import ModelVariant, Trajectory, simulate
from utils.logger import get_logger, log_dataframe
from visualizers.visualizer import PlotPanel, Visualizer

logger = get_logger(__name__)


@dataclass
class RunSummary:
    """
    実行結果の要約。

    Attributes:
        config (dict): 設定のエコー。
        wall_time (float): 実行時間 [s] (JSON には書き出さない)。
        steps (Dict[str, int]): モデルごとのステップ数。
        digests (Dict[str, dict]): モデルごとの診断の要約。
        manifest (List[str]): 書き出したファイルのパス。
    """
    config: dict
    wall_time: float = 0.0
    steps: Dict[str, int] = field(default_factory=dict)
    digests: Dict[str, dict] = field(default_factory=dict)
    manifest: List[str] = field(default_factory=list)
    trajectories: Dict[str, Trajectory] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "steps": self.steps,
            "diagnostics": self.digests,
            "manifest": [os.path.basename(p) for p in self.manifest],
        }


@dataclass
class ConvergenceResult:
    """
    η → 0 の収束実験の結果。

    Attributes:
        table (pd.DataFrame): 列 eta, l1_distance, steps。
        strictly_decreasing (bool): η の列に沿って距離が狭義単調減少かどうか。
        manifest (List[str]): 書き出したファイル。
    """
    table: pd.DataFrame
    strictly_decreasing: bool
    manifest: List[str] = field(default_factory=list)

    @property
    def distances(self) -> List[float]:
        return [float(d) for d in self.table["l1_distance"]]


def _digest_row(label: str, trajectory: Trajectory) -> dict:
    row = {"model": label, "steps": trajectory.steps, "dt": trajectory.dt}
    report = trajectory.report
    if report is not None:
        row.update({
            "min_rho": report.max_principle.min_density,
            "max_rho": report.max_principle.max_density,
            "overshoot": report.max_principle.max_overshoot,
            "final_mass": report.final_mass,
            "mp_violations": report.max_principle.violation_count,
            "l1_violations": report.l1_violations,
            "tv_violations": report.tv_violations,
            "entropy": report.worst_entropy_residual if report.entropy_checked else np.nan,
        })
    return row


def _convergence_member(config: RunConfig, eta: float, progress: bool = False) -> tuple:
    member = config.with_kernel(eta, delta=0.0)
    trajectory = simulate(
        member.model_config(ModelVariant.MODEL2, (member.final_time,)),
        diagnostics=member.diagnostics, progress=progress,
    )
    return trajectory.final.values, trajectory.steps


class ExperimentRunner:
    """
    設定に従ってシミュレーションを実行し、結果をファイルに書き出すクラス。
    """

    def __init__(self, progress: bool = False, workers: int = Config.CONVERGENCE_WORKERS):
        self.progress = progress
        self.workers = max(1, int(workers))

    @staticmethod
    def _directory(config: RunConfig, *parts: str) -> str:
        return os.path.join(config.output_directory, config.name, *parts)

    def simulate_variant(self, config: RunConfig, variant) -> Trajectory:
        kappas = default_kappas(config.kappa_step)
        return simulate(config.model_config(variant), diagnostics=config.diagnostics, kappas=kappas, progress=self.progress)

    def run(self, config: RunConfig) -> RunSummary:
        """
        設定に含まれる各モデルを実行し、スナップショット CSV、診断 JSON、プロットスクリプト、summary.json を書き出す。

        Args:
            config (RunConfig): 検証済みの設定。

        Returns:
            RunSummary: 要約 (manifest のファイルはすべて存在する)。
        """
        started = time.perf_counter()
        saver = DataSaver(self._directory(config))
        summary = RunSummary(config=config.to_dict())
        digest_rows = []

        for variant in dict.fromkeys(config.variants):
            trajectory = self.simulate_variant(config, variant)
            label = trajectory.label
            summary.trajectories[label] = trajectory
            summary.steps[label] = trajectory.steps
            for snapshot in trajectory.snapshots:
                saver.save_snapshot(snapshot, config.grid, config.name, label)
            if trajectory.report is not None:
                summary.digests[label] = trajectory.report.to_dict()
                saver.save_json(trajectory.report.to_dict(), f"{config.name}_{label}_diagnostics.json")
                saver.save_frame(trajectory.report.to_frame(), f"{config.name}_{label}_steps.csv")
            digest_rows.append(_digest_row(label, trajectory))

        if config.plot_script:
            panels = [
                PlotPanel(
                    title=f"t = {t:g}",
                    curves=[(label, snapshot_filename(config.name, label, t), "rho") for label in summary.trajectories],
                )
                for t in config.output_times
            ]
            script = Visualizer.render_snapshot_script(f"{config.name}: density snapshots", panels, f"{config.name}.png")
            saver.save_text(script, f"plot_{config.name}.py")

        log_dataframe(logger, pd.DataFrame(digest_rows))
        summary.manifest = list(saver.manifest)
        summary_path = saver.save_json(summary.to_dict(), f"{config.name}_summary.json")
        summary.manifest.append(summary_path)
        summary.wall_time = time.perf_counter() - started
        logger.info(f"{config.name}: 完了 ({summary.wall_time:.1f} 秒, {len(summary.manifest)} ファイル)")
        return summary

    def convergence_study(self, config: RunConfig, eta_list: Optional[Sequence[float]] = None) -> ConvergenceResult:
        """
        各 η について Model 2 を時刻 T まで解き、局所 Godunov 解との L1 距離の表を作る。
        距離は config.convergence_window の区間 (未指定なら領域全体) のセルで測る。

        Args:
            config (RunConfig): 基準となる設定 (δ は 0 に置き換える)。
            eta_list (Sequence[float], optional): η の列. Defaults to None (config.eta_list)。

        Returns:
            ConvergenceResult: 距離の表と単調性の判定。
        """
        etas = [float(e) for e in (eta_list if eta_list is not None else config.eta_list)]
        if config.kernel.delta != 0.0:
            logger.warning(f"{config.name}: 収束実験では δ = 0 を使います (設定値 {config.kernel.delta})")
        for eta in etas:
            config.with_kernel(eta, delta=0.0)

        final_time = config.final_time
        saver = DataSaver(self._directory(config, "convergence"))
        reference = simulate_local(config.local_config((final_time,)), progress=self.progress).final

        if self.workers > 1 and len(etas) > 1:
            with ProcessPoolExecutor(max_workers=min(self.workers, len(etas))) as pool:
                members = list(pool.map(_convergence_member, [config] * len(etas), etas))
        else:
            members = [_convergence_member(config, eta, self.progress) for eta in etas]

        dx = config.grid.dx
        window = config.comparison_cells()
        cells = slice(window.start, window.stop)
        rows = []
        for eta, (values, steps) in zip(etas, members):
            distance = l1_distance(values[cells], reference.values[cells], dx)
            rows.append({"eta": eta, "l1_distance": distance, "steps": steps})
            logger.info(f"{config.name}: η = {eta:g}, L1 距離 = {distance:.4g}")
        table = pd.DataFrame(rows, columns=["eta", "l1_distance", "steps"])
        distances = table["l1_distance"].to_numpy()
        strictly_decreasing = bool(np.all(np.diff(distances) < 0))

        side_by_side = pd.DataFrame({"x": config.grid.cell_centers, "rho_local": reference.values})
        for eta, (values, _) in zip(etas, members):
            side_by_side[f"rho_eta={eta:g}"] = values

        saver.save_frame(table, f"{config.name}_convergence.csv")
        saver.save_frame(side_by_side, f"{config.name}_convergence_t{final_time:g}.csv")
        saver.save_json(
            {
                "name": config.name, "final_time": final_time,
                "window": [float(config.grid.interfaces[window.start]), float(config.grid.interfaces[window.stop])],
                "rows": rows, "strictly_decreasing": strictly_decreasing,
            },
            f"{config.name}_convergence.json",
        )
        if config.plot_script:
            snapshot_name = f"{config.name}_convergence_t{final_time:g}.csv"
            curves = [("local", snapshot_name, "rho_local")] + [(f"η = {eta:g}", snapshot_name, f"rho_eta={eta:g}") for eta in etas]
            saver.save_text(
                Visualizer.render_snapshot_script(f"{config.name}: local vs nonlocal", [PlotPanel(f"t = {final_time:g}", curves)], f"{config.name}_convergence_snapshot.png"),
                f"plot_{config.name}_convergence_snapshot.py",
            )
            saver.save_text(
                Visualizer.render_table_script(f"{config.name}: L1 distance", f"{config.name}_convergence.csv", "eta", "l1_distance", f"{config.name}_convergence.png"),
                f"plot_{config.name}_convergence.py",
            )

        log_dataframe(logger, table)
        if not strictly_decreasing:
            logger.warning(f"{config.name}: L1 距離が η に沿って狭義単調減少になっていません")
        return ConvergenceResult(table=table, strictly_decreasing=strictly_decreasing, manifest=list(saver.manifest))

    def compare_models(self, config: RunConfig, variants: Sequence) -> List[str]:
        """
        出力時刻ごとに列 x, rho_model{k} の CSV を書き出す。同じモデルを 2 回指定すると同じ列が 2 つ並ぶ。

        Args:
            config (RunConfig): 設定。
            variants (Sequence): モデルの列。

        Returns:
            List[str]: 書き出したファイル。
        """
        parsed = [ModelVariant.parse(v) for v in variants]
        trajectories = {variant: self.simulate_variant(config, variant) for variant in dict.fromkeys(parsed)}
        saver = DataSaver(self._directory(config, "compare"))
        columns = ["x"] + [f"rho_{v.label}" for v in parsed]

        filenames = []
        for t in config.output_times:
            data = np.column_stack([config.grid.cell_centers] + [trajectories[v].snapshot_at(t).values for v in parsed])
            filename = f"{config.name}_compare_t{t:g}.csv"
            saver.save_frame(pd.DataFrame(data, columns=columns), filename)
            filenames.append(filename)

        if config.plot_script:
            panels = [
                PlotPanel(title=f"t = {t:g}", curves=[(v.label, name, f"rho_{v.label}") for v in dict.fromkeys(parsed)])
                for t, name in zip(config.output_times, filenames)
            ]
            saver.save_text(
                Visualizer.render_snapshot_script(f"{config.name}: model comparison", panels, f"{config.name}_compare.png"),
                f"plot_{config.name}_compare.py",
            )
        for variant, trajectory in trajectories.items():
            logger.info(f"{config.name}/{variant.label}: 最大密度 {max(float(s.values.max()) for s in trajectory.snapshots):.6g}")
        return list(saver.manifest)

    def stability_study(self, config: RunConfig, variant, q_on_scale: float = 1.05) -> pd.DataFrame:
        """
        q_on を q_on_scale 倍した実行と元の実行の L1 距離を Gronwall 型の上界と並べて書き出す (判定はしない)。

        Args:
            config (RunConfig): 設定。
            variant: モデル。
            q_on_scale (float): q_on の倍率。

        Returns:
            pd.DataFrame: 列 time, l1_distance, bound。
        """
        base = self.simulate_variant(config, variant)
        perturbed_rates = RampRates(q_on=config.rates.q_on.scaled(q_on_scale), q_off=config.rates.q_off)
        perturbed = self.simulate_variant(config.with_overrides(rates=perturbed_rates), variant)
        if base.report is None:
            constants = compute_bound_constants(config.model_config(variant))
            sup_tv = constants.tv_initial
        else:
            constants = base.report.constants
            sup_tv = base.report.sup_tv

        initial = GridBuilder.project_initial_datum(config.initial, config.grid)
        frame = stability_report(base, perturbed, initial, initial, config.rates, perturbed_rates, constants, sup_tv)
        saver = DataSaver(self._directory(config, "stability"))
        saver.save_frame(frame, f"{config.name}_{base.label}_stability.csv")
        log_dataframe(logger, frame)
        return frame
