import argparse
import sys
from typing import List, Optional

from config import Config
from core.config_loader import load_config
from core.exceptions import ConfigurationError, SimulationError
from core.experiments import ExperimentRunner
from core.presets import PRESETS, list_presets
from core.scheme import ModelVariant
from utils.logger import configure_logging, get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_CONFIG_ERROR = 2


def _float_list(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"カンマ区切りの数値のリストではありません: {text!r}") from e


def _model_list(text: str) -> List[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nonlocal-ramps",
        description="オン・オフランプ付き非局所交通流モデルの数値実験",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON 設定ファイルまたはプリセット名 (例: example1)")
    common.add_argument("--out", help="出力ディレクトリ (設定ファイルの output.directory を上書き)")
    common.add_argument("--dry-run", action="store_true", help="設定の検証のみ行い、ファイルは書き出さない")
    common.add_argument("--cfl-safety", type=float, help="CFL 安全係数 (0, 1]")
    common.add_argument("--no-diagnostics", action="store_true", help="診断 (上界・エントロピー検査) を省略する")
    common.add_argument("--progress", action="store_true", help="tqdm で進捗を表示する")

    parser.add_argument("--log-level", default=Config.DEFAULT_LOG_LEVEL, help="ログレベル")
    subparsers = parser.add_subparsers(dest="command", required=True)

    subparsers.add_parser("run", parents=[common], help="設定の各モデルを実行する")

    convergence = subparsers.add_parser("convergence", parents=[common], help="η → 0 の収束実験 (Model 2 と局所 Godunov 解)")
    convergence.add_argument("--eta", type=_float_list, help="η のカンマ区切りリスト")
    convergence.add_argument("--workers", type=int, default=Config.CONVERGENCE_WORKERS, help="並列実行するプロセス数")

    compare = subparsers.add_parser("compare", parents=[common], help="モデルを並べた CSV を出力する")
    compare.add_argument("--models", type=_model_list, default=None, help="モデルのカンマ区切りリスト (例: 0,1,2)")

    stability = subparsers.add_parser("stability", parents=[common], help="q_on を摂動した実行との L1 距離を上界と比較する")
    stability.add_argument("--model", default="1", help="モデル (0, 1, 2)")
    stability.add_argument("--q-on-scale", type=float, default=1.05, help="q_on の倍率")

    presets = subparsers.add_parser("presets", help="プリセットの操作")
    presets.add_argument("action", choices=["list"], help="list: プリセットの一覧を表示")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    overrides = {}
    if args.out:
        overrides["output"] = {"directory": args.out}
    if args.cfl_safety is not None:
        overrides["numerics"] = {"cfl_safety": args.cfl_safety}
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    """
    CLI のエントリポイント。

    Returns:
        int: 終了コード (0: 成功, 1: 実行時エラー, 2: 設定エラー)。
    """
    args = build_parser().parse_args(argv)
    configure_logging(level=args.log_level)

    if args.command == "presets":
        for name in list_presets():
            print(f"{name}\t{PRESETS[name]['description']}")
        return EXIT_OK

    result = load_config(args.config, _overrides(args))
    if result.is_err():
        for message in result.unwrap_err():
            logger.error(message)
        return EXIT_CONFIG_ERROR
    config = result.unwrap()
    if args.no_diagnostics:
        config = config.with_overrides(diagnostics=False)

    if args.command == "compare" and args.models:
        try:
            for model in args.models:
                ModelVariant.parse(model)
        except ConfigurationError as e:
            logger.error(str(e))
            return EXIT_CONFIG_ERROR

    if args.dry_run:
        logger.info(f"{config.name}: 設定は有効です (セル数 {config.grid.n_cells}, モデル {[v.label for v in config.variants]})")
        return EXIT_OK

    runner = ExperimentRunner(progress=args.progress, workers=getattr(args, "workers", Config.CONVERGENCE_WORKERS))
    try:
        if args.command == "run":
            runner.run(config)
        elif args.command == "convergence":
            runner.convergence_study(config, args.eta)
        elif args.command == "compare":
            runner.compare_models(config, args.models or list(config.variants))
        elif args.command == "stability":
            runner.stability_study(config, args.model, args.q_on_scale)
    except ConfigurationError as e:
        logger.error(f"{config.name}: {e}")
        return EXIT_CONFIG_ERROR
    except SimulationError as e:
        logger.error(f"{config.name}: 実行に失敗しました: {e}")
        return EXIT_RUNTIME_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
