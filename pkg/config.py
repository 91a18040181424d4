import os
from dotenv import load_dotenv

load_dotenv()


class Config:
    DEFAULT_LOG_LEVEL = os.environ.get("DEFAULT_LOG_LEVEL", "INFO")
    LOG_DIRECTORY = os.environ.get("LOG_DIRECTORY", "logs")
    LOG_FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {name} | {message}"
    CONSOLE_LOG_FORMAT = "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan> | <level>{message}</level>"
    LOG_ROTATION = "10 MB"
    LOG_RETENTION = 5
    LOG_COMPRESSION = "zip"

    OUTPUT_DIRECTORY = os.environ.get("OUTPUT_DIRECTORY", "output")

    # 数値スキームの既定値
    CFL_SAFETY = float(os.environ.get("CFL_SAFETY", "0.9"))
    GAUSS_LEGENDRE_ORDER = int(os.environ.get("GAUSS_LEGENDRE_ORDER", "8"))
    ALIGNMENT_RTOL = float(os.environ.get("ALIGNMENT_RTOL", "1e-9"))
    WEIGHT_SUM_TOL = 1e-12

    # 診断の既定値
    KAPPA_STEP = float(os.environ.get("KAPPA_STEP", "0.05"))
    MAX_PRINCIPLE_TOL = float(os.environ.get("MAX_PRINCIPLE_TOL", "1e-12"))
    ENTROPY_TOL = float(os.environ.get("ENTROPY_TOL", "1e-12"))
    BOUND_RTOL = 1e-12
    MAX_RECORDED_VIOLATIONS = 1000

    # 出力
    CSV_FLOAT_FORMAT = "%.17g"
    CONVERGENCE_WORKERS = int(os.environ.get("CONVERGENCE_WORKERS", "1"))
    DEFAULT_ETA_LIST = [0.1, 0.05, 0.01, 0.004]

    VALID_BOUNDARY_KINDS = ["outflow", "dirichlet", "periodic"]
    VALID_RATE_KINDS = ["constant", "sinusoidal", "tabulated"]
    VALID_INITIAL_KINDS = ["constant", "step", "bump"]
    VALID_VELOCITY_KINDS = ["affine", "tabulated"]

    _ALIGNMENT_ERROR_MESSAGE = "{what} = {value!r} が格子幅 dx = {dx!r} の整数倍ではありません。"
    _RANGE_ERROR_MESSAGE = "{what} の値 {value!r} が範囲 {interval} の外にあります。"
    _GHOST_WIDTH_ERROR_MESSAGE = "ゴーストセル幅が不足しています: 必要 {needed}, 実際 {actual}"
    _MAX_PRINCIPLE_ERROR_MESSAGE = "最大値原理違反: step={step}, cell={cell}, rho={value!r}"
