from typing import Optional


class SimulationError(Exception):
    """シミュレーション関連のエラーの基底クラス。"""


class ConfigurationError(SimulationError, ValueError):
    """格子の整合性やパラメータ範囲など、設定に起因するエラー。"""


class DataError(SimulationError, ValueError):
    """初期データの範囲外や格子の不一致など、データに起因するエラー。"""


class KernelDomainError(SimulationError, ValueError):
    """カーネルをその台の外で評価しようとした場合のエラー。"""


class SchemeInvariantError(SimulationError, AssertionError):
    """
    スキームの不変条件 (ゴースト幅、最大値原理) が破れた場合のエラー。

    Attributes:
        step (int, optional): 違反が起きた時間ステップ。
        cell (int, optional): 違反が起きたセル番号。
    """

    def __init__(self, message: str, step: Optional[int] = None, cell: Optional[int] = None):
        super().__init__(message)
        self.step = step
        self.cell = cell
