import json
import math
import os
from typing import List

import numpy as np
import pandas as pd

from config import Config
from core.exceptions import SimulationError
from core.grid import DensityField, Grid
from utils.logger import create_directory_if_not_exists, get_logger

logger = get_logger(__name__)


def snapshot_filename(name: str, label: str, time: float) -> str:
    """例: example1_model1_t0.5.csv"""
    return f"{name}_{label}_t{time:g}.csv"


def _to_json_safe(value):
    """inf / nan を None に置き換える (JSON は非有限値を持てない)。"""
    if isinstance(value, dict):
        return {key: _to_json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_json_safe(item) for item in value]
    if isinstance(value, np.ndarray):
        return _to_json_safe(value.tolist())
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"JSON に変換できない型です: {type(value).__name__}")


class DataSaver:
    """
    出力ファイル (CSV, JSON, スクリプト) を保存し、保存したファイルを manifest に記録するクラス。
    ファイル名に時刻印は入れない。同じ入力からは同じバイト列が出力される。
    """

    def __init__(self, directory: str = Config.OUTPUT_DIRECTORY):
        self.directory = directory
        self.manifest: List[str] = []

    def _path(self, filename: str) -> str:
        create_directory_if_not_exists(self.directory)
        return os.path.join(self.directory, filename)

    def _record(self, path: str) -> str:
        if not os.path.isfile(path) or os.path.getsize(path) == 0:
            raise SimulationError(f"出力ファイルが空か存在しません: {path}")
        if path not in self.manifest:
            self.manifest.append(path)
        logger.debug(f"保存しました: {path}")
        return path

    def save_frame(self, df: pd.DataFrame, filename: str) -> str:
        """
        DataFrame を 17 桁の CSV として保存する。

        Args:
            df (pd.DataFrame): 保存するデータ。
            filename (str): ファイル名。

        Returns:
            str: 保存先のパス。

        Raises:
            SimulationError: 書き込みに失敗した場合 (パスを含む)。
        """
        path = self._path(filename)
        try:
            df.to_csv(path, index=False, float_format=Config.CSV_FLOAT_FORMAT, lineterminator="\n")
        except OSError as e:
            raise SimulationError(f"{path} の書き込みに失敗しました: {e}") from e
        return self._record(path)

    def save_snapshot(self, snapshot: DensityField, grid: Grid, name: str, label: str) -> str:
        """列 x (セル中心), rho の CSV を保存する。"""
        df = pd.DataFrame({"x": grid.cell_centers, "rho": snapshot.values})
        return self.save_frame(df, snapshot_filename(name, label, snapshot.time))

    def save_json(self, data: dict, filename: str) -> str:
        """
        データを JSON ファイルで保存する。inf や nan は null として書き出す。

        Args:
            data (dict): 保存するデータ。
            filename (str): ファイル名。

        Returns:
            str: 保存先のパス。
        """
        path = self._path(filename)
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                json.dump(_to_json_safe(data), f, ensure_ascii=False, indent=4, allow_nan=False, default=_json_default)
                f.write("\n")
        except OSError as e:
            raise SimulationError(f"{path} の書き込みに失敗しました: {e}") from e
        return self._record(path)

    def save_text(self, text: str, filename: str) -> str:
        path = self._path(filename)
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
        except OSError as e:
            raise SimulationError(f"{path} の書き込みに失敗しました: {e}") from e
        return self._record(path)
