from config import Config
from core.exceptions import ConfigurationError


def aligned_cell_count(length: float, dx: float, what: str, rtol: float = None) -> int:
    """
    length が dx の整数倍であることを確認し、その整数を返す。

    Args:
        length (float): 長さ (負でもよい)。
        dx (float): 格子幅。
        what (str): エラーメッセージに使うフィールド名。
        rtol (float, optional): 相対許容誤差. Defaults to None (Config.ALIGNMENT_RTOL を使用).

    Returns:
        int: round(length / dx)

    Raises:
        ConfigurationError: 整数倍でない場合。
    """
    tol = rtol if rtol is not None else Config.ALIGNMENT_RTOL
    ratio = length / dx
    count = int(round(ratio))
    if abs(ratio - count) > tol * max(1.0, abs(count)):
        raise ConfigurationError(Config._ALIGNMENT_ERROR_MESSAGE.format(what=what, value=length, dx=dx))
    return count


def deep_merge(base: dict, override: dict) -> dict:
    """
    override の値で base を再帰的に上書きした新しい辞書を返す。

    Args:
        base (dict): 元の辞書。
        override (dict): 上書きする辞書。

    Returns:
        dict: マージ結果 (引数は変更しない)。
    """
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged
