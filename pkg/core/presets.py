import copy
from typing import Dict, List

_RAMPS = {
    "length": 0.1,
    "on": [1.0, 1.1],
    "off": [3.0, 3.1],
}

PRESETS: Dict[str, dict] = {
    "example1": {
        "name": "example1",
        "description": "Model 1 と Model 2 の比較 (一定の初期密度 0.3)",
        "domain": {"x_left": -1.0, "x_right": 9.0, "dx": 0.001},
        "time": {"final": 7.0, "outputs": [0.5, 2.0, 5.0, 7.0]},
        "velocity": {"kind": "affine", "v_max": 1.0},
        "kernel": {"eta": 0.05, "delta": -0.01},
        "models": [1, 2],
        "initial": {"kind": "constant", "value": 0.3},
        "ramps": {
            **_RAMPS,
            "q_on": {"kind": "constant", "value": 1.2},
            "q_off": {"kind": "constant", "value": 0.8},
        },
        "boundary": {"left": "outflow", "right": "outflow"},
    },
    "example2": {
        "name": "example2",
        "description": "η → 0 の極限 (Model 2 と局所 Godunov 解の L1 距離)",
        "domain": {"x_left": -1.0, "x_right": 9.0, "dx": 0.001},
        "time": {"final": 5.0, "outputs": [5.0]},
        "velocity": {"kind": "affine", "v_max": 1.0},
        "kernel": {"eta": 0.1, "delta": 0.0},
        "models": [2],
        "initial": {"kind": "constant", "value": 0.3},
        "ramps": {
            **_RAMPS,
            "q_on": {"kind": "constant", "value": 1.2},
            "q_off": {"kind": "constant", "value": 0.8},
        },
        "boundary": {"left": "outflow", "right": "outflow"},
        "convergence": {"eta_list": [0.1, 0.05, 0.01, 0.004], "window": [0.0, 9.0]},
        "notes": [
            "初期データは x ∈ [0, 1] 上で 0.3 とだけ与えられ計算領域が明示されていないため、"
            "example1 と同じ領域 [-1, 9] 上の一定値 0.3 を使う。",
            "L1 距離は x ≥ 0 の区間 [0, 9] で測る。"
            "T = 5 ではオンランプ上流の渋滞末尾の衝撃波が x ≈ -0.2 にあり、x < 0 は初期データの与えられた範囲の外にある。",
        ],
    },
    "example3": {
        "name": "example3",
        "description": "最大値原理 (Model 0 は 1 を超える)",
        "domain": {"x_left": -1.0, "x_right": 9.0, "dx": 0.01},
        "time": {"final": 0.3, "outputs": [0.3]},
        "velocity": {"kind": "affine", "v_max": 1.0},
        "kernel": {"eta": 0.05, "delta": -0.01},
        "models": [0, 1, 2],
        "initial": {"kind": "step", "left": 0.1, "right": 0.9, "position": 1.1},
        "ramps": {
            **_RAMPS,
            "q_on": {"kind": "constant", "value": 1.0},
            "q_off": {"kind": "constant", "value": 0.2},
        },
        "boundary": {"left": "outflow", "right": "outflow"},
    },
    "example4": {
        "name": "example4",
        "description": "空いた本線 (左端から密度 0.4 が流入、周期的なオンランプ流量)",
        "domain": {"x_left": -1.0, "x_right": 5.0, "dx": 0.001},
        "time": {"final": 7.0, "outputs": [1.0, 2.0, 5.0, 7.0]},
        "velocity": {"kind": "affine", "v_max": 1.0},
        "kernel": {"eta": 0.1, "delta": -0.02},
        "models": [1, 2],
        "initial": {"kind": "constant", "value": 0.0},
        "ramps": {
            **_RAMPS,
            "q_on": {"kind": "sinusoidal", "value": 1.0},
            "q_off": {"kind": "constant", "value": 0.2},
        },
        "boundary": {"left": "dirichlet", "left_value": 0.4, "right": "outflow"},
    },
}


def list_presets() -> List[str]:
    return sorted(PRESETS)


def get_preset(name: str) -> dict:
    """
    プリセットの設定ツリーのコピーを返す。

    Raises:
        KeyError: 未知のプリセット名の場合。
    """
    if name not in PRESETS:
        raise KeyError(f"未知のプリセット {name!r} (利用可能: {', '.join(list_presets())})")
    return copy.deepcopy(PRESETS[name])
