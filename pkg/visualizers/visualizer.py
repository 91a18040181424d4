from dataclasses import dataclass, field
from typing import List, Tuple

from jinja2 import Environment, StrictUndefined

from utils.logger import get_logger

logger = get_logger(__name__)

_SNAPSHOT_TEMPLATE = '''#!/usr/bin/env python
"""{{ title }}"""
import os

import matplotlib.pyplot as plt
import pandas as pd

HERE = os.path.dirname(os.path.abspath(__file__))

PANELS = [
{%- for panel in panels %}
    ({{ panel.title | tojson }}, [
    {%- for label, filename, column in panel.curves %}
        ({{ label | tojson }}, {{ filename | tojson }}, {{ column | tojson }}),
    {%- endfor %}
    ]),
{%- endfor %}
]


def main():
    columns = min(len(PANELS), 2)
    rows = (len(PANELS) + columns - 1) // columns
    fig, axes = plt.subplots(rows, columns, figsize=(5 * columns, 3.5 * rows), squeeze=False)
    for ax, (title, curves) in zip(axes.flat, PANELS):
        for label, filename, column in curves:
            df = pd.read_csv(os.path.join(HERE, filename))
            ax.plot(df["x"], df[column], label=label, linewidth=1.0)
        ax.set_title(title, fontsize=9)
        ax.set_xlabel("x")
        ax.set_ylabel("rho")
        ax.spines["top"].set_color("none")
        ax.spines["right"].set_color("none")
        ax.legend(loc="best", frameon=False, fontsize=8)
    for ax in list(axes.flat)[len(PANELS):]:
        ax.set_visible(False)
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, {{ image | tojson }}), dpi=150)


if __name__ == "__main__":
    main()
'''

_TABLE_TEMPLATE = '''#!/usr/bin/env python
"""{{ title }}"""
import os

import matplotlib.pyplot as plt
import pandas as pd

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    df = pd.read_csv(os.path.join(HERE, {{ table | tojson }}))
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.loglog(df[{{ x_column | tojson }}], df[{{ y_column | tojson }}], "k.-")
    ax.set_xlabel({{ x_column | tojson }})
    ax.set_ylabel({{ y_column | tojson }})
    ax.spines["top"].set_color("none")
    ax.spines["right"].set_color("none")
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, {{ image | tojson }}), dpi=150)


if __name__ == "__main__":
    main()
'''


@dataclass
class PlotPanel:
    """1 枚のパネル。curves は (凡例ラベル, CSV ファイル名, 列名) の列。"""
    title: str
    curves: List[Tuple[str, str, str]] = field(default_factory=list)


class Visualizer:
    """
    出力 CSV を読み込んで図を描く matplotlib スクリプトを Jinja2 テンプレートから生成するクラス。
    """

    _environment = Environment(undefined=StrictUndefined, keep_trailing_newline=True)

    @staticmethod
    def render_snapshot_script(title: str, panels: List[PlotPanel], image: str) -> str:
        """
        CSV の列 x に対して各曲線の列を重ね描きするスクリプトを生成する。

        Args:
            title (str): スクリプトの説明。
            panels (List[PlotPanel]): パネルの列 (通常は出力時刻ごと)。
            image (str): 保存する画像ファイル名 (スクリプトと同じディレクトリ)。

        Returns:
            str: Python スクリプトの本文。
        """
        template = Visualizer._environment.from_string(_SNAPSHOT_TEMPLATE)
        return template.render(
            title=title,
            panels=[{"title": p.title, "curves": [list(c) for c in p.curves]} for p in panels],
            image=image,
        )

    @staticmethod
    def render_table_script(title: str, table: str, x_column: str, y_column: str, image: str) -> str:
        """表 CSV の 2 列を両対数で描くスクリプトを生成する。"""
        template = Visualizer._environment.from_string(_TABLE_TEMPLATE)
        return template.render(title=title, table=table, x_column=x_column, y_column=y_column, image=image)

