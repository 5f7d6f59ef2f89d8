"""Graphviz rendering of a sliding-window traversal."""

from typing import List, Tuple

import graphviz

from rankdigest.config import WindowPlan
from rankdigest.rerank import window_spans

_WINDOW_COLORS = [
    "#7dd3fc",  # sky
    "#bbf7d0",  # green
    "#fde047",  # yellow
    "#fdba74",  # orange
    "#f9a8d4",  # pink
    "#c4b5fd",  # violet
]


def build_window_graph(n: int, plan: WindowPlan) -> graphviz.Digraph:
    """
    One node per window in traversal order, edges labeled with the overlap carried forward.

    Raises:
        ValueError: If n < 1
    """
    spans = window_spans(n, plan)
    dot = graphviz.Digraph(format="svg", engine="dot")
    dot.attr(rankdir="LR")
    dot.attr(bgcolor="transparent")
    dot.attr("node", shape="box", style="rounded,filled", fontname="Helvetica", fontsize="11")
    dot.attr("edge", fontsize="10", fontcolor="#64748b", color="#94a3b8", penwidth="1.5")

    for idx, (start, end) in enumerate(spans):
        label = f"window {idx + 1}\\nranks {start + 1}-{end}"
        dot.node(f"w{idx}", label=label, fillcolor=_WINDOW_COLORS[idx % len(_WINDOW_COLORS)])
    for idx, label in enumerate(_overlap_labels(spans)):
        dot.edge(f"w{idx}", f"w{idx + 1}", label=label)
    return dot


def _overlap_labels(spans: List[Tuple[int, int]]) -> List[str]:
    labels = []
    for (start, _), (_, next_end) in zip(spans, spans[1:]):
        carried = max(0, next_end - start)
        labels.append(f"carries {carried}")
    return labels


def render_window_plan(n: int, plan: WindowPlan) -> str:
    """
    Render the traversal of an n-item list as an SVG string.

    Raises:
        ValueError: If n < 1, Graphviz is missing, or rendering fails
    """
    dot = build_window_graph(n, plan)
    try:
        svg_str = dot.pipe(format="svg").decode("utf-8")
    except graphviz.ExecutableNotFound:
        raise ValueError("Graphviz executable not found. Please install Graphviz system package.")
    except graphviz.CalledProcessError as e:
        raise ValueError(f"Failed to generate SVG: {e}\nDOT source:\n{dot.source}")

    start = svg_str.find("<svg")
    end = svg_str.rfind("</svg>")
    if start < 0 or end < start:
        raise ValueError(f"No SVG element found in Graphviz output. Got: {svg_str[:200]}")
    svg_str = svg_str[start : end + len("</svg>")]
    if "xmlns=" not in svg_str:
        svg_str = svg_str.replace("<svg", '<svg xmlns="http://www.w3.org/2000/svg"', 1)
    return svg_str
