"""Figure rendering on the non-interactive Agg canvas."""

import io
import logging
from pathlib import Path
from typing import Mapping, Sequence, Tuple

from matplotlib.figure import Figure

logger = logging.getLogger(__name__)

FIGURE_SIZE = (10, 4)  # inches
FIGURE_DPI = 100
LINE_WIDTH = 1.0


def line_figure(series: Mapping[str, Tuple[Sequence, Sequence]], title: str, ylabel: str = "") -> Figure:
    """Plot one or more line series."""
    figure = Figure(figsize=FIGURE_SIZE, dpi=FIGURE_DPI)
    axes = figure.add_subplot(1, 1, 1)
    for label, (x, y) in series.items():
        axes.plot(list(x), list(y), label=label, linewidth=LINE_WIDTH)
    axes.set_title(title)
    if ylabel:
        axes.set_ylabel(ylabel)
    if len(series) > 1:
        axes.legend(loc="upper left")
    figure.autofmt_xdate()
    return figure


def bar_figure(values: Mapping[str, float], title: str, ylabel: str = "") -> Figure:
    """Plot labelled bars."""
    figure = Figure(figsize=FIGURE_SIZE, dpi=FIGURE_DPI)
    axes = figure.add_subplot(1, 1, 1)
    labels = list(values)
    axes.bar(labels, [values[label] for label in labels])
    axes.set_title(title)
    if ylabel:
        axes.set_ylabel(ylabel)
    return figure


def png_bytes(figure: Figure) -> bytes:
    """Encode ``figure`` as PNG."""
    buffer = io.BytesIO()
    figure.savefig(buffer, format="png", bbox_inches="tight")
    return buffer.getvalue()


def render_lines(path: Path, series: Mapping[str, Tuple[Sequence, Sequence]], title: str, ylabel: str = "") -> Path:
    """Render one or more line series into a PNG file."""
    line_figure(series, title, ylabel).savefig(path, format="png", bbox_inches="tight")
    logger.debug(f"rendered {path}")
    return Path(path)
