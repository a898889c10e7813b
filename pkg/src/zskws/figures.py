"""CSV + SVG emitters for similarity matrices and phoneme-to-frame heatmaps."""

import csv
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

CELL = 28
MARGIN = 80


def write_matrix_csv(path, matrix, row_labels, col_labels):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([""] + list(col_labels))
        for label, row in zip(row_labels, np.asarray(matrix)):
            w.writerow([label] + [f"{v:.9g}" for v in row])


def read_matrix_csv(path):
    """Returns (matrix, row_labels, col_labels)."""
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    cols = rows[0][1:]
    labels = [r[0] for r in rows[1:]]
    m = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64).reshape(len(labels), len(cols))
    return m, labels, cols


def _svg(levels, row_labels, col_labels, title):
    """Grayscale heatmap; ``levels`` are 0..255 gray values per cell."""
    n_rows, n_cols = levels.shape
    width, height = MARGIN + CELL * n_cols + 10, MARGIN + CELL * n_rows + 10
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f"<title>{escape(title)}</title>",
    ]
    for j, label in enumerate(col_labels):
        x = MARGIN + CELL * j + CELL / 2
        out.append(
            f'<text x="{x}" y="{MARGIN - 6}" font-size="10" text-anchor="start" '
            f'transform="rotate(-60 {x} {MARGIN - 6})">{escape(str(label))}</text>'
        )
    for i, label in enumerate(row_labels):
        y = MARGIN + CELL * i
        out.append(f'<text x="{MARGIN - 4}" y="{y + CELL * 0.65}" font-size="10" text-anchor="end">{escape(str(label))}</text>')
        for j in range(n_cols):
            g = int(levels[i, j])
            out.append(
                f'<rect class="cell" data-row="{i}" data-col="{j}" x="{MARGIN + CELL * j}" y="{y}" '
                f'width="{CELL}" height="{CELL}" fill="rgb({g},{g},{g})"/>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def minmax(matrix):
    """Scale to [0, 1]; a constant matrix maps to 0.5 everywhere."""
    m = np.asarray(matrix, dtype=np.float64)
    lo, hi = m.min(), m.max()
    if hi == lo:
        return np.full_like(m, 0.5)
    return (m - lo) / (hi - lo)


def emit_similarity_matrix(sim, row_labels, col_labels, path):
    """Write ``<path>.csv`` and ``<path>.svg``; higher similarity is drawn darker."""
    sim = np.asarray(getattr(sim, "s_utt", sim), dtype=np.float64)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise ValueError("similarity matrix must be square")
    stem = Path(path).with_suffix("")
    write_matrix_csv(stem.with_suffix(".csv"), sim, row_labels, col_labels)
    levels = np.round(255 * (1.0 - minmax(sim)))
    stem.with_suffix(".svg").write_text(_svg(levels, row_labels, col_labels, "audio vs keyword cosine similarity"))
    return stem.with_suffix(".csv"), stem.with_suffix(".svg")


def emit_alignment_heatmap(attn, phoneme_labels, path, frame_labels=None):
    """Phonemes as rows, frames as columns; attention weight w is drawn at brightness w."""
    attn = np.asarray(getattr(attn, "attn", attn), dtype=np.float64)
    if attn.ndim != 2:
        raise ValueError("attention must be a [T_t, T_a] matrix")
    frame_labels = [str(i) for i in range(attn.shape[1])] if frame_labels is None else frame_labels
    stem = Path(path).with_suffix("")
    write_matrix_csv(stem.with_suffix(".csv"), attn, phoneme_labels, frame_labels)
    levels = np.round(255 * np.clip(attn, 0.0, 1.0))
    stem.with_suffix(".svg").write_text(_svg(levels, phoneme_labels, frame_labels, "phoneme-to-frame attention"))
    return stem.with_suffix(".csv"), stem.with_suffix(".svg")


def svg_cell_levels(svg_text):
    """Parse the gray level of every cell back out of an emitted SVG (for checks)."""
    import re

    cells = re.findall(r'data-row="(\d+)" data-col="(\d+)".*?fill="rgb\((\d+),', svg_text)
    n_rows = max(int(r) for r, _, _ in cells) + 1
    n_cols = max(int(c) for _, c, _ in cells) + 1
    out = np.zeros((n_rows, n_cols), dtype=np.int64)
    for r, c, g in cells:
        out[int(r), int(c)] = int(g)
    return out


def row_entropy(attn):
    """Mean Shannon entropy (nats) of attention rows."""
    a = np.clip(np.asarray(attn, dtype=np.float64), 1e-12, 1.0)
    return float(np.mean(-(a * np.log(a)).sum(axis=-1)))
