"""Plot-data emission from ``rewards.csv``: per-agent text series plus one SVG."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from .errors import DataError

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
          "#e377c2", "#7f7f7f"]


def read_rewards_csv(path):
    """Return ``(episodes, series)`` where ``series[i]`` is agent i's raw rewards."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise DataError(f"{path}: line 1: missing header")
    header = lines[0].split(",")
    raw_cols = [j for j, h in enumerate(header) if h.startswith("raw_")]
    if not header or header[0] != "episode" or not raw_cols:
        raise DataError(f"{path}: line 1: expected header 'episode,raw_0,...'")
    episodes, series = [], [[] for _ in raw_cols]
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise DataError(f"{path}: line {lineno}: expected {len(header)} columns, "
                            f"got {len(cells)}")
        try:
            episodes.append(int(cells[0]))
            for s, j in zip(series, raw_cols):
                s.append(float(cells[j]))
        except ValueError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from exc
    return episodes, series


def render_svg(episodes, series, width=640, height=360, pad=48):
    xs = episodes or [0]
    ys = [v for s in series for v in s] or [0.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
        'stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" '
        'font-size="12">episode</text>',
        f'<text x="14" y="{height / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2})">accumulative reward</text>',
        f'<text x="{pad - 4}" y="{py(y1) + 4:.1f}" text-anchor="end" '
        f'font-size="10">{y1:.4g}</text>',
        f'<text x="{pad - 4}" y="{py(y0) + 4:.1f}" text-anchor="end" '
        f'font-size="10">{y0:.4g}</text>',
    ]
    for i, s in enumerate(series):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(episodes, s))
        if len(s) == 1:
            parts.append(f'<circle cx="{px(episodes[0]):.2f}" cy="{py(s[0]):.2f}" r="3" '
                         f'fill="{color}"/>')
        elif s:
            parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                         f'points="{pts}"/>')
        parts.append(f'<text x="{width - pad + 4}" y="{pad + 14 * i}" font-size="11" '
                     f'fill="{color}">{escape(f"agent {i}")}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def plot_emit(csv_path, out_dir):
    """Write ``agent_<i>.txt`` (episode, reward) series and ``rewards.svg``."""
    episodes, series = read_rewards_csv(csv_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, s in enumerate(series):
        p = out / f"agent_{i}.txt"
        p.write_text("".join(f"{e} {repr(float(v))}\n" for e, v in zip(episodes, s)))
        written.append(p)
    svg = out / "rewards.svg"
    svg.write_text(render_svg(episodes, series))
    written.append(svg)
    return written
