"""Report artifacts: JSON documents, CSV convergence tables, SVG plots.

Every JSON report embeds the config hash and the package version so a
report can be traced back to the exact inputs that produced it.  Writes
are serialized through a module lock; the numerical pipeline may run
concurrently but artifact emission is single-threaded by design.

The SVG writer is deliberately minimal: fixed canvas, linear axes, a
polyline per series, circle markers for sampled points.  Nothing here
needs a plotting dependency.
"""

from __future__ import annotations

import csv
import json
import threading

from . import __version__

_WRITE_LOCK = threading.Lock()


def _builtin(obj):
    # numpy scalars (bool_, int64, ...) reach payloads through reports
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError("not JSON serializable: %r" % (obj,))


def render_json(payload, cfg=None):
    """Canonical JSON text for a report body (deterministic byte-for-byte)."""
    doc = dict(payload)
    doc["version"] = __version__
    if cfg is not None:
        doc["config_sha256"] = cfg.sha256()
    return json.dumps(doc, sort_keys=True, indent=2, default=_builtin) + "\n"


def write_json(path, payload, cfg=None):
    text = render_json(payload, cfg)
    with _WRITE_LOCK:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return path


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_csv(path, header, rows):
    """Convergence table; floats are written with repr so the file
    round-trips to the same binary values."""
    with _WRITE_LOCK:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(v) if isinstance(v, float) else v
                                 for v in row])
    return path


# ---------------------------------------------------------------- SVG

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 64, 16, 28, 46
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")


def _ticks(lo, hi, n=5):
    import math
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-12 * abs(step):
        out.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return out


def _fmt(v):
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return "%.1e" % v
    return ("%.4f" % v).rstrip("0").rstrip(".")


class _Frame:
    """Maps data coordinates to the SVG pixel frame."""

    def __init__(self, xlo, xhi, ylo, yhi):
        pad_x = 0.05 * (xhi - xlo) or 1.0
        pad_y = 0.05 * (yhi - ylo) or 1.0
        self.xlo, self.xhi = xlo - pad_x, xhi + pad_x
        self.ylo, self.yhi = ylo - pad_y, yhi + pad_y

    def x(self, v):
        t = (v - self.xlo) / (self.xhi - self.xlo)
        return _ML + t * (_W - _ML - _MR)

    def y(self, v):
        t = (v - self.ylo) / (self.yhi - self.ylo)
        return _H - _MB - t * (_H - _MT - _MB)


def write_svg(path, series, title="", xlabel="", ylabel=""):
    """Line plot.  ``series`` is a list of dicts with keys
    ``x``, ``y``, ``label`` and optional ``markers`` (bool)."""
    xs = [v for s in series for v in s["x"]]
    ys = [v for s in series for v in s["y"]]
    fr = _Frame(min(xs), max(xs), min(ys), max(ys))

    parts = ['<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d" '
             'viewBox="0 0 %d %d">' % (_W, _H, _W, _H),
             '<rect width="%d" height="%d" fill="white"/>' % (_W, _H)]
    # axes box and grid
    for tx in _ticks(fr.xlo, fr.xhi):
        px = fr.x(tx)
        parts.append('<line x1="%.1f" y1="%d" x2="%.1f" y2="%d" '
                     'stroke="#ddd"/>' % (px, _MT, px, _H - _MB))
        parts.append('<text x="%.1f" y="%d" font-size="11" '
                     'text-anchor="middle">%s</text>'
                     % (px, _H - _MB + 16, _fmt(tx)))
    for ty in _ticks(fr.ylo, fr.yhi):
        py = fr.y(ty)
        parts.append('<line x1="%d" y1="%.1f" x2="%d" y2="%.1f" '
                     'stroke="#ddd"/>' % (_ML, py, _W - _MR, py))
        parts.append('<text x="%d" y="%.1f" font-size="11" '
                     'text-anchor="end">%s</text>'
                     % (_ML - 6, py + 4, _fmt(ty)))
    parts.append('<rect x="%d" y="%d" width="%d" height="%d" fill="none" '
                 'stroke="black"/>' % (_ML, _MT, _W - _ML - _MR, _H - _MT - _MB))

    for i, s in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join("%.2f,%.2f" % (fr.x(a), fr.y(b))
                       for a, b in zip(s["x"], s["y"]))
        parts.append('<polyline points="%s" fill="none" stroke="%s" '
                     'stroke-width="1.5"/>' % (pts, color))
        if s.get("markers"):
            for a, b in zip(s["x"], s["y"]):
                parts.append('<circle cx="%.2f" cy="%.2f" r="3" fill="%s"/>'
                             % (fr.x(a), fr.y(b), color))
        ly = _MT + 16 + 14 * i
        parts.append('<line x1="%d" y1="%d" x2="%d" y2="%d" stroke="%s" '
                     'stroke-width="1.5"/>' % (_ML + 8, ly - 4, _ML + 28, ly - 4, color))
        parts.append('<text x="%d" y="%d" font-size="11">%s</text>'
                     % (_ML + 33, ly, s["label"]))

    if title:
        parts.append('<text x="%d" y="%d" font-size="13" text-anchor="middle" '
                     'font-weight="bold">%s</text>' % (_W // 2, _MT - 10, title))
    if xlabel:
        parts.append('<text x="%d" y="%d" font-size="12" '
                     'text-anchor="middle">%s</text>' % (_W // 2, _H - 10, xlabel))
    if ylabel:
        parts.append('<text x="14" y="%d" font-size="12" text-anchor="middle" '
                     'transform="rotate(-90 14 %d)">%s</text>'
                     % (_H // 2, _H // 2, ylabel))
    parts.append("</svg>")

    with _WRITE_LOCK:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(parts) + "\n")
    return path
