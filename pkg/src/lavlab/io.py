"""
File formats: versioned CSV tables, static SVG figures and flat key=value
run configurations.
"""

import csv
import math
import os
from dataclasses import dataclass, field, fields
from xml.sax.saxutils import escape

import numpy as np

from .errors import ParameterError

__all__ = [
    "fmt_number",
    "write_csv",
    "read_csv",
    "svg_polylines",
    "svg_loglog",
    "RunConfig",
    "ConfigError",
    "parse_config",
    "load_config",
]


class ConfigError(ParameterError):
    """A configuration file or flag could not be parsed."""


def fmt_number(v):
    """17 significant digits for floats so values round-trip exactly."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(v)


def write_csv(path, schema, header, rows):
    """UTF-8 CSV whose first line is ``#schema=<schema>``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"#schema={schema}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt_number(v) for v in r])


def read_csv(path):
    """(schema, header, rows-as-strings)."""
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith("#schema="):
            raise ParameterError(f"{path}: missing schema line")
        rows = list(csv.reader(fh))
    if not rows:
        raise ParameterError(f"{path}: missing header")
    return first[len("#schema="):], rows[0], rows[1:]


# --- SVG ----------------------------------------------------------------------------

_PALETTE = ["#1f4e79", "#b03a2e", "#1e8449", "#7d3c98", "#b9770e", "#5d6d7e"]


def _svg_open(width, height, title):
    return [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]


def _pts(xy):
    return " ".join(f"{x:.3f},{y:.3f}" for x, y in xy)


def svg_polylines(path, curves, title="", width=640, height=480, margin=24):
    """Closed or open polylines in data coordinates, equal aspect ratio.

    ``curves`` is a list of (points (n, 2), style dict) where the style may
    contain ``color``, ``fill``, ``closed`` and ``label``.
    """
    allp = np.concatenate([np.asarray(c[0], float) for c in curves])
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    scale = min((width - 2 * margin) / span[0], (height - 2 * margin - 16) / span[1])

    def tr(p):
        p = np.asarray(p, float)
        x = margin + (p[:, 0] - lo[0]) * scale
        y = height - margin - (p[:, 1] - lo[1]) * scale
        return np.stack([x, y], axis=1)

    out = _svg_open(width, height, title)
    if title:
        out.append(f'<text x="{margin}" y="16" font-family="sans-serif" font-size="12">'
                   f"{escape(title)}</text>")
    for i, (pts, style) in enumerate(curves):
        color = style.get("color", _PALETTE[i % len(_PALETTE)])
        fill = style.get("fill", "none")
        tag = "polygon" if style.get("closed", True) else "polyline"
        opacity = style.get("opacity", 0.35 if fill != "none" else 1.0)
        out.append(f'<{tag} points="{_pts(tr(pts))}" fill="{fill}" fill-opacity="{opacity}" '
                   f'stroke="{color}" stroke-width="1"/>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def svg_loglog(path, series, title="", xlabel="s", ylabel="E_s", width=640, height=480):
    """Log-log plot of (x, y, label) series with markers and a legend."""
    margin_l, margin_r, margin_t, margin_b = 70, 20, 30, 50
    xs = np.concatenate([np.asarray(s[0], float) for s in series])
    ys = np.concatenate([np.asarray(s[1], float) for s in series])
    good = (xs > 0) & (ys > 0) & np.isfinite(ys)
    lx, ly = np.log10(xs[good]), np.log10(ys[good])
    x0, x1 = math.floor(lx.min()), math.ceil(lx.max())
    y0, y1 = math.floor(ly.min()), math.ceil(ly.max())
    x1 = max(x1, x0 + 1)
    y1 = max(y1, y0 + 1)
    pw = width - margin_l - margin_r
    ph = height - margin_t - margin_b

    def tx(v):
        return margin_l + (np.log10(v) - x0) / (x1 - x0) * pw

    def ty(v):
        return margin_t + ph - (np.log10(v) - y0) / (y1 - y0) * ph

    out = _svg_open(width, height, title)
    out.append(f'<text x="{margin_l}" y="18" font-family="sans-serif" font-size="13">'
               f"{escape(title)}</text>")
    out.append(f'<rect x="{margin_l}" y="{margin_t}" width="{pw}" height="{ph}" '
               'fill="none" stroke="black" stroke-width="1"/>')
    for e in range(x0, x1 + 1):
        X = tx(10.0**e)
        out.append(f'<line x1="{X:.2f}" y1="{margin_t}" x2="{X:.2f}" y2="{margin_t + ph}" '
                   'stroke="#dddddd" stroke-width="0.5"/>')
        out.append(f'<text x="{X:.2f}" y="{margin_t + ph + 16}" font-family="sans-serif" '
                   f'font-size="11" text-anchor="middle">1e{e}</text>')
    for e in range(y0, y1 + 1):
        Y = ty(10.0**e)
        out.append(f'<line x1="{margin_l}" y1="{Y:.2f}" x2="{margin_l + pw}" y2="{Y:.2f}" '
                   'stroke="#dddddd" stroke-width="0.5"/>')
        out.append(f'<text x="{margin_l - 6}" y="{Y + 4:.2f}" font-family="sans-serif" '
                   f'font-size="11" text-anchor="end">1e{e}</text>')
    out.append(f'<text x="{margin_l + pw / 2}" y="{height - 12}" font-family="sans-serif" '
               f'font-size="12" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{margin_t + ph / 2}" font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 16 {margin_t + ph / 2})" text-anchor="middle">'
               f"{escape(ylabel)}</text>")
    for i, (x, y, label) in enumerate(series):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        ok = (x > 0) & (y > 0) & np.isfinite(y)
        color = _PALETTE[i % len(_PALETTE)]
        pts = np.stack([tx(x[ok]), ty(y[ok])], axis=1)
        out.append(f'<polyline points="{_pts(pts)}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for X, Y in pts:
            out.append(f'<circle cx="{X:.3f}" cy="{Y:.3f}" r="3" fill="{color}"/>')
        ly_ = margin_t + 16 + 16 * i
        out.append(f'<line x1="{margin_l + 10}" y1="{ly_ - 4}" x2="{margin_l + 30}" y2="{ly_ - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{margin_l + 36}" y="{ly_}" font-family="sans-serif" '
                   f'font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


# --- configuration -------------------------------------------------------------------

def _floats(text):
    return [float(v) for v in text.replace(",", " ").split()]


def _ints(text):
    return [int(v) for v in text.replace(",", " ").replace("x", " ").split()]


@dataclass
class RunConfig:
    """All knobs of a CLI run; unset material/shape values take the documented defaults."""

    command: str = ""
    dim: int = 2
    p: float = None
    q: float = None
    gamma: float = None
    family: str = None
    alpha: float = None
    beta: float = None
    s_list: list = None
    seed: int = 0
    out: str = "."
    h: float = None
    eta_list: list = None
    sigma: float = None
    grid_n: int = 64
    resolution: list = None
    max_iterations: int = 10000
    samples: int = 10000
    gauss_order: int = 16
    grading_levels: int = 40
    grading_ratio: float = 0.5
    refinement_cap: int = 60
    svg_samples: int = 200
    extra: dict = field(default_factory=dict)


_PARSERS = {
    "command": str,
    "dim": int,
    "p": float,
    "q": float,
    "gamma": float,
    "family": str,
    "alpha": float,
    "beta": float,
    "s_list": _floats,
    "seed": int,
    "out": str,
    "h": float,
    "eta_list": _floats,
    "sigma": float,
    "grid_n": int,
    "resolution": _ints,
    "max_iterations": int,
    "samples": int,
    "gauss_order": int,
    "grading_levels": int,
    "grading_ratio": float,
    "refinement_cap": int,
    "svg_samples": int,
}


def set_field(cfg, key, raw, where="flag"):
    key = key.strip().replace("-", "_")
    if key not in _PARSERS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    try:
        value = _PARSERS[key](raw.strip()) if isinstance(raw, str) else raw
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {key}={raw!r} ({exc})") from None
    setattr(cfg, key, value)


def parse_config(text, cfg=None, source="<config>"):
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    cfg = cfg or RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line.strip()!r}")
        key, value = body.split("=", 1)
        set_field(cfg, key, value, where=f"{source}:{lineno}")
    return cfg


def load_config(path, cfg=None):
    if not os.path.exists(path):
        raise ConfigError(f"config file {path!r} not found")
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), cfg, source=path)


def config_items(cfg):
    """Stable (key, value) listing for provenance rows."""
    out = []
    for f in fields(cfg):
        if f.name == "extra":
            continue
        v = getattr(cfg, f.name)
        if isinstance(v, list):
            v = " ".join(fmt_number(x) for x in v)
        out.append((f.name, v))
    return out
