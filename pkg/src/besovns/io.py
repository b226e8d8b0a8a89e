"""
Field snapshots, trajectory stores, CSV tables, run manifests and SVG line plots.

Snapshot format (version 1)
---------------------------
``<stem>.json`` holds the header::

    {"format": "besovns-field", "version": 1, "dim": 2, "sizes": [64, 64],
     "periods": [6.283..., 6.283...], "components": 0, "dtype": "float64",
     "byte_order": "little", "layout": "C", "encoding": "binary", "t": 0.0,
     "name": "a"}

and ``<stem>.bin`` the node values as little-endian float64 in C order with
shape ``(components, *sizes)`` (no leading axis when ``components == 0``).
With ``encoding = "csv"`` the values are in ``<stem>.csv`` instead, one
row per node with columns ``i0, ..., i{dim-1}, c0, ...``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import sys
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .spectral import ShapeError, TorusGrid

__all__ = [
    "FORMAT",
    "VERSION",
    "write_field",
    "read_field",
    "TrajectoryStore",
    "write_csv",
    "read_csv",
    "write_manifest",
    "svg_line_plot",
]

FORMAT = "besovns-field"
VERSION = 1


def _header(grid: TorusGrid, field: np.ndarray, t, name, encoding) -> dict:
    ncomp = field.ndim - grid.dim
    if ncomp > 1:
        raise ShapeError("snapshots hold scalar or vector fields only")
    return {
        "format": FORMAT,
        "version": VERSION,
        "dim": grid.dim,
        "sizes": list(grid.sizes),
        "periods": [float(a) for a in grid.periods],
        "components": int(field.shape[0]) if ncomp else 0,
        "dtype": "float64",
        "byte_order": "little",
        "layout": "C",
        "encoding": encoding,
        "t": None if t is None else float(t),
        "name": name,
    }


def write_field(stem, grid: TorusGrid, field, t: float | None = None, name: str = "",
                encoding: str = "binary") -> Path:
    """Write ``field`` as ``<stem>.json`` plus ``<stem>.bin`` (or ``.csv``). Returns the header path."""
    field = np.asarray(grid.check(np.asarray(field, dtype=float)), dtype=float)
    if encoding not in ("binary", "csv"):
        raise ValueError(f"unknown encoding {encoding!r}")
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    head = _header(grid, field, t, name, encoding)
    if encoding == "binary":
        np.ascontiguousarray(field, dtype="<f8").tofile(stem.with_suffix(".bin"))
    else:
        comps = field.reshape((-1,) + grid.shape) if field.ndim > grid.dim else field[None]
        idx = np.indices(grid.shape).reshape(grid.dim, -1).T
        vals = comps.reshape(comps.shape[0], -1).T
        with stem.with_suffix(".csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"i{d}" for d in range(grid.dim)] + [f"c{c}" for c in range(comps.shape[0])])
            for i, v in zip(idx, vals):
                w.writerow(list(map(int, i)) + [repr(float(x)) for x in v])
    path = stem.with_suffix(".json")
    path.write_text(json.dumps(head, indent=2))
    return path


def read_field(path) -> tuple[TorusGrid, np.ndarray, dict]:
    """Read a snapshot written by :func:`write_field` (header path or stem)."""
    path = Path(path).with_suffix(".json")
    head = json.loads(path.read_text())
    if head.get("format") != FORMAT:
        raise ValueError(f"{path} is not a {FORMAT} header")
    if head.get("version") != VERSION:
        raise ValueError(f"unsupported snapshot version {head.get('version')}")
    grid = TorusGrid(tuple(head["sizes"]), tuple(head["periods"]))
    ncomp = head["components"]
    shape = ((ncomp,) if ncomp else ()) + grid.shape
    if head.get("encoding", "binary") == "binary":
        data = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
        if data.size != math.prod(shape):
            raise ShapeError(f"{path.with_suffix('.bin')} holds {data.size} values, header expects {shape}")
        return grid, data.reshape(shape).astype(float), head
    with path.with_suffix(".csv").open() as fh:
        rows = list(csv.reader(fh))[1:]
    arr = np.array([[float(x) for x in r[grid.dim:]] for r in rows])
    idx = np.array([[int(x) for x in r[:grid.dim]] for r in rows])
    out = np.zeros((max(ncomp, 1),) + grid.shape)
    for c in range(out.shape[0]):
        out[(c,) + tuple(idx.T)] = arr[:, c]
    return grid, (out if ncomp else out[0]), head


class TrajectoryStore:
    """Directory of snapshots with a ``trajectory.json`` manifest (times, dt, resolution)."""

    def __init__(self, root, grid: TorusGrid, dt: float | None = None, encoding: str = "binary"):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.grid = grid
        self.dt = dt
        self.encoding = encoding
        self.entries: list[dict] = []

    def append(self, t: float, **fields):
        k = len(self.entries)
        files = {}
        for name, f in fields.items():
            stem = self.root / f"{name}_{k:05d}"
            write_field(stem, self.grid, f, t, name, self.encoding)
            files[name] = stem.name
        self.entries.append({"t": float(t), "files": files})
        self._flush()

    def _flush(self):
        doc = {"times": [e["t"] for e in self.entries], "dt": self.dt, "resolution": list(self.grid.sizes),
               "periods": list(self.grid.periods), "snapshots": self.entries}
        (self.root / "trajectory.json").write_text(json.dumps(doc, indent=2))

    @classmethod
    def load(cls, root) -> tuple[dict, list]:
        """Return the manifest and a list of ``(t, {name: array})``."""
        root = Path(root)
        doc = json.loads((root / "trajectory.json").read_text())
        out = []
        for e in doc["snapshots"]:
            out.append((e["t"], {n: read_field(root / stem)[1] for n, stem in e["files"].items()}))
        return doc, out


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, rows: Sequence[dict], columns: Sequence[str] | None = None) -> Path:
    """Write dict rows with an explicit header; floats keep full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(columns or (rows[0].keys() if rows else []))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open() as fh:
        return list(csv.DictReader(fh))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(outdir, command: str, argv: Sequence[str], config: dict, status: int,
                   message: str = "", seed: int | None = None) -> Path:
    """Write ``manifest.json`` with everything needed to rerun the command."""
    outdir = Path(outdir)
    files = sorted(p for p in outdir.rglob("*") if p.is_file() and p.name != "manifest.json")
    doc = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "exit_status": status,
        "message": message,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
        "outputs": {str(p.relative_to(outdir)): _sha256(p) for p in files},
    }
    path = outdir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, default=str))
    return path


def svg_line_plot(path, series: Iterable[tuple[str, Sequence[float], Sequence[float]]], title: str = "",
                  xlabel: str = "", ylabel: str = "", logy: bool = False, width: int = 640,
                  height: int = 400) -> Path:
    """Minimal SVG line plot of ``(label, x, y)`` series."""
    series = [(lab, np.asarray(x, float), np.asarray(y, float)) for lab, x, y in series]
    tf = (lambda v: np.log10(np.maximum(v, 1e-300))) if logy else (lambda v: v)
    xs = np.concatenate([x for _, x, _ in series]) if series else np.array([0.0, 1.0])
    ys = np.concatenate([tf(y) for _, _, y in series]) if series else np.array([0.0, 1.0])
    ok = np.isfinite(xs) & np.isfinite(ys)
    xs, ys = (xs[ok], ys[ok]) if ok.any() else (np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0
    ml, mr, mt, mb = 70, 20, 30, 45
    pw, ph = width - ml - mr, height - mt - mb

    def X(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def Y(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" '
           f'font-size="11">',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
           f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>',
           f'<text x="{ml + pw / 2}" y="{height - 8}" text-anchor="middle">{_esc(xlabel)}</text>',
           f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" transform="rotate(-90 14 {mt + ph / 2})">'
           f'{_esc(ylabel)}{" (log10)" if logy else ""}</text>']
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{X(xv):.1f}" y="{mt + ph + 14}" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{ml - 4}" y="{Y(yv) + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    for k, (lab, x, y) in enumerate(series):
        yy = tf(y)
        good = np.isfinite(x) & np.isfinite(yy)
        pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(x[good], yy[good]))
        c = colors[k % len(colors)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{ml + 8}" y="{mt + 14 + 13 * k}" fill="{c}">{_esc(lab)}</text>')
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out))
    return path


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
