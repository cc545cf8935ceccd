"""Serialisation of distance matrices, paths and experiment tables."""

from __future__ import annotations

import csv
import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

MATRIX_MAGIC = b"FERMAT01"


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def write_matrix_csv(D, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(D):
            w.writerow([_fmt(v) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh) if row])


def write_matrix_bin(D, path) -> None:
    """Magic ``FERMAT01``, u64 n, then n*n little-endian float64 in row-major order."""
    D = np.asarray(D, dtype="<f8")
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("distance matrix must be square")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<Q", D.shape[0]))
        fh.write(np.ascontiguousarray(D).tobytes())


def read_matrix_bin(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] != MATRIX_MAGIC:
        raise ValueError(f"{path}: bad magic")
    (n,) = struct.unpack("<Q", raw[8:16])
    if len(raw) != 16 + 8 * n * n:
        raise ValueError(f"{path}: truncated matrix")
    return np.frombuffer(raw, dtype="<f8", offset=16).reshape(n, n).copy()


def write_path_json(indices, path) -> None:
    Path(path).write_text(json.dumps([int(i) for i in indices]) + "\n")


def table_columns(record_type) -> list:
    """Deterministic columns of a record dataclass (fields marked volatile are skipped)."""
    return [f.name for f in dataclasses.fields(record_type) if not f.metadata.get("volatile")]


def write_table(path, schema: str, rows, columns, meta: dict | None = None) -> None:
    """CSV with a ``# schema=<name> version=1`` first line and a ``.json`` sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={schema} version=1\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            get = r.get if isinstance(r, dict) else (lambda c, r=r: getattr(r, c))
            w.writerow([_fmt(get(c)) for c in columns])
    if meta is not None:
        path.with_name(path.name + ".json").write_text(
            json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")


def read_table(path):
    """Returns (schema name, list of row dicts; numeric cells become floats)."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        schema = first.split("schema=")[1].split()[0]
        reader = csv.DictReader(fh)
        rows = [{k: _num(v) for k, v in row.items()} for row in reader]
    return schema, rows


def _num(v):
    try:
        return float(v)
    except ValueError:
        return v


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_band_svg(path, ns, mid, lo, hi, ylabel="value", size=(480, 320)) -> None:
    """Median-vs-n line (log n axis) with a shaded lo..hi band."""
    W, H = size
    pad = 40
    x = np.log10(np.asarray(ns, dtype=np.float64))
    mid, lo, hi = (np.asarray(v, dtype=np.float64) for v in (mid, lo, hi))
    x0, x1 = x.min(), x.max() if x.max() > x.min() else x.min() + 1
    y0, y1 = lo.min(), hi.max()
    if y1 <= y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    y0, y1 = y0 - 0.05 * (y1 - y0), y1 + 0.05 * (y1 - y0)

    def tx(a, b):
        return pad + (a - x0) / (x1 - x0) * (W - 2 * pad), H - pad - (b - y0) / (y1 - y0) * (H - 2 * pad)

    band = [tx(a, b) for a, b in zip(x, hi)] + [tx(a, b) for a, b in zip(x[::-1], lo[::-1])]
    line = [tx(a, b) for a, b in zip(x, mid)]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<polygon points="{" ".join("%.2f,%.2f" % p for p in band)}" fill="#1f77b4" '
           'fill-opacity="0.25"/>',
           f'<polyline points="{" ".join("%.2f,%.2f" % p for p in line)}" fill="none" '
           'stroke="#1f77b4" stroke-width="2"/>']
    for a, n in zip(x, ns):
        px, _ = tx(a, y0)
        out.append(f'<text x="{px:.2f}" y="{H - pad + 16}" font-size="10" '
                   f'text-anchor="middle">{n:g}</text>')
    for v in (y0, y1):
        _, py = tx(x0, v)
        out.append(f'<text x="4" y="{py:.2f}" font-size="10">{v:.3g}</text>')
    out.append(f'<text x="{W / 2}" y="14" font-size="12" text-anchor="middle">{ylabel} vs n</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
