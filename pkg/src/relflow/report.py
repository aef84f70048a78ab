"""Report and figure writers.  Every file is written atomically."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .grid import CellSet
from .relation import FiniteRelation

REPORT_SCHEMA = 1


def atomic_write(path, data: bytes | str) -> Path:
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, CellSet):
        return obj.indices().tolist()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"


def write_json(path, report: dict) -> Path:
    return atomic_write(path, dumps_report(report))


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(_jsonable(list(r)))
    return atomic_write(path, buf.getvalue())


def _pgm(pixels: np.ndarray) -> bytes:
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode() + pixels.astype(np.uint8).tobytes()


def cellset_raster(S: CellSet) -> np.ndarray:
    """Grey image of a 1-D or 2-D cell set: members black, others white.

    The first axis runs left to right and the second bottom to top.
    """
    g = S.grid()
    if g.ndim == 1:
        g = g[:, None]
    if g.ndim != 2:
        raise ValueError("only 1-D and 2-D cell sets can be drawn")
    return np.where(np.flipud(g.T), 0, 255)


def relation_raster(f: FiniteRelation) -> np.ndarray:
    """Graph of a 1-D relation over X × X: source to the right, target up."""
    if f.space.dimension != 1:
        raise ValueError("only 1-D relations are drawn as graphs")
    n = f.space.n_cells
    img = np.full((n, n), 255, dtype=np.uint8)
    img[n - 1 - f.dst, f.src] = 0
    return img


def write_cellset_pgm(path, S: CellSet) -> Path:
    return atomic_write(path, _pgm(cellset_raster(S)))


def write_relation_pgm(path, f: FiniteRelation) -> Path:
    return atomic_write(path, _pgm(relation_raster(f)))


def write_row_pgm(path, f: FiniteRelation, source: int) -> Path:
    """Image of one source cell's row of a 2-D relation; the source is grey."""
    img = cellset_raster(f.row_set(source)).astype(np.uint8)
    mark = np.zeros(f.space.n_cells, dtype=bool)
    mark[source] = True
    src_img = cellset_raster(CellSet(f.space, mark))
    img[src_img == 0] = 128
    return atomic_write(path, _pgm(img))


def cellset_svg(S: CellSet, scale: float = 4.0) -> str:
    """Vector drawing of a 2-D cell set, one rectangle per horizontal run."""
    g = S.grid()
    if g.ndim != 2:
        raise ValueError("only 2-D cell sets are drawn as SVG")
    nx, ny = g.shape
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{nx * scale:g}" height="{ny * scale:g}" '
             f'viewBox="0 0 {nx} {ny}" shape-rendering="crispEdges">',
             f'<rect width="{nx}" height="{ny}" fill="white"/>']
    for j in range(ny):
        row = g[:, j]
        i = 0
        while i < nx:
            if row[i]:
                k = i
                while k < nx and row[k]:
                    k += 1
                parts.append(f'<rect x="{i}" y="{ny - 1 - j}" width="{k - i}" height="1" fill="black"/>')
                i = k
            else:
                i += 1
    parts.append("</svg>\n")
    return "\n".join(parts)


def write_cellset_svg(path, S: CellSet) -> Path:
    return atomic_write(path, cellset_svg(S))


def relation_svg(f: FiniteRelation, scale: float = 2.0) -> str:
    img = relation_raster(f)
    n = img.shape[0]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{n * scale:g}" height="{n * scale:g}" '
             f'viewBox="0 0 {n} {n}" shape-rendering="crispEdges">',
             f'<rect width="{n}" height="{n}" fill="white"/>']
    for r, c in zip(*np.nonzero(img == 0)):
        parts.append(f'<rect x="{c}" y="{r}" width="1" height="1" fill="black"/>')
    parts.append("</svg>\n")
    return "\n".join(parts)


def write_relation_svg(path, f: FiniteRelation) -> Path:
    return atomic_write(path, relation_svg(f))
