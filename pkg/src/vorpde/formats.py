"""Deterministic on-disk formats: binary PGM/PPM images, raw float32 fields,
plain-text sidecar headers, and CSV/JSON helpers.

Everything here is byte-deterministic so outputs can be golden-tested and
hashed into run manifests. Image rows are written top-down (top row = max y).
"""
from __future__ import annotations

import colorsys
import json
from pathlib import Path

import numpy as np

from .geometry import GridSpec, LabelGrid, Rect, ScalarField, SiteSet, UNASSIGNED

PGM_UNASSIGNED = 255

# Fixed base palette (RGB); extended deterministically past its length.
_BASE_PALETTE = [
    (31, 119, 180),
    (255, 127, 14),
    (44, 160, 44),
    (214, 39, 40),
    (148, 103, 189),
    (140, 86, 75),
    (227, 119, 194),
    (127, 127, 127),
    (188, 189, 34),
    (23, 190, 207),
    (174, 199, 232),
    (255, 187, 120),
]


def palette(n: int):
    """First n colors of the fixed palette, extended by golden-angle hues."""
    colors = list(_BASE_PALETTE[:n])
    k = len(colors)
    while len(colors) < n:
        h = (0.61803398875 * len(colors)) % 1.0
        r, g, b = colorsys.hsv_to_rgb(h, 0.75, 0.95)
        colors.append((int(r * 255), int(g * 255), int(b * 255)))
        k += 1
    return colors


def _sidecar_lines(spec: GridSpec, kind: str, siteset: SiteSet = None, extra: dict = None):
    d = spec.domain
    lines = [
        f"kind = {kind}",
        f"nx = {spec.nx}",
        f"ny = {spec.ny}",
        f"domain = {d.x0:.12g} {d.x1:.12g} {d.y0:.12g} {d.y1:.12g}",
        "row_order = top_down",
    ]
    if siteset is not None:
        lines.append(f"n_sites = {siteset.n_sites}")
        lines.append(f"topology = {siteset.topology}")
    if extra:
        for key in sorted(extra):
            lines.append(f"{key} = {extra[key]}")
    return "\n".join(lines) + "\n"


def write_sidecar(path, spec: GridSpec, kind: str, siteset: SiteSet = None, extra: dict = None):
    side = Path(str(path) + ".txt")
    side.write_text(_sidecar_lines(spec, kind, siteset, extra))
    return side


def read_sidecar(path) -> dict:
    out = {}
    for line in Path(str(path) + ".txt").read_text().splitlines():
        if "=" in line:
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def write_pgm(path, grid: LabelGrid, siteset: SiteSet = None):
    """Binary PGM (P5) with labels as pixel values; UNASSIGNED maps to 255."""
    lab = grid.labels
    if lab.max() >= PGM_UNASSIGNED:
        raise ValueError("more labels than an 8-bit PGM can carry")
    pix = np.where(lab == UNASSIGNED, PGM_UNASSIGNED, lab).astype(np.uint8)
    pix = pix[::-1, :]  # top row = max y
    header = f"P5\n{grid.spec.nx} {grid.spec.ny}\n255\n".encode("ascii")
    Path(path).write_bytes(header + pix.tobytes())
    write_sidecar(path, grid.spec, "labels", siteset, extra={"unassigned": PGM_UNASSIGNED})
    return Path(path)


def read_pgm(path) -> np.ndarray:
    """Pixel array of a binary P5 PGM, restored to bottom-up row order."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise ValueError("not a binary PGM")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(raw[start:pos]))
    pos += 1
    w, h, _maxval = fields
    pix = np.frombuffer(raw[pos : pos + w * h], dtype=np.uint8).reshape(h, w)
    return pix[::-1, :].copy()


def write_mask_pgm(path, mask: np.ndarray, spec: GridSpec, siteset: SiteSet = None):
    """Binary mask as PGM: 255 where set, 0 elsewhere."""
    pix = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    pix = pix[::-1, :]
    header = f"P5\n{spec.nx} {spec.ny}\n255\n".encode("ascii")
    Path(path).write_bytes(header + pix.tobytes())
    write_sidecar(path, spec, "mask", siteset)
    return Path(path)


def write_ppm(path, grid: LabelGrid, siteset: SiteSet = None):
    """Color PPM (P6) with the fixed palette; UNASSIGNED is black."""
    lab = grid.labels
    n = max(int(lab.max()) + 1, 1)
    pal = np.array(palette(n), dtype=np.uint8)
    rgb = np.zeros((grid.spec.ny, grid.spec.nx, 3), dtype=np.uint8)
    assigned = lab != UNASSIGNED
    rgb[assigned] = pal[lab[assigned]]
    rgb = rgb[::-1, :, :]
    header = f"P6\n{grid.spec.nx} {grid.spec.ny}\n255\n".encode("ascii")
    Path(path).write_bytes(header + rgb.tobytes())
    write_sidecar(path, grid.spec, "labels_rgb", siteset)
    return Path(path)


def write_field_raw(path, fieldgrid: ScalarField, siteset: SiteSet = None):
    """Raw little-endian float32 grid plus sidecar, rows top-down."""
    vals = fieldgrid.values[::-1, :].astype("<f4")
    Path(path).write_bytes(vals.tobytes())
    write_sidecar(path, fieldgrid.spec, "field_f32", siteset, extra={"dtype": "<f4"})
    return Path(path)


def read_field_raw(path, spec: GridSpec) -> np.ndarray:
    vals = np.frombuffer(Path(path).read_bytes(), dtype="<f4").reshape(spec.ny, spec.nx)
    return vals[::-1, :].astype(float)


def format_float(x: float) -> str:
    return f"{x:.12g}"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def write_json(path, payload: dict) -> Path:
    """Sorted-key JSON with numpy scalars converted; deterministic bytes."""
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n")
    return Path(path)


def write_csv(path, header: list, rows) -> Path:
    """Plain CSV with deterministic float formatting."""
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(format_float(v) if isinstance(v, float) else str(v) for v in row))
    Path(path).write_text("\n".join(out) + "\n")
    return Path(path)


def spec_from_sidecar(meta: dict) -> GridSpec:
    x0, x1, y0, y1 = (float(v) for v in meta["domain"].split())
    return GridSpec(nx=int(meta["nx"]), ny=int(meta["ny"]), domain=Rect(x0, x1, y0, y1))
