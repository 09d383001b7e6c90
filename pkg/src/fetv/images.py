"""PGM raster ingestion/export and the image <-> DG_r bridge.

Rasters ingest onto a crossed-diagonal mesh with one square per pixel and a
unit-width domain (pixel side 1/nx), so regularization parameters keep the
same meaning across resolutions.  Row 0 of a raster is the top scanline;
square (ix, iy) of the mesh counts iy upward from the bottom.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .mesh import build_crossed_mesh
from .operators import DgFunction
from .spaces import FeSpace

__all__ = [
    "Raster",
    "PgmError",
    "load_pgm",
    "save_pgm",
    "raster_to_dg",
    "dg_to_raster",
    "load_mask",
]


class PgmError(ValueError):
    """Malformed PGM header or truncated payload."""


@dataclass
class Raster:
    """Grayscale image with row-major intensities in [0, 1] (row 0 on top)."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(
            self.height, self.width)


_WS = b" \t\r\n\x0b\x0c"


def _tokens(data, start, count):
    """Read ``count`` whitespace-separated tokens from ``data`` beginning at
    ``start``, honoring '#' comments; returns the tokens and the absolute
    offset one past the last token."""
    tokens = []
    pos = start
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos] in _WS:
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            nl = data.find(b"\n", pos)
            pos = n if nl < 0 else nl + 1
            continue
        begin = pos
        while pos < n and data[pos] not in _WS and data[pos:pos + 1] != b"#":
            pos += 1
        if begin == pos:
            raise PgmError("unexpected end of file in header or payload")
        tokens.append(data[begin:pos])
    return tokens, pos


def load_pgm(path):
    """Read a P2 (ASCII) or P5 (binary) PGM with maxval <= 65535; samples
    are scaled by maxval and clamped to [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    (magic,), pos = _tokens(data, 0, 1)
    if magic not in (b"P2", b"P5"):
        raise PgmError(f"unsupported magic {magic!r} (expected P2 or P5)")
    tokens, pos = _tokens(data, pos, 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise PgmError("non-numeric header field") from None
    if width <= 0 or height <= 0:
        raise PgmError("image dimensions must be positive")
    if not 1 <= maxval <= 65535:
        raise PgmError(f"maxval {maxval} out of range [1, 65535]")

    count = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates maxval from the payload
        payload = data[pos + 1:]
        dtype = ">u2" if maxval > 255 else np.uint8
        itemsize = 2 if maxval > 255 else 1
        if len(payload) < count * itemsize:
            raise PgmError("truncated P5 payload")
        samples = np.frombuffer(payload[: count * itemsize], dtype=dtype)
        samples = samples.astype(float)
    else:
        try:
            body, _ = _tokens(data, pos, count)
        except PgmError:
            raise PgmError("truncated P2 payload") from None
        try:
            samples = np.array([int(v) for v in body], dtype=float)
        except ValueError:
            raise PgmError("non-numeric P2 sample") from None
    values = np.clip(samples / maxval, 0.0, 1.0).reshape(height, width)
    return Raster(width=width, height=height, values=values)


def save_pgm(raster: Raster, path, maxval=255, binary=True):
    """Write a canonical PGM; values are quantized to round(v * maxval)."""
    if not 1 <= maxval <= 65535:
        raise ValueError(f"maxval {maxval} out of range [1, 65535]")
    q = np.clip(np.rint(np.clip(raster.values, 0.0, 1.0) * maxval),
                0, maxval).astype(np.uint16)
    header = f"{'P5' if binary else 'P2'}\n{raster.width} {raster.height}\n" \
             f"{maxval}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(q.astype(">u2" if maxval > 255 else np.uint8).tobytes())
        else:
            for row in q:
                fh.write((" ".join(str(int(v)) for v in row) + "\n")
                         .encode("ascii"))


def raster_to_dg(raster: Raster, r):
    """Ingest a raster as a DG_r function on the crossed-diagonal mesh with
    one square per pixel: every Lagrange node of a pixel's four triangles
    takes that pixel's value, so the function equals the image exactly."""
    nx, ny = raster.width, raster.height
    mesh = build_crossed_mesh(nx, ny, 1.0, ny / nx)
    space = FeSpace(mesh, r)
    square_vals = np.flipud(raster.values).ravel()      # (iy, ix) bottom-up
    coeffs = np.repeat(square_vals, 4 * space.dofs.n_cell_basis)
    return mesh, DgFunction(space, coeffs)


def dg_to_raster(u: DgFunction, width, height):
    """Sample the function at pixel centers over the mesh's bounding box;
    values are clamped to [0, 1] and centers outside the mesh yield 0."""
    mesh = u.space.mesh
    lo, hi = mesh.bounding_box()
    cols = np.arange(width)
    rows = np.arange(height)
    x = lo[0] + (cols + 0.5) * (hi[0] - lo[0]) / width
    y = lo[1] + (height - rows - 0.5) * (hi[1] - lo[1]) / height
    xx, yy = np.meshgrid(x, y, indexing="xy")
    points = np.column_stack([xx.ravel(), yy.ravel()])
    cells = mesh.locate_points(points)
    outside = int((cells < 0).sum())
    if outside:
        warnings.warn(f"{outside} pixel centers fell outside the mesh",
                      stacklevel=2)
    values = np.clip(u.eval(points, cells=cells), 0.0, 1.0)
    return Raster(width=width, height=height,
                  values=values.reshape(height, width))


def load_mask(path, mesh):
    """Read an inpainting mask: either a text file with one 0-based cell
    index per line, or a PGM whose dark pixels (< 0.5) mark masked squares
    (all four sub-triangles of the pixel).  Returns a boolean per-cell
    array with True on masked cells; the complement carries the data."""
    with open(path, "rb") as fh:
        head = fh.read(2)
    masked = np.zeros(mesh.num_cells, dtype=bool)
    if head in (b"P2", b"P5"):
        raster = load_pgm(path)
        if 4 * raster.width * raster.height != mesh.num_cells:
            raise ValueError(
                "mask raster does not match the mesh (expected "
                f"{mesh.num_cells // 4} pixels, got "
                f"{raster.width * raster.height})"
            )
        dark = np.flipud(raster.values).ravel() < 0.5
        masked[:] = np.repeat(dark, 4)
        return masked
    with open(path, "r", encoding="utf-8") as fh:
        for no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                idx = int(text)
            except ValueError:
                raise ValueError(f"mask line {no}: not a cell index: {text!r}") \
                    from None
            if not 0 <= idx < mesh.num_cells:
                raise ValueError(
                    f"mask line {no}: cell index {idx} out of range "
                    f"[0, {mesh.num_cells})"
                )
            masked[idx] = True
    return masked
