"""Dense image-plane support map.

Residual magnitudes become scores ``a = exp(-|f|^2 / (2 tau^2))`` which are
splatted onto a (possibly downsampled) grid with a Gaussian kernel of width
``sigma`` truncated at ``3 sigma``.  The grid is then max-normalized to
``[0, 1]`` and queried with bilinear interpolation.

Cell ``(ix, iy)`` covers pixels ``[ix*d, (ix+1)*d) x [iy*d, (iy+1)*d)`` and its
center sits at ``((ix + 0.5) d, (iy + 0.5) d)``.  ``grid`` is indexed
``[iy, ix]`` (row-major, rows along v).
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple

import numpy as np

from .errors import (
    AllZeroMap,
    AlreadyNormalized,
    BadMagic,
    InvalidTau,
    IoFailure,
    NotNormalized,
    ShapeMismatch,
    VersionMismatch,
)

MAGIC = b"SMAP"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIddB")
TRUNCATION = 3.0  # kernel radius in units of sigma

DEFAULT_SIGMA = 8.0
DEFAULT_TAU = 2.0
DEFAULT_DOWNSAMPLE = 4


class ScoredSample(NamedTuple):
    u: tuple[float, float]
    a: float


@dataclass(frozen=True)
class SupportMap:
    grid: np.ndarray
    downsample: int = DEFAULT_DOWNSAMPLE
    sigma: float = DEFAULT_SIGMA
    tau: float = DEFAULT_TAU
    normalized: bool = False

    def __post_init__(self):
        if self.downsample < 1:
            raise ValueError("downsample must be >= 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if not self.tau > 0:
            raise InvalidTau(f"tau must be > 0, got {self.tau}")
        g = np.array(self.grid, dtype=np.float64)
        if g.ndim != 2 or np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("grid must be a finite non-negative 2D array")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)

    @classmethod
    def empty(cls, width: int, height: int, downsample: int = DEFAULT_DOWNSAMPLE,
              sigma: float = DEFAULT_SIGMA, tau: float = DEFAULT_TAU) -> "SupportMap":
        shape = (math.ceil(height / downsample), math.ceil(width / downsample))
        return cls(np.zeros(shape), downsample, sigma, tau, False)

    @property
    def cells_x(self) -> int:
        return self.grid.shape[1]

    @property
    def cells_y(self) -> int:
        return self.grid.shape[0]

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates of cell centers along u and along v."""
        d = self.downsample
        return (np.arange(self.cells_x) + 0.5) * d, (np.arange(self.cells_y) + 0.5) * d

    def same_layout(self, other: "SupportMap") -> bool:
        return (self.grid.shape == other.grid.shape and self.downsample == other.downsample
                and self.sigma == other.sigma and self.tau == other.tau)


def score_residual(f, tau: float = DEFAULT_TAU):
    """Residual-to-score map; accepts a single 2-vector or an ``(n, 2)`` array."""
    if not tau > 0:
        raise InvalidTau(f"tau must be > 0, got {tau}")
    f = np.asarray(f, dtype=np.float64)
    r2 = np.sum(f * f, axis=-1)
    a = np.exp(-r2 / (2.0 * tau * tau))
    return float(a) if a.ndim == 0 else a


def accumulate(smap: SupportMap, pixels, scores) -> SupportMap:
    """Add ``sum_i a_i exp(-|x - u_i|^2 / 2 sigma^2)`` at every cell center ``x``.

    ``pixels`` is ``(n, 2)``; ``scores`` is ``(n,)`` and non-negative.
    """
    if smap.normalized:
        raise AlreadyNormalized("cannot accumulate into a normalized map")
    U = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    a = np.asarray(scores, dtype=np.float64).reshape(-1)
    if len(U) != len(a):
        raise ValueError("pixels and scores differ in length")
    if np.any(a < 0) or not np.all(np.isfinite(a)) or not np.all(np.isfinite(U)):
        raise ValueError("scores must be finite and non-negative, pixels finite")
    if len(U) == 0:
        return smap

    d, s = smap.downsample, smap.sigma
    ny, nx = smap.grid.shape
    rmax2 = (TRUNCATION * s) ** 2
    reach = int(math.ceil(TRUNCATION * s / d)) + 1
    # nearest cell containing each sample; the window of offsets around it
    # covers every center within the truncation radius
    ix0 = np.floor(U[:, 0] / d).astype(np.int64)
    iy0 = np.floor(U[:, 1] / d).astype(np.int64)
    flat = np.zeros(nx * ny)
    inv2s2 = 1.0 / (2.0 * s * s)
    for oy in range(-reach, reach + 1):
        iy = iy0 + oy
        dy = (iy + 0.5) * d - U[:, 1]
        row_ok = (iy >= 0) & (iy < ny) & (dy * dy <= rmax2)
        if not np.any(row_ok):
            continue
        for ox in range(-reach, reach + 1):
            ix = ix0 + ox
            dx = (ix + 0.5) * d - U[:, 0]
            r2 = dx * dx + dy * dy
            m = row_ok & (ix >= 0) & (ix < nx) & (r2 <= rmax2)
            if not np.any(m):
                continue
            flat += np.bincount(iy[m] * nx + ix[m], weights=a[m] * np.exp(-r2[m] * inv2s2), minlength=nx * ny)
    return replace(smap, grid=smap.grid + flat.reshape(ny, nx))


def accumulate_samples(smap: SupportMap, samples: Iterable[ScoredSample]) -> SupportMap:
    samples = list(samples)
    if not samples:
        return accumulate(smap, np.empty((0, 2)), np.empty(0))
    return accumulate(smap, [s.u for s in samples], [s.a for s in samples])


def accumulate_residuals(smap: SupportMap, pixels, residuals) -> SupportMap:
    """Score residuals with the map's ``tau`` and accumulate them at ``pixels``."""
    return accumulate(smap, pixels, score_residual(np.asarray(residuals).reshape(-1, 2), smap.tau))


def normalize(smap: SupportMap) -> SupportMap:
    if smap.normalized:
        return smap
    peak = float(smap.grid.max()) if smap.grid.size else 0.0
    if not peak > 0:
        raise AllZeroMap("support map holds no evidence")
    return replace(smap, grid=smap.grid / peak, normalized=True)


def merge(a: SupportMap, b: SupportMap) -> SupportMap:
    if a.normalized or b.normalized:
        raise AlreadyNormalized("only unnormalized maps can be merged")
    if not a.same_layout(b):
        raise ShapeMismatch("maps differ in shape, downsample, sigma or tau")
    return replace(a, grid=a.grid + b.grid)


def lookup(smap: SupportMap, u):
    """Bilinear support value at pixel ``u`` (a 2-vector or an ``(n, 2)`` array).

    Coordinates outside the span of cell centers clamp to the border.
    """
    if not smap.normalized:
        raise NotNormalized("lookup requires a normalized map")
    U = np.asarray(u, dtype=np.float64)
    single = U.ndim == 1
    U = U.reshape(-1, 2)
    ny, nx = smap.grid.shape
    gx = np.clip(U[:, 0] / smap.downsample - 0.5, 0.0, nx - 1)
    gy = np.clip(U[:, 1] / smap.downsample - 0.5, 0.0, ny - 1)
    x0 = np.minimum(np.floor(gx).astype(np.int64), max(nx - 2, 0))
    y0 = np.minimum(np.floor(gy).astype(np.int64), max(ny - 2, 0))
    x1 = np.minimum(x0 + 1, nx - 1)
    y1 = np.minimum(y0 + 1, ny - 1)
    tx, ty = gx - x0, gy - y0
    g = smap.grid
    val = ((1 - ty) * ((1 - tx) * g[y0, x0] + tx * g[y0, x1])
           + ty * ((1 - tx) * g[y1, x0] + tx * g[y1, x1]))
    return float(val[0]) if single else val


# -- persistence ----------------------------------------------------------------

def _atomic_write(path, payload: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def to_bytes(smap: SupportMap) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, smap.cells_x, smap.cells_y, smap.downsample,
                          smap.sigma, smap.tau, int(smap.normalized))
    return header + smap.grid.astype("<f8").tobytes(order="C")


def from_bytes(buf: bytes) -> SupportMap:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagic("not a support map file")
    if len(buf) < _HEADER.size:
        raise IoFailure("truncated support map header")
    _, version, nx, ny, d, sigma, tau, normalized = _HEADER.unpack_from(buf)
    if version != VERSION:
        raise VersionMismatch(f"support map version {version}, expected {VERSION}")
    body = buf[_HEADER.size:]
    if len(body) != 8 * nx * ny:
        raise IoFailure(f"support map body has {len(body)} bytes, expected {8 * nx * ny}")
    grid = np.frombuffer(body, dtype="<f8").reshape(ny, nx).astype(np.float64)
    return SupportMap(grid, d, sigma, tau, bool(normalized))


def save_map(smap: SupportMap, path) -> None:
    _atomic_write(path, to_bytes(smap))


def load_map(path) -> SupportMap:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return from_bytes(buf)


def to_gray8(smap: SupportMap) -> np.ndarray:
    """``round(value * 255)`` as uint8; values above 1 saturate."""
    return np.clip(np.rint(smap.grid * 255.0), 0, 255).astype(np.uint8)


def pgm_bytes(smap: SupportMap) -> bytes:
    """Binary 8-bit PGM encoding of :func:`to_gray8` (row 0 = top of the image)."""
    img = to_gray8(smap)
    return f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii") + img.tobytes()


def export_pgm(smap: SupportMap, path) -> None:
    _atomic_write(path, pgm_bytes(smap))


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5" or int(parts[3]) != 255:
        raise BadMagic("not an 8-bit binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)
