"""Scalar, cell-wise constant diffusion coefficients on a square raster."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh import Level, TriMesh


class CoefficientError(ValueError):
    pass


class AlignmentError(CoefficientError):
    pass


@dataclass(frozen=True)
class CoefficientField:
    """Values on a ``raster_m x raster_m`` grid; row 0 is the bottom row."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise CoefficientError(f"raster must be square, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise CoefficientError("raster contains non-finite values")
        if np.any(v <= 0.0):
            raise CoefficientError("ellipticity violated: coefficient values must be positive")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def raster_m(self) -> int:
        return self.values.shape[0]

    @property
    def alpha(self) -> float:
        return float(self.values.min())

    @property
    def beta(self) -> float:
        return float(self.values.max())

    @property
    def contrast(self) -> float:
        return self.beta / self.alpha

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        r = self.raster_m
        col = np.clip(np.floor(pts[:, 0] * r).astype(np.int64), 0, r - 1)
        row = np.clip(np.floor(pts[:, 1] * r).astype(np.int64), 0, r - 1)
        return self.values[row, col]


def constant(value: float) -> CoefficientField:
    if not value > 0:
        raise CoefficientError(f"ellipticity violated: constant {value} is not positive")
    return CoefficientField(np.full((1, 1), float(value)))


def random_cellwise(raster_m: int, lo: float, hi: float, seed: int) -> CoefficientField:
    """I.i.d. uniform values on ``[lo, hi]``.

    Draws ``raster_m**2`` samples in row-major order from
    ``numpy.random.Generator(PCG64(seed)).uniform``, so a seed fixes the
    field across platforms.
    """
    if raster_m < 1:
        raise CoefficientError(f"raster_m must be >= 1, got {raster_m}")
    if not lo > 0:
        raise CoefficientError(f"lower bound must be positive, got {lo}")
    if not hi > lo:
        raise CoefficientError(f"need hi > lo, got lo={lo}, hi={hi}")
    rng = np.random.Generator(np.random.PCG64(seed))
    return CoefficientField(rng.uniform(lo, hi, size=(raster_m, raster_m)))


def load_raster(path) -> CoefficientField:
    """Read the text raster format: ``rows cols`` then row-major values."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"raster file not found: {path}")
    tokens = path.read_text().split()
    if len(tokens) < 2:
        raise CoefficientError(f"{path}: missing 'rows cols' header")
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
        values = np.array([float(t) for t in tokens[2:]])
    except ValueError as exc:
        raise CoefficientError(f"{path}: parse error: {exc}") from None
    if rows < 1 or cols < 1:
        raise CoefficientError(f"{path}: bad dimensions {rows}x{cols}")
    if values.size != rows * cols:
        raise CoefficientError(
            f"{path}: expected {rows * cols} values, found {values.size}"
        )
    if rows != cols:
        raise CoefficientError(f"{path}: raster must be square, got {rows}x{cols}")
    return CoefficientField(values.reshape(rows, cols))


def save_raster(field: CoefficientField, path) -> None:
    r = field.raster_m
    lines = [f"{r} {r}"]
    # repr round-trips float64 exactly
    lines += [" ".join(repr(float(v)) for v in row) for row in field.values]
    Path(path).write_text("\n".join(lines) + "\n")


def check_alignment(field: CoefficientField, m: int) -> None:
    if m % field.raster_m:
        raise AlignmentError(
            f"raster_m={field.raster_m} does not divide mesh m={m}; "
            "each triangle must lie inside a single raster cell"
        )


def sample_on_elements(field: CoefficientField, mesh: TriMesh | Level, level: int = -1) -> np.ndarray:
    """Coefficient value on every triangle of one mesh level."""
    lvl = mesh if isinstance(mesh, Level) else mesh.level(level)
    check_alignment(field, lvl.m)
    return field(lvl.barycenters)
