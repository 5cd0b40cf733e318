"""Dense 2D scalar fields and the finite-difference operators built on them.

A scalar field is a float64 ndarray of shape (height, width), indexed
values[y, x] with the origin at the top-left, x rightward, y downward, and a
grid spacing of one pixel.  Interior derivatives use central differences,
boundary pixels one-sided first differences, so affine fields differentiate
exactly everywhere.  All operations are pure: inputs are never mutated and
identical inputs give bitwise-identical outputs.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

MIN_DIM = 2  # stencils need at least a 2-wide grid


def as_field(values, *, check_finite: bool = True) -> np.ndarray:
    """Validate and return ``values`` as a float64 field array."""
    f = np.asarray(values, dtype=np.float64)
    if f.ndim != 2:
        raise ShapeError(f"field must be 2D, got shape {f.shape}")
    if f.shape[0] < MIN_DIM or f.shape[1] < MIN_DIM:
        raise ShapeError(f"field must be at least {MIN_DIM}x{MIN_DIM}, got {f.shape}")
    if check_finite and not np.all(np.isfinite(f)):
        raise ShapeError("field contains non-finite values")
    return f


def same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def gradient_central(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel (df/dx, df/dy): central differences inside, one-sided at edges."""
    f = as_field(f)
    gx = np.empty_like(f)
    gy = np.empty_like(f)
    gx[:, 1:-1] = (f[:, 2:] - f[:, :-2]) * 0.5
    gx[:, 0] = f[:, 1] - f[:, 0]
    gx[:, -1] = f[:, -1] - f[:, -2]
    gy[1:-1, :] = (f[2:, :] - f[:-2, :]) * 0.5
    gy[0, :] = f[1, :] - f[0, :]
    gy[-1, :] = f[-1, :] - f[-2, :]
    return gx, gy


def gradient_magnitude(f: np.ndarray) -> np.ndarray:
    gx, gy = gradient_central(f)
    return np.sqrt(gx * gx + gy * gy)


def divergence(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """d(gx)/dx + d(gy)/dy with the same stencils as gradient_central."""
    gx = as_field(gx)
    gy = as_field(gy)
    same_shape(gx, gy)
    dxx, _ = gradient_central(gx)
    _, dyy = gradient_central(gy)
    return dxx + dyy


def curvature(f: np.ndarray, eta: float = 1e-8) -> np.ndarray:
    """Mean curvature div(grad f / |grad f|), with eta guarding 0/0.

    For a signed distance function of a disk this evaluates to 1/r on the
    contour, which makes it a convenient classical velocity for exercising
    the evolution loop.
    """
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    gx, gy = gradient_central(f)
    norm = np.maximum(np.sqrt(gx * gx + gy * gy), eta)
    return divergence(gx / norm, gy / norm)
