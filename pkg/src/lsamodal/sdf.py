"""Masks, signed distance functions, and the smooth step kernels of the loss.

Masks are {0,1} uint8 arrays with the same (height, width) layout as scalar
fields.  ``signed_distance`` builds an inside-positive SDF whose zero level
set sits half a pixel outside the foreground pixel centers, which makes
``mask_from_phi`` an exact inverse.  The Euclidean distance transform is the
exact two-pass algorithm: 1D column sweeps, then a per-row minimization over
all column candidates (a parabola lower envelope on wide grids, a broadcast
min on small ones) -- not a chamfer approximation.
"""

from __future__ import annotations

import numpy as np

from .errors import MaskError, ShapeError
from .fields import MIN_DIM

HEAVISIDE_EPS = 1.5  # default smoothing width, in pixel units of phi


def as_mask(bits) -> np.ndarray:
    m = np.asarray(bits)
    if m.ndim != 2 or m.shape[0] < MIN_DIM or m.shape[1] < MIN_DIM:
        raise ShapeError(f"mask must be 2D and at least {MIN_DIM}x{MIN_DIM}, got {m.shape}")
    if m.dtype != np.uint8:
        u = m.astype(np.uint8)
        if not np.array_equal(u, m):
            raise ShapeError("mask elements must be 0 or 1")
        m = u
    if m.size and m.max() > 1:
        raise ShapeError("mask elements must be 0 or 1")
    return m


def _envelope_sq(f: np.ndarray) -> np.ndarray:
    """1D lower envelope of the parabolas q -> f[q] + (x-q)^2 (exact EDT row pass)."""
    n = f.shape[0]
    out = np.empty(n)
    v = np.empty(n, dtype=np.intp)  # parabola apex positions
    z = np.empty(n + 1)  # envelope breakpoints
    k = -1
    for q in range(n):
        fq = f[q]
        if fq == np.inf:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -np.inf
            z[1] = np.inf
            continue
        while True:
            p = v[k]
            s = (fq + q * q - f[p] - p * p) / (2.0 * (q - p))
            if s <= z[k]:
                k -= 1
                if k < 0:
                    k = 0
                    v[0] = q
                    z[0] = -np.inf
                    z[1] = np.inf
                    break
            else:
                k += 1
                v[k] = q
                z[k] = s
                z[k + 1] = np.inf
                break
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        out[q] = (q - p) * (q - p) + f[p]
    return out


# Width cutoff for the broadcast row pass: O(h*w^2) all-candidates min beats
# the per-row Python envelope on small grids; both are exact.
_BROADCAST_MAX_W = 128


def exact_edt(mask) -> np.ndarray:
    """Exact Euclidean distance (pixels) to the nearest foreground pixel center."""
    m = as_mask(mask)
    if not m.any():
        raise MaskError("distance transform of an all-zero mask is undefined")
    h, w = m.shape
    # pass 1: per-column vertical distances (linear, then squared)
    d = np.where(m != 0, 0.0, np.inf)
    for i in range(1, h):
        np.minimum(d[i], d[i - 1] + 1.0, out=d[i])
    for i in range(h - 2, -1, -1):
        np.minimum(d[i], d[i + 1] + 1.0, out=d[i])
    g = d * d
    # pass 2: exact squared-distance minimization across columns per row
    if w <= _BROADCAST_MAX_W:
        q = np.arange(w, dtype=np.float64)
        off = (q[:, None] - q[None, :]) ** 2  # (x, candidate)
        out = np.min(g[:, None, :] + off[None, :, :], axis=2)
    else:
        out = np.empty((h, w))
        for y in range(h):
            out[y] = _envelope_sq(g[y])
    return np.sqrt(out)


def signed_distance(mask) -> np.ndarray:
    """Inside-positive SDF: +-(d_opposite - 0.5), zero level between pixel centers."""
    m = as_mask(mask)
    if not m.any() or m.all():
        raise MaskError("signed distance needs both foreground and background pixels")
    d_fg = exact_edt(m)  # distance to foreground, used at background pixels
    d_bg = exact_edt(1 - m)  # distance to background, used at foreground pixels
    inside = m != 0
    return np.where(inside, d_bg - 0.5, -(d_fg - 0.5))


def mask_from_phi(phi) -> np.ndarray:
    """Threshold at zero: foreground exactly where phi > 0."""
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2:
        raise ShapeError(f"field must be 2D, got shape {phi.shape}")
    return (phi > 0).astype(np.uint8)


def smooth_heaviside(phi, eps: float = HEAVISIDE_EPS) -> np.ndarray:
    """H_eps(z) = 0.5 * (1 + (2/pi) * arctan(z/eps)); open range (0, 1)."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    z = np.asarray(phi, dtype=np.float64)
    return 0.5 * (1.0 + (2.0 / np.pi) * np.arctan(z / eps))


def smooth_dirac(phi, eps: float = HEAVISIDE_EPS) -> np.ndarray:
    """Derivative of smooth_heaviside: (1/pi) * eps / (eps^2 + z^2)."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    z = np.asarray(phi, dtype=np.float64)
    return (eps / np.pi) / (eps * eps + z * z)


def zero_crossings(phi) -> np.ndarray:
    """Subpixel zero crossings of phi along grid lines, as an (n, 2) array of (x, y).

    Linear interpolation between adjacent pixels of strictly opposite sign,
    plus any pixel where phi is exactly zero (the contour passes through its
    center); used for contour measurements in tests and diagnostics.
    """
    p = np.asarray(phi, dtype=np.float64)
    pts = []
    sx = p[:, :-1] * p[:, 1:]
    ys, xs = np.nonzero(sx < 0)
    t = p[ys, xs] / (p[ys, xs] - p[ys, xs + 1])
    pts.append(np.column_stack([xs + t, ys.astype(np.float64)]))
    sy = p[:-1, :] * p[1:, :]
    ys, xs = np.nonzero(sy < 0)
    t = p[ys, xs] / (p[ys, xs] - p[ys + 1, xs])
    pts.append(np.column_stack([xs.astype(np.float64), ys + t]))
    ys, xs = np.nonzero(p == 0.0)
    pts.append(np.column_stack([xs.astype(np.float64), ys.astype(np.float64)]))
    return np.concatenate(pts, axis=0)
