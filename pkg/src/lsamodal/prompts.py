"""Initial level set construction from point prompts.

A prompt is a real-valued pixel coordinate inside the visible part of the
target.  Prompts become a Gaussian heatmap (pixelwise max over points), the
heatmap plus the image feed a small conv net predicting visible-mask logits,
and the thresholded mask is converted to a signed distance field.  When the
prediction is degenerate (no foreground pixel) a geometric disk SDF around
the prompts stands in, so the evolution always starts from a usable contour.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PromptError, ShapeError
from .network import ConvNet, forward_logits
from .sdf import signed_distance

HEATMAP_SIGMA = 2.0
FALLBACK_RADIUS = 4.0


@dataclass(frozen=True)
class PointPrompt:
    x: float
    y: float


def check_prompts(prompts, width: int, height: int) -> list[PointPrompt]:
    if not prompts:
        raise PromptError("at least one point prompt is required")
    out = []
    for p in prompts:
        if not (0 <= p.x < width and 0 <= p.y < height):
            raise PromptError(
                f"prompt ({p.x}, {p.y}) outside image bounds {width}x{height}"
            )
        out.append(PointPrompt(float(p.x), float(p.y)))
    return out


def prompt_heatmap(prompts, sigma: float, width: int, height: int) -> np.ndarray:
    """Pixelwise max over prompts of exp(-((x-px)^2 + (y-py)^2) / (2 sigma^2))."""
    if sigma <= 0:
        raise PromptError(f"sigma must be positive, got {sigma}")
    prompts = check_prompts(prompts, width, height)
    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]
    heat = np.zeros((height, width), dtype=np.float64)
    for p in prompts:
        d2 = (xs - p.x) ** 2 + (ys - p.y) ** 2
        np.maximum(heat, np.exp(-d2 / (2.0 * sigma * sigma)), out=heat)
    return heat


def geometric_init(prompts, r0: float, width: int, height: int) -> np.ndarray:
    """SDF of the union of disks radius r0 centered on the prompts (max-combined)."""
    if r0 < 1:
        raise PromptError(f"fallback radius must be >= 1, got {r0}")
    prompts = check_prompts(prompts, width, height)
    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]
    phi = np.full((height, width), -np.inf)
    for p in prompts:
        dist = np.sqrt((xs - p.x) ** 2 + (ys - p.y) ** 2)
        np.maximum(phi, r0 - dist, out=phi)
    return phi


def initializer_loss_eager(logits: np.ndarray, visible: np.ndarray) -> float:
    """Mean BCE between logistic(logits) and the visible mask, stable form."""
    if logits.shape != visible.shape:
        raise ShapeError(f"logits {logits.shape} vs mask {visible.shape}")
    t = visible.astype(np.float64)
    return float(np.mean(np.logaddexp(0.0, logits) - t * logits))


def phi_from_logits(logits: np.ndarray | None, prompts, r0: float, width: int, height: int):
    """Threshold logits at 0 (ties to background), sign the distance transform.

    Returns (phi, used_fallback).  Degenerate logit fields (uniform sign, or
    None) fall back to the prompt-disk SDF so a usable contour always exists.
    """
    if logits is not None:
        mask = (logits > 0.0).astype(np.uint8)
        if mask.any() and not mask.all():
            return signed_distance(mask), False
    return geometric_init(prompts, r0, width, height), True


def init_phi(
    model: ConvNet | None,
    image: np.ndarray,
    prompts,
    sigma: float = HEATMAP_SIGMA,
    r0: float = FALLBACK_RADIUS,
):
    """Build phi_0 from the learned visible-mask logits; returns (phi, used_fallback)."""
    image = np.asarray(image, dtype=np.float64)
    height, width = image.shape
    prompts = check_prompts(prompts, width, height)
    logits = None
    if model is not None:
        heat = prompt_heatmap(prompts, sigma, width, height)
        logits = forward_logits(model, [image, heat])
    return phi_from_logits(logits, prompts, r0, width, height)
