"""Synthetic amodal scenes: overlapping shapes with exact occlusion masks.

A scene is a back-to-front list of analytic shapes rasterized by a
pixel-center inclusion test.  One shape is the target: its full silhouette
is the amodal mask, and pixels covered by any shape drawn later (closer to
the viewer) are removed to form the visible mask.  Occlusion rate is an
exact pixel-count ratio, controlled by rejection sampling.  Everything is
driven by one seeded generator, so (seed, cfg) fully determines the sample,
including the noise field and the prompt pixels.

Images are quantized to the 8-bit grid at generation time so the PNG
persistence round-trip is lossless.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DatasetError, ShapeError
from .prompts import PointPrompt

MIN_VISIBLE = 16  # pixels; smaller targets are rejected
MAX_ATTEMPTS = 1000
MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


# ---------------------------------------------------------------------------
# shape descriptors and rasterization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EllipseShape:
    cx: float
    cy: float
    a: float
    b: float
    theta: float = 0.0


@dataclass(frozen=True)
class RectShape:
    cx: float
    cy: float
    hw: float  # half width
    hh: float  # half height
    theta: float = 0.0


@dataclass(frozen=True)
class PolygonShape:
    vertices: tuple  # ((x, y), ...) convex, any orientation


@dataclass(frozen=True)
class BlobShape:
    """Disk of radius r0 with a radial Fourier perturbation r(t) = r0(1 + sum a_k cos(kt + p_k))."""

    cx: float
    cy: float
    r0: float
    amps: tuple
    phases: tuple


def _pixel_centers(grid: int):
    ys = np.arange(grid, dtype=np.float64)[:, None]
    xs = np.arange(grid, dtype=np.float64)[None, :]
    return xs, ys


def rasterize_shape(shape, grid: int) -> np.ndarray:
    """Boundary-inclusive pixel-center rasterization; {0,1} uint8 mask."""
    xs, ys = _pixel_centers(grid)
    if isinstance(shape, EllipseShape):
        if shape.a <= 0 or shape.b <= 0:
            raise ShapeError(f"ellipse axes must be positive, got {shape.a}, {shape.b}")
        dx, dy = xs - shape.cx, ys - shape.cy
        c, s = np.cos(shape.theta), np.sin(shape.theta)
        u, v = c * dx + s * dy, -s * dx + c * dy
        inside = (u / shape.a) ** 2 + (v / shape.b) ** 2 <= 1.0
    elif isinstance(shape, RectShape):
        if shape.hw <= 0 or shape.hh <= 0:
            raise ShapeError(f"rectangle half-extents must be positive, got {shape.hw}, {shape.hh}")
        dx, dy = xs - shape.cx, ys - shape.cy
        c, s = np.cos(shape.theta), np.sin(shape.theta)
        u, v = c * dx + s * dy, -s * dx + c * dy
        inside = (np.abs(u) <= shape.hw) & (np.abs(v) <= shape.hh)
    elif isinstance(shape, PolygonShape):
        verts = np.asarray(shape.vertices, dtype=np.float64)
        if verts.ndim != 2 or verts.shape[0] < 3 or verts.shape[1] != 2:
            raise ShapeError(f"polygon needs >= 3 (x, y) vertices, got {verts.shape}")
        area2 = np.sum(verts[:, 0] * np.roll(verts[:, 1], -1) - np.roll(verts[:, 0], -1) * verts[:, 1])
        if area2 == 0.0:
            raise ShapeError("polygon has zero area")
        if area2 < 0:
            verts = verts[::-1]
        inside = np.ones((grid, grid), dtype=bool)
        for i in range(len(verts)):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % len(verts)]
            # CCW edge: interior where the cross product is >= 0
            inside &= (x1 - x0) * (ys - y0) - (y1 - y0) * (xs - x0) >= 0.0
    elif isinstance(shape, BlobShape):
        if shape.r0 <= 0:
            raise ShapeError(f"blob radius must be positive, got {shape.r0}")
        if 1.0 - sum(abs(a) for a in shape.amps) <= 0:
            raise ShapeError("blob perturbation amplitudes reach zero radius")
        dx, dy = xs - shape.cx, ys - shape.cy
        t = np.arctan2(dy, dx)
        r = np.full((grid, grid), shape.r0)
        for k, (a, p) in enumerate(zip(shape.amps, shape.phases), start=1):
            r += shape.r0 * a * np.cos(k * t + p)
        inside = dx * dx + dy * dy <= r * r
    else:
        raise ShapeError(f"unknown shape descriptor {type(shape).__name__}")
    return inside.astype(np.uint8)


def compose_scene(shapes, target_idx: int, grid: int):
    """Rasterize a back-to-front shape list; returns (amodal, visible) of the target."""
    if not 0 <= target_idx < len(shapes):
        raise ShapeError(f"target index {target_idx} out of range for {len(shapes)} shapes")
    amodal = rasterize_shape(shapes[target_idx], grid)
    cover = np.zeros((grid, grid), dtype=bool)
    for s in shapes[target_idx + 1 :]:
        cover |= rasterize_shape(s, grid).astype(bool)
    visible = (amodal.astype(bool) & ~cover).astype(np.uint8)
    return amodal, visible


# ---------------------------------------------------------------------------
# scene sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneConfig:
    grid: int = 64
    shape_count: tuple = (2, 4)  # inclusive range
    family_weights: tuple = (0.3, 0.25, 0.2, 0.25)  # ellipse, rect, polygon, blob
    occlusion_range: tuple = (0.1, 0.6)
    noise: float = 0.02
    prompt_count: int = 1

    def __post_init__(self):
        if self.grid < 8 or self.grid % 2:
            raise ValueError(f"grid must be even and >= 8, got {self.grid}")
        lo, hi = self.shape_count
        if not (1 <= lo <= hi):
            raise ValueError(f"shape count range ill-ordered: {self.shape_count}")
        if len(self.family_weights) != 4 or any(w < 0 for w in self.family_weights):
            raise ValueError(f"need 4 nonnegative family weights, got {self.family_weights}")
        if sum(self.family_weights) <= 0:
            raise ValueError("family weights sum to zero")
        olo, ohi = self.occlusion_range
        if not (0.0 <= olo <= ohi < 1.0):
            raise ValueError(f"occlusion range ill-ordered: {self.occlusion_range}")
        if self.noise < 0:
            raise ValueError(f"noise level must be nonnegative, got {self.noise}")
        if self.prompt_count < 1:
            raise ValueError(f"prompt count must be >= 1, got {self.prompt_count}")

    def to_dict(self) -> dict:
        return {
            "grid": self.grid,
            "shape_count": list(self.shape_count),
            "family_weights": list(self.family_weights),
            "occlusion_range": list(self.occlusion_range),
            "noise": self.noise,
            "prompt_count": self.prompt_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        return cls(
            grid=int(d["grid"]),
            shape_count=tuple(d["shape_count"]),
            family_weights=tuple(d["family_weights"]),
            occlusion_range=tuple(d["occlusion_range"]),
            noise=float(d["noise"]),
            prompt_count=int(d["prompt_count"]),
        )


@dataclass
class AmodalSample:
    image: np.ndarray  # float64 in [0,1], quantized to the 8-bit grid
    amodal: np.ndarray  # {0,1} uint8
    visible: np.ndarray  # {0,1} uint8
    prompts: list = field(default_factory=list)
    seed: int = 0
    occlusion_rate: float = 0.0


def _sample_shape(rng: np.random.Generator, family: int, grid: float):
    cx, cy = rng.uniform(0.15 * grid, 0.85 * grid, size=2)
    if family == 0:
        a, b = rng.uniform(0.08 * grid, 0.28 * grid, size=2)
        return EllipseShape(cx, cy, a, b, rng.uniform(0.0, np.pi))
    if family == 1:
        hw, hh = rng.uniform(0.08 * grid, 0.25 * grid, size=2)
        return RectShape(cx, cy, hw, hh, rng.uniform(0.0, np.pi))
    if family == 2:
        k = int(rng.integers(4, 8))
        rx, ry = rng.uniform(0.10 * grid, 0.28 * grid, size=2)
        rot = rng.uniform(0.0, np.pi)
        angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=k))
        px = rx * np.cos(angles)
        py = ry * np.sin(angles)
        c, s = np.cos(rot), np.sin(rot)
        verts = tuple((cx + c * x - s * y, cy + s * x + c * y) for x, y in zip(px, py))
        return PolygonShape(verts)
    r0 = rng.uniform(0.10 * grid, 0.25 * grid)
    amps = rng.uniform(-0.35, 0.35, size=4) / np.arange(1, 5)
    m = np.sum(np.abs(amps))
    if m > 0.6:
        amps *= 0.6 / m
    phases = rng.uniform(0.0, 2.0 * np.pi, size=4)
    return BlobShape(cx, cy, r0, tuple(amps), tuple(phases))


def generate(seed: int, cfg: SceneConfig) -> AmodalSample:
    """One rejection-sampled scene; raises after MAX_ATTEMPTS misses."""
    rng = np.random.default_rng(seed)
    lo, hi = cfg.shape_count
    olo, ohi = cfg.occlusion_range
    for _ in range(MAX_ATTEMPTS):
        n = int(rng.integers(lo, hi + 1))
        families = rng.choice(4, size=n, p=np.asarray(cfg.family_weights) / sum(cfg.family_weights))
        shapes = [_sample_shape(rng, int(f), float(cfg.grid)) for f in families]
        target = int(rng.integers(0, n))
        amodal, visible = compose_scene(shapes, target, cfg.grid)
        na, nv = int(amodal.sum()), int(visible.sum())
        if na == 0 or nv < MIN_VISIBLE:
            continue
        occ = 1.0 - nv / na
        if not olo <= occ <= ohi:
            continue
        bg = rng.uniform(0.02, 0.15)
        levels = rng.permutation(np.linspace(0.3, 0.95, n)) + rng.uniform(-0.03, 0.03, size=n)
        img = np.full((cfg.grid, cfg.grid), bg)
        for shape, level in zip(shapes, levels):
            img[rasterize_shape(shape, cfg.grid).astype(bool)] = level
        if cfg.noise > 0:
            img += cfg.noise * rng.standard_normal(img.shape)
        img = np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0
        flat = np.flatnonzero(visible)
        picks = rng.choice(flat.size, size=cfg.prompt_count, replace=True)
        prompts = [
            PointPrompt(float(flat[i] % cfg.grid), float(flat[i] // cfg.grid)) for i in picks
        ]
        return AmodalSample(img, amodal, visible, prompts, int(seed), occ)
    raise DatasetError(
        f"no scene met occlusion range {cfg.occlusion_range} after {MAX_ATTEMPTS} attempts (seed {seed})"
    )


def generate_many(seed0: int, count: int, cfg: SceneConfig) -> list[AmodalSample]:
    return [generate(seed0 + i, cfg) for i in range(count)]


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _save_gray(path: Path, values: np.ndarray) -> str:
    Image.fromarray(values, mode="L").save(path, format="PNG")
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_gray(path: Path) -> np.ndarray:
    if not path.is_file():
        raise DatasetError(f"missing dataset file: {path.name}")
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def save_dataset(samples, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i, s in enumerate(samples):
        stem = f"{i:05d}"
        names = {
            "image": f"{stem}_image.png",
            "amodal": f"{stem}_amodal.png",
            "visible": f"{stem}_visible.png",
        }
        sums = {
            "image": _save_gray(out / names["image"], np.round(s.image * 255.0).astype(np.uint8)),
            "amodal": _save_gray(out / names["amodal"], s.amodal * np.uint8(255)),
            "visible": _save_gray(out / names["visible"], s.visible * np.uint8(255)),
        }
        records.append(
            {
                "seed": s.seed,
                "files": names,
                "sha256": sums,
                "prompts": [[p.x, p.y] for p in s.prompts],
                "occlusion_rate": s.occlusion_rate,
            }
        )
    manifest = {"version": MANIFEST_VERSION, "count": len(records), "samples": records}
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1) + "\n")
    return out


def load_dataset(in_dir) -> list[AmodalSample]:
    src = Path(in_dir)
    mpath = src / MANIFEST_NAME
    if not mpath.is_file():
        raise DatasetError(f"no {MANIFEST_NAME} in {src}")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"corrupt manifest: {exc}") from exc
    if manifest.get("version") != MANIFEST_VERSION:
        raise DatasetError(f"unsupported manifest version {manifest.get('version')}")
    samples = []
    for rec in manifest["samples"]:
        arrays = {}
        for kind in ("image", "amodal", "visible"):
            path = src / rec["files"][kind]
            if not path.is_file():
                raise DatasetError(f"missing dataset file: {rec['files'][kind]}")
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            if digest != rec["sha256"][kind]:
                raise DatasetError(f"checksum mismatch for {rec['files'][kind]}")
            arrays[kind] = _load_gray(path)
        samples.append(
            AmodalSample(
                image=arrays["image"].astype(np.float64) / 255.0,
                amodal=(arrays["amodal"] > 127).astype(np.uint8),
                visible=(arrays["visible"] > 127).astype(np.uint8),
                prompts=[PointPrompt(float(x), float(y)) for x, y in rec["prompts"]],
                seed=int(rec["seed"]),
                occlusion_rate=float(rec["occlusion_rate"]),
            )
        )
    return samples
