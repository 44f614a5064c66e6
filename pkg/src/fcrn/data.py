"""Procedural RGB-D scenes and paired image/depth augmentation.

Scenes are a textured floor, an optional back wall and axis-aligned boxes,
ray cast through a pinhole camera pitched down by a small angle. Depth is
the exact z-distance along the optical axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


@dataclass
class DepthSample:
    rgb: np.ndarray    # (3, H, W) in [0, 1]
    depth: np.ndarray  # (1, H, W) meters
    mask: np.ndarray   # (1, H, W) bool

    def __post_init__(self):
        if self.rgb.ndim != 3 or self.rgb.shape[0] != 3:
            raise ValueError(f"rgb must be (3, H, W), got {self.rgb.shape}")
        hw = self.rgb.shape[1:]
        if self.depth.shape != (1, *hw) or self.mask.shape != (1, *hw):
            raise ValueError(f"depth {self.depth.shape} and mask {self.mask.shape} must be (1, {hw[0]}, {hw[1]})")


# ---------------------------------------------------------------------------
# rendering

@dataclass
class Box:
    x: float          # center, meters right of the camera
    z: float          # center, meters ahead of the camera
    width: float
    length: float
    height: float
    color: tuple[float, float, float] = (0.8, 0.3, 0.2)


@dataclass
class Scene:
    camera_height: float = 1.5
    pitch_deg: float = 10.0           # downward tilt of the optical axis
    focal: float | None = None        # pixels; default 0.9 * width
    wall_distance: float | None = 8.0  # None: floor only
    boxes: list[Box] = field(default_factory=list)
    floor_color: tuple[float, float, float] = (0.6, 0.55, 0.45)
    wall_color: tuple[float, float, float] = (0.45, 0.55, 0.7)
    tile: float = 0.5


def _rays(h, w, scene: Scene):
    f = scene.focal if scene.focal is not None else 0.9 * w
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    xs = (u + 0.5 - w / 2) / f
    ys = (v + 0.5 - h / 2) / f
    th = np.deg2rad(scene.pitch_deg)
    s, c = np.sin(th), np.cos(th)
    # world: X right, Y up, Z forward; camera y points down the image
    dx = xs
    dy = -ys * c - s
    dz = -ys * s + c
    return dx, dy, dz


def render(scene: Scene, size=(64, 64)) -> DepthSample:
    h, w = size
    dx, dy, dz = _rays(h, w, scene)
    cam_y = scene.camera_height
    depth = np.full((h, w), np.inf)
    rgb = np.zeros((3, h, w))

    with np.errstate(divide="ignore", invalid="ignore"):
        t_floor = np.where(dy < 0, cam_y / -dy, np.inf)
        hit_x, hit_z = dx * t_floor, dz * t_floor
        checker = (np.floor(hit_x / scene.tile) + np.floor(hit_z / scene.tile)) % 2
    floor_shade = np.where(np.isfinite(t_floor), 0.65 + 0.35 * np.nan_to_num(checker), 0.0)
    sel = t_floor < depth
    depth[sel] = t_floor[sel]
    for k in range(3):
        rgb[k][sel] = scene.floor_color[k] * floor_shade[sel]

    if scene.wall_distance is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            t_wall = np.where(dz > 0, scene.wall_distance / dz, np.inf)
        wall_y = cam_y + dy * t_wall
        stripe = 0.8 + 0.2 * (np.floor(np.nan_to_num(wall_y) / 0.4) % 2)
        sel = t_wall < depth
        depth[sel] = t_wall[sel]
        for k in range(3):
            rgb[k][sel] = scene.wall_color[k] * stripe[sel]

    for box in scene.boxes:
        lo = np.array([box.x - box.width / 2, 0.0, box.z - box.length / 2])
        hi = np.array([box.x + box.width / 2, box.height, box.z + box.length / 2])
        origin = np.array([0.0, cam_y, 0.0])
        t_near = np.full((h, w), -np.inf)
        t_far = np.full((h, w), np.inf)
        face = np.zeros((h, w), dtype=int)
        for axis, d in enumerate((dx, dy, dz)):
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (lo[axis] - origin[axis]) / d
                t2 = (hi[axis] - origin[axis]) / d
            near = np.fmin(t1, t2)
            far = np.fmax(t1, t2)
            parallel = d == 0
            inside = (origin[axis] >= lo[axis]) & (origin[axis] <= hi[axis])
            near = np.where(parallel, np.where(inside, -np.inf, np.inf), near)
            far = np.where(parallel, np.where(inside, np.inf, -np.inf), far)
            face = np.where(near > t_near, axis, face)
            t_near = np.maximum(t_near, near)
            t_far = np.minimum(t_far, far)
        hit = (t_near <= t_far) & (t_near > 0) & (t_near < depth)
        depth[hit] = t_near[hit]
        shade = np.choose(face, [0.7, 1.0, 0.85])  # side, top, front
        for k in range(3):
            rgb[k][hit] = box.color[k] * shade[hit]

    if not np.all(np.isfinite(depth)):
        raise ValueError("scene leaves pixels without a surface; add a wall or pitch the camera down")
    # mild haze: brightness falls off with distance
    rgb = np.clip(rgb * np.exp(-depth / 25.0)[None], 0.0, 1.0)
    return DepthSample(rgb, depth[None], np.ones((1, h, w), dtype=bool))


def random_scene(rng: np.random.Generator, max_boxes: int = 4) -> Scene:
    wall = rng.uniform(6.0, 10.0)
    boxes = []
    for _ in range(rng.integers(0, max_boxes + 1)):
        boxes.append(Box(
            x=rng.uniform(-2.0, 2.0), z=rng.uniform(2.0, wall - 1.0),
            width=rng.uniform(0.4, 1.2), length=rng.uniform(0.4, 1.2), height=rng.uniform(0.3, 1.6),
            color=tuple(rng.uniform(0.2, 1.0, 3)),
        ))
    return Scene(
        camera_height=rng.uniform(1.2, 1.8),
        pitch_deg=rng.uniform(5.0, 20.0),
        wall_distance=wall,
        boxes=boxes,
        floor_color=tuple(rng.uniform(0.4, 0.8, 3)),
        wall_color=tuple(rng.uniform(0.3, 0.8, 3)),
    )


def synth_dataset(n: int, size=(64, 64), seed: int = 0) -> list[DepthSample]:
    """``n`` rendered scenes; sample ``i`` depends only on ``(seed, i)``."""
    if n < 1:
        raise ValueError(f"dataset size must be at least 1, got {n}")
    out = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        out.append(render(random_scene(rng), size))
    return out


# ---------------------------------------------------------------------------
# augmentation

@dataclass
class AugmentConfig:
    rotation: tuple[float, float] = (-5.0, 5.0)   # degrees
    scale: tuple[float, float] = (1.0, 1.5)
    color: tuple[float, float] = (0.8, 1.2)       # per-channel multiplier
    flip_prob: float = 0.5
    crop: tuple[int, int] | None = None           # None keeps the full frame

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob must be in [0, 1], got {self.flip_prob}")
        if self.scale[0] <= 0 or self.scale[0] > self.scale[1]:
            raise ValueError(f"scale range must be positive and ordered, got {self.scale}")

    @classmethod
    def identity(cls, crop=None) -> "AugmentConfig":
        return cls(rotation=(0.0, 0.0), scale=(1.0, 1.0), color=(1.0, 1.0), flip_prob=0.0, crop=crop)


def _resample(arr, fn, order, **kw):
    return np.stack([fn(a, order=order, **kw) for a in arr])


def augment(sample: DepthSample, cfg: AugmentConfig, seed) -> DepthSample:
    """Rotate, scale, color-jitter, flip and crop an image with its depth and mask.

    Geometric steps act identically on all three maps: bilinear for rgb and
    depth, nearest for the mask. Zooming by ``s`` divides depth by ``s``, as
    if the camera had moved closer.
    """
    rng = np.random.default_rng(seed)
    angle = rng.uniform(*cfg.rotation)
    s = rng.uniform(*cfg.scale)
    gains = rng.uniform(*cfg.color, size=3)
    flip = rng.random() < cfg.flip_prob
    pos = rng.random(2)

    rgb, depth, mask = sample.rgb, sample.depth, sample.mask
    if angle != 0.0:
        rot = dict(angle=angle, axes=(1, 0), reshape=False)
        rgb = _resample(rgb, ndimage.rotate, 1, mode="nearest", **rot)
        depth = _resample(depth, ndimage.rotate, 1, mode="nearest", **rot)
        mask = _resample(mask.astype(np.uint8), ndimage.rotate, 0, mode="constant", cval=0, **rot) > 0
    if s != 1.0:
        zoom = dict(zoom=s, grid_mode=True, mode="grid-constant")
        rgb = _resample(rgb, ndimage.zoom, 1, **{**zoom, "mode": "nearest"})
        depth = _resample(depth, ndimage.zoom, 1, **{**zoom, "mode": "nearest"}) / s
        mask = _resample(mask.astype(np.uint8), ndimage.zoom, 0, **zoom) > 0
    if np.any(gains != 1.0):
        rgb = np.clip(rgb * gains[:, None, None], 0.0, 1.0)
    if flip:
        rgb, depth, mask = rgb[:, :, ::-1], depth[:, :, ::-1], mask[:, :, ::-1]

    h, w = rgb.shape[1:]
    ch, cw = cfg.crop if cfg.crop is not None else sample.rgb.shape[1:]
    if ch > h or cw > w:
        raise ValueError(f"crop {(ch, cw)} does not fit the transformed image {(h, w)}")
    top = int(pos[0] * (h - ch + 1))
    left = int(pos[1] * (w - cw + 1))
    win = (slice(None), slice(top, top + ch), slice(left, left + cw))
    mask = mask[win] & (depth[win] > 0)
    return DepthSample(np.ascontiguousarray(rgb[win]), np.ascontiguousarray(depth[win]),
                       np.ascontiguousarray(mask))
