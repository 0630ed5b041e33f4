"""Point-cloud data model, synthetic shape corpus, augmentation, and .xyz IO."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .rand import derive_rng

SHAPE_KINDS = ("cone", "cross", "cube", "cylinder", "helix", "plane",
               "sphere", "torus")

# Upward bias on the normalization scale keeps recomputed norms <= 1.0
# despite rounding in the division.
_SCALE_BIAS = 1.0 + 1e-15


@dataclass(frozen=True)
class PointCloud:
    """N x 3 coordinate matrix with an optional class label."""

    points: np.ndarray
    label: Optional[str] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise DataError(f"points must be N x 3 with N >= 1, got {pts.shape}")
        if not np.isfinite(pts).all():
            raise DataError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class AugmentationPolicy:
    """Stochastic transform settings; draws come from an external stream.

    Applied in fixed order: rotate, scale, translate, jitter, then optional
    re-normalization to the unit sphere.
    """

    rotation_axis: str = "any"          # "any" | "x" | "y" | "z"
    angle_range: tuple[float, float] = (0.0, 2.0 * math.pi)
    scale_range: tuple[float, float] = (0.8, 1.2)
    isotropic_scale: bool = True
    translation_range: tuple[float, float] = (-0.1, 0.1)
    jitter_sigma: float = 0.01
    jitter_clip: float = 0.05
    normalize: bool = True

    def __post_init__(self):
        if self.rotation_axis not in ("any", "x", "y", "z"):
            raise ConfigError(f"unknown rotation axis {self.rotation_axis!r}")
        if not (0.0 <= self.jitter_sigma <= self.jitter_clip or
                (self.jitter_sigma == 0.0 and self.jitter_clip == 0.0)):
            raise ConfigError("need 0 <= jitter_sigma <= jitter_clip")
        if self.scale_range[0] <= 0.0:
            raise ConfigError("scale_range lower bound must be > 0")
        for lo, hi in (self.angle_range, self.scale_range,
                       self.translation_range):
            if hi < lo:
                raise ConfigError("range upper bound below lower bound")

    @classmethod
    def identity(cls) -> "AugmentationPolicy":
        return cls(angle_range=(0.0, 0.0), scale_range=(1.0, 1.0),
                   translation_range=(0.0, 0.0), jitter_sigma=0.0,
                   jitter_clip=0.0, normalize=False)


@dataclass(frozen=True)
class Dataset:
    """A sequence of clouds plus the ordered label vocabulary."""

    clouds: tuple[PointCloud, ...]
    class_names: tuple[str, ...]
    split: str = "train"

    def __post_init__(self):
        known = set(self.class_names)
        for pc in self.clouds:
            if pc.label is not None and pc.label not in known:
                raise DataError(f"label {pc.label!r} not in class vocabulary")

    def __len__(self) -> int:
        return len(self.clouds)

    def label_ids(self) -> np.ndarray:
        index = {name: i for i, name in enumerate(self.class_names)}
        return np.array([index[pc.label] for pc in self.clouds], dtype=np.int64)


def _sample_sphere(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return v / norms


def _sample_cube(n: int, rng: np.random.Generator) -> np.ndarray:
    face = rng.integers(0, 6, size=n)
    uv = rng.uniform(-1.0, 1.0, size=(n, 2))
    pts = np.empty((n, 3))
    axis = face // 2
    sign = (face % 2) * 2.0 - 1.0
    for a in range(3):
        mask = axis == a
        others = [i for i in range(3) if i != a]
        pts[mask, a] = sign[mask]
        pts[np.ix_(mask, others)] = uv[mask]
    return pts


def _sample_cylinder(n: int, rng: np.random.Generator) -> np.ndarray:
    theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
    z = rng.uniform(-1.0, 1.0, size=n)
    r = 0.5
    return np.column_stack([r * np.cos(theta), r * np.sin(theta), z])


def _sample_torus(n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.uniform(0.0, 2.0 * math.pi, size=n)
    v = rng.uniform(0.0, 2.0 * math.pi, size=n)
    ring_r, tube_r = 0.7, 0.3
    w = ring_r + tube_r * np.cos(v)
    return np.column_stack([w * np.cos(u), w * np.sin(u), tube_r * np.sin(v)])


def _sample_cone(n: int, rng: np.random.Generator) -> np.ndarray:
    theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
    s = np.sqrt(rng.uniform(0.0, 1.0, size=n))  # area-uniform along the slant
    return np.column_stack([s * np.cos(theta), s * np.sin(theta), 1.0 - 2.0 * s])


def _sample_plane(n: int, rng: np.random.Generator) -> np.ndarray:
    xy = rng.uniform(-1.0, 1.0, size=(n, 2))
    return np.column_stack([xy, np.zeros(n)])


def _sample_helix(n: int, rng: np.random.Generator) -> np.ndarray:
    t = rng.uniform(0.0, 1.0, size=n)
    turns, r = 3.0, 0.6
    a = 2.0 * math.pi * turns * t
    return np.column_stack([r * np.cos(a), r * np.sin(a), 2.0 * t - 1.0])


def _sample_cross(n: int, rng: np.random.Generator) -> np.ndarray:
    # three mutually orthogonal strips through the origin
    strip = rng.integers(0, 3, size=n)
    long = rng.uniform(-1.0, 1.0, size=n)
    short = rng.uniform(-0.2, 0.2, size=n)
    zeros = np.zeros(n)
    pts = np.empty((n, 3))
    for k, cols in enumerate(((long, short, zeros),
                              (zeros, long, short),
                              (short, zeros, long))):
        mask = strip == k
        pts[mask] = np.column_stack(cols)[mask]
    return pts


_SAMPLERS = {
    "sphere": _sample_sphere,
    "cube": _sample_cube,
    "cylinder": _sample_cylinder,
    "torus": _sample_torus,
    "cone": _sample_cone,
    "plane": _sample_plane,
    "helix": _sample_helix,
    "cross": _sample_cross,
}


def generate_shape(kind: str, n_points: int, rng: np.random.Generator) -> PointCloud:
    """Sample points on a parametric shape, scaled to fit the unit sphere.

    Shapes are constructed centered on the origin, so only a max-norm
    rescale is applied (no centroid shift).
    """
    if kind not in _SAMPLERS:
        raise ConfigError(f"unknown shape kind {kind!r}; choose from {SHAPE_KINDS}")
    if n_points < 8:
        raise ConfigError("n_points must be >= 8")
    pts = _SAMPLERS[kind](n_points, rng)
    scale = float(np.linalg.norm(pts, axis=1).max())
    pts = pts / (scale * _SCALE_BIAS)
    return PointCloud(points=pts, label=kind)


def normalize_unit_sphere(pc: PointCloud) -> PointCloud:
    """Center on the centroid and scale the furthest point to distance 1."""
    centered = pc.points - pc.points.mean(axis=0)
    scale = float(np.linalg.norm(centered, axis=1).max())
    if scale <= 0.0:
        raise DataError("degenerate cloud: all points identical")
    return replace(pc, points=centered / (scale * _SCALE_BIAS))


def _rotation_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    kx, ky, kz = axis
    k_cross = np.array([[0.0, -kz, ky],
                        [kz, 0.0, -kx],
                        [-ky, kx, 0.0]])
    c, s = math.cos(angle), math.sin(angle)
    return c * np.eye(3) + s * k_cross + (1.0 - c) * np.outer(axis, axis)


_FIXED_AXES = {"x": np.array([1.0, 0.0, 0.0]),
               "y": np.array([0.0, 1.0, 0.0]),
               "z": np.array([0.0, 0.0, 1.0])}


def augment(pc: PointCloud, policy: AugmentationPolicy,
            rng: np.random.Generator) -> PointCloud:
    """One stochastic view of a cloud; label and point count are preserved.

    Draws happen in a fixed order (axis, angle, scale, translation, jitter);
    stages that drew a no-op parameter are skipped so an identity policy
    returns the input bitwise-unchanged.
    """
    pts = pc.points
    if policy.rotation_axis == "any":
        raw = rng.normal(size=3)
        norm = np.linalg.norm(raw)
        axis = raw / norm if norm > 0.0 else _FIXED_AXES["z"]
    else:
        axis = _FIXED_AXES[policy.rotation_axis]
    angle = float(rng.uniform(*policy.angle_range))
    if policy.isotropic_scale:
        scale = np.full(3, rng.uniform(*policy.scale_range))
    else:
        scale = rng.uniform(*policy.scale_range, size=3)
    offset = rng.uniform(*policy.translation_range, size=3)

    if angle != 0.0:
        pts = pts @ _rotation_matrix(axis, angle).T
    if np.any(scale != 1.0):
        pts = pts * scale
    if np.any(offset != 0.0):
        pts = pts + offset
    if policy.jitter_sigma > 0.0:
        noise = rng.normal(0.0, policy.jitter_sigma, size=pts.shape)
        np.clip(noise, -policy.jitter_clip, policy.jitter_clip, out=noise)
        pts = pts + noise
    out = replace(pc, points=pts)
    if policy.normalize:
        out = normalize_unit_sphere(out)
    return out


def generate_dataset(seed: int, split: str, per_class: int, n_points: int,
                     kinds: Sequence[str] = SHAPE_KINDS) -> Dataset:
    """Synthetic labelled corpus: ``per_class`` clouds of each shape kind."""
    clouds = []
    for ci, kind in enumerate(kinds):
        for item in range(per_class):
            rng = derive_rng(seed, "gen", split, ci, item)
            clouds.append(generate_shape(kind, n_points, rng))
    return Dataset(clouds=tuple(clouds), class_names=tuple(sorted(kinds)),
                   split=split)


def write_xyz(pc: PointCloud, path: str | Path) -> None:
    lines = [f"{float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in pc.points]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_xyz_dir(dataset: Dataset, root: str | Path) -> None:
    """Write ``root/<class_name>/<class>_<i>.xyz`` for every cloud."""
    root = Path(root)
    counters = {name: 0 for name in dataset.class_names}
    for pc in dataset.clouds:
        label = pc.label if pc.label is not None else "unlabelled"
        cls_dir = root / label
        cls_dir.mkdir(parents=True, exist_ok=True)
        idx = counters.setdefault(label, 0)
        write_xyz(pc, cls_dir / f"{label}_{idx:04d}.xyz")
        counters[label] = idx + 1


def load_xyz_dir(path: str | Path) -> Dataset:
    """Load ``root/<class_name>/*.xyz`` with labels from subdirectory names."""
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"not a directory: {root}")
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    clouds = []
    class_names = []
    for cls_dir in class_dirs:
        files = sorted(cls_dir.glob("*.xyz"))
        if not files:
            continue
        class_names.append(cls_dir.name)
        for file in files:
            clouds.append(_parse_xyz(file, label=cls_dir.name))
    if not clouds:
        raise DataError(f"no .xyz files found under {root}")
    return Dataset(clouds=tuple(clouds), class_names=tuple(class_names),
                   split=root.name)


def _parse_xyz(path: Path, label: Optional[str]) -> PointCloud:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            parts = stripped.split()
            if len(parts) != 3:
                raise DataError(
                    f"{path}:{lineno}: expected 3 coordinates, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad number") from exc
    if not rows:
        raise DataError(f"{path}: no points")
    return PointCloud(points=np.array(rows, dtype=np.float64), label=label)
