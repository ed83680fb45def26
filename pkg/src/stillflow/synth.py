"""Synthetic moving-shape corpus with analytic ground-truth flow.

Each sample is a single textured shape (disc, square, or triangle) over a
low-contrast procedural background, executing one of eight motion classes
that come in four sign-ambiguous pairs:

    translate-left / translate-right, rise / fall,
    rotate-cw / rotate-ccw, expand / contract.

Two visual cues tie the upcoming motion to the static frame:

* a small landmark dot rendered 26-32 px from the shape centroid. Its
  bearing selects the motion family and sign (leading side for
  translations, above/below for rise/fall, upper diagonal corners for the
  two rotation signs; the expansion pair uses a bullseye glyph above or
  below). Because the dot sits far outside any small receptive field, the
  sign is only recoverable by relating two distant image regions - locally
  pooled statistics of the frame are identical for the two members of a
  pair.
* the shape's edge softness grows with local speed (a motion-blur stand-in),
  so flow magnitude is locally readable while direction is not.

The renderer itself is class-blind: two specs with identical parameters
produce identical frames no matter the label, and the scene family is
closed under horizontal mirroring (left/right and cw/ccw swap; the other
classes map to themselves).

Flow convention matches the encoding module: x right, y down. Clockwise
rotation with rate w > 0 has flow (u, v) = w * (-(y-cy), (x-cx)); expansion
with rate s has flow s * ((x-cx), (y-cy)). Flow at time t describes the
displacement from frame t to frame t+1; the regression target averages the
five step flows covering frames t .. t+5.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field as dataclass_field
from pathlib import Path

import numpy as np

from .encoding import FlowField, average_flows
from .flowio import load_image, read_flo, save_image, write_flo

__all__ = [
    "ALL_CLASSES",
    "AMBIGUOUS_PAIRS",
    "MIRROR_LABEL",
    "SceneSpecError",
    "SceneSpec",
    "SyntheticSample",
    "DatasetConfig",
    "SyntheticDataset",
    "sample_scene_spec",
    "mirror_spec",
    "analytic_flow",
    "render_frame",
    "render_sample",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "dataset_checksum",
    "frames_array",
    "labels_array",
]

ALL_CLASSES = (
    "translate-left",
    "translate-right",
    "rise",
    "fall",
    "rotate-cw",
    "rotate-ccw",
    "expand",
    "contract",
)

AMBIGUOUS_PAIRS = (
    ("translate-left", "translate-right"),
    ("rise", "fall"),
    ("rotate-cw", "rotate-ccw"),
    ("expand", "contract"),
)

MIRROR_LABEL = {
    "translate-left": "translate-right",
    "translate-right": "translate-left",
    "rise": "rise",
    "fall": "fall",
    "rotate-cw": "rotate-ccw",
    "rotate-ccw": "rotate-cw",
    "expand": "expand",
    "contract": "contract",
}

HORIZON = 5  # future frames per sample; the target averages their flows

_SQRT2 = float(np.sqrt(2.0)) / 2.0

# landmark bearing (unit offset from the shape centroid) and glyph per class
_LANDMARK = {
    "translate-right": ((1.0, 0.0), "dot"),
    "translate-left": ((-1.0, 0.0), "dot"),
    "rise": ((0.0, -1.0), "dot"),
    "fall": ((0.0, 1.0), "dot"),
    "rotate-cw": ((_SQRT2, -_SQRT2), "dot"),
    "rotate-ccw": ((-_SQRT2, -_SQRT2), "dot"),
    "expand": ((0.0, -1.0), "bullseye"),
    "contract": ((0.0, 1.0), "bullseye"),
}

# extent of each shape kind as a multiple of its size parameter
_EXTENT = {"disc": 1.0, "square": float(np.sqrt(2.0)), "triangle": 1.15}

_EDGE_BASE = 0.8  # edge transition width (px) of a static shape
_EDGE_PER_SPEED = 0.55  # extra width per px/frame of local speed
_GLYPH_EDGE = 0.35
_FRAME_PAD = 1.5
_LANDMARK_PAD = 3.0


class SceneSpecError(ValueError):
    """Scene parameters that cannot satisfy the containment constraints."""


@dataclass(frozen=True)
class SceneSpec:
    """Full parameterization of one scene; rendering is pure in this spec."""

    image_size: int
    label: str
    shape: str  # disc | square | triangle
    size: float  # disc radius / square half-side / triangle scale, px
    cx: float
    cy: float
    magnitude: float  # px/frame, rad/frame, or scale-rate/frame (positive)
    landmark_distance: float
    fill: tuple[float, float, float]
    texture_seed: int
    bg_seed: int

    def __post_init__(self):
        if self.label not in ALL_CLASSES:
            raise SceneSpecError(f"unknown label {self.label!r}")
        if self.shape not in _EXTENT:
            raise SceneSpecError(f"unknown shape {self.shape!r}")
        if not (self.magnitude > 0):
            raise SceneSpecError(f"magnitude must be > 0, got {self.magnitude}")

    @property
    def family(self) -> str:
        if self.label in ("translate-left", "translate-right", "rise", "fall"):
            return "translate"
        if self.label in ("rotate-cw", "rotate-ccw"):
            return "rotate"
        return "scale"

    @property
    def velocity(self) -> tuple[float, float]:
        """Translation velocity (u, v) in px/frame; zero for other families."""
        m = self.magnitude
        return {
            "translate-left": (-m, 0.0),
            "translate-right": (m, 0.0),
            "rise": (0.0, -m),
            "fall": (0.0, m),
        }.get(self.label, (0.0, 0.0))

    @property
    def omega(self) -> float:
        """Signed rotation rate; positive is clockwise on screen."""
        if self.label == "rotate-cw":
            return self.magnitude
        if self.label == "rotate-ccw":
            return -self.magnitude
        return 0.0

    @property
    def scale_rate(self) -> float:
        """Signed radial rate; positive expands."""
        if self.label == "expand":
            return self.magnitude
        if self.label == "contract":
            return -self.magnitude
        return 0.0

    @property
    def landmark_xy(self) -> tuple[float, float]:
        (bx, by), _ = _LANDMARK[self.label]
        return (self.cx + bx * self.landmark_distance, self.cy + by * self.landmark_distance)


def _centroid_at(spec: SceneSpec, t: float) -> tuple[float, float]:
    vx, vy = spec.velocity
    return (spec.cx + vx * t, spec.cy + vy * t)


def _extent_at(spec: SceneSpec, t: float) -> float:
    ext = spec.size * _EXTENT[spec.shape]
    if spec.family == "scale":
        ext *= (1.0 + spec.scale_rate) ** t
    return ext


def validate_spec(spec: SceneSpec) -> None:
    """Reject specs whose shape or landmark leaves the frame within the horizon."""
    s = spec.image_size
    for t in range(HORIZON + 1):
        cx, cy = _centroid_at(spec, t)
        ext = _extent_at(spec, t) + _FRAME_PAD
        if cx - ext < 0 or cx + ext > s - 1 or cy - ext < 0 or cy + ext > s - 1:
            raise SceneSpecError(f"shape leaves the frame at t={t}: {spec}")
    lx, ly = spec.landmark_xy
    if not (_LANDMARK_PAD <= lx <= s - 1 - _LANDMARK_PAD and _LANDMARK_PAD <= ly <= s - 1 - _LANDMARK_PAD):
        raise SceneSpecError(f"landmark outside the frame: {spec}")


# --------------------------------------------------------------------------
# geometry


def _grid(size: int):
    y, x = np.mgrid[0:size, 0:size]
    return x.astype(np.float64), y.astype(np.float64)


_TRI_NORMALS = [
    (np.cos(np.deg2rad(a)), np.sin(np.deg2rad(a))) for a in (90.0, -30.0, -150.0)
]


def _base_sdf(shape: str, qx: np.ndarray, qy: np.ndarray, size: float) -> np.ndarray:
    if shape == "disc":
        return np.hypot(qx, qy) - size
    if shape == "square":
        return np.maximum(np.abs(qx), np.abs(qy)) - size
    # up-pointing equilateral triangle, circumradius 1.15 * size
    r = 1.15 * size
    planes = [nx * qx + ny * qy - 0.5 * r for nx, ny in _TRI_NORMALS]
    return np.maximum.reduce(planes)


def _shape_sdf(spec: SceneSpec, t: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Signed distance (world px) to the shape boundary at time t."""
    cx, cy = _centroid_at(spec, t)
    px = x - cx
    py = y - cy
    if spec.family == "rotate":
        a = spec.omega * t
        ca, sa = np.cos(-a), np.sin(-a)
        qx = ca * px - sa * py
        qy = sa * px + ca * py
        return _base_sdf(spec.shape, qx, qy, spec.size)
    if spec.family == "scale":
        g = (1.0 + spec.scale_rate) ** t
        return _base_sdf(spec.shape, px / g, py / g, spec.size) * g
    return _base_sdf(spec.shape, px, py, spec.size)


def _speed_at(spec: SceneSpec, t: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Local speed field (px/frame) used for the motion-blur edge width."""
    cx, cy = _centroid_at(spec, t)
    if spec.family == "translate":
        return np.full_like(x, spec.magnitude)
    return spec.magnitude * np.hypot(x - cx, y - cy)


def _flow_at(spec: SceneSpec, t: float, x: np.ndarray, y: np.ndarray):
    cx, cy = _centroid_at(spec, t)
    if spec.family == "translate":
        vx, vy = spec.velocity
        return np.full_like(x, vx), np.full_like(y, vy)
    if spec.family == "rotate":
        w = spec.omega
        return -w * (y - cy), w * (x - cx)
    s = spec.scale_rate
    return s * (x - cx), s * (y - cy)


def analytic_flow(spec: SceneSpec, t: int) -> FlowField:
    """Closed-form flow for the frame t -> t+1 transition.

    Foreground pixels (shape interior at time t) carry the motion-program
    displacement; the background, including the landmark, is static.
    """
    if not 0 <= t <= HORIZON - 1:
        raise SceneSpecError(f"t={t} outside the sample horizon [0, {HORIZON - 1}]")
    x, y = _grid(spec.image_size)
    inside = _shape_sdf(spec, t, x, y) <= 0.0
    u, v = _flow_at(spec, t, x, y)
    return FlowField(u=np.where(inside, u, 0.0), v=np.where(inside, v, 0.0))


def shape_mask(spec: SceneSpec, t: float = 0.0) -> np.ndarray:
    x, y = _grid(spec.image_size)
    return _shape_sdf(spec, t, x, y) <= 0.0


# --------------------------------------------------------------------------
# rendering


def _sinusoid_field(rng: np.random.Generator, x, y, n, amp_range, wavelen_range):
    out = np.zeros_like(x)
    for _ in range(n):
        amp = rng.uniform(*amp_range)
        lam = rng.uniform(*wavelen_range)
        ang = rng.uniform(0.0, 2.0 * np.pi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        k = 2.0 * np.pi / lam
        out += amp * np.cos(k * (np.cos(ang) * x + np.sin(ang) * y) + phase)
    return out


def _background(spec: SceneSpec, x, y) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([spec.bg_seed, 11]))
    common = _sinusoid_field(rng, x, y, 4, (0.02, 0.045), (7.0, 16.0))
    img = np.empty(x.shape + (3,), dtype=np.float64)
    for c in range(3):
        chroma = _sinusoid_field(rng, x, y, 2, (0.008, 0.02), (9.0, 20.0))
        img[..., c] = 0.5 + common + chroma
    return img


def _local_coords(spec: SceneSpec, t: float, x, y):
    """Material coordinates: the point of the shape now under pixel (x, y)."""
    cx, cy = _centroid_at(spec, t)
    px = x - cx
    py = y - cy
    if spec.family == "rotate":
        a = spec.omega * t
        ca, sa = np.cos(-a), np.sin(-a)
        return ca * px - sa * py, sa * px + ca * py
    if spec.family == "scale":
        g = (1.0 + spec.scale_rate) ** t
        return px / g, py / g
    return px, py


def _logistic(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _disc_cov(x, y, cx, cy, r, width=_GLYPH_EDGE):
    return _logistic(-(np.hypot(x - cx, y - cy) - r) / width)


def render_frame(spec: SceneSpec, t: float) -> np.ndarray:
    """Render the scene at time t as float32 RGB in [0, 1].

    Deterministic in (spec, t) and class-blind given full parameters. The
    output is pre-quantized to 8-bit levels so in-memory frames match their
    PNG round trip exactly.
    """
    x, y = _grid(spec.image_size)
    img = _background(spec, x, y)

    # shape layer: fill + material-locked texture, speed-dependent edge width
    qx, qy = _local_coords(spec, t, x, y)
    trng = np.random.default_rng(np.random.SeedSequence([spec.texture_seed, 7]))
    tex = _sinusoid_field(trng, qx, qy, 4, (0.015, 0.035), (4.0, 9.0))
    sdf = _shape_sdf(spec, t, x, y)
    width = _EDGE_BASE + _EDGE_PER_SPEED * _speed_at(spec, t, x, y)
    cov = _logistic(-sdf / (width / 2.0))
    color = np.clip(np.asarray(spec.fill, dtype=np.float64) + tex[..., None], 0.0, 1.0)
    img = img * (1.0 - cov[..., None]) + color * cov[..., None]

    # landmark glyph (static scene fixture; never overlaps the shape)
    lx, ly = spec.landmark_xy
    _, glyph = _LANDMARK[spec.label]
    dark = _disc_cov(x, y, lx, ly, 2.7)
    img = img * (1.0 - dark[..., None]) + 0.06 * dark[..., None]
    if glyph == "dot":
        core = _disc_cov(x, y, lx, ly, 1.5)
        img = img * (1.0 - core[..., None]) + 0.95 * core[..., None]
    else:  # bullseye: bright annulus with a dark center
        ring = _disc_cov(x, y, lx, ly, 1.9) * (1.0 - _disc_cov(x, y, lx, ly, 0.8))
        img = img * (1.0 - ring[..., None]) + 0.95 * ring[..., None]

    img = np.clip(img, 0.0, 1.0)
    return (np.floor(img * 255.0 + 0.5) / 255.0).astype(np.float32)


# --------------------------------------------------------------------------
# samples and datasets


@dataclass
class SyntheticSample:
    sample_id: str
    split: str
    label: str
    label_index: int
    frame: np.ndarray  # (H, W, 3) float32 in [0, 1]
    mask: np.ndarray  # (H, W) bool, true exactly on shape pixels at t=0
    target_flow: FlowField  # mean of the 5 step flows
    spec: SceneSpec | None = None
    step_flows: list[FlowField] | None = None
    future_frames: np.ndarray | None = None  # (5, H, W, 3) float32


@dataclass(frozen=True)
class DatasetConfig:
    n_train: int = 2000
    n_val: int = 250
    n_test: int = 250
    image_size: int = 64
    classes: tuple[str, ...] = ALL_CLASSES

    def __post_init__(self):
        for name in ("n_train", "n_val", "n_test"):
            if getattr(self, name) < 1:
                raise SceneSpecError(f"{name} must be >= 1")
        if self.image_size < 32:
            raise SceneSpecError(f"image_size must be >= 32, got {self.image_size}")
        bad = [c for c in self.classes if c not in ALL_CLASSES]
        if bad:
            raise SceneSpecError(f"unknown classes: {bad}")
        object.__setattr__(self, "classes", tuple(self.classes))


@dataclass
class SyntheticDataset:
    seed: int
    config: DatasetConfig
    splits: dict[str, list[SyntheticSample]]

    @property
    def classes(self) -> tuple[str, ...]:
        return self.config.classes


def sample_scene_spec(rng: np.random.Generator, label: str, image_size: int = 64) -> SceneSpec:
    """Draw a feasible random scene for one class."""
    if label in ("rotate-cw", "rotate-ccw"):
        shape = rng.choice(["square", "triangle"])
        magnitude = float(rng.uniform(0.05, 0.13))
    elif label in ("expand", "contract"):
        shape = rng.choice(["disc", "square", "triangle"])
        magnitude = float(rng.uniform(0.045, 0.11))
    else:
        shape = rng.choice(["disc", "square", "triangle"])
        magnitude = float(rng.uniform(0.8, 2.4))
    size = float(rng.uniform(7.0, 11.0))
    rho = float(rng.uniform(26.0, 32.0))

    while True:
        fill = tuple(float(f) for f in rng.uniform(0.2, 0.9, size=3))
        lum = 0.299 * fill[0] + 0.587 * fill[1] + 0.114 * fill[2]
        if abs(lum - 0.5) >= 0.15:
            break

    probe = SceneSpec(
        image_size=image_size,
        label=label,
        shape=str(shape),
        size=size,
        cx=0.0,
        cy=0.0,
        magnitude=magnitude,
        landmark_distance=rho,
        fill=fill,
        texture_seed=int(rng.integers(2**31)),
        bg_seed=int(rng.integers(2**31)),
    )
    lo_x, hi_x, lo_y, hi_y = _feasible_box(probe)
    if lo_x > hi_x or lo_y > hi_y:
        raise SceneSpecError(f"no feasible position for {label} size={size:.2f} rho={rho:.2f}")
    cx = float(rng.uniform(lo_x, hi_x))
    cy = float(rng.uniform(lo_y, hi_y))
    spec = SceneSpec(**{**asdict(probe), "cx": cx, "cy": cy, "fill": fill})
    validate_spec(spec)
    return spec


def _feasible_box(spec: SceneSpec):
    s = spec.image_size
    lo_x, lo_y = 0.0, 0.0
    hi_x, hi_y = float(s - 1), float(s - 1)
    for t in range(HORIZON + 1):
        ext = _extent_at(spec, t) + _FRAME_PAD
        vx, vy = spec.velocity
        lo_x = max(lo_x, ext - vx * t)
        hi_x = min(hi_x, s - 1 - ext - vx * t)
        lo_y = max(lo_y, ext - vy * t)
        hi_y = min(hi_y, s - 1 - ext - vy * t)
    (bx, by), _ = _LANDMARK[spec.label]
    ox = bx * spec.landmark_distance
    oy = by * spec.landmark_distance
    lo_x = max(lo_x, _LANDMARK_PAD - ox)
    hi_x = min(hi_x, s - 1 - _LANDMARK_PAD - ox)
    lo_y = max(lo_y, _LANDMARK_PAD - oy)
    hi_y = min(hi_y, s - 1 - _LANDMARK_PAD - oy)
    return lo_x, hi_x, lo_y, hi_y


def mirror_spec(spec: SceneSpec) -> SceneSpec:
    """The horizontally mirrored scene; its class follows MIRROR_LABEL."""
    d = asdict(spec)
    d["cx"] = float(spec.image_size - 1) - spec.cx
    d["label"] = MIRROR_LABEL[spec.label]
    d["fill"] = tuple(d["fill"])
    return SceneSpec(**d)


def render_sample(
    spec: SceneSpec,
    sample_id: str = "sample",
    split: str = "none",
    include_steps: bool = False,
    include_future: bool = False,
) -> SyntheticSample:
    """Materialize a spec: frame, mask, averaged flow target, extras on demand."""
    steps = [analytic_flow(spec, t) for t in range(HORIZON)]
    target = average_flows(steps)
    future = None
    if include_future:
        future = np.stack([render_frame(spec, t) for t in range(1, HORIZON + 1)])
    classes = ALL_CLASSES
    return SyntheticSample(
        sample_id=sample_id,
        split=split,
        label=spec.label,
        label_index=classes.index(spec.label),
        frame=render_frame(spec, 0),
        mask=shape_mask(spec, 0.0),
        target_flow=target,
        spec=spec,
        step_flows=steps if include_steps else None,
        future_frames=future,
    )


def generate_dataset(seed: int, config: DatasetConfig = DatasetConfig()) -> SyntheticDataset:
    """Build class-balanced train/val/test splits, reproducible from seed.

    Sample i of a split gets class ``classes[i % len(classes)]``, so any
    remainder spreads over the first classes (histogram max-min <= 1).
    Each sample derives its own generator from (seed, split, index), which
    keeps parameters independent across splits and samples.
    """
    splits: dict[str, list[SyntheticSample]] = {}
    counts = {"train": config.n_train, "val": config.n_val, "test": config.n_test}
    for split_idx, (split, n) in enumerate(counts.items()):
        samples = []
        for i in range(n):
            rng = np.random.default_rng(np.random.SeedSequence([seed, split_idx, i]))
            label = config.classes[i % len(config.classes)]
            spec = sample_scene_spec(rng, label, config.image_size)
            samples.append(render_sample(spec, sample_id=f"{split}-{i:05d}", split=split))
        splits[split] = samples
    return SyntheticDataset(seed=seed, config=config, splits=splits)


# --------------------------------------------------------------------------
# disk layout: images/, flow/, masks/, manifest.jsonl, meta.json


def save_dataset(ds: SyntheticDataset, root: str | Path) -> Path:
    root = Path(root)
    for sub in ("images", "flow", "masks"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    records = []
    for split in ds.splits:
        for s in ds.splits[split]:
            frame_rel = f"images/{s.sample_id}.png"
            flow_rel = f"flow/{s.sample_id}.flo"
            mask_rel = f"masks/{s.sample_id}.png"
            save_image(s.frame, root / frame_rel)
            write_flo(s.target_flow, root / flow_rel)
            save_image(s.mask.astype(np.uint8) * 255, root / mask_rel)
            rec = {
                "id": s.sample_id,
                "split": split,
                "label": s.label,
                "frame": frame_rel,
                "flow": flow_rel,
                "mask": mask_rel,
            }
            if s.spec is not None:
                rec["spec"] = asdict(s.spec)
            records.append(rec)
    with open(root / "manifest.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    meta = {"seed": ds.seed, "config": asdict(ds.config), "classes": list(ds.classes)}
    (root / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return root


def load_dataset(root: str | Path) -> SyntheticDataset:
    root = Path(root)
    meta = json.loads((root / "meta.json").read_text())
    cfg_d = dict(meta["config"])
    cfg_d["classes"] = tuple(cfg_d["classes"])
    config = DatasetConfig(**cfg_d)
    splits: dict[str, list[SyntheticSample]] = {"train": [], "val": [], "test": []}
    with open(root / "manifest.jsonl") as fh:
        for line in fh:
            rec = json.loads(line)
            spec = None
            if "spec" in rec:
                sd = dict(rec["spec"])
                sd["fill"] = tuple(sd["fill"])
                spec = SceneSpec(**sd)
            mask_img = load_image(root / rec["mask"])
            splits[rec["split"]].append(
                SyntheticSample(
                    sample_id=rec["id"],
                    split=rec["split"],
                    label=rec["label"],
                    label_index=config.classes.index(rec["label"]),
                    frame=load_image(root / rec["frame"]),
                    mask=mask_img[..., 0] > 0.5,
                    target_flow=read_flo(root / rec["flow"]),
                    spec=spec,
                )
            )
    return SyntheticDataset(seed=meta["seed"], config=config, splits=splits)


def dataset_checksum(root: str | Path) -> str:
    """SHA-256 over every file (sorted by relative path); byte-level identity."""
    root = Path(root)
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(path.relative_to(root)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def frames_array(samples: list[SyntheticSample]) -> np.ndarray:
    return np.stack([s.frame for s in samples])


def labels_array(samples: list[SyntheticSample]) -> np.ndarray:
    return np.array([s.label_index for s in samples], dtype=np.int64)
