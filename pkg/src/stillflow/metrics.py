"""Flow-prediction evaluation: EPE, direction/orientation similarity, masks.

Metrics are computed per image over a pixel mask and then averaged over
images (per-image-then-mean), so no single image dominates. Three mask
kinds are supported: every pixel, Canny edge pixels of the input image,
and a provided foreground mask.

Zero-vector convention (the similarity metrics are otherwise 0/0):
ground-truth pixels at or below ``eps_eval`` magnitude are excluded from
DS/OS; where the ground truth moves but the prediction is static, the
pixel scores 0. Images with no evaluated pixels are excluded from the
aggregate for that metric and reported as such.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy import ndimage

from .encoding import FlowField

__all__ = [
    "MetricsError",
    "MaskSpec",
    "MaskAggregate",
    "MetricsReport",
    "epe",
    "direction_similarity",
    "orientation_similarity",
    "canny_mask",
    "evaluate",
]

DEFAULT_EPS_EVAL = 1e-3


class MetricsError(ValueError):
    """Raised when a metric has no pixels to evaluate or inputs mismatch."""


@dataclass(frozen=True)
class MaskSpec:
    """Which pixels a metric runs over.

    kind "all" evaluates every pixel, "canny" the edge pixels of the image
    (detector parameters below), "fg" the sample's foreground mask.
    """

    kind: str = "all"
    sigma: float = 1.4
    low: float = 0.1
    high: float = 0.25

    def __post_init__(self):
        if self.kind not in ("all", "canny", "fg"):
            raise MetricsError(f"unknown mask kind {self.kind!r}")
        if not (0 < self.low < self.high):
            raise MetricsError(f"need 0 < low < high, got low={self.low} high={self.high}")


def _check_pair(pred: FlowField, gt: FlowField, mask: np.ndarray) -> np.ndarray:
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise MetricsError(
            f"pred {(pred.height, pred.width)} and gt {(gt.height, gt.width)} sizes differ"
        )
    m = np.asarray(mask, dtype=bool)
    if m.shape != (gt.height, gt.width):
        raise MetricsError(f"mask shape {m.shape} does not match fields")
    return m


def epe(pred: FlowField, gt: FlowField, mask: np.ndarray) -> float:
    """Mean end-point error over masked pixels."""
    m = _check_pair(pred, gt, mask)
    if not m.any():
        raise MetricsError("no evaluated pixels: mask is empty")
    du = pred.u.astype(np.float64) - gt.u.astype(np.float64)
    dv = pred.v.astype(np.float64) - gt.v.astype(np.float64)
    return float(np.hypot(du, dv)[m].mean())


def _cosines(pred: FlowField, gt: FlowField, mask: np.ndarray, eps_eval: float):
    m = _check_pair(pred, gt, mask)
    gu = gt.u.astype(np.float64)
    gv = gt.v.astype(np.float64)
    pu = pred.u.astype(np.float64)
    pv = pred.v.astype(np.float64)
    gm = np.hypot(gu, gv)
    pm = np.hypot(pu, pv)
    evaluated = m & (gm > eps_eval)
    if not evaluated.any():
        raise MetricsError("no evaluated pixels: all masked ground truth is static")
    denom = np.where((pm > eps_eval) & evaluated, pm * gm, 1.0)
    cos = np.where(
        (pm > eps_eval) & evaluated,
        (pu * gu + pv * gv) / denom,
        0.0,
    )
    # guard against float drift just past +-1
    return np.clip(cos[evaluated], -1.0, 1.0)


def direction_similarity(
    pred: FlowField, gt: FlowField, mask: np.ndarray, eps_eval: float = DEFAULT_EPS_EVAL
) -> float:
    """Mean cosine of the angle between prediction and ground truth."""
    return float(_cosines(pred, gt, mask, eps_eval).mean())


def orientation_similarity(
    pred: FlowField, gt: FlowField, mask: np.ndarray, eps_eval: float = DEFAULT_EPS_EVAL
) -> float:
    """Mean absolute cosine: like DS but sign-blind, in [0, 1]."""
    return float(np.abs(_cosines(pred, gt, mask, eps_eval)).mean())


def _to_gray(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114
    if img.ndim != 2:
        raise MetricsError(f"cannot convert shape {image.shape} to grayscale")
    return img


def canny_mask(image: np.ndarray, spec: MaskSpec = MaskSpec(kind="canny")) -> np.ndarray:
    """Canny edge detector: blur, central-difference gradients, non-maximum
    suppression along the quantized gradient direction, then double-threshold
    hysteresis (thresholds are fractions of the max gradient magnitude).
    """
    gray = _to_gray(image)
    smooth = ndimage.gaussian_filter(gray, sigma=spec.sigma, mode="nearest")
    gy, gx = np.gradient(smooth)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 0:
        return np.zeros_like(mag, dtype=bool)

    # quantize direction to 4 sectors and keep local maxima along it
    ang = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    sector = np.zeros(ang.shape, dtype=np.uint8)
    sector[(ang >= 22.5) & (ang < 67.5)] = 1
    sector[(ang >= 67.5) & (ang < 112.5)] = 2
    sector[(ang >= 112.5) & (ang < 157.5)] = 3
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    padded = np.pad(mag, 1, mode="constant")
    nms = np.zeros_like(mag)
    for s, (dy, dx) in offsets.items():
        sel = sector == s
        fwd = padded[1 + dy : 1 + dy + mag.shape[0], 1 + dx : 1 + dx + mag.shape[1]]
        bwd = padded[1 - dy : 1 - dy + mag.shape[0], 1 - dx : 1 - dx + mag.shape[1]]
        keep = sel & (mag >= fwd) & (mag >= bwd)
        nms[keep] = mag[keep]

    strong = nms >= spec.high * peak
    weak = nms >= spec.low * peak
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return np.zeros_like(weak)
    keep_ids = np.unique(labels[strong])
    keep_ids = keep_ids[keep_ids > 0]
    return np.isin(labels, keep_ids)


@dataclass
class MaskAggregate:
    """Per-mask-kind means plus how much data fed them."""

    epe: float
    ds: float
    os: float
    pixels: int
    images_epe: int
    images_ds: int


@dataclass
class MetricsReport:
    per_mask: dict[str, MaskAggregate]
    rows: list[dict]
    failures: list[dict] = dataclass_field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "aggregates": {
                kind: {
                    "epe": agg.epe,
                    "ds": agg.ds,
                    "os": agg.os,
                    "pixels": agg.pixels,
                    "images_epe": agg.images_epe,
                    "images_ds": agg.images_ds,
                }
                for kind, agg in self.per_mask.items()
            },
            "rows": self.rows,
            "failures": self.failures,
        }

    def format_table(self) -> str:
        kinds = list(self.per_mask)
        header = ["metric"] + kinds
        lines = ["  ".join(f"{h:>12}" for h in header)]
        for metric in ("epe", "ds", "os"):
            cells = [f"{metric:>12}"]
            for kind in kinds:
                cells.append(f"{getattr(self.per_mask[kind], metric):>12.4f}")
            lines.append("  ".join(cells))
        cells = [f"{'pixels':>12}"] + [f"{self.per_mask[k].pixels:>12d}" for k in kinds]
        lines.append("  ".join(cells))
        if self.failures:
            lines.append(f"(+ {len(self.failures)} predictor failures excluded)")
        return "\n".join(lines)


def _sample_mask(sample, spec: MaskSpec) -> np.ndarray:
    if spec.kind == "all":
        return np.ones(sample.frame.shape[:2], dtype=bool)
    if spec.kind == "canny":
        return canny_mask(sample.frame, spec)
    return np.asarray(sample.mask, dtype=bool)


def evaluate(
    predictor,
    samples,
    mask_specs: list[MaskSpec] | None = None,
    eps_eval: float = DEFAULT_EPS_EVAL,
) -> MetricsReport:
    """Run ``predictor`` (image -> FlowField) over samples and aggregate.

    Samples need ``frame``, ``target_flow``, ``mask`` and ``sample_id``
    attributes (see the synth module). Predictor failures are recorded per
    image and excluded from the means.
    """
    if mask_specs is None:
        mask_specs = [MaskSpec(kind="all"), MaskSpec(kind="canny"), MaskSpec(kind="fg")]
    rows: list[dict] = []
    failures: list[dict] = []
    for sample in samples:
        try:
            pred = predictor(sample.frame)
        except Exception as exc:  # predictor is caller code; record, keep going
            failures.append({"id": sample.sample_id, "error": f"{type(exc).__name__}: {exc}"})
            continue
        row: dict = {"id": sample.sample_id}
        gt = sample.target_flow
        for spec in mask_specs:
            mask = _sample_mask(sample, spec)
            entry: dict = {"pixels": int(mask.sum())}
            try:
                entry["epe"] = epe(pred, gt, mask)
            except MetricsError:
                entry["epe"] = None
            try:
                entry["ds"] = direction_similarity(pred, gt, mask, eps_eval)
                entry["os"] = orientation_similarity(pred, gt, mask, eps_eval)
            except MetricsError:
                entry["ds"] = None
                entry["os"] = None
            row[spec.kind] = entry
        rows.append(row)

    per_mask: dict[str, MaskAggregate] = {}
    for spec in mask_specs:
        epes = [r[spec.kind]["epe"] for r in rows if r[spec.kind]["epe"] is not None]
        dss = [r[spec.kind]["ds"] for r in rows if r[spec.kind]["ds"] is not None]
        oss = [r[spec.kind]["os"] for r in rows if r[spec.kind]["os"] is not None]
        pixels = sum(r[spec.kind]["pixels"] for r in rows)
        per_mask[spec.kind] = MaskAggregate(
            epe=float(np.mean(epes)) if epes else float("nan"),
            ds=float(np.mean(dss)) if dss else float("nan"),
            os=float(np.mean(oss)) if oss else float("nan"),
            pixels=pixels,
            images_epe=len(epes),
            images_ds=len(dss),
        )
    return MetricsReport(per_mask=per_mask, rows=rows, failures=failures)
