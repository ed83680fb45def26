"""Reversible 3-channel motion encoding and flow-field utilities.

A dense displacement field (u, v) is stored as a :class:`FlowField`. For
learning, flow is re-expressed as a :class:`EncodedFlow` with channels
(sin of the motion angle, cos of the motion angle, magnitude). Direction
channels are computed directly as v/M and u/M, so no angle arithmetic (and
no branch cut) is ever involved.

Coordinate convention, fixed once for the whole package: row 0 is the top
of the image, x grows rightward, y grows downward. Positive u moves a
pixel right, positive v moves it down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FlowField",
    "EncodedFlow",
    "MotionThresholds",
    "DEFAULT_THRESHOLDS",
    "encode_flow",
    "decode_flow",
    "average_flows",
    "flip_horizontal",
    "flip_encoded",
    "motion_potential",
]


class FlowError(ValueError):
    """Invalid flow data (bad shape, non-finite values, mismatched sizes)."""


def _check_finite(name: str, arr: np.ndarray) -> None:
    bad = ~np.isfinite(arr)
    if bad.any():
        y, x = np.argwhere(bad)[0]
        raise FlowError(f"non-finite value in {name} at pixel (x={x}, y={y}): {arr[y, x]!r}")


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement in pixels/frame; u rightward, v downward."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float32)
        v = np.asarray(self.v, dtype=np.float32)
        if u.ndim != 2 or u.shape != v.shape:
            raise FlowError(f"u/v must be equal-shaped 2-D arrays, got {u.shape} and {v.shape}")
        if u.shape[0] < 1 or u.shape[1] < 1:
            raise FlowError(f"flow field must be at least 1x1, got {u.shape}")
        _check_finite("u", u)
        _check_finite("v", v)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    def magnitude(self) -> np.ndarray:
        """Per-pixel speed sqrt(u^2 + v^2), computed in float64."""
        return np.hypot(self.u.astype(np.float64), self.v.astype(np.float64))


@dataclass(frozen=True)
class EncodedFlow:
    """3-channel motion image: f1 = sin(angle), f2 = cos(angle), f3 = magnitude.

    f1/f2 are zero wherever the source field was at or below the static
    threshold; f3 is always the raw magnitude. Channels produced by a
    network need not be exactly unit-norm; :func:`decode_flow` projects
    them back onto the unit circle.
    """

    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray

    def __post_init__(self):
        arrs = []
        for name in ("f1", "f2", "f3"):
            a = np.asarray(getattr(self, name))
            if not np.issubdtype(a.dtype, np.floating):
                a = a.astype(np.float64)
            if a.ndim != 2:
                raise FlowError(f"{name} must be 2-D, got shape {a.shape}")
            _check_finite(name, a)
            arrs.append(a)
        if not (arrs[0].shape == arrs[1].shape == arrs[2].shape):
            raise FlowError(f"channel shapes differ: {[a.shape for a in arrs]}")
        if arrs[0].shape[0] < 1 or arrs[0].shape[1] < 1:
            raise FlowError(f"encoded flow must be at least 1x1, got {arrs[0].shape}")
        if (arrs[2] < 0).any():
            y, x = np.argwhere(arrs[2] < 0)[0]
            raise FlowError(f"negative magnitude at pixel (x={x}, y={y}): {arrs[2][y, x]}")
        for name, a in zip(("f1", "f2", "f3"), arrs):
            object.__setattr__(self, name, a)

    @property
    def height(self) -> int:
        return self.f1.shape[0]

    @property
    def width(self) -> int:
        return self.f1.shape[1]

    def as_array(self) -> np.ndarray:
        """Stack channels into an (H, W, 3) array."""
        return np.stack([self.f1, self.f2, self.f3], axis=-1)


@dataclass(frozen=True)
class MotionThresholds:
    """Magnitude floor (pixels/frame) below which a pixel counts as static."""

    eps_motion: float = 1e-3

    def __post_init__(self):
        if not (self.eps_motion > 0):
            raise FlowError(f"eps_motion must be > 0, got {self.eps_motion}")


DEFAULT_THRESHOLDS = MotionThresholds()

# Norm floor under which decoded direction channels are treated as "no
# direction" and the pixel decodes to zero displacement.
_DECODE_NORM_FLOOR = 1e-6


def encode_flow(field: FlowField, thresholds: MotionThresholds = DEFAULT_THRESHOLDS) -> EncodedFlow:
    """Encode a displacement field into the 3-channel motion image.

    f3 = sqrt(u^2 + v^2); where f3 exceeds the static threshold,
    f1 = v/f3 and f2 = u/f3; elsewhere f1 = f2 = 0 while f3 keeps its
    computed (tiny) value. Math runs in float64 so the round trip through
    :func:`decode_flow` is exact to well below 1e-6.
    """
    u = field.u.astype(np.float64)
    v = field.v.astype(np.float64)
    mag = np.hypot(u, v)
    moving = mag > thresholds.eps_motion
    safe = np.where(moving, mag, 1.0)
    f1 = np.where(moving, v / safe, 0.0)
    f2 = np.where(moving, u / safe, 0.0)
    return EncodedFlow(f1=f1, f2=f2, f3=mag)


def decode_flow(enc: EncodedFlow) -> FlowField:
    """Invert :func:`encode_flow`, tolerating non-unit direction channels.

    (f1, f2) is renormalized to unit length wherever its norm exceeds
    1e-6; below that there is no usable direction and the pixel decodes
    to (0, 0). Then u = f2 * f3 and v = f1 * f3.
    """
    f1 = enc.f1.astype(np.float64)
    f2 = enc.f2.astype(np.float64)
    f3 = enc.f3.astype(np.float64)
    norm = np.hypot(f1, f2)
    usable = norm > _DECODE_NORM_FLOOR
    safe = np.where(usable, norm, 1.0)
    u = np.where(usable, (f2 / safe) * f3, 0.0)
    v = np.where(usable, (f1 / safe) * f3, 0.0)
    return FlowField(u=u, v=v)


def average_flows(fields: list[FlowField] | tuple[FlowField, ...]) -> FlowField:
    """Per-pixel arithmetic mean of one or more equally sized fields."""
    if len(fields) == 0:
        raise FlowError("average_flows needs at least one field")
    shape = (fields[0].height, fields[0].width)
    for i, f in enumerate(fields):
        if (f.height, f.width) != shape:
            raise FlowError(
                f"field {i} has shape {(f.height, f.width)}, expected {shape}"
            )
    u = np.mean([f.u.astype(np.float64) for f in fields], axis=0)
    v = np.mean([f.v.astype(np.float64) for f in fields], axis=0)
    return FlowField(u=u, v=v)


def flip_horizontal(field: FlowField) -> FlowField:
    """Mirror columns and negate u; the flow of a mirrored scene."""
    return FlowField(u=-field.u[:, ::-1], v=field.v[:, ::-1])


def flip_encoded(enc: EncodedFlow) -> EncodedFlow:
    """Column-mirror an encoded flow, negating the horizontal channel f2.

    Equivalent to encode(flip_horizontal(decode(enc))) for exact
    encodings, but works directly in the encoded space so training
    augmentation never needs a decode step.
    """
    return EncodedFlow(f1=enc.f1[:, ::-1], f2=-enc.f2[:, ::-1], f3=enc.f3[:, ::-1])


# Foreground-area floor for motion potential; keeps the score finite on
# empty masks.
EPS_AREA = 0.01


def motion_potential(enc: EncodedFlow, fg_mask: np.ndarray) -> float:
    """Mean flow magnitude normalized by foreground area.

    score = mean(f3 over all pixels) / max(foreground fraction, 0.01).
    An all-false mask is scored with the area floor rather than rejected.
    """
    mask = np.asarray(fg_mask, dtype=bool)
    if mask.shape != (enc.height, enc.width):
        raise FlowError(
            f"mask shape {mask.shape} does not match flow {(enc.height, enc.width)}"
        )
    mean_mag = float(np.mean(enc.f3.astype(np.float64)))
    fg_fraction = float(mask.sum()) / mask.size
    return mean_mag / max(fg_fraction, EPS_AREA)
