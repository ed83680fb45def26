"""Flow persistence and visualization.

Three surfaces:

* Middlebury ``.flo`` files: little-endian, float32 magic 202021.25
  ("PIEH"), int32 width, int32 height, then row-major interleaved (u, v)
  float32 pairs. Round trips are bit-exact.
* Quantized 8-bit flow images: direction channels mapped [-1, 1] -> [0, 255],
  magnitude mapped [0, m_max] -> [0, 255] with clamping; m_max travels in a
  JSON sidecar so the mapping stays invertible.
* Color-wheel renderings: hue from the flow angle, saturation from
  magnitude, zero flow white.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .encoding import EncodedFlow, FlowField

__all__ = [
    "FlowIOError",
    "read_flo",
    "write_flo",
    "QuantizedFlowImage",
    "quantize",
    "dequantize",
    "save_quantized",
    "load_quantized",
    "flow_to_color",
    "save_image",
    "load_image",
]

FLO_MAGIC = 202021.25


class FlowIOError(ValueError):
    """Malformed flow file or invalid quantization parameters."""


def write_flo(field: FlowField, path: str | Path) -> None:
    """Write a field as a .flo file (float32, little-endian)."""
    path = Path(path)
    h, w = field.height, field.width
    data = np.empty((h, w, 2), dtype="<f4")
    data[..., 0] = field.u
    data[..., 1] = field.v
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", w, h))
        fh.write(data.tobytes())


def read_flo(path: str | Path) -> FlowField:
    """Read a .flo file written by :func:`write_flo` (or any conforming tool)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12:
        raise FlowIOError(f"{path}: truncated header ({len(raw)} bytes, need 12)")
    (magic,) = struct.unpack_from("<f", raw, 0)
    if magic != FLO_MAGIC:
        raise FlowIOError(f"{path}: bad magic {magic!r}, expected {FLO_MAGIC}")
    w, h = struct.unpack_from("<ii", raw, 4)
    if w <= 0 or h <= 0:
        raise FlowIOError(f"{path}: non-positive dimensions {w}x{h}")
    expected = 12 + w * h * 8
    if len(raw) != expected:
        raise FlowIOError(
            f"{path}: truncated payload ({len(raw)} bytes, expected {expected} for {w}x{h})"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=12).reshape(h, w, 2)
    return FlowField(u=data[..., 0], v=data[..., 1])


@dataclass(frozen=True)
class QuantizedFlowImage:
    """8-bit snapshot of an encoded flow plus the magnitude normalizer."""

    channels: np.ndarray  # (H, W, 3) uint8
    m_max: float

    def __post_init__(self):
        ch = np.asarray(self.channels)
        if ch.ndim != 3 or ch.shape[2] != 3 or ch.dtype != np.uint8:
            raise FlowIOError(f"channels must be (H, W, 3) uint8, got {ch.shape} {ch.dtype}")
        if not (self.m_max > 0):
            raise FlowIOError(f"m_max must be > 0, got {self.m_max}")
        object.__setattr__(self, "channels", ch)

    @property
    def height(self) -> int:
        return self.channels.shape[0]

    @property
    def width(self) -> int:
        return self.channels.shape[1]


def _round_half_away(x: np.ndarray) -> np.ndarray:
    # numpy's round() is banker's rounding; half-away keeps the midpoint
    # case platform-independent (m_max/2 -> 128).
    return np.floor(x + 0.5)


def quantize(enc: EncodedFlow, m_max: float) -> QuantizedFlowImage:
    """Map an encoded flow to 8-bit: f1/f2 over [-1, 1], f3 over [0, m_max]."""
    if not (m_max > 0):
        raise FlowIOError(f"m_max must be > 0, got {m_max}")
    out = np.empty((enc.height, enc.width, 3), dtype=np.uint8)
    for i, chan in enumerate((enc.f1, enc.f2)):
        scaled = (np.clip(chan, -1.0, 1.0) + 1.0) / 2.0 * 255.0
        out[..., i] = _round_half_away(scaled).astype(np.uint8)
    scaled = np.clip(enc.f3 / m_max, 0.0, 1.0) * 255.0
    out[..., 2] = _round_half_away(scaled).astype(np.uint8)
    return QuantizedFlowImage(channels=out, m_max=float(m_max))


def dequantize(q: QuantizedFlowImage) -> EncodedFlow:
    """Invert :func:`quantize` up to half a quantization step per channel."""
    ch = q.channels.astype(np.float64)
    f1 = ch[..., 0] / 255.0 * 2.0 - 1.0
    f2 = ch[..., 1] / 255.0 * 2.0 - 1.0
    f3 = ch[..., 2] / 255.0 * q.m_max
    return EncodedFlow(f1=f1, f2=f2, f3=f3)


def save_quantized(q: QuantizedFlowImage, path: str | Path) -> None:
    """Write the 8-bit flow image as PNG plus a JSON sidecar holding m_max."""
    path = Path(path)
    Image.fromarray(q.channels, mode="RGB").save(path, format="PNG")
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps({"m_max": q.m_max}))


def load_quantized(path: str | Path) -> QuantizedFlowImage:
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    if not sidecar.exists():
        raise FlowIOError(f"missing sidecar {sidecar}")
    meta = json.loads(sidecar.read_text())
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)
    return QuantizedFlowImage(channels=arr, m_max=float(meta["m_max"]))


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorized HSV -> RGB, all components in [0, 1]."""
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    rgb = np.zeros(h.shape + (3,), dtype=np.float64)
    lut = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    for k, (r, g, b) in enumerate(lut):
        sel = i == k
        rgb[sel, 0] = r[sel]
        rgb[sel, 1] = g[sel]
        rgb[sel, 2] = b[sel]
    return rgb


def flow_to_color(field: FlowField, m_display: float) -> np.ndarray:
    """Render a field on the standard color wheel; returns (H, W, 3) uint8.

    Hue encodes atan2(v, u); saturation is min(magnitude / m_display, 1);
    value is fixed at 1, so zero flow is white.
    """
    if not (m_display > 0):
        raise FlowIOError(f"m_display must be > 0, got {m_display}")
    u = field.u.astype(np.float64)
    v = field.v.astype(np.float64)
    ang = np.arctan2(v, u)
    hue = (ang / (2.0 * np.pi)) % 1.0
    sat = np.clip(np.hypot(u, v) / m_display, 0.0, 1.0)
    val = np.ones_like(sat)
    rgb = _hsv_to_rgb(hue, sat, val)
    return _round_half_away(rgb * 255.0).astype(np.uint8)


def save_image(arr: np.ndarray, path: str | Path) -> None:
    """Write a float [0,1] or uint8 array as PNG (grayscale or RGB)."""
    a = np.asarray(arr)
    if a.dtype != np.uint8:
        a = _round_half_away(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(a).save(Path(path), format="PNG")


def load_image(path: str | Path) -> np.ndarray:
    """Read an image file to float32 RGB in [0, 1]."""
    img = Image.open(Path(path)).convert("RGB")
    return np.asarray(img, dtype=np.float32) / 255.0
