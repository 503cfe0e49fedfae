"""Pixel buffers, PNG I/O and the display <-> model value mapping.

Images are numpy float32 arrays of shape (h, w, c) with values in the
model range [-1, 1].  Display space is 8-bit [0, 255]; the two are linked
by  model = display / 127.5 - 1  and  display = round((model + 1) * 127.5)
with ties rounded half away from zero.  Quantization happens exactly once,
when encoding to PNG.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

VALID_CHANNELS = (1, 3, 7)


def ensure_image(img: np.ndarray, channels: int | None = None, name: str = "image") -> np.ndarray:
    """Validate an image buffer: 3-D, finite, known channel count."""
    if not isinstance(img, np.ndarray) or img.ndim != 3:
        raise ValueError(f"{name} must be an (h, w, c) array, got {getattr(img, 'shape', type(img))}")
    c = img.shape[2]
    if channels is not None:
        if c != channels:
            raise ValueError(f"{name} must have {channels} channels, got {c}")
    elif c not in VALID_CHANNELS:
        raise ValueError(f"{name} has unsupported channel count {c} (expected one of {VALID_CHANNELS})")
    if not np.isfinite(img).all():
        raise ValueError(f"{name} contains NaN or Inf values")
    return img


def ensure_same_shape(a: np.ndarray, b: np.ndarray, a_name: str = "a", b_name: str = "b") -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a_name} {a.shape} vs {b_name} {b.shape}")


def to_display(img: np.ndarray) -> np.ndarray:
    """Map model-space [-1, 1] to uint8 [0, 255], rounding half away from zero."""
    v = (np.clip(np.asarray(img, dtype=np.float64), -1.0, 1.0) + 1.0) * 127.5
    # values are non-negative, so half-away-from-zero == floor(v + 0.5)
    return np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8)


def to_model(display: np.ndarray) -> np.ndarray:
    """Map uint8 display values to model space [-1, 1]."""
    return (np.asarray(display, dtype=np.float32) / np.float32(127.5)) - np.float32(1.0)


def encode_png(img: np.ndarray) -> bytes:
    """Encode a model-space (h, w, 1|3) buffer to PNG bytes."""
    ensure_image(img)
    disp = to_display(img)
    if img.shape[2] == 1:
        pil = Image.fromarray(disp[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(disp, mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes, channels: int = 3) -> np.ndarray:
    """Decode PNG bytes to a model-space buffer with the requested channel count."""
    pil = Image.open(io.BytesIO(data))
    pil = pil.convert("L" if channels == 1 else "RGB")
    arr = np.asarray(pil)
    if channels == 1:
        arr = arr[:, :, None]
    return to_model(arr)


def save_png(img: np.ndarray, path) -> None:
    with open(path, "wb") as f:
        f.write(encode_png(img))


def load_png(path, channels: int = 3) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_png(f.read(), channels=channels)


def center_crop_square(img: np.ndarray) -> np.ndarray:
    """Crop the longer axis symmetrically so height == width."""
    h, w = img.shape[:2]
    s = min(h, w)
    top = (h - s) // 2
    left = (w - s) // 2
    return img[top : top + s, left : left + s]


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize (h, w, c) with bilinear interpolation at half-pixel centers.

    Edge samples clamp to the border; the map is linear in the pixel values.
    """
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()

    def axis_weights(n_in: int, n_out: int):
        src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        i0 = np.floor(src).astype(np.int64)
        frac = src - i0
        lo = np.clip(i0, 0, n_in - 1)
        hi = np.clip(i0 + 1, 0, n_in - 1)
        return lo, hi, frac

    y0, y1, fy = axis_weights(h, out_h)
    x0, x1, fx = axis_weights(w, out_w)

    rows = img[y0] * (1.0 - fy)[:, None, None] + img[y1] * fy[:, None, None]
    out = rows[:, x0] * (1.0 - fx)[None, :, None] + rows[:, x1] * fx[None, :, None]
    return out.astype(img.dtype, copy=False)
