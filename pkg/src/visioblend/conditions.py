"""Training-triplet preparation: edge-based sketch extraction, contour-whitened
strokes, gray-pixel condition masking and manifest-driven dataset loading.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np
from scipy import ndimage

from .images import bilinear_resize, center_crop_square, ensure_image, load_png

log = logging.getLogger(__name__)

MASK_MODES = ("none", "drop_sketch", "drop_stroke", "drop_both", "partial")

DEFAULT_CANNY_LOW = 0.1
DEFAULT_CANNY_HIGH = 0.2

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)


@dataclass
class TrainingTriplet:
    image: np.ndarray   # (h, w, 3)
    sketch: np.ndarray  # (h, w, 1), two-valued {-1 edge, +1 background} pre-masking
    stroke: np.ndarray  # (h, w, 3)
    source_id: str = ""

    def __post_init__(self) -> None:
        ensure_image(self.image, channels=3, name="image")
        ensure_image(self.sketch, channels=1, name="sketch")
        ensure_image(self.stroke, channels=3, name="stroke")
        h, w = self.image.shape[:2]
        if self.sketch.shape[:2] != (h, w) or self.stroke.shape[:2] != (h, w):
            raise ValueError(f"triplet {self.source_id!r}: image/sketch/stroke spatial sizes differ")
        for name, buf in (("image", self.image), ("sketch", self.sketch), ("stroke", self.stroke)):
            if buf.min() < -1.0 or buf.max() > 1.0:
                raise ValueError(f"triplet {self.source_id!r}: {name} values outside [-1, 1]")
        # 0.0 is the gray fill written by masking; anything else means the
        # sketch was never binarized
        if not np.isin(np.unique(self.sketch), (-1.0, 0.0, 1.0)).all():
            raise ValueError(f"triplet {self.source_id!r}: sketch must be two-valued {{-1, +1}}")


@dataclass
class MaskSpec:
    mode: str = "none"
    partial_fraction: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in MASK_MODES:
            raise ValueError(f"unknown mask mode {self.mode!r}, expected one of {MASK_MODES}")
        if self.mode == "partial" and not 0.0 <= self.partial_fraction <= 1.0:
            raise ValueError(f"partial_fraction must be in [0, 1], got {self.partial_fraction}")


class ManifestError(Exception):
    pass


def _gaussian_kernel_5x5(sigma: float = 1.4) -> np.ndarray:
    ax = np.arange(-2, 3, dtype=np.float64)
    xx, yy = np.meshgrid(ax, ax)
    k = np.exp(-(xx**2 + yy**2) / (2.0 * sigma**2))
    return k / k.sum()


def _nms(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Suppress non-maxima along the quantized gradient direction.

    Ties are broken asymmetrically (>= forward, > backward) so a perfectly
    symmetric step edge keeps a single one-pixel-wide line.
    """
    h, w = mag.shape
    deg = (np.rad2deg(np.arctan2(gy, gx)) + 180.0) % 180.0
    # direction bins -> (di, dj) offsets along the gradient
    bins = [
        ((deg < 22.5) | (deg >= 157.5), (0, 1)),
        ((deg >= 22.5) & (deg < 67.5), (1, 1)),
        ((deg >= 67.5) & (deg < 112.5), (1, 0)),
        ((deg >= 112.5) & (deg < 157.5), (1, -1)),
    ]
    padded = np.pad(mag, 1, mode="constant")

    def shifted(di: int, dj: int) -> np.ndarray:
        return padded[1 + di : 1 + di + h, 1 + dj : 1 + dj + w]

    keep = np.zeros_like(mag, dtype=bool)
    for sel, (di, dj) in bins:
        fwd = shifted(di, dj)
        bwd = shifted(-di, -dj)
        keep |= sel & (mag >= fwd) & (mag > bwd)
    return np.where(keep, mag, 0.0)


def extract_sketch(
    image: np.ndarray,
    low_thresh: float = DEFAULT_CANNY_LOW,
    high_thresh: float = DEFAULT_CANNY_HIGH,
    fg_mask: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Edge-detect a model-space RGB image into a {-1 edge, +1 background} map.

    Pipeline: luma grayscale, 5x5 Gaussian blur (sigma 1.4), Sobel gradients,
    non-maximum suppression, then double-threshold hysteresis on the gradient
    magnitude normalized to [0, 1].  Pixels outside fg_mask (when given) are
    forced to background.
    """
    ensure_image(image, channels=3, name="image")
    if not 0.0 <= low_thresh < high_thresh:
        raise ValueError(f"thresholds must satisfy 0 <= low < high, got ({low_thresh}, {high_thresh})")
    h, w = image.shape[:2]
    if fg_mask is not None:
        mask2d = np.asarray(fg_mask)
        if mask2d.ndim == 3:
            mask2d = mask2d[:, :, 0]
        if mask2d.shape != (h, w):
            raise ValueError(f"fg_mask shape {mask2d.shape} != image spatial size {(h, w)}")

    img = image.astype(np.float64)
    gray = 0.299 * img[:, :, 0] + 0.587 * img[:, :, 1] + 0.114 * img[:, :, 2]
    blurred = ndimage.convolve(gray, _gaussian_kernel_5x5(), mode="nearest")
    gx = ndimage.correlate(blurred, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(blurred, _SOBEL_Y, mode="nearest")
    mag = np.hypot(gx, gy)

    peak = mag.max()
    # a constant field leaves only rounding noise (~1e-16); don't normalize by it
    if peak <= 1e-8:
        edges = np.zeros((h, w), dtype=bool)
    else:
        norm = mag / peak
        thin = _nms(norm, gx, gy)
        strong = thin >= high_thresh
        weak = thin >= low_thresh
        labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
        strong_labels = np.unique(labels[strong])
        edges = np.isin(labels, strong_labels[strong_labels > 0])

    if fg_mask is not None:
        edges &= mask2d > 0.5
    return np.where(edges, -1.0, 1.0).astype(np.float32)[:, :, None]


def extract_strokes(image: np.ndarray, sketch: np.ndarray) -> np.ndarray:
    """Copy of the image with every sketch edge pixel painted white."""
    ensure_image(image, channels=3, name="image")
    ensure_image(sketch, channels=1, name="sketch")
    if image.shape[:2] != sketch.shape[:2]:
        raise ValueError(f"shape mismatch: image {image.shape[:2]} vs sketch {sketch.shape[:2]}")
    out = image.copy()
    out[sketch[:, :, 0] < 0] = 1.0
    return out


def _partial_rectangle(h: int, w: int, fraction: float, seed: int) -> tuple[int, int, int, int]:
    """Seeded axis-aligned rectangle (top, left, height, width) covering ~fraction of the area."""
    rng = np.random.default_rng(seed)
    side = np.sqrt(fraction)
    rh = min(h, int(round(h * side)))
    rw = min(w, int(round(w * side)))
    top = int(rng.integers(0, h - rh + 1))
    left = int(rng.integers(0, w - rw + 1))
    return top, left, rh, rw


def mask_condition(triplet: TrainingTriplet, spec: MaskSpec) -> TrainingTriplet:
    """Gray out condition content per the mask spec; the image is never touched."""
    sketch = triplet.sketch.copy()
    stroke = triplet.stroke.copy()
    if spec.mode == "drop_sketch":
        sketch[:] = 0.0
    elif spec.mode == "drop_stroke":
        stroke[:] = 0.0
    elif spec.mode == "drop_both":
        sketch[:] = 0.0
        stroke[:] = 0.0
    elif spec.mode == "partial":
        h, w = sketch.shape[:2]
        top, left, rh, rw = _partial_rectangle(h, w, spec.partial_fraction, spec.rng_seed)
        sketch[top : top + rh, left : left + rw] = 0.0
        stroke[top : top + rh, left : left + rw] = 0.0
    return replace(triplet, sketch=sketch, stroke=stroke)


def read_manifest(manifest_path) -> list[dict]:
    """Parse a JSON-lines manifest; any malformed line is fatal."""
    path = Path(manifest_path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"{path}:{lineno}: invalid JSON: {e}") from e
            if not isinstance(rec, dict) or "image" not in rec or "id" not in rec:
                raise ManifestError(f"{path}:{lineno}: record must be an object with 'image' and 'id'")
            records.append(rec)
    return records


def _load_resized(path: Path, target: tuple[int, int], channels: int) -> np.ndarray:
    img = load_png(path, channels=channels)
    img = center_crop_square(img)
    return bilinear_resize(img, target[0], target[1])


def load_dataset(
    manifest_path,
    target_size: tuple[int, int],
    seed: Optional[int] = None,
    on_error: Optional[Callable[[str, Exception], None]] = None,
) -> Iterator[TrainingTriplet]:
    """Stream training triplets described by a JSON-lines manifest.

    Records: {"image": path, "sketch": path?, "stroke": path?, "fg_mask": path?,
    "id": str, "low": float?, "high": float?}.  Paths are resolved relative to
    the manifest.  Missing sketches/strokes are synthesized from the image.
    Per-record load failures invoke `on_error(source_id, exc)` (default: log a
    warning) and the stream continues.  Order is the manifest order, or a
    seeded permutation when `seed` is given.
    """
    base = Path(manifest_path).parent
    records = read_manifest(manifest_path)
    order = np.arange(len(records))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(records))

    for idx in order:
        rec = records[int(idx)]
        source_id = str(rec["id"])
        try:
            image = _load_resized(base / rec["image"], target_size, channels=3)
            fg_mask = None
            if rec.get("fg_mask"):
                fg_mask = _load_resized(base / rec["fg_mask"], target_size, channels=1)[:, :, 0] > 0.0
            if rec.get("sketch"):
                raw = _load_resized(base / rec["sketch"], target_size, channels=1)
                sketch = np.where(raw < 0.0, -1.0, 1.0).astype(np.float32)
            else:
                low = float(rec.get("low", DEFAULT_CANNY_LOW))
                high = float(rec.get("high", DEFAULT_CANNY_HIGH))
                sketch = extract_sketch(image, low, high, fg_mask=fg_mask)
            if rec.get("stroke"):
                stroke = _load_resized(base / rec["stroke"], target_size, channels=3)
            else:
                stroke = extract_strokes(image, sketch)
        except ManifestError:
            raise
        except Exception as e:  # per-record failure: report and keep streaming
            if on_error is not None:
                on_error(source_id, e)
            else:
                log.warning("skipping record %s: %s", source_id, e)
            continue
        yield TrainingTriplet(image=image, sketch=sketch, stroke=stroke, source_id=source_id)
