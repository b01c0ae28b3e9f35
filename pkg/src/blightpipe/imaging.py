"""Image preprocessing: resize and per-channel histogram equalization.

All operations are pure functions on 8-bit images and are bit-reproducible:
interpolation samples source pixel centers, and every quantization uses
round-half-away-from-zero so independent implementations agree exactly.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, PngImagePlugin

from .errors import ChannelError, DimensionError

LEVELS = 256


@dataclass(frozen=True)
class RasterImage:
    """8-bit raster image, row-major interleaved, 1 or 3 channels.

    ``data`` has shape (height, width, channels), dtype uint8.
    """

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.dtype != np.uint8:
            raise DimensionError("image data must be uint8 with shape (h, w, c)")
        h, w, c = self.data.shape
        if h <= 0 or w <= 0:
            raise DimensionError("image has a zero dimension")
        if c not in (1, 3):
            raise ChannelError(f"channel count must be 1 or 3, got {c}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class HistogramTable:
    """Per-level pixel counts and the normalized cumulative distribution."""

    counts: np.ndarray
    cdf: np.ndarray


def round_half_away(values: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero (inputs here are >= 0)."""
    return np.floor(values + 0.5)


def histogram_table(plane: np.ndarray) -> HistogramTable:
    """Counts and CDF of one 8-bit plane; cdf[r] = P(intensity <= r)."""
    plane = np.asarray(plane)
    if plane.size == 0:
        raise DimensionError("cannot build a histogram of an empty plane")
    counts = np.bincount(plane.ravel().astype(np.int64), minlength=LEVELS)
    cdf = np.cumsum(counts, dtype=np.float64) / plane.size
    return HistogramTable(counts=counts, cdf=cdf)


def equalize_channel(plane: np.ndarray) -> np.ndarray:
    """Map each pixel to round((L-1) * cdf(pixel)); monotone in intensity."""
    table = histogram_table(plane)
    lut = round_half_away((LEVELS - 1) * table.cdf)
    lut = np.clip(lut, 0, LEVELS - 1).astype(np.uint8)
    return lut[plane]


def equalize_rgb(img: RasterImage) -> RasterImage:
    """Equalize R, G and B planes independently."""
    if img.channels != 3:
        raise ChannelError(f"equalize_rgb needs 3 channels, got {img.channels}")
    out = np.empty_like(img.data)
    for c in range(3):
        out[:, :, c] = equalize_channel(img.data[:, :, c])
    return RasterImage(out)


def equalize(img: RasterImage) -> RasterImage:
    """Per-channel equalization for either gray or RGB images."""
    if img.channels == 1:
        return RasterImage(equalize_channel(img.data[:, :, 0])[:, :, None])
    return equalize_rgb(img)


def _axis_coords(target: int, source: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Target pixel center (i + 0.5) maps to source center coordinates;
    # samples outside the source grid clamp to the edge pixel.
    centers = (np.arange(target, dtype=np.float64) + 0.5) * (source / target) - 0.5
    lo = np.floor(centers)
    frac = centers - lo
    i0 = np.clip(lo, 0, source - 1).astype(np.intp)
    i1 = np.clip(lo + 1, 0, source - 1).astype(np.intp)
    return i0, i1, frac


def resize(img: RasterImage, target_w: int, target_h: int) -> RasterImage:
    """Bilinear resize over source pixel centers.

    An identity resize returns a bit-identical copy. Outputs are rounded
    half-away-from-zero and clamped to [0, 255].
    """
    if target_w <= 0 or target_h <= 0:
        raise DimensionError(f"target size {target_w}x{target_h} is not positive")
    if target_w == img.width and target_h == img.height:
        return RasterImage(img.data.copy())

    x0, x1, fx = _axis_coords(target_w, img.width)
    y0, y1, fy = _axis_coords(target_h, img.height)
    src = img.data.astype(np.float64)

    fx = fx[None, :, None]
    row0, row1 = src[y0], src[y1]
    top = row0[:, x0] * (1.0 - fx) + row0[:, x1] * fx
    bot = row1[:, x0] * (1.0 - fx) + row1[:, x1] * fx
    out = top * (1.0 - fy)[:, None, None] + bot * fy[:, None, None]

    out = np.clip(round_half_away(out), 0, 255).astype(np.uint8)
    return RasterImage(out)


def load_image(path) -> RasterImage:
    """Read a PNG or JPEG file as RGB (or grayscale) uint8."""
    with Image.open(path) as im:
        if im.mode in ("L", "I;16"):
            im = im.convert("L")
            data = np.asarray(im, dtype=np.uint8)[:, :, None]
        else:
            im = im.convert("RGB")
            data = np.asarray(im, dtype=np.uint8)
    return RasterImage(np.ascontiguousarray(data))


def save_png(img: RasterImage, path, metadata: dict | None = None) -> None:
    """Write a PNG; optional metadata becomes deterministic tEXt chunks."""
    arr = img.data[:, :, 0] if img.channels == 1 else img.data
    pil = Image.fromarray(arr)
    info = PngImagePlugin.PngInfo()
    for key in sorted(metadata or {}):
        info.add_text(key, str(metadata[key]))
    pil.save(path, format="PNG", pnginfo=info)


def preprocess_tree(
    src_root,
    dst_root,
    size: tuple[int, int] = (300, 300),
    do_equalize: bool = True,
    metadata: dict | None = None,
) -> tuple[list[str], list[str]]:
    """Preprocess every PNG/JPEG under ``src_root`` into a mirrored PNG tree.

    The class of each image is its immediate parent directory, which is
    preserved in the mirror. Returns (written, failed) relative paths;
    unreadable files are skipped and reported rather than aborting the batch.
    """
    src_root, dst_root = Path(src_root), Path(dst_root)
    exts = {".png", ".jpg", ".jpeg"}
    files = sorted(
        p for p in src_root.rglob("*") if p.is_file() and p.suffix.lower() in exts
    )
    if not files:
        raise DimensionError(f"no PNG/JPEG files found under {src_root}")

    written, failed = [], []
    for path in files:
        rel = path.relative_to(src_root)
        try:
            img = load_image(path)
            img = resize(img, size[0], size[1])
            if do_equalize:
                img = equalize(img)
        except Exception as exc:  # corrupt file: warn and continue
            failed.append(str(rel))
            print(f"warning: skipping {rel}: {exc}")
            continue
        out_path = (dst_root / rel).with_suffix(".png")
        out_path.parent.mkdir(parents=True, exist_ok=True)
        save_png(img, out_path, metadata=metadata)
        written.append(str(rel))
    return written, failed
