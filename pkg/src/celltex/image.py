"""Grayscale image container and file I/O.

Images are carried as float64 arrays in their native intensity scale
(0..255 for 8-bit files, 0..65535 for 16-bit, 0..1 for synthetic or
enhanced images).  The nominal white level travels with the image so
that saving can rescale to the container bit depth without guessing.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n\r]*[\n\r]\s*)*(\S+)")


@dataclass(frozen=True)
class GrayImage:
    """A single-channel image: float64 pixels plus the nominal white level."""

    pixels: np.ndarray
    white: float = 1.0

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise DataError(f"image must be 2-D with positive size, got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise DataError("image contains non-finite values")
        if not (np.isfinite(self.white) and self.white > 0):
            raise DataError(f"white level must be positive, got {self.white}")
        px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def data(self) -> np.ndarray:
        """Row-major flat view of the pixel values."""
        return self.pixels.reshape(-1)


def enhance(img: GrayImage) -> GrayImage:
    """Stretch intensities to [0, 1]; a constant image maps to all zeros."""
    px = img.pixels
    lo = float(px.min())
    hi = float(px.max())
    if hi == lo:
        return GrayImage(np.zeros_like(px), white=1.0)
    return GrayImage((px - lo) / (hi - lo), white=1.0)


def _read_pgm_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    m = _PGM_TOKEN.match(buf, pos)
    if m is None:
        raise DataError("truncated PGM header")
    return m.group(1), m.end()


def _load_pgm(path: Path) -> GrayImage:
    buf = path.read_bytes()
    magic, pos = _read_pgm_token(buf, 0)
    if magic != b"P5":
        raise DataError(f"{path}: unsupported PGM magic {magic!r} (only binary P5)")
    fields = []
    for _ in range(3):
        tok, pos = _read_pgm_token(buf, pos)
        if not tok.isdigit():
            raise DataError(f"{path}: bad PGM header token {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise DataError(f"{path}: bad PGM dimensions {width}x{height}")
    if not 0 < maxval < 65536:
        raise DataError(f"{path}: bad PGM maxval {maxval}")
    pos += 1  # single whitespace byte between maxval and raster
    # 16-bit PGM rasters are big-endian per the netpbm format.
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    raster = buf[pos:pos + need]
    if len(raster) != need:
        raise DataError(f"{path}: PGM raster truncated ({len(raster)} of {need} bytes)")
    px = np.frombuffer(raster, dtype=dtype).reshape(height, width).astype(np.float64)
    return GrayImage(px, white=float(maxval))


def _load_png(path: Path, color: str) -> GrayImage:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I;16B", "I"):
            white = 65535.0 if im.mode.startswith("I") else 255.0
            px = np.asarray(im, dtype=np.float64)
        elif color == "luminance":
            px = np.asarray(im.convert("L"), dtype=np.float64)
            white = 255.0
        else:
            raise DataError(
                f"{path}: color image rejected (mode {im.mode}); "
                "pass color='luminance' to convert"
            )
    return GrayImage(px, white=white)


def load_image(path, color: str = "reject") -> GrayImage:
    """Load a PGM (binary P5) or grayscale PNG file.

    color: what to do with multi-channel PNG input, 'reject' or 'luminance'.
    """
    if color not in ("reject", "luminance"):
        raise DataError(f"unknown color mode {color!r}")
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such image file: {path}")
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        return _load_pgm(path)
    if suffix == ".png":
        return _load_png(path, color)
    raise DataError(f"{path}: unsupported image format {suffix!r}")


def save_image(img: GrayImage, path, bit_depth: int = 8) -> None:
    """Write a PGM or PNG file, rescaling intensities to the container depth."""
    if bit_depth not in (8, 16):
        raise DataError(f"bit depth must be 8 or 16, got {bit_depth}")
    path = Path(path)
    maxval = (1 << bit_depth) - 1
    scaled = np.rint(img.pixels * (maxval / img.white))
    scaled = np.clip(scaled, 0, maxval)
    if bit_depth == 8:
        raster = scaled.astype(np.uint8)
    else:
        raster = scaled.astype(np.uint16)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
        body = raster.astype(">u2").tobytes() if bit_depth == 16 else raster.tobytes()
        path.write_bytes(header + body)
    elif suffix == ".png":
        from PIL import Image

        mode = "I;16" if bit_depth == 16 else "L"
        Image.fromarray(raster, mode=mode).save(path)
    else:
        raise DataError(f"{path}: unsupported image format {suffix!r}")
