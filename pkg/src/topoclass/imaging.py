"""Grayscale image loading and dataset manifests.

Images are held as 8-bit intensity grids.  PGM (P2/P5) is parsed directly so
that 16-bit inputs can be rejected before any rescaling happens; PNG goes
through Pillow.
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Union

import numpy as np
from PIL import Image

PathLike = Union[str, Path]

CLASS_NAMES = ("non_demented", "very_mild", "mild", "moderate")
N_CLASSES = len(CLASS_NAMES)


class ImageFormatError(ValueError):
    pass


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class GrayImage:
    """Row-major grid of 8-bit intensities, shape ``(height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2D pixel grid, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("zero-sized image")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("intensities must lie in [0, 255]")
            if np.issubdtype(arr.dtype, np.floating) and not np.all(arr == np.round(arr)):
                raise ValueError("intensities must be integers")
        arr = np.array(arr, dtype=np.uint8, order="C")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def from_list(cls, width: int, height: int, values) -> "GrayImage":
        values = list(values)
        if len(values) != width * height:
            raise ValueError("pixel count does not match width*height")
        return cls(np.array(values, dtype=np.int64).reshape(height, width))

    def flat(self) -> List[int]:
        return [int(v) for v in self.pixels.ravel()]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))


@dataclass(frozen=True)
class ManifestEntry:
    image_path: Path
    label: int


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Integer Rec.601 luma, rounded half up: (299R + 587G + 114B + 500) // 1000."""
    rgb = np.asarray(rgb, dtype=np.int64)
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return y.astype(np.uint8)


_PGM_TOKEN = re.compile(rb"(#[^\n]*\n?)|(\S+)")


def _pgm_tokens(data: bytes, start: int = 0):
    for m in _PGM_TOKEN.finditer(data, start):
        if m.group(2) is not None:
            yield m.group(2), m.end()


def _read_pgm(data: bytes) -> np.ndarray:
    magic = data[:2]
    tokens = _pgm_tokens(data, 2)
    try:
        width = int(next(tokens)[0])
        height = int(next(tokens)[0])
        maxval_tok, end = next(tokens)
        maxval = int(maxval_tok)
    except (StopIteration, ValueError) as exc:
        raise ImageFormatError("truncated or malformed PGM header") from exc
    if width < 1 or height < 1:
        raise ImageFormatError("zero-sized image")
    if maxval > 255:
        raise ImageFormatError(f"unsupported bit depth: maxval {maxval} exceeds 8 bits")
    if maxval < 1:
        raise ImageFormatError("invalid PGM maxval")
    n = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates the header from the raster
        raster = data[end + 1 : end + 1 + n]
        if len(raster) != n:
            raise ImageFormatError("truncated PGM raster")
        values = np.frombuffer(raster, dtype=np.uint8)
    else:
        vals = []
        for tok, _ in tokens:
            vals.append(int(tok))
            if len(vals) == n:
                break
        if len(vals) != n:
            raise ImageFormatError("truncated PGM raster")
        values = np.array(vals, dtype=np.int64)
    if values.max(initial=0) > maxval:
        raise ImageFormatError("PGM sample exceeds maxval")
    return values.reshape(height, width)


def _read_png(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        im.load()
        mode = im.mode
        if mode in ("I", "I;16", "I;16B", "I;16L", "F") or mode.startswith("I;"):
            raise ImageFormatError(f"unsupported bit depth (mode {mode})")
        if mode == "1":
            im = im.convert("L")
            mode = "L"
        if mode == "P":
            im = im.convert("RGBA" if "transparency" in im.info else "RGB")
            mode = im.mode
        arr = np.asarray(im)
    if mode == "L":
        return arr
    if mode == "LA":
        return arr[..., 0]
    if mode in ("RGB", "RGBA"):
        return luminance(arr[..., :3])
    raise ImageFormatError(f"unsupported image mode {mode}")


def load_grayscale(path: PathLike) -> GrayImage:
    """Load a PGM (P2/P5) or 8-bit PNG as a :class:`GrayImage`."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from exc
    if data[:2] in (b"P2", b"P5"):
        pixels = _read_pgm(data)
    elif data[:8] == b"\x89PNG\r\n\x1a\n":
        try:
            pixels = _read_png(path)
        except ImageFormatError:
            raise
        except Exception as exc:
            raise ImageFormatError(f"cannot decode {path}: {exc}") from exc
    else:
        raise ImageFormatError(f"{path}: not a PGM or PNG file")
    if pixels.size == 0:
        raise ImageFormatError("zero-sized image")
    return GrayImage(pixels)


def save_pgm(image: GrayImage, path: PathLike, binary: bool = True) -> None:
    path = Path(path)
    header = f"{'P5' if binary else 'P2'}\n{image.width} {image.height}\n255\n".encode()
    if binary:
        path.write_bytes(header + image.pixels.tobytes())
    else:
        rows = "\n".join(" ".join(str(int(v)) for v in row) for row in image.pixels)
        path.write_bytes(header + rows.encode() + b"\n")


def read_manifest(path: PathLike) -> List[ManifestEntry]:
    """Parse a ``path,label`` CSV; paths resolve relative to the manifest.

    Referenced files are not checked here, only when loaded.
    """
    path = Path(path)
    base = path.parent
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["path", "label"]:
            raise ManifestError(f"{path}: missing 'path,label' header")
        entries = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise ManifestError(f"{path}:{lineno}: expected 2 columns")
            try:
                label = int(row[1])
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: non-integer label {row[1]!r}") from exc
            if not 0 <= label < N_CLASSES:
                raise ManifestError(f"{path}:{lineno}: label out of range ({label})")
            entries.append(ManifestEntry(base / row[0].strip(), label))
    return entries


def write_manifest(entries, path: PathLike) -> None:
    path = Path(path)
    base = path.parent
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "label"])
        for e in entries:
            p = Path(e.image_path)
            try:
                p = p.relative_to(base)
            except ValueError:
                pass
            w.writerow([p.as_posix(), e.label])
