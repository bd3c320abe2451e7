"""Raster and manifest I/O shared by the rest of the toolkit.

Grayscale rasters are 8-bit PNGs mapped to floats in [0, 1] by v / 255.
Ground-truth masks binarize at 128/255: an 8-bit value >= 128 is foreground.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DecodeError,
    DimensionMismatchError,
    DuplicateEntryError,
    EmptyManifestError,
    MissingFileError,
    ParseError,
)

# Ground truth is foreground where the stored 8-bit value is >= 128.
GT_THRESHOLD = 128 / 255

# Luma weights 0.299 / 0.587 / 0.114 in thousandths so a gray pixel
# (v, v, v) maps to exactly v.
_LUMA = np.array([299.0, 587.0, 114.0])


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class RasterImage:
    """RGB image, uint8, shape (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.uint8)
        if data.ndim != 3 or data.shape[2] != 3 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"expected (h, w, 3) uint8 array, got shape {data.shape}")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class GrayMask:
    """Soft mask, float64 in [0, 1], shape (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"expected a 2-d array, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("mask contains non-finite values")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValueError("mask values must lie in [0, 1]")
        object.__setattr__(self, "values", _freeze(values))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class BinaryMask:
    """Hard mask, bool, shape (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.dtype != np.bool_:
            raise ValueError(f"expected a bool array, got dtype {values.dtype}")
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"expected a 2-d array, got shape {values.shape}")
        object.__setattr__(self, "values", _freeze(values.copy()))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ManifestEntry:
    pred: Path
    gt: Path


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    entries: tuple[ManifestEntry, ...]


def _open_raster(path: str | Path) -> Image.Image:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"no such file: {path}")
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from None
    return img


def load_gray_mask(path: str | Path) -> GrayMask:
    """Load an 8-bit grayscale PNG as a GrayMask (v maps to v / 255).

    RGB inputs are luma-converted with weights 0.299/0.587/0.114; palette
    images are expanded first; alpha channels are dropped. Higher bit depths
    are rejected rather than silently rescaled.
    """
    img = _open_raster(path)
    if img.mode == "P":
        img = img.convert("RGB")
    if img.mode == "LA":
        img = img.convert("L")
    elif img.mode == "RGBA":
        img = img.convert("RGB")
    if img.mode == "L":
        raw = np.asarray(img, dtype=np.float64)
        return GrayMask(raw / 255.0)
    if img.mode == "RGB":
        raw = np.asarray(img, dtype=np.float64)
        # integer-weight luma: (299 R + 587 G + 114 B) / 255000
        luma = raw @ _LUMA
        return GrayMask(luma / 255000.0)
    raise DecodeError(f"unsupported image mode {img.mode!r} in {path}")


def load_image(path: str | Path) -> RasterImage:
    """Load any PIL-decodable raster as an RGB RasterImage."""
    img = _open_raster(path)
    if img.mode != "RGB":
        img = img.convert("RGB")
    return RasterImage(np.asarray(img, dtype=np.uint8))


def save_gray_mask(mask: GrayMask, path: str | Path) -> None:
    """Write a GrayMask as an 8-bit grayscale PNG (round-trip error <= 1/510)."""
    raw = np.rint(mask.values * 255.0).astype(np.uint8)
    Image.fromarray(raw, mode="L").save(path, format="PNG")


def save_image(image: RasterImage, path: str | Path) -> None:
    Image.fromarray(image.data, mode="RGB").save(path, format="PNG")


def binarize(mask: GrayMask, threshold: float = GT_THRESHOLD) -> BinaryMask:
    """Threshold a soft mask: value >= threshold becomes foreground."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    return BinaryMask(mask.values >= threshold)


def load_binary_mask(path: str | Path, threshold: float = GT_THRESHOLD) -> BinaryMask:
    """Load a ground-truth PNG and binarize it at the standard 128/255 cut."""
    return binarize(load_gray_mask(path), threshold)


def load_pair(pred_path: str | Path, gt_path: str | Path) -> tuple[GrayMask, BinaryMask]:
    """Load a prediction/GT pair, enforcing identical dimensions (never resizes)."""
    pred = load_gray_mask(pred_path)
    gt = load_binary_mask(gt_path)
    if pred.values.shape != gt.values.shape:
        raise DimensionMismatchError(
            f"{pred_path} is {pred.values.shape}, {gt_path} is {gt.values.shape}"
        )
    return pred, gt


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse a dataset manifest: {"name": str, "entries": [{"pred", "gt"}, ...]}.

    Relative entry paths resolve against the manifest's directory.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"no such file: {path}")
    try:
        doc = json.loads(path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("name"), str):
        raise ParseError(f"{path}: manifest must be an object with a string 'name'")
    entries = doc.get("entries")
    if not isinstance(entries, list):
        raise ParseError(f"{path}: 'entries' must be a list")
    if not entries:
        raise EmptyManifestError(f"{path}: manifest has no entries")
    base = path.parent
    seen: set[str] = set()
    out = []
    for i, e in enumerate(entries):
        if not isinstance(e, dict) or not isinstance(e.get("pred"), str) or not isinstance(e.get("gt"), str):
            raise ParseError(f"{path}: entry {i} must carry string 'pred' and 'gt' paths")
        if e["pred"] in seen:
            raise DuplicateEntryError(f"{path}: duplicate pred path {e['pred']!r}")
        seen.add(e["pred"])
        out.append(ManifestEntry(pred=base / e["pred"], gt=base / e["gt"]))
    return DatasetManifest(name=doc["name"], entries=tuple(out))


def write_text(path: str | Path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def write_json(path: str | Path, doc) -> None:
    """Serialize a document with a stable layout (insertion order, 2-space indent)."""
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
