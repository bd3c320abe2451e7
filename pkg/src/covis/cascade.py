"""Coarse-to-fine segmentation pipeline with pluggable stage backends.

The classical reference backends keep the pipeline self-contained: the coarse
stage is global-contrast saliency + Otsu + connected components, the fine
stage a guided filter over the union of proposal masks.  Real model backends
plug in as external commands (see run_pipeline / PipelineConfig).
"""
from __future__ import annotations

import contextlib
import json
import subprocess
import tempfile
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ExternalBackendError, MissingFileError, ParseError
from .io import GrayMask, RasterImage, load_gray_mask, save_image

_EIGHT_CONN = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class FeatureMap:
    """Per-pixel saliency in [0, 1], max-normalized unless identically zero."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("feature map must be 2-d")
        mx = values.max() if values.size else 0.0
        if values.min() < 0.0 or mx > 1.0 or (mx != 0.0 and abs(mx - 1.0) > 1e-12):
            raise ValueError("feature map must be max-normalized to [0, 1]")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class RegionProposal:
    """(box, mask, score): box is the tight bounding box of the mask support."""

    box: tuple[int, int, int, int]  # x_min, y_min, x_max, y_max (inclusive)
    mask: GrayMask
    score: float

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        h, w = self.mask.values.shape
        if not (0 <= x0 <= x1 < w and 0 <= y0 <= y1 < h):
            raise ValueError(f"box {self.box} out of range for {w}x{h} mask")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.mask.values))


@dataclass(frozen=True)
class CoarseSegmentation:
    proposals: tuple[RegionProposal, ...]

    def __post_init__(self):
        scores = [p.score for p in self.proposals]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("proposals must be sorted by descending score")

    def __len__(self) -> int:
        return len(self.proposals)


@dataclass(frozen=True)
class FineMask:
    mask: GrayMask


@dataclass(frozen=True)
class PipelineResult:
    coarse: CoarseSegmentation
    fine: FineMask
    timings: dict


_ABLATIONS = ("full", "no_coarse", "no_fine")
_COARSE_BACKENDS = ("classical", "external")
_FINE_BACKENDS = ("classical", "external", "passthrough")


@dataclass(frozen=True)
class PipelineConfig:
    coarse_backend: str = "classical"
    fine_backend: str = "classical"
    coarse_command: tuple[str, ...] = ()
    fine_command: tuple[str, ...] = ()
    ablation: str = "full"
    saliency_sigma: float | None = None  # None: min(w, h) / 64, floor 1.0
    min_area_fraction: float = 0.005
    guided_radius: int = 8
    guided_eps: float = 1e-4
    fallback_on_error: bool = False

    def __post_init__(self):
        if self.ablation not in _ABLATIONS:
            raise ConfigError(f"ablation must be one of {_ABLATIONS}, got {self.ablation!r}")
        if self.coarse_backend not in _COARSE_BACKENDS:
            raise ConfigError(f"unknown coarse backend {self.coarse_backend!r}")
        if self.fine_backend not in _FINE_BACKENDS:
            raise ConfigError(f"unknown fine backend {self.fine_backend!r}")
        if self.coarse_backend == "external" and not self.coarse_command:
            raise ConfigError("external coarse backend requires coarse_command")
        if self.fine_backend == "external" and not self.fine_command:
            raise ConfigError("external fine backend requires fine_command")
        if self.saliency_sigma is not None and self.saliency_sigma <= 0:
            raise ConfigError("saliency_sigma must be positive")
        if not 0.0 < self.min_area_fraction < 1.0:
            raise ConfigError("min_area_fraction must lie in (0, 1)")
        if self.guided_radius < 1:
            raise ConfigError("guided_radius must be >= 1")
        if self.guided_eps <= 0:
            raise ConfigError("guided_eps must be positive")
        object.__setattr__(self, "coarse_command", tuple(self.coarse_command))
        object.__setattr__(self, "fine_command", tuple(self.fine_command))

    @classmethod
    def from_json(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise MissingFileError(f"no such config: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ParseError(f"{path}: config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        return cls(**doc)

    def as_dict(self) -> dict:
        return {
            "coarse_backend": self.coarse_backend,
            "fine_backend": self.fine_backend,
            "coarse_command": list(self.coarse_command),
            "fine_command": list(self.fine_command),
            "ablation": self.ablation,
            "saliency_sigma": self.saliency_sigma,
            "min_area_fraction": self.min_area_fraction,
            "guided_radius": self.guided_radius,
            "guided_eps": self.guided_eps,
            "fallback_on_error": self.fallback_on_error,
        }

    def with_ablation(self, ablation: str) -> "PipelineConfig":
        return replace(self, ablation=ablation)


# --- classical coarse stage ---

def _srgb_to_lab(rgb8: np.ndarray) -> np.ndarray:
    """sRGB (uint8) to CIE Lab under D65."""
    c = rgb8.astype(np.float64) / 255.0
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    m = np.array([
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ])
    xyz = lin @ m.T
    xyz /= np.array([0.95047, 1.0, 1.08883])
    delta = 6.0 / 29.0
    f = np.where(xyz > delta**3, np.cbrt(xyz), xyz / (3 * delta**2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def extract_features(image: RasterImage, sigma: float | None = None) -> FeatureMap:
    """Global-contrast saliency: distance to the mean Lab color, blurred and
    max-normalized.  Uniform images yield an identically-zero map."""
    if (image.data == image.data[0, 0]).all():
        return FeatureMap(np.zeros((image.height, image.width)))
    lab = _srgb_to_lab(image.data)
    mean = lab.reshape(-1, 3).mean(axis=0)
    contrast = np.sqrt(((lab - mean) ** 2).sum(axis=-1))
    if sigma is None:
        sigma = max(min(image.width, image.height) / 64.0, 1.0)
    sal = ndimage.gaussian_filter(contrast, sigma=sigma, mode="reflect")
    mx = sal.max()
    if mx > 0:
        sal = sal / mx
        sal = np.clip(sal, 0.0, 1.0)
    return FeatureMap(sal)


def _otsu_level(values: np.ndarray) -> float | None:
    """Otsu split level on a 256-bin histogram; None for a constant map."""
    if values.max() == values.min():
        return None
    counts, edges = np.histogram(values, bins=256, range=(0.0, 1.0))
    centers = (edges[:-1] + edges[1:]) / 2.0
    total = counts.sum()
    w0 = np.cumsum(counts)
    w1 = total - w0
    m0 = np.cumsum(counts * centers)
    total_mean = m0[-1]
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        return None
    mu0 = np.divide(m0, w0, out=np.zeros(256), where=w0 > 0)
    mu1 = np.divide(total_mean - m0, w1, out=np.zeros(256), where=w1 > 0)
    between = np.where(valid, w0 * w1 * (mu0 - mu1) ** 2, -1.0)
    k = int(between.argmax())
    return float(edges[k + 1])


def propose_regions(features: FeatureMap, image: RasterImage,
                    config: PipelineConfig) -> CoarseSegmentation:
    """Threshold the saliency map and keep 8-connected components with area
    >= min_area_fraction; masks carry the soft saliency inside the component."""
    sal = features.values
    if sal.shape != (image.height, image.width):
        raise ValueError("feature map does not match image dimensions")
    level = _otsu_level(sal)
    if level is None:
        return CoarseSegmentation(proposals=())
    fg = sal > level
    labels, n = ndimage.label(fg, structure=_EIGHT_CONN)
    min_area = config.min_area_fraction * sal.size
    proposals = []
    for lbl in range(1, n + 1):
        comp = labels == lbl
        area = int(comp.sum())
        if area < min_area:
            continue
        rows, cols = np.nonzero(comp)
        score = float(sal[comp].mean())
        mask = np.where(comp, sal, 0.0)
        proposals.append(RegionProposal(
            box=(int(cols.min()), int(rows.min()), int(cols.max()), int(rows.max())),
            mask=GrayMask(mask),
            score=min(1.0, score),
        ))
    proposals.sort(key=lambda p: (-p.score, -p.area, p.box[1], p.box[0]))
    return CoarseSegmentation(proposals=tuple(proposals))


# --- classical fine stage ---

def _box_sum(x: np.ndarray, r: int) -> np.ndarray:
    """Sum over the (2r+1)^2 window clipped to the image, via an integral image."""
    h, w = x.shape
    s = np.zeros((h + 1, w + 1))
    s[1:, 1:] = x.cumsum(axis=0).cumsum(axis=1)
    top = np.clip(np.arange(h) - r, 0, h)
    bot = np.clip(np.arange(h) + r + 1, 0, h)
    left = np.clip(np.arange(w) - r, 0, w)
    right = np.clip(np.arange(w) + r + 1, 0, w)
    return s[bot][:, right] - s[top][:, right] - s[bot][:, left] + s[top][:, left]


def _guided_filter(guide: np.ndarray, src: np.ndarray, r: int, eps: float) -> np.ndarray:
    h, w = guide.shape
    top = np.clip(np.arange(h) - r, 0, h)
    bot = np.clip(np.arange(h) + r + 1, 0, h)
    left = np.clip(np.arange(w) - r, 0, w)
    right = np.clip(np.arange(w) + r + 1, 0, w)
    n = (bot - top)[:, None] * (right - left)[None, :]

    mean_i = _box_sum(guide, r) / n
    mean_p = _box_sum(src, r) / n
    corr_i = _box_sum(guide * guide, r) / n
    corr_ip = _box_sum(guide * src, r) / n
    var_i = corr_i - mean_i * mean_i
    cov_ip = corr_ip - mean_i * mean_p
    a = cov_ip / (var_i + eps)
    b = mean_p - a * mean_i
    return (_box_sum(a, r) / n) * guide + _box_sum(b, r) / n


def _luma01(image: RasterImage) -> np.ndarray:
    return (image.data.astype(np.float64) @ np.array([299.0, 587.0, 114.0])) / 255000.0


def union_mask(coarse: CoarseSegmentation, shape: tuple[int, int]) -> GrayMask:
    """Pixelwise max over proposal masks; all-zero when there are none."""
    if not coarse.proposals:
        return GrayMask(np.zeros(shape))
    stack = [p.mask.values for p in coarse.proposals]
    return GrayMask(np.maximum.reduce(stack))


def refine(image: RasterImage, coarse: CoarseSegmentation,
           config: PipelineConfig) -> FineMask:
    """Guided-filter refinement of the proposal union, grayscale image as guide."""
    shape = (image.height, image.width)
    if not coarse.proposals:
        return FineMask(GrayMask(np.zeros(shape)))
    union = union_mask(coarse, shape)
    out = _guided_filter(_luma01(image), union.values, config.guided_radius, config.guided_eps)
    return FineMask(GrayMask(np.clip(out, 0.0, 1.0)))


# --- external backends ---

@contextlib.contextmanager
def _run_command(command: tuple[str, ...], image: RasterImage, suffix: str):
    with tempfile.TemporaryDirectory(prefix="covis-backend-") as tmp:
        tmp = Path(tmp)
        in_path = tmp / "input.png"
        out_path = tmp / f"output{suffix}"
        save_image(image, in_path)
        proc = subprocess.run(
            [*command, str(in_path), str(out_path)],
            capture_output=True, text=True,
        )
        if proc.returncode != 0:
            raise ExternalBackendError(
                f"{command[0]} exited with {proc.returncode}: {proc.stderr.strip()[:500]}"
            )
        if not out_path.exists():
            raise ExternalBackendError(f"{command[0]} wrote no output at {out_path}")
        yield out_path


def _external_coarse(image: RasterImage, config: PipelineConfig) -> CoarseSegmentation:
    with _run_command(config.coarse_command, image, ".json") as out_path:
        try:
            doc = json.loads(out_path.read_text())
        except json.JSONDecodeError as exc:
            raise ExternalBackendError(f"malformed proposal JSON: {exc}") from None
        if isinstance(doc, dict):
            doc = doc.get("proposals")
        if not isinstance(doc, list):
            raise ExternalBackendError("proposal document must be a list or {'proposals': [...]}")
        proposals = []
        for i, entry in enumerate(doc):
            try:
                mask = load_gray_mask(out_path.parent / entry["mask_path"])
                score = float(entry["score"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ExternalBackendError(f"proposal {i} malformed: {exc}") from None
            if mask.values.shape != (image.height, image.width):
                raise ExternalBackendError(f"proposal {i} mask has wrong dimensions")
            if not 0.0 <= score <= 1.0:
                raise ExternalBackendError(f"proposal {i} score {score} outside [0, 1]")
            support = mask.values > 0
            if not support.any():
                continue  # empty mask carries no region
            rows, cols = np.nonzero(support)
            proposals.append(RegionProposal(
                box=(int(cols.min()), int(rows.min()), int(cols.max()), int(rows.max())),
                mask=mask, score=score,
            ))
        proposals.sort(key=lambda p: (-p.score, -p.area, p.box[1], p.box[0]))
        return CoarseSegmentation(proposals=tuple(proposals))


def _external_fine(image: RasterImage, config: PipelineConfig) -> FineMask:
    with _run_command(config.fine_command, image, ".png") as out_path:
        mask = load_gray_mask(out_path)
        if mask.values.shape != (image.height, image.width):
            raise ExternalBackendError("fine mask has wrong dimensions")
        return FineMask(mask)


def full_frame_proposal(image: RasterImage) -> CoarseSegmentation:
    """The no_coarse arm: one full-frame proposal of score 1."""
    mask = GrayMask(np.ones((image.height, image.width)))
    prop = RegionProposal(box=(0, 0, image.width - 1, image.height - 1), mask=mask, score=1.0)
    return CoarseSegmentation(proposals=(prop,))


def _coarse_stage(image: RasterImage, config: PipelineConfig) -> CoarseSegmentation:
    if config.coarse_backend == "external":
        try:
            return _external_coarse(image, config)
        except ExternalBackendError:
            if not config.fallback_on_error:
                raise
    features = extract_features(image, sigma=config.saliency_sigma)
    return propose_regions(features, image, config)


def _fine_stage(image: RasterImage, coarse: CoarseSegmentation,
                config: PipelineConfig) -> FineMask:
    if config.fine_backend == "passthrough":
        return FineMask(union_mask(coarse, (image.height, image.width)))
    if config.fine_backend == "external":
        try:
            return _external_fine(image, config)
        except ExternalBackendError:
            if not config.fallback_on_error:
                raise
    return refine(image, coarse, config)


def run_pipeline(image: RasterImage, config: PipelineConfig) -> PipelineResult:
    """Run the configured coarse and fine stages under the selected ablation."""
    timings = {}
    t0 = time.perf_counter()
    if config.ablation == "no_coarse":
        coarse = full_frame_proposal(image)
    else:
        coarse = _coarse_stage(image, config)
    timings["coarse_s"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    if config.ablation == "no_fine":
        fine = FineMask(union_mask(coarse, (image.height, image.width)))
    else:
        fine = _fine_stage(image, coarse, config)
    timings["fine_s"] = time.perf_counter() - t1
    return PipelineResult(coarse=coarse, fine=fine, timings=timings)
