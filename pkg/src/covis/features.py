"""Quantitative image features: color statistics in HSL, dominant colors via
weighted k-means, and mask composition measurements.

All statistics are weighted by the soft fine mask; an all-zero mask falls back
to whole-frame weights with area_ratio pinned to 0.  Achromatic pixels
(saturation < 0.05) are excluded from hue-based statistics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cascade import CoarseSegmentation, FineMask
from .errors import DimensionMismatchError
from .io import RasterImage

ACHROMATIC_SAT = 0.05
_KMEANS_K = 5
_KMEANS_SEED = 42
_KMEANS_ITERS = 20


@dataclass(frozen=True)
class Swatch:
    rgb: tuple[int, int, int]
    weight: float

    def __post_init__(self):
        if len(self.rgb) != 3 or any(not 0 <= c <= 255 for c in self.rgb):
            raise ValueError(f"bad swatch color {self.rgb}")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"swatch weight {self.weight} outside [0, 1]")


@dataclass(frozen=True)
class ColorStats:
    mean_hue: float  # degrees in [0, 360)
    mean_saturation: float
    mean_lightness: float
    warm_ratio: float
    dominant_colors: tuple[Swatch, ...]

    def __post_init__(self):
        if not 0.0 <= self.mean_hue < 360.0:
            raise ValueError(f"mean_hue {self.mean_hue} outside [0, 360)")
        for name in ("mean_saturation", "mean_lightness", "warm_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} {v} outside [0, 1]")
        if len(self.dominant_colors) != _KMEANS_K:
            raise ValueError(f"expected {_KMEANS_K} dominant colors")
        total = sum(s.weight for s in self.dominant_colors)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"dominant color weights sum to {total}, not 1")


@dataclass(frozen=True)
class CompositionStats:
    centroid_offset: tuple[float, float]  # (dx, dy), image-normalized
    thirds_distance: float
    h_symmetry: float
    v_symmetry: float
    area_ratio: float
    balance: float
    region_count: int

    def __post_init__(self):
        dx, dy = self.centroid_offset
        if not (-0.5 <= dx <= 0.5 and -0.5 <= dy <= 0.5):
            raise ValueError(f"centroid_offset {self.centroid_offset} outside [-0.5, 0.5]")
        for name in ("thirds_distance", "h_symmetry", "v_symmetry", "area_ratio", "balance"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} {v} outside [0, 1]")
        if self.region_count < 0:
            raise ValueError("region_count must be >= 0")


@dataclass(frozen=True)
class Provenance:
    ablation: str = "unspecified"
    coarse_backend: str = "unspecified"
    fine_backend: str = "unspecified"


@dataclass(frozen=True)
class FeatureBundle:
    color: ColorStats
    composition: CompositionStats
    provenance: Provenance

    def to_json_dict(self) -> dict:
        # field order is fixed: consumers diff these documents byte-for-byte
        return {
            "color": {
                "mean_hue": self.color.mean_hue,
                "mean_saturation": self.color.mean_saturation,
                "mean_lightness": self.color.mean_lightness,
                "warm_ratio": self.color.warm_ratio,
                "dominant_colors": [
                    {"rgb": list(s.rgb), "weight": s.weight}
                    for s in self.color.dominant_colors
                ],
            },
            "composition": {
                "centroid_offset": list(self.composition.centroid_offset),
                "thirds_distance": self.composition.thirds_distance,
                "h_symmetry": self.composition.h_symmetry,
                "v_symmetry": self.composition.v_symmetry,
                "area_ratio": self.composition.area_ratio,
                "balance": self.composition.balance,
                "region_count": self.composition.region_count,
            },
            "provenance": {
                "ablation": self.provenance.ablation,
                "coarse_backend": self.provenance.coarse_backend,
                "fine_backend": self.provenance.fine_backend,
            },
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FeatureBundle":
        color = doc["color"]
        comp = doc["composition"]
        prov = doc.get("provenance", {})
        return cls(
            color=ColorStats(
                mean_hue=float(color["mean_hue"]),
                mean_saturation=float(color["mean_saturation"]),
                mean_lightness=float(color["mean_lightness"]),
                warm_ratio=float(color["warm_ratio"]),
                dominant_colors=tuple(
                    Swatch(rgb=tuple(int(c) for c in s["rgb"]), weight=float(s["weight"]))
                    for s in color["dominant_colors"]
                ),
            ),
            composition=CompositionStats(
                centroid_offset=tuple(float(v) for v in comp["centroid_offset"]),
                thirds_distance=float(comp["thirds_distance"]),
                h_symmetry=float(comp["h_symmetry"]),
                v_symmetry=float(comp["v_symmetry"]),
                area_ratio=float(comp["area_ratio"]),
                balance=float(comp["balance"]),
                region_count=int(comp["region_count"]),
            ),
            provenance=Provenance(
                ablation=str(prov.get("ablation", "unspecified")),
                coarse_backend=str(prov.get("coarse_backend", "unspecified")),
                fine_backend=str(prov.get("fine_backend", "unspecified")),
            ),
        )


def _rgb_to_hsl(rgb01: np.ndarray):
    r, g, b = rgb01[..., 0], rgb01[..., 1], rgb01[..., 2]
    mx = rgb01.max(axis=-1)
    mn = rgb01.min(axis=-1)
    d = mx - mn
    light = (mx + mn) / 2.0
    denom = 1.0 - np.abs(2.0 * light - 1.0)
    sat = np.divide(d, denom, out=np.zeros_like(d), where=denom > 0)
    safe = np.where(d == 0, 1.0, d)
    hue = np.where(
        mx == r, ((g - b) / safe) % 6.0,
        np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    ) * 60.0
    hue = np.where(d == 0, 0.0, hue)
    return hue, sat, light


def _weighted_kmeans(points: np.ndarray, weights: np.ndarray):
    """k-means++ / Lloyd with sample weights; fixed seed, fixed iteration count.

    Ties go to the lowest cluster index; empty clusters keep their centroid.
    """
    rng = np.random.default_rng(_KMEANS_SEED)
    n = len(points)
    total = weights.sum()
    probs = weights / total
    centers = np.empty((_KMEANS_K, points.shape[1]))
    centers[0] = points[rng.choice(n, p=probs)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, _KMEANS_K):
        mass = weights * d2
        s = mass.sum()
        centers[i] = points[rng.choice(n, p=mass / s if s > 0 else probs)]
        d2 = np.minimum(d2, ((points - centers[i]) ** 2).sum(axis=1))
    for _ in range(_KMEANS_ITERS):
        dists = np.stack([((points - c) ** 2).sum(axis=1) for c in centers], axis=1)
        assign = dists.argmin(axis=1)
        for c in range(_KMEANS_K):
            sel = assign == c
            wsum = weights[sel].sum()
            if wsum > 0:
                centers[c] = (points[sel] * weights[sel, None]).sum(axis=0) / wsum
    dists = np.stack([((points - c) ** 2).sum(axis=1) for c in centers], axis=1)
    assign = dists.argmin(axis=1)
    cluster_w = np.bincount(assign, weights=weights, minlength=_KMEANS_K) / total
    return centers, cluster_w


def _dominant_colors(rgb01: np.ndarray, weights: np.ndarray) -> tuple[Swatch, ...]:
    points = rgb01.reshape(-1, 3)
    centers, cluster_w = _weighted_kmeans(points, weights.ravel())
    order = np.argsort(-cluster_w, kind="stable")
    swatches = []
    for idx in order:
        rgb = tuple(int(v) for v in np.clip(np.rint(centers[idx] * 255), 0, 255))
        swatches.append(Swatch(rgb=rgb, weight=float(cluster_w[idx])))
    return tuple(swatches)


def _fsum(arr: np.ndarray) -> float:
    # order-independent, correctly-rounded sum: keeps symmetric statistics
    # exactly antisymmetric under image rotation
    return math.fsum(arr.ravel().tolist())


def _centroid_offset(weights: np.ndarray) -> tuple[float, float]:
    h, w = weights.shape
    cy0 = (h - 1) / 2.0
    cx0 = (w - 1) / 2.0
    ys = np.arange(h, dtype=np.float64)[:, None] - cy0
    xs = np.arange(w, dtype=np.float64)[None, :] - cx0
    total = _fsum(weights)
    dy = _fsum(weights * ys) / (total * h)
    dx = _fsum(weights * xs) / (total * w)
    return dx, dy


def _thirds_distance(offset: tuple[float, float], shape: tuple[int, int]) -> float:
    h, w = shape
    dx, dy = offset
    px = (0.5 + dx) * w  # continuous frame coordinates
    py = (0.5 + dy) * h
    best = min(
        math.hypot(px - ix * w, py - iy * h)
        for ix in (1 / 3, 2 / 3) for iy in (1 / 3, 2 / 3)
    )
    return min(1.0, best / math.hypot(w, h))


def _mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def _balance(weights: np.ndarray) -> float:
    w = weights.shape[1]
    mid = w // 2
    left = weights[:, :mid].sum()
    right = weights[:, mid + 1:].sum() if w % 2 else weights[:, mid:].sum()
    total = weights.sum()
    if total == 0:
        return 1.0
    return float(1.0 - abs(left - right) / total)


def encode(image: RasterImage, fine: FineMask, coarse: CoarseSegmentation,
           provenance: Provenance | None = None) -> FeatureBundle:
    """Measure color and composition statistics of the segmented subject."""
    mask = fine.mask.values
    if mask.shape != (image.height, image.width):
        raise DimensionMismatchError(
            f"mask {mask.shape} vs image {(image.height, image.width)}")
    if mask.max() > 0:
        weights = mask
        area_ratio = float(mask.mean())
    else:
        weights = np.ones_like(mask)
        area_ratio = 0.0

    rgb01 = image.data.astype(np.float64) / 255.0
    hue, sat, light = _rgb_to_hsl(rgb01)
    total = weights.sum()
    mean_sat = float(np.clip((weights * sat).sum() / total, 0.0, 1.0))
    mean_light = float(np.clip((weights * light).sum() / total, 0.0, 1.0))

    chrom = weights * (sat >= ACHROMATIC_SAT)
    rad = np.deg2rad(hue)
    vx = (chrom * np.cos(rad)).sum()
    vy = (chrom * np.sin(rad)).sum()
    mean_hue = math.degrees(math.atan2(vy, vx)) % 360.0
    if mean_hue >= 360.0:
        mean_hue = 0.0

    warm = (hue <= 90.0) | (hue >= 300.0)
    chrom_total = chrom.sum()
    warm_ratio = float((chrom * warm).sum() / chrom_total) if chrom_total > 0 else 0.0

    color = ColorStats(
        mean_hue=mean_hue,
        mean_saturation=mean_sat,
        mean_lightness=mean_light,
        warm_ratio=min(1.0, warm_ratio),
        dominant_colors=_dominant_colors(rgb01, weights),
    )

    binar = weights >= 0.5
    offset = _centroid_offset(weights)
    composition = CompositionStats(
        centroid_offset=offset,
        thirds_distance=_thirds_distance(offset, weights.shape),
        h_symmetry=_mask_iou(binar, np.fliplr(binar)),
        v_symmetry=_mask_iou(binar, np.flipud(binar)),
        area_ratio=area_ratio,
        balance=_balance(weights),
        region_count=len(coarse.proposals),
    )
    return FeatureBundle(
        color=color,
        composition=composition,
        provenance=provenance if provenance is not None else Provenance(),
    )
