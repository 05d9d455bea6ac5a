"""Eight-class Voronoi SOM with area-monotone shading, and its recovery pipeline."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import ndimage as ndi
from scipy.spatial import Delaunay, QhullError
from skimage.morphology import skeletonize
from skimage.segmentation import watershed

from . import kernels, stats
from .raster import IMAGE_SIZE, GrayImage, load_label_png, save_label_png

N_CLASSES = 8
REGIONS_PER_CLASS = 12
PALETTE = np.arange(0, 256, 2)  # 128 shades, 0..254


def region_count_for(class_id: int) -> int:
    if not 1 <= class_id <= N_CLASSES:
        raise ValueError(f"class_id must be in 1..{N_CLASSES}")
    return REGIONS_PER_CLASS * class_id


@dataclass
class RegionMap:
    """Label raster plus per-region area and shade.

    Labels are 1..region_count; 0 marks unassigned (boundary) pixels in recovered maps.
    Ground-truth maps carry exact cell areas, recovered maps pixel counts.
    """

    labels: np.ndarray
    areas: np.ndarray
    shades: np.ndarray

    @property
    def region_count(self) -> int:
        return int(self.areas.size)

    def area_shade_pairs(self) -> np.ndarray:
        return np.column_stack([self.areas, self.shades])

    def pixel_counts(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.region_count + 1)[1 : self.region_count + 1]

    def boundary_mask(self) -> np.ndarray:
        """Pixels whose label differs from a 4-neighbour."""
        lab = self.labels
        edge = np.zeros(lab.shape, dtype=bool)
        dv = lab[1:, :] != lab[:-1, :]
        dh = lab[:, 1:] != lab[:, :-1]
        edge[1:, :] |= dv
        edge[:-1, :] |= dv
        edge[:, 1:] |= dh
        edge[:, :-1] |= dh
        return edge | (lab == 0)

    def to_json(self) -> dict:
        return {
            "region_count": self.region_count,
            "regions": [
                {"label": i + 1, "area": a.item(), "shade": float(s)} for i, (a, s) in enumerate(zip(self.areas, self.shades))
            ],
        }


def _clip_halfplane(poly: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Part of a convex polygon with ``normal . p <= offset``."""
    if poly.shape[0] == 0:
        return poly
    side = poly @ normal - offset
    out = []
    n = poly.shape[0]
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        sp, sq = side[k], side[(k + 1) % n]
        if sp <= 0:
            out.append(p)
        if (sp < 0 < sq) or (sq < 0 < sp):
            out.append(p + (q - p) * (sp / (sp - sq)))
    return np.array(out).reshape(-1, 2)


def _polygon_area(poly: np.ndarray) -> float:
    if poly.shape[0] < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def cell_areas(sx, sy, size: int = IMAGE_SIZE) -> np.ndarray:
    """Exact areas of the Voronoi cells of ``(sx, sy)`` clipped to the ``size`` square.

    Each cell is the frame intersected with the half-planes towards its Delaunay
    neighbours (all other sites when a triangulation is unavailable).
    """
    pts = np.column_stack([sx, sy]).astype(np.float64)
    n = pts.shape[0]
    neighbours = None
    if n >= 4:
        try:
            tri = Delaunay(pts)
            indptr, indices = tri.vertex_neighbor_vertices
            neighbours = [indices[indptr[k] : indptr[k + 1]] for k in range(n)]
        except QhullError:
            neighbours = None
    if neighbours is None:
        neighbours = [np.delete(np.arange(n), k) for k in range(n)]
    frame = np.array([[0.0, 0.0], [size, 0.0], [size, size], [0.0, size]])
    areas = np.empty(n)
    for k in range(n):
        poly = frame
        for j in neighbours[k]:
            normal = pts[j] - pts[k]
            poly = _clip_halfplane(poly, normal, 0.5 * (pts[j] @ pts[j] - pts[k] @ pts[k]))
        areas[k] = _polygon_area(poly)
    return areas


def generate_voronoi(class_id: int, stream: np.random.Generator, size: int = IMAGE_SIZE) -> tuple[GrayImage, RegionMap]:
    """Nearest-centre tessellation shaded so that larger regions are brighter.

    Centre sets producing coincident centres or an empty cell are redrawn, so
    every realization has exactly ``12 * class_id`` non-empty regions. Region
    area is the exact area of the clipped Voronoi cell; pixel counts tie often
    at high region counts, exact areas almost surely never do.
    """
    n = region_count_for(class_id)
    while True:
        sx = stream.uniform(0.0, size, n)
        sy = stream.uniform(0.0, size, n)
        if np.unique(np.column_stack([sx, sy]), axis=0).shape[0] < n:
            continue
        nearest = kernels.nearest_site(size, size, sx, sy)
        if np.all(np.bincount(nearest.ravel(), minlength=n) > 0):
            break
    areas = cell_areas(sx, sy, size)
    shades = np.sort(stream.choice(PALETTE, size=n, replace=False))
    # area rank, ties broken by centre index (stable sort)
    order = np.argsort(areas, kind="stable")
    shade_of_site = np.empty(n, dtype=np.int64)
    shade_of_site[order] = shades
    image = GrayImage(shade_of_site[nearest].astype(np.uint8))
    region_map = RegionMap(nearest.astype(np.int64) + 1, areas, shade_of_site.astype(np.float64))
    return image, region_map


# -------------------------------------------------------------------- detection


@dataclass(frozen=True)
class DetectionConfig:
    """Settings for the Hessian -> erosion -> skeleton -> flood-fill -> watershed pipeline.

    ``hessian_threshold`` is an absolute eigenvalue magnitude; when
    ``hessian_percentile`` is set the threshold is that percentile of the
    image's own eigenvalue magnitudes instead.
    """

    hessian_sigma: float = 0.8
    hessian_threshold: float = 0.2
    hessian_percentile: float | None = None
    erosion_size: int = 3
    min_marker_area: int = 12
    laplacian_sigma: float = 0.5
    laplacian_epsilon: float = 1.0
    interior_band: int = 2

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc) -> "DetectionConfig":
        return cls(**doc)


def hessian_magnitude(image_data: np.ndarray, sigma: float) -> np.ndarray:
    """Largest-magnitude eigenvalue of the Gaussian-derivative Hessian, per pixel."""
    x = np.asarray(image_data, dtype=np.float64)
    hrr = ndi.gaussian_filter(x, sigma, order=(2, 0), mode="nearest")
    hcc = ndi.gaussian_filter(x, sigma, order=(0, 2), mode="nearest")
    hrc = ndi.gaussian_filter(x, sigma, order=(1, 1), mode="nearest")
    half_trace = 0.5 * (hrr + hcc)
    root = np.sqrt(0.25 * (hrr - hcc) ** 2 + hrc**2)
    return np.maximum(np.abs(half_trace + root), np.abs(half_trace - root))


def boundary_mask(image_data: np.ndarray, config: DetectionConfig = DetectionConfig(), magnitude=None) -> np.ndarray:
    """One-pixel boundary lines of a piecewise-constant image."""
    mag = hessian_magnitude(image_data, config.hessian_sigma) if magnitude is None else magnitude
    if config.hessian_percentile is not None:
        tau = np.percentile(mag, config.hessian_percentile)
    else:
        tau = config.hessian_threshold
    band = mag > tau
    if config.erosion_size > 1:
        # erosion keeps seeds; reconstruction restores thin lines attached to them,
        # so only isolated specks disappear
        seeds = ndi.binary_erosion(band, structure=np.ones((config.erosion_size,) * 2, dtype=bool))
        band = ndi.binary_propagation(seeds, mask=band, structure=np.ones((3, 3), dtype=bool))
    # edge padding stops thinning from pulling lines back from the frame
    pad = 4 * config.erosion_size + 8
    return skeletonize(np.pad(band, pad, mode="edge"))[pad:-pad, pad:-pad]


def detect_regions(image: GrayImage, config: DetectionConfig = DetectionConfig()) -> RegionMap:
    """Recover the tessellation of a (possibly generated) Voronoi realization.

    Returns every pixel assigned to a region; areas are pixel counts and shades
    are region medians.
    """
    data = image.data
    mag = hessian_magnitude(data, config.hessian_sigma)
    lines = boundary_mask(data, config, magnitude=mag)
    markers, n = ndi.label(~lines)  # 4-connected flood fill
    sizes = np.bincount(markers.ravel(), minlength=n + 1)
    keep = sizes >= config.min_marker_area
    keep[0] = False
    if not keep.any():
        markers = np.ones(data.shape, dtype=np.int64)
    else:
        lut = np.zeros(n + 1, dtype=np.int64)
        lut[keep] = np.arange(1, int(keep.sum()) + 1)
        markers = lut[markers]
    labels = watershed(mag, markers=markers)
    count = int(labels.max())
    areas = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    shades = np.asarray(ndi.median(data, labels=labels, index=np.arange(1, count + 1)), dtype=np.float64).reshape(-1)
    return RegionMap(labels.astype(np.int64), areas.astype(np.int64), shades)


def area_shade_rho(region_map: RegionMap) -> float:
    """Spearman correlation of region area with region shade."""
    return stats.spearman_rho(region_map.area_shade_pairs())


# ------------------------------------------------------------------- artifacts


def laplacian_zero_crossings(image: GrayImage, region_map: RegionMap | None = None, config: DetectionConfig = DetectionConfig()):
    """Zero-crossing map of the smoothed Laplacian and its density inside regions.

    A pixel crosses zero when its Laplacian sign differs from a 4-neighbour's and
    the two values differ by more than ``laplacian_epsilon``. The density is taken
    over pixels further than ``interior_band`` from the boundaries of
    ``region_map`` (recovered with ``detect_regions`` when not supplied).
    """
    x = image.data.astype(np.float64)
    if config.laplacian_sigma > 0:
        x = ndi.gaussian_filter(x, config.laplacian_sigma, mode="nearest")
    lap = ndi.laplace(x, mode="nearest")
    sign = np.sign(lap)
    crossing = np.zeros(lap.shape, dtype=bool)
    for axis in (0, 1):
        a = [slice(None), slice(None)]
        b = [slice(None), slice(None)]
        a[axis] = slice(1, None)
        b[axis] = slice(None, -1)
        a, b = tuple(a), tuple(b)
        hit = (sign[a] != sign[b]) & (np.abs(lap[a] - lap[b]) > config.laplacian_epsilon)
        crossing[a] |= hit
        crossing[b] |= hit
    if region_map is None:
        region_map = detect_regions(image, config)
    edges = region_map.boundary_mask()
    if config.interior_band > 0:
        edges = ndi.binary_dilation(edges, iterations=config.interior_band)
    interior = ~edges
    density = float(crossing[interior].mean()) if interior.any() else 0.0
    return crossing, density


# ------------------------------------------------------------------ class bins

DEFAULT_BIN_EDGES = tuple(REGIONS_PER_CLASS * k + REGIONS_PER_CLASS // 2 for k in range(1, N_CLASSES))


@dataclass(frozen=True)
class ClassBins:
    """Seven ascending region-count edges; bin k is ``[edge[k-1], edge[k])``."""

    edges: tuple = DEFAULT_BIN_EDGES
    calibrated: bool = True

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        if len(edges) != N_CLASSES - 1 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("need 7 strictly increasing bin edges")
        object.__setattr__(self, "edges", edges)

    def to_json(self) -> dict:
        return {"edges": list(self.edges)}

    @classmethod
    def from_json(cls, doc) -> "ClassBins":
        return cls(tuple(doc["edges"]))


def class_from_count(region_count: int, bins: ClassBins | None) -> int:
    """Class whose closed-left bin holds ``region_count``; beyond the last edge is class 8."""
    if bins is None or not bins.calibrated:
        raise ValueError("class bins are not calibrated")
    return int(np.searchsorted(np.asarray(bins.edges), region_count, side="right")) + 1


def calibrate_class_bins(counts, labels) -> ClassBins:
    """Edges between neighbouring classes that minimize their pairwise confusion.

    ``counts`` are recovered region counts of a reference ensemble with known
    ``labels``. Each edge is the integer cut between class k and k+1 with the
    fewest misassigned realizations (ties resolved to the midpoint of the tied run).
    """
    counts = np.asarray(counts, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    edges = []
    lo = 0
    for k in range(1, N_CLASSES):
        below = counts[labels == k]
        above = counts[labels == k + 1]
        if below.size == 0 or above.size == 0:
            raise ValueError(f"reference ensemble lacks class {k} or {k + 1}")
        cands = np.arange(max(lo + 1, int(min(below.min(), above.min()))), int(max(below.max(), above.max())) + 2)
        errors = np.array([(below >= c).sum() + (above < c).sum() for c in cands])
        best = np.flatnonzero(errors == errors.min())
        edge = int(cands[best[len(best) // 2]])
        edges.append(edge)
        lo = edge
    return ClassBins(tuple(edges))


# ------------------------------------------------------------------ prevalence


class PrevalenceRow(NamedTuple):
    training_classes: tuple
    prevalence_percent: np.ndarray  # index k -> class k + 1
    n_evaluated: int
    failures: list


def prevalence_from_counts(training_classes, region_counts, bins: ClassBins, failures=()) -> PrevalenceRow:
    """Table-1-style row from already recovered region counts."""
    classes = np.array([class_from_count(c, bins) for c in region_counts], dtype=np.int64)
    counts = np.bincount(classes - 1, minlength=N_CLASSES) if classes.size else np.zeros(N_CLASSES)
    pct = 100.0 * counts / max(classes.size, 1)
    return PrevalenceRow(tuple(sorted(training_classes)), pct, int(classes.size), list(failures))


def prevalence_experiment(training_classes, images, bins: ClassBins, config: DetectionConfig = DetectionConfig()) -> PrevalenceRow:
    """Class prevalence (%) of an ensemble after region detection and binning.

    ``images`` yields ``(realization_id, GrayImage)`` or is an EnsembleManifest;
    realizations whose loading or detection raises are listed in ``failures``
    instead of being dropped silently.
    """
    if hasattr(images, "entries"):
        images = _manifest_images(images)
    region_counts = []
    failures = []
    for rid, image in images:
        try:
            if isinstance(image, Exception):
                raise image
            region_counts.append(detect_regions(image, config).region_count)
        except Exception as exc:  # noqa: BLE001 - recorded per realization
            failures.append({"id": rid, "error": repr(exc)})
    return prevalence_from_counts(training_classes, region_counts, bins, failures)


def _manifest_images(manifest):
    from .raster import load_image

    for i, entry in enumerate(manifest.entries):
        try:
            yield i, load_image(manifest.resolve(entry), expected_size=(IMAGE_SIZE, IMAGE_SIZE))
        except Exception as exc:  # noqa: BLE001
            yield i, exc


def prevalence_row_csv(row: PrevalenceRow) -> str:
    """One Table-1-style CSV line: included classes, then prevalence (%) of classes 1..8."""
    included = " ".join(str(c) for c in row.training_classes)
    return ",".join([f'"{included}"'] + [f"{p:.2f}" for p in row.prevalence_percent])


def save_region_map(region_map: RegionMap, stem) -> tuple[Path, Path]:
    """Write ``<stem>.png`` (16-bit labels) and ``<stem>.json`` (region table)."""
    stem = Path(stem)
    png = stem.with_suffix(".png")
    table = stem.with_suffix(".json")
    save_label_png(region_map.labels, png)
    with open(table, "w") as fh:
        json.dump(region_map.to_json(), fh, indent=1)
        fh.write("\n")
    return png, table


def load_region_map(stem) -> RegionMap:
    stem = Path(stem)
    labels = load_label_png(stem.with_suffix(".png")).astype(np.int64)
    with open(stem.with_suffix(".json")) as fh:
        doc = json.load(fh)
    regions = sorted(doc["regions"], key=lambda r: r["label"])
    areas = np.array([r["area"] for r in regions])
    shades = np.array([r["shade"] for r in regions], dtype=np.float64)
    return RegionMap(labels, areas, shades)
