"""Eight-class flags SOM: generation, tile classifier and per-realization validators."""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple

import numpy as np

from . import stats
from .raster import IMAGE_SIZE, GrayImage

GRID = 16
CELL = IMAGE_SIZE // GRID
N_FOREGROUND_CELLS = 80
MIN_FORBIDDEN_CELLS = 24
TILE_THRESHOLD = 140.0
N_CLASSES = 8


@dataclass(frozen=True)
class FlagTemplate:
    class_id: int
    foreground: np.ndarray  # (16, 16) bool

    def pixel_mask(self) -> np.ndarray:
        return np.kron(self.foreground, np.ones((CELL, CELL), dtype=bool))


class TemplateSet:
    """The eight class templates, validated on construction."""

    def __init__(self, templates):
        self.templates = sorted(templates, key=lambda t: t.class_id)
        ids = [t.class_id for t in self.templates]
        if ids != list(range(1, len(ids) + 1)):
            raise ValueError(f"class ids must be 1..n, got {ids}")
        grids = self.grids
        if grids.shape[1:] != (GRID, GRID):
            raise ValueError("templates must be 16x16 grids")
        counts = grids.sum(axis=(1, 2))
        if np.any(counts != N_FOREGROUND_CELLS):
            raise ValueError(f"every template needs exactly {N_FOREGROUND_CELLS} foreground cells, got {counts}")
        flat = grids.reshape(len(ids), -1)
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                if np.array_equal(flat[i], flat[j]):
                    raise ValueError(f"templates {i + 1} and {j + 1} are identical")
        if self.forbidden.sum() < MIN_FORBIDDEN_CELLS:
            raise ValueError(f"fewer than {MIN_FORBIDDEN_CELLS} never-foreground cells")

    @property
    def grids(self) -> np.ndarray:
        return np.stack([t.foreground for t in self.templates])

    @property
    def forbidden(self) -> np.ndarray:
        """Cells that are background in every class."""
        return ~self.grids.any(axis=0)

    def __getitem__(self, class_id: int) -> FlagTemplate:
        return self.templates[class_id - 1]

    def __len__(self) -> int:
        return len(self.templates)

    @classmethod
    def from_json(cls, doc) -> "TemplateSet":
        return cls(FlagTemplate(int(k), np.array(v, dtype=bool)) for k, v in doc["templates"].items())

    @classmethod
    def load(cls, path=None) -> "TemplateSet":
        if path is None:
            text = resources.files("somgen").joinpath("data/flag_templates.json").read_text()
        else:
            with open(path) as fh:
                text = fh.read()
        return cls.from_json(json.loads(text))


_DEFAULT_TEMPLATES = None


def default_templates() -> TemplateSet:
    global _DEFAULT_TEMPLATES
    if _DEFAULT_TEMPLATES is None:
        _DEFAULT_TEMPLATES = TemplateSet.load()
    return _DEFAULT_TEMPLATES


def generate_flags(class_id: int, stream: np.random.Generator, templates: TemplateSet | None = None) -> GrayImage:
    """One realization: Beta foreground variates scattered over the class's squares."""
    templates = templates or default_templates()
    if not 1 <= class_id <= len(templates):
        raise ValueError(f"class_id must be in 1..{len(templates)}")
    mask = templates[class_id].pixel_mask().ravel()
    fg_slots = np.flatnonzero(mask)
    bg_slots = np.flatnonzero(~mask)
    fg = stats.sample_scaled_beta(stats.FOREGROUND, stream, fg_slots.size)
    bg = stats.sample_scaled_beta(stats.BACKGROUND, stream, bg_slots.size)
    img = np.empty(IMAGE_SIZE * IMAGE_SIZE, dtype=np.uint8)
    img[stream.permutation(fg_slots)] = fg
    img[stream.permutation(bg_slots)] = bg
    return GrayImage(img.reshape(IMAGE_SIZE, IMAGE_SIZE))


@dataclass(frozen=True)
class FlagsRecovery:
    class_id: int
    recovered_foreground: np.ndarray
    template_mae: float
    perfect_match: bool

    def pixel_mask(self) -> np.ndarray:
        return np.kron(self.recovered_foreground, np.ones((CELL, CELL), dtype=bool))


def tile_means(image: GrayImage) -> np.ndarray:
    return image.data.reshape(GRID, CELL, GRID, CELL).mean(axis=(1, 3))


def classify_flags(image: GrayImage, templates: TemplateSet | None = None, threshold: float = TILE_THRESHOLD) -> FlagsRecovery:
    """Threshold tile means, then pick the template with the smallest mean absolute error."""
    templates = templates or default_templates()
    if image.data.shape != (IMAGE_SIZE, IMAGE_SIZE):
        raise ValueError("flags images are 256x256")
    recovered = tile_means(image) > threshold
    maes = (templates.grids != recovered[None]).mean(axis=(1, 2))
    best = int(np.argmin(maes))  # first minimum -> lowest class id
    return FlagsRecovery(best + 1, recovered, float(maes[best]), bool(maes[best] == 0.0))


def forbidden_violations(recovery: FlagsRecovery, templates: TemplateSet | None = None) -> int:
    templates = templates or default_templates()
    return int((recovery.recovered_foreground & templates.forbidden).sum())


# ------------------------------------------------------------------ intensities

N_BINS = 32
FG_EDGES = stats.support_edges(stats.FOREGROUND, N_BINS)
BG_EDGES = stats.support_edges(stats.BACKGROUND, N_BINS)
FG_EXPECTED = stats.beta_histogram(stats.FOREGROUND, FG_EDGES)
BG_EXPECTED = stats.beta_histogram(stats.BACKGROUND, BG_EDGES)


def intensity_chi2(image: GrayImage, recovery: FlagsRecovery) -> tuple[float, float]:
    """Chi-square of foreground and background pixels against their Beta specs."""
    mask = recovery.pixel_mask()
    fg = stats.Histogram.from_values(image.data[mask], FG_EDGES)
    bg = stats.Histogram.from_values(image.data[~mask], BG_EDGES)
    fg_chi2 = stats.chi_square_gof(fg, FG_EXPECTED) if fg.total > 0 else float("inf")
    bg_chi2 = stats.chi_square_gof(bg, BG_EXPECTED) if bg.total > 0 else float("inf")
    return fg_chi2, bg_chi2


class IntensityResult(NamedTuple):
    fg_chi2: float
    bg_chi2: float
    fg_pass: bool
    bg_pass: bool


def validate_intensities(image, recovery, fg_tolerance, bg_tolerance) -> IntensityResult:
    if fg_tolerance is None or bg_tolerance is None:
        raise ValueError("missing calibration: foreground and background tolerances are required")
    fg_chi2, bg_chi2 = intensity_chi2(image, recovery)
    return IntensityResult(fg_chi2, bg_chi2, fg_tolerance.accepts(fg_chi2), bg_tolerance.accepts(bg_chi2))


def calibrate_intensity_tolerances(images, percentile: float = 0.995, templates=None):
    """Tolerances from true realizations; returns (fg, bg) ToleranceCalibration."""
    fg_stats, bg_stats = [], []
    for image in images:
        rec = classify_flags(image, templates)
        f, b = intensity_chi2(image, rec)
        fg_stats.append(f)
        bg_stats.append(b)
    return (
        stats.calibrate_tolerance(fg_stats, percentile, "flags_fg_chi2"),
        stats.calibrate_tolerance(bg_stats, percentile, "flags_bg_chi2"),
    )


# ------------------------------------------------------------------- randomness


class RandomnessResult(NamedTuple):
    violating_tiles: int
    passed: bool
    fg_violations: int
    bg_violations: int
    degenerate_tiles: int


def validate_randomness(
    image: GrayImage,
    recovery: FlagsRecovery,
    per_tile_alpha: float = 0.05,
    max_violations: int = 3,
    bonferroni: bool = True,
) -> RandomnessResult:
    """Count tiles whose Moran's I falls outside the two-sided randomization-null region.

    With ``bonferroni`` the level is shared across the tested tiles (alpha / n_tiles)
    so that ``per_tile_alpha`` controls the false alarm rate of a whole realization.
    Zero-variance tiles are reported separately and never count as violations.
    """
    _, z = stats.tile_moran_scores(image.data, CELL)
    degenerate = np.isnan(z)
    n_tested = int((~degenerate).sum())
    level = per_tile_alpha / max(n_tested, 1) if bonferroni else per_tile_alpha
    critical = stats.sps.norm.isf(level / 2.0)
    violating = np.zeros_like(degenerate)
    violating[~degenerate] = np.abs(z[~degenerate]) > critical
    fg = recovery.recovered_foreground
    n_viol = int(violating.sum())
    return RandomnessResult(
        n_viol,
        n_viol < max_violations,
        int((violating & fg).sum()),
        int((violating & ~fg).sum()),
        int(degenerate.sum()),
    )


# ------------------------------------------------------------------- prevalence


class Prevalence(NamedTuple):
    fractions: np.ndarray  # index k -> class k + 1
    std: float
    n: int


def class_prevalence(labels, n_classes: int = N_CLASSES) -> Prevalence:
    labels = np.asarray(list(labels), dtype=np.int64)
    if labels.size == 0:
        raise ValueError("no labels")
    if labels.min() < 1 or labels.max() > n_classes:
        raise ValueError(f"labels must lie in 1..{n_classes}")
    counts = np.bincount(labels - 1, minlength=n_classes)
    fractions = counts / labels.size
    return Prevalence(fractions, float(fractions.std()), int(labels.size))
