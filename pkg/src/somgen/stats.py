"""Statistical kernels shared by all SOM validators.

Scaled Beta sampling and its discretized pmf, chi-square goodness of fit with
small-bin merging, percentile-calibrated tolerances, Moran's I under the
randomization null, Spearman rank correlation, quantile pairs and the Frechet
distance between Gaussian summaries of feature ensembles.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special
from scipy import stats as sps

from . import kernels


class DegenerateError(ValueError):
    """Input has zero variance where a statistic needs spread."""


class UndefinedStatisticError(ValueError):
    pass


class FrechetError(ValueError):
    pass


# --------------------------------------------------------------------------- Beta


@dataclass(frozen=True)
class BetaSpec:
    """Beta(alpha, beta) stretched onto the interval (loc, loc + scale)."""

    alpha: float
    beta: float
    loc: float
    scale: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"Beta shape parameters must be positive, got {self.alpha}, {self.beta}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def support(self) -> tuple[int, int]:
        """Integer range reachable after rounding, one level inside each open end."""
        return int(np.ceil(self.loc)) + 1, int(np.floor(self.loc + self.scale)) - 1

    @property
    def mean(self) -> float:
        return self.loc + self.scale * self.alpha / (self.alpha + self.beta)

    @property
    def variance(self) -> float:
        a, b = self.alpha, self.beta
        return self.scale**2 * a * b / ((a + b) ** 2 * (a + b + 1))

    def pmf(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer values and their probabilities under round-then-clip."""
        lo, hi = self.support
        values = np.arange(lo, hi + 1)
        upper = np.clip((values + 0.5 - self.loc) / self.scale, 0.0, 1.0)
        cdf = special.betainc(self.alpha, self.beta, upper)
        cdf[-1] = 1.0
        probs = np.diff(np.concatenate(([0.0], cdf)))
        return values, probs


FOREGROUND = BetaSpec(4, 2, 96, 152)
BACKGROUND = BetaSpec(2, 4, 8, 192)


def sample_scaled_beta(spec: BetaSpec, stream: np.random.Generator, size=None):
    """Draw integer intensities ``round(loc + scale * B)``, B ~ Beta(alpha, beta).

    Results are clipped to ``spec.support`` so they never touch the open
    interval's end points.
    """
    if spec.loc < 0 or spec.loc + spec.scale > 256:
        raise ValueError("scaled Beta support must lie within 0..256")
    b = stream.beta(spec.alpha, spec.beta, size=size)
    lo, hi = spec.support
    out = np.clip(np.rint(spec.loc + spec.scale * b), lo, hi).astype(np.int64)
    if size is None:
        return int(out)
    return out


def mixture_pmf(components) -> np.ndarray:
    """pmf over 0..255 of a weighted mixture ``[(weight, BetaSpec), ...]``."""
    pmf = np.zeros(256)
    total = sum(w for w, _ in components)
    for weight, spec in components:
        values, probs = spec.pmf()
        pmf[values] += weight / total * probs
    return pmf


FLAGS_MIXTURE = ((80, FOREGROUND), (176, BACKGROUND))

# ----------------------------------------------------------------- histograms & chi2


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        counts = np.asarray(self.counts, dtype=np.float64)
        if edges.ndim != 1 or counts.ndim != 1 or len(edges) != len(counts) + 1:
            raise ValueError("need len(bin_edges) == len(counts) + 1")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_values(cls, values, bin_edges) -> "Histogram":
        counts, _ = np.histogram(np.asarray(values).ravel(), bins=bin_edges)
        return cls(bin_edges, counts)

    @property
    def total(self) -> float:
        return float(self.counts.sum())


def support_edges(spec: BetaSpec, n_bins: int = 32) -> np.ndarray:
    """Equal-width bin edges spanning the integer support of ``spec``."""
    lo, hi = spec.support
    return np.linspace(lo - 0.5, hi + 0.5, n_bins + 1)


def beta_histogram(spec: BetaSpec, bin_edges) -> Histogram:
    """Expected bin probabilities of the discretized scaled Beta."""
    values, probs = spec.pmf()
    counts, _ = np.histogram(values, bins=bin_edges, weights=probs)
    return Histogram(bin_edges, counts)


def _merge_small(expected: np.ndarray, observed: np.ndarray, min_expected: float):
    groups_e, groups_o = [], []
    acc_e = acc_o = 0.0
    for e, o in zip(expected, observed):
        acc_e += e
        acc_o += o
        if acc_e >= min_expected:
            groups_e.append(acc_e)
            groups_o.append(acc_o)
            acc_e = acc_o = 0.0
    if acc_e > 0 or acc_o > 0:
        if groups_e:
            groups_e[-1] += acc_e
            groups_o[-1] += acc_o
        else:
            groups_e.append(acc_e)
            groups_o.append(acc_o)
    return np.array(groups_e), np.array(groups_o)


def chi_square_gof(observed: Histogram, expected, min_expected: float = 5.0) -> float:
    """Pearson statistic of ``observed`` against ``expected``.

    ``expected`` is a Histogram on the same edges or an array of per-bin
    probabilities/counts; it is rescaled to the observed total. Adjacent bins
    are merged left to right until each group expects at least ``min_expected``.
    """
    if isinstance(expected, Histogram):
        if expected.bin_edges.shape != observed.bin_edges.shape or not np.allclose(
            expected.bin_edges, observed.bin_edges
        ):
            raise ValueError("incompatible binning")
        exp = expected.counts
    else:
        exp = np.asarray(expected, dtype=np.float64)
        if exp.shape != observed.counts.shape:
            raise ValueError("incompatible binning")
    n = observed.total
    if n <= 0:
        raise ValueError("empty observation")
    if exp.sum() <= 0:
        raise ValueError("expected distribution has no mass")
    exp = exp * (n / exp.sum())
    e, o = _merge_small(exp, observed.counts, min_expected)
    keep = e > 0
    if np.any(o[~keep] > 0):
        return float("inf")
    return float(np.sum((o[keep] - e[keep]) ** 2 / e[keep]))


@dataclass(frozen=True)
class ToleranceCalibration:
    statistic_name: str
    percentile: float
    threshold: float
    calibration_size: int

    def accepts(self, value: float) -> bool:
        return value <= self.threshold

    def to_json(self) -> dict:
        return {
            "statistic_name": self.statistic_name,
            "percentile": self.percentile,
            "threshold": self.threshold,
            "calibration_size": self.calibration_size,
        }

    @classmethod
    def from_json(cls, doc) -> "ToleranceCalibration":
        return cls(doc["statistic_name"], float(doc["percentile"]), float(doc["threshold"]), int(doc["calibration_size"]))


def calibrate_tolerance(statistics, percentile: float, statistic_name: str = "chi2") -> ToleranceCalibration:
    values = np.asarray(list(statistics), dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot calibrate on an empty sample")
    if not 0 < percentile < 1:
        raise ValueError("percentile must be a fraction in (0, 1)")
    threshold = float(np.percentile(values, 100.0 * percentile, method="linear"))
    return ToleranceCalibration(statistic_name, percentile, threshold, int(values.size))


# ------------------------------------------------------------------------- Moran


def rook_weight_sums(side: int) -> tuple[float, float, float]:
    """S0, S1, S2 of binary rook weights on a ``side`` x ``side`` grid."""
    s0 = 4.0 * side * (side - 1)
    s1 = 2.0 * s0
    inner = max(side - 2, 0)
    if side == 1:
        degrees_sq = 0.0
    else:
        degrees_sq = 4 * 2**2 + 4 * inner * 3**2 + inner**2 * 4**2
    return s0, s1, 4.0 * degrees_sq


def morans_index(tile) -> float:
    """Global Moran's I of a square tile with binary rook weights, no wraparound."""
    x = np.asarray(tile, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("tile must be 2-D")
    z = x - x.mean()
    m2 = float((z * z).sum())
    if m2 == 0.0:
        raise DegenerateError("zero-variance tile")
    cross = float((z[:, 1:] * z[:, :-1]).sum() + (z[1:, :] * z[:-1, :]).sum())
    h, w = x.shape
    s0 = 2.0 * (h * (w - 1) + w * (h - 1))
    return (x.size / s0) * 2.0 * cross / m2


def moran_null_moments(n: int, s0: float, s1: float, s2: float, b2):
    """Mean and variance of I under the randomization null (sample kurtosis ``b2``)."""
    b2 = np.asarray(b2, dtype=np.float64)
    expected = -1.0 / (n - 1)
    num = n * ((n * n - 3 * n + 3) * s1 - n * s2 + 3 * s0 * s0) - b2 * ((n * n - n) * s1 - 2 * n * s2 + 6 * s0 * s0)
    var = num / ((n - 1) * (n - 2) * (n - 3) * s0 * s0) - expected**2
    return expected, var


def tile_moran_scores(image_data: np.ndarray, tile: int = 16):
    """Moran's I and randomization z-score of every tile; NaN marks degenerate tiles."""
    data = np.ascontiguousarray(image_data, dtype=np.uint8)
    moran, b2 = kernels.tile_moran(data, tile)
    s0, s1, s2 = rook_weight_sums(tile)
    expected, var = moran_null_moments(tile * tile, s0, s1, s2, b2)
    with np.errstate(invalid="ignore"):
        z = (moran - expected) / np.sqrt(var)
    return moran, z


# ---------------------------------------------------------------------- Spearman


def spearman_rho(pairs) -> float:
    """Pearson correlation of average ranks."""
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ValueError("need at least two (x, y) pairs")
    rx = sps.rankdata(arr[:, 0])
    ry = sps.rankdata(arr[:, 1])
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        raise UndefinedStatisticError("rank correlation undefined for a constant variable")
    rx -= rx.mean()
    ry -= ry.mean()
    rho = float((rx * ry).sum() / np.sqrt((rx * rx).sum() * (ry * ry).sum()))
    return min(1.0, max(-1.0, rho))


# --------------------------------------------------------------------------- QQ


def qq_probabilities(n_quantiles: int) -> np.ndarray:
    return (np.arange(n_quantiles) + 0.5) / n_quantiles


def qq_pairs(sample_a, sample_b, n_quantiles: int = 100) -> np.ndarray:
    """Matched empirical quantiles, shape (n_quantiles, 2)."""
    a = np.asarray(sample_a, dtype=np.float64).ravel()
    b = np.asarray(sample_b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    p = qq_probabilities(n_quantiles)
    return np.column_stack([np.quantile(a, p), np.quantile(b, p)])


def quantiles_from_counts(counts, probs) -> np.ndarray:
    """Inverse-CDF quantiles of integer values 0..len(counts)-1 weighted by ``counts``."""
    counts = np.asarray(counts, dtype=np.float64)
    cdf = np.cumsum(counts)
    if cdf[-1] <= 0:
        raise ValueError("empty sample")
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, np.asarray(probs) - 1e-12, side="left")
    return np.minimum(idx, len(counts) - 1).astype(np.float64)


def intensity_density(counts) -> tuple[np.ndarray, np.ndarray]:
    """Histogram density curve over 0..255 for plotting."""
    counts = np.asarray(counts, dtype=np.float64)
    return np.arange(len(counts)), counts / max(counts.sum(), 1.0)


# ---------------------------------------------------------------------- Frechet


@dataclass(frozen=True)
class GaussianSummary:
    mean: np.ndarray
    covariance: np.ndarray
    n: int = 0

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        if cov.shape != (mu.size, mu.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {mu.size}")
        scale = max(1.0, float(np.abs(cov).max(initial=0.0)))
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-9 * scale):
            raise ValueError("covariance is not symmetric")
        if np.linalg.eigvalsh(cov).min(initial=0.0) < -1e-8 * scale:
            raise ValueError("covariance is not positive semidefinite")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "covariance", 0.5 * (cov + cov.T))

    @classmethod
    def from_features(cls, features) -> "GaussianSummary":
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 2:
            raise ValueError("need a (n_samples >= 2, n_features) matrix")
        return cls(x.mean(axis=0), np.atleast_2d(np.cov(x, rowvar=False)), x.shape[0])

    @property
    def dim(self) -> int:
        return self.mean.size


def _psd_sqrt(mat: np.ndarray, floor: float = 1e-10) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    vals = np.where(vals < floor, 0.0, vals)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: GaussianSummary, b: GaussianSummary) -> float:
    """Squared 2-Wasserstein distance between N(mu_a, S_a) and N(mu_b, S_b).

    ``|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))``; the trace of the
    cross term is taken from the symmetric product ``S_a^(1/2) S_b S_a^(1/2)``.
    """
    if a.dim != b.dim:
        raise FrechetError(f"dimension mismatch: {a.dim} vs {b.dim}")
    try:
        root_a = _psd_sqrt(a.covariance)
        middle = root_a @ b.covariance @ root_a
        vals = np.linalg.eigvalsh(0.5 * (middle + middle.T))
    except np.linalg.LinAlgError as exc:
        raise FrechetError(f"matrix square root did not converge: {exc}") from exc
    vals = np.where(vals < 1e-10, 0.0, vals)
    diff = a.mean - b.mean
    d = float(diff @ diff + np.trace(a.covariance) + np.trace(b.covariance) - 2.0 * np.sqrt(vals).sum())
    return max(d, 0.0)


def load_features(path) -> np.ndarray:
    """Read a feature matrix: CSV (one row per image, '#' comments) or ``.npy``."""
    path = Path(path)
    if path.suffix == ".npy":
        x = np.load(path)
    else:
        x = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if x.ndim != 2:
        raise ValueError(f"{path}: expected a 2-D feature matrix")
    return x.astype(np.float64)


def save_features(features, path) -> None:
    np.savetxt(path, np.asarray(features, dtype=np.float64), delimiter=",", fmt="%.10g")
