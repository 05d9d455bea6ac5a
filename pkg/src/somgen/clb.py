"""Clustered lumpy background (CLB) generator and its second-order diagnostic."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from importlib import resources

import numpy as np

from . import kernels
from .raster import IMAGE_SIZE, GrayImage, rng_stream
from .stats import DegenerateError

CONFIG_SCHEMA_VERSION = 1
MIN_AUTOCORR_REALIZATIONS = 100


@dataclass(frozen=True)
class ClbNormalization:
    """Fixed affine map from accumulator units to 8-bit: ``low -> 0``, ``high -> 255``."""

    low: float
    high: float
    pilot_size: int = 0

    def __post_init__(self):
        if not self.high > self.low:
            raise ValueError("normalization needs high > low")

    def apply(self, acc: np.ndarray) -> np.ndarray:
        scaled = (acc - self.low) * (255.0 / (self.high - self.low))
        return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class ClbParams:
    """CLB parameters; ``mean_clusters`` is the Poisson mean for a ``reference_size`` square frame."""

    mean_clusters: float = 150.0
    mean_lumps_per_cluster: float = 20.0
    cluster_spread: float = 12.0
    lump_length: float = 5.0
    lump_width: float = 2.0
    alpha_exp: float = 2.1
    beta_exp: float = 0.5
    amplitude: float = 1.0
    reference_size: int = 200
    truncation_lengths: float = 6.0
    margin_spreads: float = 3.0
    normalization: ClbNormalization | None = None

    def __post_init__(self):
        if self.normalization is not None and not isinstance(self.normalization, ClbNormalization):
            object.__setattr__(self, "normalization", ClbNormalization(**self.normalization))
        positive = ("mean_lumps_per_cluster", "cluster_spread", "lump_length", "lump_width", "alpha_exp", "beta_exp", "amplitude", "reference_size")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.mean_clusters < 0 or self.truncation_lengths <= 0 or self.margin_spreads < 0:
            raise ValueError("mean_clusters, truncation_lengths and margin_spreads must be non-negative")

    @property
    def margin(self) -> float:
        return self.margin_spreads * self.cluster_spread

    @property
    def radius(self) -> int:
        return int(math.ceil(self.truncation_lengths * max(self.lump_length, self.lump_width)))

    def expected_clusters(self, height: int = IMAGE_SIZE, width: int = IMAGE_SIZE) -> float:
        """Mean cluster count with centres inside a ``height x width`` frame."""
        return self.mean_clusters * height * width / float(self.reference_size**2)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["schema_version"] = CONFIG_SCHEMA_VERSION
        return doc

    @classmethod
    def from_json(cls, doc) -> "ClbParams":
        doc = dict(doc)
        version = doc.pop("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ValueError(f"unsupported clb_params schema_version {version}")
        doc.pop("source", None)
        doc.pop("pilot_seed", None)
        return cls(**doc)

    @classmethod
    def load(cls, path=None) -> "ClbParams":
        if path is None:
            text = resources.files("somgen").joinpath("data/clb_params.json").read_text()
        else:
            with open(path) as fh:
                text = fh.read()
        return cls.from_json(json.loads(text))


def clb_lumps(params: ClbParams, stream: np.random.Generator, height: int = IMAGE_SIZE, width: int = IMAGE_SIZE):
    """Lump centres and orientations for one realization, as ``(cx, cy, theta)``.

    Cluster centres cover the frame plus a margin on every side; the Poisson mean
    is scaled to that extended area so the cluster density matches the frame's.
    """
    m = params.margin
    ext_h, ext_w = height + 2 * m, width + 2 * m
    k = stream.poisson(params.mean_clusters * ext_h * ext_w / float(params.reference_size**2))
    centres_x = stream.uniform(-m, width + m, k)
    centres_y = stream.uniform(-m, height + m, k)
    n = stream.poisson(params.mean_lumps_per_cluster, k)
    total = int(n.sum())
    offsets = stream.normal(0.0, params.cluster_spread, (total, 2))
    cx = np.repeat(centres_x, n) + offsets[:, 0]
    cy = np.repeat(centres_y, n) + offsets[:, 1]
    theta = stream.uniform(0.0, 2.0 * np.pi, total)
    return cx, cy, theta


def clb_accumulator(params: ClbParams, stream: np.random.Generator, height: int = IMAGE_SIZE, width: int = IMAGE_SIZE, lumps=None) -> np.ndarray:
    """Float superposition of lump profiles before 8-bit quantization."""
    cx, cy, theta = clb_lumps(params, stream, height, width) if lumps is None else lumps
    acc = np.zeros((height, width), dtype=np.float64)
    kernels.splat_lumps(
        acc,
        np.ascontiguousarray(cx, dtype=np.float64),
        np.ascontiguousarray(cy, dtype=np.float64),
        np.ascontiguousarray(theta, dtype=np.float64),
        params.amplitude,
        params.alpha_exp,
        params.beta_exp,
        params.lump_length,
        params.lump_width,
        params.radius,
    )
    return acc


def generate_clb(params: ClbParams, stream: np.random.Generator, size: int = IMAGE_SIZE) -> GrayImage:
    if params.normalization is None:
        raise ValueError("CLB parameters carry no 8-bit normalization; run calibrate_normalization first")
    return GrayImage(params.normalization.apply(clb_accumulator(params, stream, size, size)))


def calibrate_normalization(
    params: ClbParams,
    master_seed: int,
    n_images: int = 1000,
    size: int = IMAGE_SIZE,
    percentiles=(0.1, 99.9),
    stride: int = 4,
) -> ClbNormalization:
    """Affine map putting the pooled pilot-ensemble percentiles at 0 and 255.

    Each pilot image contributes every ``stride``-th pixel in both directions.
    """
    samples = []
    for i in range(n_images):
        acc = clb_accumulator(params, rng_stream(master_seed, i), size, size)
        samples.append(acc[::stride, ::stride].ravel())
    low, high = np.percentile(np.concatenate(samples), percentiles)
    return ClbNormalization(float(low), float(high), n_images)


def with_normalization(params: ClbParams, normalization: ClbNormalization) -> ClbParams:
    return replace(params, normalization=normalization)


# ------------------------------------------------------------- diagnostics


def _as_arrays(images):
    if hasattr(images, "iter_images"):
        images = (im for _, im in images.iter_images())
    for im in images:
        yield (im.data if isinstance(im, GrayImage) else np.asarray(im)).astype(np.float64)


def radial_autocorrelation(images, max_lag: int = 32) -> np.ndarray:
    """Ensemble- and rotation-averaged autocorrelation for lags ``0..max_lag``.

    ``images`` is an EnsembleManifest or an iterable of GrayImage/arrays.
    Deviations are taken from the ensemble mean pixel value; each lag averages the
    products of all pixel pairs at that displacement (no wraparound). Displacements
    are binned by rounded Euclidean length. The curve is 1 at lag 0.
    """
    arrays = list(_as_arrays(images))
    if len(arrays) < MIN_AUTOCORR_REALIZATIONS:
        raise ValueError(f"need at least {MIN_AUTOCORR_REALIZATIONS} realizations, got {len(arrays)}")
    h, w = arrays[0].shape
    mean = float(np.mean([a.mean() for a in arrays]))
    fh, fw = 2 * h, 2 * w
    prod = np.zeros((fh, fw // 2 + 1))
    for a in arrays:
        spec = np.fft.rfft2(a - mean, s=(fh, fw))
        prod += spec.real**2 + spec.imag**2
    prod = np.fft.irfft2(prod, s=(fh, fw))
    if prod[0, 0] <= 1e-9 * h * w * len(arrays):
        raise DegenerateError("ensemble has zero variance")
    ones = np.fft.rfft2(np.ones((h, w)), s=(fh, fw))
    overlap = np.rint(np.fft.irfft2(ones.real**2 + ones.imag**2, s=(fh, fw)))
    lag_y = np.fft.fftfreq(fh, 1.0 / fh)[:, None]
    lag_x = np.fft.fftfreq(fw, 1.0 / fw)[None, :]
    radius = np.rint(np.hypot(lag_y, lag_x)).astype(np.int64)
    valid = (radius <= max_lag) & (overlap > 0)
    cov = prod[valid] / (overlap[valid] * len(arrays))
    r = radius[valid]
    sums = np.bincount(r, weights=cov, minlength=max_lag + 1)
    counts = np.bincount(r, minlength=max_lag + 1)
    curve = sums / np.maximum(counts, 1)
    return curve / curve[0]
