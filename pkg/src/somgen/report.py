"""Ensemble generation, calibration, evaluation and comparison behind the CLI."""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, alphabet, clb, flags, kernels, stats, voronoi
from .raster import (
    IMAGE_SIZE,
    EnsembleManifest,
    GrayImage,
    ManifestEntry,
    label_stream,
    load_image,
    open_ensemble,
    realization_seed,
    rng_from_seed,
    rng_stream,
    save_image,
)

REPORT_SCHEMA_VERSION = 1
CALIBRATION_VERSION = 1
CLASS_SOMS = ("flags", "voronoi")
GENERATORS = ("clb", "flags", "voronoi", "alphabet")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    som: str = "flags"
    n: int = 0
    seed: int = 0
    classes: list | None = None  # None -> all eight
    weights: list | None = None  # prevalence weights over ``classes``; None -> uniform
    out: str | None = None
    jobs: int | None = None
    tolerance_percentile: float = 0.995
    per_tile_alpha: float = 0.05
    max_violations: int = 3
    bonferroni: bool = True
    detection: dict = field(default_factory=dict)
    artifact_threshold: float = 0.1
    calibration_size: int = 2000
    calibration_seed: int = 987_654_321
    reference_size: int = 20_000
    n_quantiles: int = 100
    cache_dir: str | None = None
    clb_params: str | None = None
    save_region_maps: bool = False

    def __post_init__(self):
        if self.som not in GENERATORS and self.som != "external":
            raise ConfigError(f"unknown som {self.som!r}")
        if self.classes is not None:
            self.classes = sorted(int(c) for c in self.classes)
            if not self.classes or any(not 1 <= c <= 8 for c in self.classes):
                raise ConfigError("classes must be a non-empty subset of 1..8")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if self.classes is None or w.size != len(self.classes):
                raise ConfigError("weights need one entry per listed class")
            if np.any(w < 0) or not np.any(w > 0):
                raise ConfigError("prevalence weights must be non-negative and not all zero")
        if not 0 < self.tolerance_percentile < 1:
            raise ConfigError("tolerance_percentile must lie in (0, 1)")

    @classmethod
    def from_sources(cls, path=None, **overrides) -> "RunConfig":
        """JSON config file, then overrides; ``None`` overrides are ignored (flags win)."""
        doc = {}
        if path is not None:
            with open(path) as fh:
                doc = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**doc)

    def detection_config(self) -> voronoi.DetectionConfig:
        return voronoi.DetectionConfig(**self.detection)

    def class_list(self) -> list:
        return list(self.classes) if self.classes is not None else list(range(1, 9))

    def worker_count(self) -> int:
        if self.jobs is not None:
            return max(1, int(self.jobs))
        env = os.environ.get("SOMGEN_JOBS")
        return max(1, int(env)) if env else 1


# ------------------------------------------------------------------ generation


def _clb_params(path) -> clb.ClbParams:
    return clb.ClbParams.load(path)


def generate_realization(som: str, class_label, stream, params: dict | None = None):
    """One realization of ``som``; returns ``(image, extra)`` where extra may be a RegionMap."""
    if som == "flags":
        return flags.generate_flags(class_label, stream), None
    if som == "voronoi":
        return voronoi.generate_voronoi(class_label, stream)
    if som == "alphabet":
        seq = alphabet.arrange_sequence(alphabet.DEFAULT_RULES, stream)
        return alphabet.render_alphabet(seq), seq
    if som == "clb":
        p = clb.ClbParams.from_json(params["clb"]) if params and "clb" in params else _clb_params(None)
        return clb.generate_clb(p, stream), None
    raise ConfigError(f"cannot generate som {som!r}")


def _generate_task(task):
    som, label, seed, path, params, region_stem = task
    image, extra = generate_realization(som, label, rng_from_seed(seed), params)
    save_image(image, path)
    if region_stem is not None and isinstance(extra, voronoi.RegionMap):
        voronoi.save_region_map(extra, region_stem)
    return path


def _pool_map(func, tasks, jobs: int, initializer=None, initargs=()):
    """Ordered map; results follow task order whatever the completion order."""
    if jobs <= 1 or len(tasks) <= 1:
        if initializer is not None:
            initializer(*initargs)
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs, initializer=initializer, initargs=initargs) as pool:
        return list(pool.map(func, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def draw_labels(config: RunConfig) -> list:
    if config.som not in CLASS_SOMS:
        return [None] * config.n
    classes = config.class_list()
    w = np.ones(len(classes)) if config.weights is None else np.asarray(config.weights, dtype=np.float64)
    picks = label_stream(config.seed).choice(len(classes), size=config.n, p=w / w.sum())
    return [int(classes[k]) for k in picks]


def cmd_generate(config: RunConfig) -> EnsembleManifest:
    """Write ``config.n`` realizations plus ``manifest.json`` into ``config.out``."""
    if config.n <= 0:
        raise ConfigError("ensemble size must be positive")
    if config.som not in GENERATORS:
        raise ConfigError(f"cannot generate som {config.som!r}")
    if not config.out:
        raise ConfigError("an output directory is required")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    params = {"classes": config.class_list() if config.som in CLASS_SOMS else None, "weights": config.weights}
    if config.som == "clb":
        params["clb"] = _clb_params(config.clb_params).to_json()
    if config.save_region_maps and config.som == "voronoi":
        (out / "regions").mkdir(exist_ok=True)
    labels = draw_labels(config)
    entries, tasks = [], []
    for i, label in enumerate(labels):
        seed = realization_seed(config.seed, i)
        name = f"{config.som}_{i:06d}.png"
        entries.append(ManifestEntry(name, label, seed))
        stem = str(out / "regions" / f"{config.som}_{i:06d}") if config.save_region_maps and config.som == "voronoi" else None
        tasks.append((config.som, label, seed, str(out / name), params, stem))
    _pool_map(_generate_task, tasks, config.worker_count())
    manifest = EnsembleManifest(config.som, config.seed, entries, params, root=out)
    manifest.save(out / "manifest.json")
    return manifest


def regenerate(manifest: EnsembleManifest, out_dir, jobs: int = 1) -> EnsembleManifest:
    """Rebuild every image of ``manifest`` from its per-entry seed into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(manifest.som_name, e.class_label, e.seed, str(out / e.path), manifest.generation_params, None) for e in manifest.entries]
    _pool_map(_generate_task, tasks, jobs)
    copy = EnsembleManifest(manifest.som_name, manifest.master_seed, list(manifest.entries), manifest.generation_params, root=out)
    copy.save(out / "manifest.json")
    return copy


# ----------------------------------------------------------------- calibration


def calibration_key(som: str, config: RunConfig) -> str:
    relevant = {"som": som, "version": CALIBRATION_VERSION, "seed": config.calibration_seed}
    if som == "flags":
        relevant.update(size=config.calibration_size, percentile=config.tolerance_percentile)
    elif som == "voronoi":
        relevant.update(size=config.calibration_size, detection=config.detection_config().to_json())
    elif som == "alphabet":
        relevant.update(size=config.reference_size)
    blob = json.dumps(relevant, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _voronoi_count_task(task):
    class_id, seed, det = task
    image, truth = voronoi.generate_voronoi(class_id, rng_from_seed(seed))
    return voronoi.detect_regions(image, voronoi.DetectionConfig(**det)).region_count


def build_calibration(som: str, config: RunConfig) -> dict:
    """Calibration artifacts derived from a true ensemble of ``som``."""
    seed = config.calibration_seed
    doc = {"som_name": som, "key": calibration_key(som, config)}
    if som == "flags":
        images = (flags.generate_flags(i % 8 + 1, rng_stream(seed, i)) for i in range(config.calibration_size))
        fg, bg = flags.calibrate_intensity_tolerances(images, config.tolerance_percentile)
        doc.update(fg_tolerance=fg.to_json(), bg_tolerance=bg.to_json())
    elif som == "voronoi":
        det = config.detection_config().to_json()
        labels = [i % 8 + 1 for i in range(config.calibration_size)]
        tasks = [(c, realization_seed(seed, i), det) for i, c in enumerate(labels)]
        counts = _pool_map(_voronoi_count_task, tasks, config.worker_count())
        doc["class_bins"] = voronoi.calibrate_class_bins(counts, labels).to_json()
        doc["calibration_size"] = config.calibration_size
    elif som == "alphabet":
        seqs = (alphabet.arrange_sequence(alphabet.DEFAULT_RULES, rng_stream(seed, i)) for i in range(config.reference_size))
        doc["position_reference"] = alphabet.PositionReference.from_sequences(seqs).to_json()
    elif som not in ("clb", "external"):
        raise ConfigError(f"unknown som {som!r}")
    return doc


def default_cache_dir() -> Path:
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(base) / "somgen"


def load_or_build_calibration(som: str, config: RunConfig, calib_path=None) -> dict:
    """Explicit calibration file, else the on-disk cache keyed by config hash, else build and cache."""
    if calib_path is not None:
        with open(calib_path) as fh:
            doc = json.load(fh)
        if doc.get("som_name") != som:
            raise ConfigError(f"calibration file is for {doc.get('som_name')!r}, not {som!r}")
        return doc
    cache = Path(config.cache_dir) if config.cache_dir else default_cache_dir()
    path = cache / f"{som}-{calibration_key(som, config)}.json"
    if path.exists():
        with open(path) as fh:
            return json.load(fh)
    doc = build_calibration(som, config)
    cache.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
    os.replace(tmp, path)
    return doc


# ------------------------------------------------------------------ evaluation

_CTX: dict = {}


def _init_context(ctx):
    _CTX.clear()
    _CTX.update(ctx)


def _flags_row(image: GrayImage, label):
    rec = flags.classify_flags(image)
    row = {
        "class_recovered": rec.class_id,
        "perfect_match": rec.perfect_match,
        "template_mae": rec.template_mae,
        "forbidden_violations": flags.forbidden_violations(rec),
    }
    if not rec.perfect_match:
        row["excluded"] = "imperfect_template_match"
        return row
    fg_tol = stats.ToleranceCalibration.from_json(_CTX["calibration"]["fg_tolerance"])
    bg_tol = stats.ToleranceCalibration.from_json(_CTX["calibration"]["bg_tolerance"])
    ir = flags.validate_intensities(image, rec, fg_tol, bg_tol)
    rr = flags.validate_randomness(
        image, rec, _CTX["per_tile_alpha"], _CTX["max_violations"], bonferroni=_CTX["bonferroni"]
    )
    row.update(
        fg_chi2=ir.fg_chi2,
        bg_chi2=ir.bg_chi2,
        fg_pass=ir.fg_pass,
        bg_pass=ir.bg_pass,
        moran_violations=rr.violating_tiles,
        degenerate_tiles=rr.degenerate_tiles,
        randomness_pass=rr.passed,
    )
    return row


def _voronoi_row(image: GrayImage, label):
    det = voronoi.DetectionConfig(**_CTX["detection"])
    rm = voronoi.detect_regions(image, det)
    bins = voronoi.ClassBins.from_json(_CTX["calibration"]["class_bins"])
    try:
        rho = voronoi.area_shade_rho(rm)
    except stats.UndefinedStatisticError:
        rho = None
    _, density = voronoi.laplacian_zero_crossings(image, rm, det)
    return {
        "region_count": rm.region_count,
        "class_recovered": voronoi.class_from_count(rm.region_count, bins),
        "spearman_rho": rho,
        "zero_crossing_density": density,
        "artifact": density > _CTX["artifact_threshold"],
    }


def _alphabet_row(image: GrayImage, label):
    seq = alphabet.classify_letters(image)
    row = {"sequence": str(seq), "n_excluded_letters": seq.n_excluded, "excluded_positions": [i for i, e in enumerate(seq.excluded) if e]}
    if seq.n_excluded >= alphabet.MAX_EXCLUDED:
        row["excluded"] = "too_many_badly_formed_letters"
        return row
    freq = alphabet.frequency_test(seq)
    pairs = alphabet.pair_prevalence(seq)
    row.update(
        chi2=freq.chi2,
        exact_match=freq.exact_match,
        violations=alphabet.rule_violations(seq),
        **pairs._asdict(),
    )
    return row


def _clb_row(image: GrayImage, label):
    data = image.data
    return {"mean": float(data.mean()), "std": float(data.std())}


ROW_FUNCS = {"flags": _flags_row, "voronoi": _voronoi_row, "alphabet": _alphabet_row, "clb": _clb_row}


def _evaluate_task(task):
    idx, path, label = task
    row = {"id": idx, "path": path, "class_label": label, "excluded": None}
    try:
        image = load_image(path, expected_size=(IMAGE_SIZE, IMAGE_SIZE))
    except Exception as exc:  # noqa: BLE001 - malformed inputs become data
        row["excluded"] = f"unreadable: {exc}"
        return row, None
    try:
        row.update(ROW_FUNCS[_CTX["som"]](image, label))
    except Exception as exc:  # noqa: BLE001
        row["excluded"] = f"evaluation_error: {exc!r}"
    hist = np.bincount(image.data.ravel(), minlength=256)
    return row, hist


def _rate(rows, key):
    vals = [r[key] for r in rows if r.get(key) is not None]
    return float(np.mean(vals)) if vals else None


def _summary_flags(rows, hist, config, calibration):
    classified = [r for r in rows if "class_recovered" in r]
    evaluated = [r for r in rows if r["excluded"] is None]
    out = {
        "perfect_match_rate": _rate(classified, "perfect_match"),
        "forbidden_respected_rate": float(np.mean([r["forbidden_violations"] == 0 for r in classified])) if classified else None,
        "fg_pass_rate": _rate(evaluated, "fg_pass"),
        "bg_pass_rate": _rate(evaluated, "bg_pass"),
        "randomness_pass_rate": _rate(evaluated, "randomness_pass"),
    }
    if classified:
        prev = flags.class_prevalence([r["class_recovered"] for r in classified])
        out["prevalence"] = {"fractions": prev.fractions.tolist(), "std": prev.std, "n": prev.n}
    if hist is not None and hist.sum() > 0:
        probs = stats.qq_probabilities(config.n_quantiles)
        q_obs = stats.quantiles_from_counts(hist, probs)
        q_ref = stats.quantiles_from_counts(stats.mixture_pmf(stats.FLAGS_MIXTURE), probs)
        out["qq_vs_mixture"] = {"probabilities": probs.tolist(), "observed": q_obs.tolist(), "mixture": q_ref.tolist()}
        out["qq_max_deviation"] = float(np.max(np.abs(q_obs - q_ref)))
    return out


def _summary_voronoi(rows, hist, config, calibration):
    evaluated = [r for r in rows if r["excluded"] is None]
    classes = [r["class_recovered"] for r in evaluated]
    counts = np.bincount(np.asarray(classes, dtype=np.int64) - 1, minlength=8) if classes else np.zeros(8, dtype=np.int64)
    rhos = [r["spearman_rho"] for r in evaluated if r["spearman_rho"] is not None]
    return {
        "mean_spearman_rho": float(np.mean(rhos)) if rhos else None,
        "prevalence_percent": (100.0 * counts / max(len(classes), 1)).tolist(),
        "artifact_rate": _rate(evaluated, "artifact"),
        "detection_failures": [{"id": r["id"], "reason": r["excluded"]} for r in rows if r["excluded"] is not None],
    }


def _summary_alphabet(rows, hist, config, calibration):
    evaluated = [r for r in rows if r["excluded"] is None]
    out = {
        "exact_match_rate": _rate(evaluated, "exact_match"),
        "rule_pass_rate": float(np.mean([not r["violations"] for r in evaluated])) if evaluated else None,
        "rejected": sum(1 for r in rows if r["excluded"] == "too_many_badly_formed_letters"),
    }
    if evaluated:
        hz = np.array([r["hz_unordered"] for r in evaluated], dtype=np.float64)
        out["hz"] = {"mean": float(hz.mean()), "std": float(hz.std()), "violations": [r["id"] for r in evaluated if r["hz_unordered"] < alphabet.MIN_HZ_PAIRS]}
        for key in ("hv", "wy", "lone_v", "lone_y"):
            out[f"mean_{key}"] = float(np.mean([r[key] for r in evaluated]))
        ref = alphabet.PositionReference.from_json(calibration["position_reference"])
        seqs = [
            alphabet.LetterSequence(tuple(r["sequence"]), tuple(16.0 if i in set(r["excluded_positions"]) else 0.0 for i in range(64)))
            for r in evaluated
        ]
        out["positional_chi2_map"] = alphabet.positional_error_map(seqs, ref).tolist()
    return out


def _summary_clb(rows, hist, config, calibration):
    out = {"mean_intensity": _rate(rows, "mean")}
    readable = [r["path"] for r in rows if r["excluded"] is None]
    if len(readable) >= clb.MIN_AUTOCORR_REALIZATIONS:
        try:
            out["radial_autocorrelation"] = clb.radial_autocorrelation(load_image(p) for p in readable).tolist()
        except stats.DegenerateError as exc:
            out["radial_autocorrelation"] = None
            out["radial_autocorrelation_error"] = str(exc)
    return out


SUMMARY_FUNCS = {"flags": _summary_flags, "voronoi": _summary_voronoi, "alphabet": _summary_alphabet, "clb": _summary_clb}


def cmd_evaluate(source, som: str, config: RunConfig, calib_path=None, manifest: EnsembleManifest | None = None) -> dict:
    """Run the ``som`` validators on every realization of ``source`` and summarize."""
    if som not in SUMMARY_FUNCS:
        raise ConfigError(f"unknown som {som!r}")
    manifest = manifest or open_ensemble(source, som)
    calibration = load_or_build_calibration(som, config, calib_path)
    ctx = {
        "som": som,
        "calibration": calibration,
        "per_tile_alpha": config.per_tile_alpha,
        "max_violations": config.max_violations,
        "bonferroni": config.bonferroni,
        "detection": config.detection_config().to_json(),
        "artifact_threshold": config.artifact_threshold,
    }
    tasks = [(i, str(manifest.resolve(e)), e.class_label) for i, e in enumerate(manifest.entries)]
    results = _pool_map(_evaluate_task, tasks, config.worker_count(), _init_context, (ctx,))
    _init_context(ctx)
    rows = [r for r, _ in results]
    hists = [h for _, h in results if h is not None]
    pooled = np.sum(hists, axis=0) if hists else None
    summary = {
        "n_realizations": len(rows),
        "n_evaluated": sum(1 for r in rows if r["excluded"] is None),
        "n_excluded": sum(1 for r in rows if r["excluded"] is not None),
        "exclusions": [{"id": r["id"], "reason": r["excluded"]} for r in rows if r["excluded"] is not None],
    }
    summary.update(SUMMARY_FUNCS[som](rows, pooled, config, calibration))
    if pooled is not None:
        summary["pooled_histogram"] = pooled.astype(np.int64).tolist()
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "som_name": som,
        "config": _report_config(config),
        "calibration": calibration,
        "rows": rows,
        "summary": summary,
        "meta": _meta(),
    }


def _report_config(config: RunConfig) -> dict:
    doc = asdict(config)
    for key in ("out", "jobs", "cache_dir", "n", "seed", "classes", "weights", "clb_params", "save_region_maps"):
        doc.pop(key, None)
    return doc


def _meta() -> dict:
    return {
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "somgen_version": __version__,
        "kernel_backend": kernels.BACKEND,
    }


# ------------------------------------------------------------------ comparison


def block_mean_features(image: GrayImage, block: int = 32) -> np.ndarray:
    """Mean intensity of each ``block x block`` tile, row-major (64 values at block 32)."""
    h, w = image.data.shape
    return image.data.reshape(h // block, block, w // block, block).mean(axis=(1, 3)).ravel()


def pooled_histogram(manifest: EnsembleManifest) -> np.ndarray:
    hist = np.zeros(256, dtype=np.int64)
    for _, image in manifest.iter_images():
        hist += np.bincount(image.data.ravel(), minlength=256)
    return hist


def ensemble_features(manifest: EnsembleManifest, block: int = 32) -> np.ndarray:
    return np.stack([block_mean_features(im, block) for _, im in manifest.iter_images()])


def cmd_compare(a, b, features_a=None, features_b=None, block_features: bool = False, n_quantiles: int = 100) -> dict:
    """Pooled-intensity QQ pairs and density curves; Frechet distance when features are available."""
    ma, mb = open_ensemble(a), open_ensemble(b)
    ha, hb = pooled_histogram(ma), pooled_histogram(mb)
    probs = stats.qq_probabilities(n_quantiles)
    qa = stats.quantiles_from_counts(ha, probs)
    qb = stats.quantiles_from_counts(hb, probs)
    _, da = stats.intensity_density(ha)
    _, db = stats.intensity_density(hb)
    out = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "qq": {"probabilities": probs.tolist(), "a": qa.tolist(), "b": qb.tolist()},
        "qq_max_deviation": float(np.max(np.abs(qa - qb))),
        "density": {"a": da.tolist(), "b": db.tolist()},
        "density_overlap": float(np.minimum(da, db).sum()),
        "frechet_distance": None,
    }
    fa = fb = None
    if features_a is not None and features_b is not None:
        fa, fb = stats.load_features(features_a), stats.load_features(features_b)
    elif (features_a is None) != (features_b is None):
        raise ConfigError("feature files must be given for both ensembles")
    elif block_features:
        fa, fb = ensemble_features(ma), ensemble_features(mb)
    if fa is not None:
        if fa.shape[1] != fb.shape[1]:
            raise stats.FrechetError(f"feature dimension mismatch: {fa.shape[1]} vs {fb.shape[1]}")
        out["frechet_distance"] = stats.frechet_distance(
            stats.GaussianSummary.from_features(fa), stats.GaussianSummary.from_features(fb)
        )
    out["meta"] = _meta()
    return out


# ------------------------------------------------------------------- writers


def strip_meta(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != "meta"}


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1, default=_jsonable) + "\n"


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_report(report))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_plot_data(report: dict, directory) -> list:
    """Tidy CSV files (one observation per row) for external plotting."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    s = report.get("summary", report)
    if "qq_vs_mixture" in s:
        q = s["qq_vs_mixture"]
        _write_csv(d / "qq.csv", ["probability", "observed", "reference"], zip(q["probabilities"], q["observed"], q["mixture"]))
        written.append(d / "qq.csv")
    if "qq" in report:
        q = report["qq"]
        _write_csv(d / "qq.csv", ["probability", "a", "b"], zip(q["probabilities"], q["a"], q["b"]))
        written.append(d / "qq.csv")
    if "density" in report:
        rows = [(i, src, v) for src in ("a", "b") for i, v in enumerate(report["density"][src])]
        _write_csv(d / "density.csv", ["intensity", "ensemble", "density"], rows)
        written.append(d / "density.csv")
    if "pooled_histogram" in s:
        _, dens = stats.intensity_density(s["pooled_histogram"])
        _write_csv(d / "density.csv", ["intensity", "density"], enumerate(dens))
        written.append(d / "density.csv")
    if "positional_chi2_map" in s:
        m = s["positional_chi2_map"]
        _write_csv(d / "positional_map.csv", ["row", "col", "chi2"], [(i, j, m[i][j]) for i in range(len(m)) for j in range(len(m[i]))])
        written.append(d / "positional_map.csv")
    if "prevalence_percent" in s:
        _write_csv(d / "prevalence.csv", ["class", "percent"], [(k + 1, p) for k, p in enumerate(s["prevalence_percent"])])
        written.append(d / "prevalence.csv")
    if "radial_autocorrelation" in s:
        _write_csv(d / "autocorrelation.csv", ["lag", "correlation"], enumerate(s["radial_autocorrelation"]))
        written.append(d / "autocorrelation.csv")
    if "rows" in report and report.get("som_name") == "voronoi":
        rows = [(r["id"], r.get("region_count"), r.get("spearman_rho"), r.get("zero_crossing_density")) for r in report["rows"]]
        _write_csv(d / "regions.csv", ["id", "region_count", "spearman_rho", "zero_crossing_density"], rows)
        written.append(d / "regions.csv")
    return written
