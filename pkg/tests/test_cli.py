import json

import numpy as np
import pytest

from somgen import cli, report
from somgen.raster import EnsembleManifest, GrayImage, save_image


@pytest.fixture
def cache(tmp_path, monkeypatch):
    d = tmp_path / "cache"
    monkeypatch.setenv("XDG_CACHE_HOME", str(d))
    return d


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_generate_subset_classes(tmp_path, cache):
    assert run("generate", "--som", "voronoi", "--classes", "1,8", "--n", 30, "--seed", 42, "--out", tmp_path / "v") == 0
    m = EnsembleManifest.load(tmp_path / "v" / "manifest.json")
    assert set(m.labels()) == {1, 8}
    assert len(m.entries) == 30


def test_generate_uniform_flags_is_roughly_balanced(tmp_path):
    cfg = report.RunConfig(som="flags", n=800, seed=1, out=str(tmp_path / "f"))
    labels = report.draw_labels(cfg)
    counts = np.bincount(labels, minlength=9)[1:]
    assert np.all(np.abs(counts - 100) < 35)


def test_generate_rejects_empty_ensemble(tmp_path, capsys):
    assert run("generate", "--som", "flags", "--n", 0, "--out", tmp_path / "x") == 2
    assert "positive" in capsys.readouterr().err


def test_config_file_with_flag_override(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"som": "flags", "n": 5, "seed": 3, "per_tile_alpha": 0.01}))
    cfg = report.RunConfig.from_sources(path, n=7, seed=None)
    assert (cfg.n, cfg.seed, cfg.per_tile_alpha) == (7, 3, 0.01)
    path.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(report.ConfigError):
        report.RunConfig.from_sources(path)


def test_config_validation():
    with pytest.raises(report.ConfigError):
        report.RunConfig(som="mnist")
    with pytest.raises(report.ConfigError):
        report.RunConfig(classes=[1, 2], weights=[0, 0])
    with pytest.raises(report.ConfigError):
        report.RunConfig(classes=[9])


def test_jobs_from_environment(monkeypatch):
    monkeypatch.setenv("SOMGEN_JOBS", "3")
    assert report.RunConfig().worker_count() == 3
    assert report.RunConfig(jobs=2).worker_count() == 2


def test_evaluate_flags_and_plot_data(tmp_path, cache):
    run("generate", "--som", "flags", "--n", 12, "--seed", 5, "--out", tmp_path / "f")
    out = tmp_path / "r.json"
    assert run("evaluate", "--som", "flags", "--input", tmp_path / "f", "--calibration-size", 200, "--report", out, "--plots", tmp_path / "p") == 0
    doc = json.loads(out.read_text())
    assert doc["schema_version"] == report.REPORT_SCHEMA_VERSION
    assert len(doc["rows"]) == doc["summary"]["n_realizations"] == 12
    assert doc["summary"]["perfect_match_rate"] == 1.0
    assert [r["id"] for r in doc["rows"]] == list(range(12))
    assert (tmp_path / "p" / "qq.csv").read_text().startswith("probability,observed,reference\n")
    assert list(cache.rglob("flags-*.json"))


def test_evaluate_twice_is_identical_and_parallel_matches(tmp_path, cache):
    run("generate", "--som", "alphabet", "--n", 6, "--seed", 2, "--out", tmp_path / "a")
    cfg = report.RunConfig(som="alphabet", reference_size=10_000)
    one = report.cmd_evaluate(tmp_path / "a", "alphabet", cfg)
    two = report.cmd_evaluate(tmp_path / "a", "alphabet", report.RunConfig(som="alphabet", reference_size=10_000, jobs=2))
    assert report.dumps_report(report.strip_meta(one)) == report.dumps_report(report.strip_meta(two))


def test_evaluate_directory_lists_malformed_images(tmp_path, cache):
    d = tmp_path / "ext"
    d.mkdir()
    save_image(GrayImage(np.zeros((256, 256), np.uint8)), d / "a.png")
    save_image(GrayImage(np.zeros((64, 64), np.uint8)), d / "b.png")
    (d / "c.png").write_bytes(b"not a png")
    doc = report.cmd_evaluate(d, "flags", report.RunConfig(som="flags", calibration_size=50))
    reasons = {r["path"].rsplit("/", 1)[-1]: r["excluded"] for r in doc["rows"]}
    assert reasons["a.png"] == "imperfect_template_match"
    assert reasons["b.png"].startswith("unreadable") and reasons["c.png"].startswith("unreadable")
    assert doc["summary"]["n_excluded"] == 3


def test_evaluate_unknown_som(tmp_path):
    with pytest.raises(report.ConfigError):
        report.cmd_evaluate(tmp_path, "mnist", report.RunConfig())


def test_evaluate_clb_reports_diagnostics_only(tmp_path, cache):
    run("generate", "--som", "clb", "--n", 2, "--seed", 1, "--out", tmp_path / "c")
    doc = report.cmd_evaluate(tmp_path / "c", "clb", report.RunConfig(som="clb"))
    assert set(doc["rows"][0]) == {"id", "path", "class_label", "excluded", "mean", "std"}
    assert "radial_autocorrelation" not in doc["summary"]


def test_calibration_file_must_match_som(tmp_path, cache):
    path = tmp_path / "cal.json"
    assert run("calibrate", "--som", "flags", "--calibration-size", 50, "--out", path) == 0
    assert json.loads(path.read_text())["som_name"] == "flags"
    with pytest.raises(report.ConfigError):
        report.load_or_build_calibration("voronoi", report.RunConfig(), path)


def test_calibration_key_depends_on_settings():
    a = report.calibration_key("flags", report.RunConfig(calibration_size=10))
    b = report.calibration_key("flags", report.RunConfig(calibration_size=11))
    assert a != b
    assert a == report.calibration_key("flags", report.RunConfig(calibration_size=10, seed=99))


def test_compare_self_and_features(tmp_path, cache):
    run("generate", "--som", "flags", "--n", 6, "--seed", 1, "--out", tmp_path / "f")
    doc = report.cmd_compare(tmp_path / "f", tmp_path / "f", block_features=True)
    assert doc["qq_max_deviation"] == 0 and doc["frechet_distance"] < 1e-6
    assert doc["density_overlap"] == pytest.approx(1.0)
    fa, fb = tmp_path / "a.csv", tmp_path / "b.csv"
    np.savetxt(fa, np.random.default_rng(0).normal(size=(20, 4)), delimiter=",")
    np.savetxt(fb, np.random.default_rng(1).normal(size=(20, 5)), delimiter=",")
    assert run("compare", tmp_path / "f", tmp_path / "f", "--features-a", fa, "--features-b", fb) == 2


def test_compare_different_soms_is_off_diagonal(tmp_path, cache):
    run("generate", "--som", "flags", "--n", 3, "--seed", 1, "--out", tmp_path / "f")
    run("generate", "--som", "alphabet", "--n", 3, "--seed", 1, "--out", tmp_path / "a")
    doc = report.cmd_compare(tmp_path / "f", tmp_path / "a")
    assert doc["qq_max_deviation"] > 100


def test_regenerate_is_bit_identical(tmp_path):
    m = report.cmd_generate(report.RunConfig(som="voronoi", n=4, seed=9, out=str(tmp_path / "v")))
    report.regenerate(EnsembleManifest.load(tmp_path / "v" / "manifest.json"), tmp_path / "w")
    for e in m.entries:
        assert (tmp_path / "v" / e.path).read_bytes() == (tmp_path / "w" / e.path).read_bytes()


def test_block_mean_features_shape():
    im = GrayImage(np.arange(256 * 256, dtype=np.int64).reshape(256, 256).astype(np.uint8))
    assert report.block_mean_features(im).shape == (64,)
