import logging
import math

import numpy as np
import pytest
from scipy.constants import speed_of_light as C0

from mmsense.cli import main
from mmsense.config import ScenarioConfig, bundled_config_path, load_bundled, load_config, parse_config
from mmsense.errors import ConfigError
from mmsense.fusion import Algorithm
from mmsense.harness import (
    CdfSummary,
    output_summaries,
    read_steps_csv,
    run_scenario,
    step_seeds,
    steps_header,
    summarize,
    write_outputs,
)

SCS = 30e3


def raw_config(**over):
    raw = {
        "name": "tiny",
        "master_seed": 5,
        "bandwidth": 64 * SCS,
        "noise_figure": 7.0,
        "ofdm": {"carrier_freq": 3.5e9, "scs": SCS, "num_symbols": 32, "cp_duration": 4e-6},
        "trajectory": {"start": [20, 3, 1], "direction": [1, 0, 0], "speed": 13.89, "step_interval": 0.02, "num_steps": 10},
        "fusion": {"search_min": [0, -10, 1], "search_max": [120, 60, 1], "fixed_z": 1.0, "grid_starts_per_axis": 12},
        "bs": [
            {"id": 1, "position": [0, 0, 10]},
            {"id": 2, "position": [120, 0, 10]},
            {"id": 3, "position": [60, 50, 24]},
        ],
        "scatterer": [{"position": [40, 12, 4], "reflection_loss": 10}],
    }
    for key, value in over.items():
        raw[key] = value
    return raw


@pytest.fixture(scope="module")
def tiny():
    return parse_config(raw_config())


@pytest.fixture(scope="module")
def tiny_records(tiny):
    return run_scenario(tiny)


def write_toml(path, raw):
    def fmt(v):
        if isinstance(v, str):
            return f'"{v}"'
        if isinstance(v, list):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        return repr(v)

    lines = []
    tables = {}
    arrays = {}
    for k, v in raw.items():
        if isinstance(v, dict):
            tables[k] = v
        elif isinstance(v, list) and v and isinstance(v[0], dict):
            arrays[k] = v
        else:
            lines.append(f"{k} = {fmt(v)}")
    for k, t in tables.items():
        lines.append(f"[{k}]")
        lines += [f"{kk} = {fmt(vv)}" for kk, vv in t.items()]
    for k, items in arrays.items():
        for item in items:
            lines.append(f"[[{k}]]")
            lines += [f"{kk} = {fmt(vv)}" for kk, vv in item.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_record_cardinality_and_consistency(tiny, tiny_records):
    assert [r.step for r in tiny_records] == list(range(10))
    for rec in tiny_records:
        assert set(rec.fusion) == set(Algorithm)
        for b, bs in zip(rec.bs, tiny.bss):
            assert b.true_distance == pytest.approx(float(np.linalg.norm(rec.true_position - bs.position)))
        for res in rec.fusion.values():
            assert res.position_error >= 0
            assert all(e >= 0 for e in res.fused_distance_errors.values())
        assert sum(b.normalized_weight for b in rec.bs) == pytest.approx(1.0)


def test_single_step_trajectory():
    cfg = parse_config(raw_config(trajectory={"start": [20, 3, 1], "direction": [1, 0, 0], "speed": 1.0, "step_interval": 0.02, "num_steps": 1}))
    assert len(run_scenario(cfg)) == 1


def test_step_seeds_distinct():
    seeds = {step_seeds(5, k, s) for k in (1, 2, 3) for s in range(50)}
    assert len(seeds) == 150
    assert step_seeds(5, 1, 0) == step_seeds(5, 1, 0)


def test_noiseless_on_grid_positioning():
    # on-grid distances: every BS range is a multiple of the padded bin
    bin_m = C0 / (2 * SCS * 256)
    # 3-4-5 triangles: every BS sits exactly 5 bins from the target
    bss = [np.array([0.0, 0.0, 1.0]), np.array([6 * bin_m, 0.0, 1.0]), np.array([0.0, 8 * bin_m, 1.0])]
    targets = [np.array([3 * bin_m, 4 * bin_m, 1.0])]
    raw = raw_config(
        noise_figure=-math.inf,
        trajectory={"start": targets[0].tolist(), "direction": [1, 0, 0], "speed": 0.0, "step_interval": 0.02, "num_steps": 3},
        fusion={"search_min": [-20, -20, 1], "search_max": [200, 150, 1], "fixed_z": 1.0, "algorithms": ["nlls"]},
        bs=[{"id": i + 1, "position": b.tolist()} for i, b in enumerate(bss)],
        scatterer=[],
    )
    cfg = parse_config(raw)
    records = run_scenario(cfg)
    assert len(records) == 3
    for rec in records:
        for b in rec.bs:
            assert b.single_error < 1e-9
        assert rec.fusion[Algorithm.NLLS].position_error < bin_m
    assert summarize(records, "positioning", "nlls").percentile(0.9) < bin_m


def test_no_detection_skips_fusion(caplog):
    cfg = parse_config(raw_config(periodogram={"threshold_db": 400.0}))
    with caplog.at_level(logging.WARNING):
        records = run_scenario(cfg)
    assert all(res.skipped and math.isnan(res.position_error) for r in records for res in r.fusion.values())
    assert "no BS detected" in caplog.text
    assert output_summaries(records).keys().isdisjoint({"positioning_ml"})


def test_cdf_percentile_definition():
    s = CdfSummary.from_samples(range(1, 11))
    assert s.percentile(0.9) == 9
    assert s.percentile(0.7) == 7
    assert s.percentile(1.0) == 10
    assert s.median == 5
    flat = CdfSummary.from_samples([2.5] * 7)
    assert {flat.percentile(p) for p in (0.01, 0.5, 0.9, 1.0)} == {2.5}
    with pytest.raises(ValueError):
        CdfSummary.from_samples([])
    with pytest.raises(ValueError):
        s.percentile(0.0)


def test_cdf_monotone_and_drops_nan(rng):
    s = CdfSummary.from_samples(np.append(rng.exponential(size=200), math.nan))
    assert len(s) == 200
    ps = np.linspace(0.01, 1, 50)
    vals = [s.percentile(p) for p in ps]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert s.probabilities()[-1] == 1.0


def test_metric_selector_validation(tiny_records):
    with pytest.raises(ValueError):
        summarize(tiny_records, "velocity", "ml")
    assert len(summarize(tiny_records, "distance", "ml")) == 30
    assert len(summarize(tiny_records, "distance", "ml", bs_id=2)) == 10


def test_write_outputs(tmp_path, tiny_records):
    written = write_outputs(tiny_records, None, tmp_path)
    rows = read_steps_csv(tmp_path / "steps.csv")
    assert len(rows) == 30
    header = (tmp_path / "steps.csv").read_text().splitlines()[0].split(",")
    assert header == steps_header([1, 2, 3])
    assert header[:9] == ["step", "algorithm", "true_x", "true_y", "true_z", "est_x", "est_y", "est_z", "pos_error_m"]
    cdf = tmp_path / "cdf_positioning_nlls.csv"
    assert cdf in written
    lines = cdf.read_text().splitlines()
    assert lines[0] == "error_m,cumulative_probability"
    assert float(lines[-1].split(",")[1]) == 1.0
    assert (tmp_path / "cdf_distance_bs2_single.csv").exists()
    before = (tmp_path / "steps.csv").read_bytes()
    write_outputs(tiny_records, None, tmp_path)
    assert (tmp_path / "steps.csv").read_bytes() == before


def test_run_is_deterministic(tmp_path, tiny, tiny_records):
    write_outputs(tiny_records, None, tmp_path / "a")
    write_outputs(run_scenario(tiny), None, tmp_path / "b")
    assert (tmp_path / "a" / "steps.csv").read_bytes() == (tmp_path / "b" / "steps.csv").read_bytes()


def test_write_outputs_io_error(tmp_path, tiny_records):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        write_outputs(tiny_records, None, blocker / "sub")


# config


def test_bundled_scenarios_load():
    street = load_bundled("street")
    assert [bs.id for bs in street.bss] == [1, 2, 3]
    assert street.ofdm.num_subcarriers == 666
    assert street.algorithms == (Algorithm.ML, Algorithm.MAP, Algorithm.NLLS)
    assert len(street.steps) == math.ceil(650 / 13)
    assert street.with_bandwidth(100e6).ofdm.num_subcarriers == 3333
    assert [b.id for b in street.with_bss([1, 3]).bss] == [1, 3]
    assert load_bundled("two_bs_shoulder").bss[1].id == 2
    with pytest.raises(ConfigError):
        bundled_config_path("nowhere")


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="bandwidth"):
        parse_config({k: v for k, v in raw_config().items() if k != "bandwidth"})
    with pytest.raises(ConfigError):
        parse_config(raw_config(bandwidth=1e3))
    with pytest.raises(ConfigError):
        parse_config(raw_config(bs=[{"id": 1, "position": [0, 0, 0]}, {"id": 1, "position": [1, 0, 0]}]))
    with pytest.raises(ConfigError):
        parse_config(raw_config(bs=[{"id": 1, "position": [0, 0]}]))
    with pytest.raises(ConfigError):
        parse_config(raw_config(step_stride=0))
    bad = tmp_path / "bad.toml"
    bad.write_text("bandwidth = = 3\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_toml_round_trip(tmp_path, tiny):
    path = write_toml(tmp_path / "tiny.toml", raw_config())
    cfg = load_config(path)
    assert isinstance(cfg, ScenarioConfig)
    assert cfg.ofdm == tiny.ofdm
    assert [s.reflection_loss for s in cfg.scatterers] == [10.0]


# CLI


def test_cli_run_and_summarize(tmp_path, capsys):
    cfg = write_toml(tmp_path / "tiny.toml", raw_config())
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--algorithms", "nlls,ml", "--dump-periodograms", "0,3"]) == 0
    rows = read_steps_csv(out / "steps.csv")
    assert len(rows) == 20 and {r["algorithm"] for r in rows} == {"nlls", "ml"}
    dumps = sorted(p.name for p in (out / "periodograms").glob("*.f64"))
    assert dumps == [f"step0000{s}_bs{k}.f64" for s in (0, 3) for k in (1, 2, 3)]
    capsys.readouterr()
    assert main(["summarize", "--in", str(out), "--metric", "positioning", "--percentile", "90"]) == 0
    text = capsys.readouterr().out
    assert "nlls" in text and "p90" in text
    assert main(["summarize", "--in", str(out), "--metric", "distance", "--algorithm", "ml"]) == 0


def test_cli_seed_and_bandwidth_overrides(tmp_path):
    cfg = write_toml(tmp_path / "tiny.toml", raw_config())
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "1"]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "2"]) == 0
    assert (tmp_path / "a" / "steps.csv").read_bytes() != (tmp_path / "b" / "steps.csv").read_bytes()
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "c"), "--bandwidth", str(96 * SCS)]) == 0


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--config", "/nonexistent.toml", "--out", "x"],
        ["run", "--config", "{cfg}", "--out", "{tmp}/o", "--algorithms", "gps"],
        ["run", "--config", "{cfg}", "--out", "{tmp}/o", "--dump-periodograms", "a,b"],
        ["summarize", "--in", "{tmp}/empty"],
        ["summarize", "--in", "{tmp}", "--percentile", "0"],
    ],
)
def test_cli_errors_exit_nonzero(tmp_path, argv, capsys):
    cfg = write_toml(tmp_path / "tiny.toml", raw_config())
    (tmp_path / "steps.csv").write_text(",".join(steps_header([1])) + "\n")
    argv = [a.format(cfg=cfg, tmp=tmp_path) for a in argv]
    assert main(argv) == 2
    assert "mmsense: error" in capsys.readouterr().err


def test_cli_bad_config_values(tmp_path, capsys):
    cfg = write_toml(tmp_path / "bad.toml", raw_config(bandwidth=10.0))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
