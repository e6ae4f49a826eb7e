import numpy as np
import pytest

from dunes import ConfigError, ShapeError, ValidationError
from dunes.ca import SimParams, new_lattice, run, step, surface_height
from dunes.dfs1 import write_dfs1
from dunes.emulator import EmulatorSpec, TrainConfig, init_params, life_exact_params
from dunes.evaluation import (EvalReport, Oracle, compare_series, default_threshold,
                              error_growth, ingest_external, interval_sweep, one_step_scores,
                              persistence, speed_benchmark)
from dunes.frames import FrameSeries
from dunes.life import life_series, random_board


@pytest.fixture(scope="module")
def dune_series():
    p = SimParams(width=16, length=64, init_depth=4, perturb=True, steps_per_day=10.0)
    return run(p, 1, 40, 3.0), p


@pytest.fixture(scope="module")
def migrating():
    # spun-up bed sampled every 2 iterations: 30 frames move the ridges far
    # less than half their spacing, so persistence error should keep rising
    p = SimParams(width=16, length=128, init_depth=4, perturb=True)
    lat = new_lattice(p, 1)
    step(lat, 2000)
    frames = [surface_height(lat).values]
    for _ in range(31):
        step(lat, 2)
        frames.append(surface_height(lat).values)
    return FrameSeries(np.array(frames), p.cell_size, 0.2), p


def test_report_text_round_trip(tmp_path):
    rep = EvalReport()
    rep.add("area_accuracy", 0.75).add("rmse", 1.5, "m")
    rep.meta["mode"] = "model"
    back = EvalReport.from_text(rep.to_text())
    assert back.metrics == rep.metrics and back.units == rep.units and back.meta == rep.meta
    rep.write(tmp_path / "r.txt")
    assert (tmp_path / "r.txt").read_text() == rep.to_text()


def test_report_rejects_bad_values():
    with pytest.raises(ValueError):
        EvalReport().add("rmse", float("nan"))
    with pytest.raises(ValueError):
        EvalReport().add("area_accuracy", 1.2)


def test_default_threshold():
    p = SimParams(init_depth=10, cell_size=0.5)
    assert default_threshold(p) == 11 * 0.25


def test_oracle_is_perfect(dune_series):
    s, p = dune_series
    curve = error_growth(Oracle(s), s, 4, 20, default_threshold(p))
    assert all(e == 0.0 and a == 1.0 for _, e, a in curve)
    assert [k for k, _, _ in curve] == list(range(1, 21))


def test_persistence_error_grows(migrating):
    s, p = migrating
    curve = error_growth(persistence, s, 1, 30, default_threshold(p))
    e = [c[1] for c in curve]
    ups = sum(b >= a for a, b in zip(e, e[1:]))
    assert ups >= 0.8 * (len(e) - 1)
    assert e[-1] > e[0]


def test_horizon_one_equals_one_step(dune_series):
    s, p = dune_series
    thr = default_threshold(p)
    (k, e, a), = error_growth(persistence, s, 1, 1, thr, start=7)
    assert k == 1 and e == pytest.approx(np.sqrt(np.mean((s.frames[8] - s.frames[7]) ** 2)))


def test_error_growth_errors(dune_series):
    s, p = dune_series
    with pytest.raises(ConfigError):
        error_growth(persistence, s, 4, 40, 1.0)
    with pytest.raises(ShapeError):
        error_growth(init_params(EmulatorSpec(2, 2, 1, 1), 0), s, 4, 2, 1.0)


def test_exact_life_model_has_zero_error():
    s = life_series(random_board(16, 16, 0.4, 3), 12)
    curve = error_growth(life_exact_params(), s, 1, 11, 0.5)
    assert all(e == 0.0 and a == 1.0 for _, e, a in curve)


def test_interval_sweep_rows(dune_series):
    s, p = dune_series
    thr = default_threshold(p)
    assert len(interval_sweep(s, [1], thr)) == 1
    rows = interval_sweep(s, [2, 1, 2], thr)
    assert [r["interval_frames"] for r in rows] == [2, 1, 2]
    assert rows[0] == rows[2]
    rows = interval_sweep(s, list(range(1, 31)), thr)
    assert len(rows) == 30 and all(0 <= r["area_accuracy"] <= 1 for r in rows)
    assert rows[1]["interval_days"] == 6.0
    with pytest.raises(ConfigError):
        interval_sweep(s, [40], thr)


def test_interval_sweep_trains_per_stride(dune_series):
    s, p = dune_series
    rows = interval_sweep(s, [1, 3], default_threshold(p), spec=EmulatorSpec(1, 4, 1, 1),
                          config=TrainConfig(epochs=1), tile_size=16, scale=3.0)
    assert len(rows) == 2 and all(np.isfinite(r["rmse"]) for r in rows)


def test_one_step_scores_persistence(dune_series):
    s, p = dune_series
    err, acc, n = one_step_scores(persistence, s, 1, 1, default_threshold(p))
    assert n == len(s) - 1 and 0 <= acc <= 1 and err > 0


def test_ingest_and_compare(tmp_path, dune_series):
    s, p = dune_series
    pred = FrameSeries(s.frames[1:], s.cell_size, s.frame_interval_days, {"generator": "gan"})
    write_dfs1(pred, tmp_path / "ext.dfs1")
    got = ingest_external(tmp_path / "ext.dfs1")
    assert got == pred
    rep = compare_series(got, s, default_threshold(p), offset=1)
    assert rep["area_accuracy"] == 1.0 and rep["rmse"] == 0.0
    write_dfs1(FrameSeries(s.frames[:2], 1.0, 1.0, {}), tmp_path / "bad.dfs1")
    with pytest.raises(ValidationError):
        ingest_external(tmp_path / "bad.dfs1")


def test_speed_benchmark_self_comparison():
    p = SimParams(width=32, length=64, init_depth=4)
    rep = speed_benchmark(p, None, 2, steps_per_frame=5, repeats=5)
    assert rep["ca_frames_per_sec"] > 0
    assert 0.8 <= rep["speedup"] <= 1.25
    assert rep.meta["grid"] == "64x32" and rep.meta["steps_per_frame"] == "5"


def test_speed_benchmark_single_frame():
    p = SimParams(width=16, length=32, init_depth=2)
    rep = speed_benchmark(p, init_params(EmulatorSpec(), 0), 1, steps_per_frame=2)
    assert rep["ca_frames_per_sec"] > 0 and rep["model_frames_per_sec"] > 0
    with pytest.raises(ConfigError):
        speed_benchmark(p, None, 1, repeats=2)
