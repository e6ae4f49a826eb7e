"""Acceptance criteria, each checked at its stated tolerance and time limit.

Every test records a one-line PASS/FAIL verdict (printed in the terminal
summary) before asserting, so a red criterion still reports its numbers.
"""

import itertools
import os
import time

import numpy as np
import pytest

from dunes import emp1, dfs1
from dunes.ca import SimParams, new_lattice, run, step, surface_height
from dunes.cli import main
from dunes.emulator import (EmulatorParams, EmulatorSpec, TrainConfig, _forward, forward,
                            init_params, life_exact_params, life_training_defaults,
                            loss_and_gradient, rollout, train)
from dunes.errors import FormatError
from dunes.evaluation import EvalReport, error_growth, persistence, speed_benchmark
from dunes.frames import FrameSeries, tile_many
from dunes.life import life_step, random_board
from dunes.metrics import area_accuracy, displacement, rmse
from dunes.rng import Xorshift


# --- 1: exact Life emulation -------------------------------------------------

def test_01_exact_life(criterion):
    t0 = time.perf_counter()
    p = life_exact_params()
    boards = []
    for bits in itertools.product((0, 1), repeat=9):
        b = np.zeros((5, 5), np.uint8)
        b[1:4, 1:4] = np.array(bits).reshape(3, 3)
        boards.append(b)
    x = np.array(boards, np.float32)[:, None]
    got = forward(p, x)[:, 0, 2, 2]
    want = np.array([life_step(b).cells[2, 2] for b in boards], np.float32)
    hood_ok = int((got == want).sum())
    board_ok = 0
    for seed in range(100):
        b = random_board(32, 32, 0.38, seed)
        out = forward(p, b.cells[None, None].astype(np.float32))[0, 0]
        board_ok += np.array_equal(out, life_step(b).cells.astype(np.float32))
    dt = time.perf_counter() - t0
    ok = hood_ok == 512 and board_ok == 100 and dt < 10
    criterion(1, ok, f"neighbourhoods {hood_ok}/512, boards {board_ok}/100, {dt:.2f} s (< 10 s)")
    assert ok


# --- 2: learned Life emulation -----------------------------------------------

def life_boards(n, size, seed):
    dens = 0.1 + 0.8 * Xorshift(seed).random(n)
    xs = np.array([random_board(size, size, d, seed + 1 + k).cells for k, d in enumerate(dens)])
    ys = np.array([life_step(b).cells for b in xs])
    return xs[:, None].astype(np.float32), ys[:, None].astype(np.float32)


@pytest.mark.slow
def test_02_learned_life(criterion):
    t0 = time.perf_counter()
    x, y = life_boards(10_000, 16, 0)
    spec, cfg = life_training_defaults()
    params, hist = train(x, spec, cfg, targets=y)
    hx, hy = life_boards(100, 32, 10_000_000)
    pred = forward(params, hx) >= 0.5
    acc = float((pred == (hy >= 0.5)).mean())
    dt = time.perf_counter() - t0
    ok = len(x) >= 10_000 and acc >= 0.999 and dt < 600
    criterion(2, ok, f"{len(x)} samples, held-out per-cell accuracy {acc:.6f} (>= 0.999), "
                     f"loss {hist[0]:.4g} -> {hist[-1]:.4g}, {dt:.1f} s (< 600 s)")
    assert ok


# --- 3: gradient correctness -------------------------------------------------

def random_architecture(seed):
    g = np.random.default_rng(seed)
    act = ("identity", "sigmoid")[g.integers(2)]
    loss = "bce" if act == "sigmoid" and g.random() < 0.5 else "mse"
    spec = EmulatorSpec(int(g.integers(1, 5)), int(g.integers(1, 9)), int(g.integers(1, 4)),
                        int(g.integers(1, 3)), act)
    p = init_params(spec, seed).astype(np.float64)
    p = EmulatorParams(spec, p.weights, [g.normal(0, 0.1, b.shape) for b in p.biases])
    rows, cols = g.integers(3, 9, 2)
    x = g.random((1, spec.in_channels, rows, cols))
    t = g.random((1, spec.out_channels, rows, cols))
    return p, x, t, TrainConfig(loss=loss)


def relu_pattern(p, x):
    _, (_, _, zs) = _forward(p, x)
    return np.concatenate([(z > 0).ravel() for z in zs[:-1]])


def central_difference(p, x, t, cfg, v, i, eps):
    e = np.zeros_like(v)
    e[i] = eps
    hi, lo = p.with_flat(v + e), p.with_flat(v - e)
    d = (loss_and_gradient(hi, x, t, cfg)[0] - loss_and_gradient(lo, x, t, cfg)[0]) / (2 * eps)
    return d, hi, lo


def gradient_check(p, x, t, cfg, eps=1e-3, fine=1e-5, rtol=1e-4):
    """Per-coordinate pass flags, and which stencils crossed a rectifier kink.

    A step of ``eps`` that flips any ReLU between the two stencil points does
    not estimate the derivative at ``p``; those coordinates are redone with
    ``fine``.  Every coordinate is counted.
    """
    _, g = loss_and_gradient(p, x, t, cfg)
    a, v = g.flat(), p.flat()
    base = relu_pattern(p, x)
    num = np.empty_like(v)
    kink = np.zeros(v.size, bool)
    for i in range(v.size):
        num[i], hi, lo = central_difference(p, x, t, cfg, v, i, eps)
        if not (np.array_equal(relu_pattern(hi, x), base)
                and np.array_equal(relu_pattern(lo, x), base)):
            kink[i] = True
            num[i] = central_difference(p, x, t, cfg, v, i, fine)[0]
    scale = np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-8)
    return np.abs(a - num) / scale <= rtol, kink


def test_03_gradients(criterion):
    t0 = time.perf_counter()
    rates, n_coords, n_kink = [], 0, 0
    for seed in range(20):
        ok, kink = gradient_check(*random_architecture(seed))
        rates.append(ok.mean())
        n_coords += ok.size
        n_kink += int(kink.sum())
    dt = time.perf_counter() - t0
    worst = min(rates)
    ok = worst >= 0.99 and dt < 60
    criterion(3, ok, f"20 architectures, {n_coords} coordinates, worst architecture "
                     f"{worst:.4f} within 1e-4 (>= 0.99), {n_kink} kink stencils refined, "
                     f"{dt:.1f} s (< 60 s)")
    assert ok


# --- 4 and 5: long automaton run ----------------------------------------------

LONG_ITERS = 100_000
FRAME_GAP = 10_000
TRACK_GAP = 100


@pytest.fixture(scope="module")
def long_run():
    """64x256 bed for 1e5 iterations with slope checks after every change."""
    p = SimParams(width=64, length=256, init_depth=10, perturb=True)
    lat = new_lattice(p, 2024)
    n0 = lat.total_slabs
    counts, frames, track = [n0], [surface_height(lat).values], [surface_height(lat).values]
    violation = None
    t0 = time.perf_counter()
    try:
        for i in range(LONG_ITERS // TRACK_GAP):
            step(lat, TRACK_GAP, check_slopes=True)
            counts.append(lat.total_slabs)
            f = surface_height(lat).values
            track.append(f)
            if (i + 1) * TRACK_GAP % FRAME_GAP == 0:
                frames.append(f)
    except AssertionError as exc:
        violation = str(exc)
    dt = time.perf_counter() - t0
    return dict(p=p, n0=n0, counts=counts, frames=frames, track=track, seconds=dt,
                violation=violation, iterations=lat.iterations)


@pytest.mark.slow
def test_04_conservation(criterion, long_run):
    r = long_run
    constant = all(c == r["n0"] for c in r["counts"])
    done = r["iterations"] == LONG_ITERS and r["violation"] is None
    fast = r["seconds"] < 60
    ok = constant and done and fast
    criterion(4, ok, f"{r['iterations']} iterations on 64x256, slabs constant={constant} "
                     f"({r['n0']}), slope violations={'none' if done else r['violation']}, "
                     f"{r['seconds']:.1f} s (< 60 s)")
    assert constant and done, "conservation or slope stability broken"
    assert fast, f"runtime {r['seconds']:.1f} s exceeds 60 s"


@pytest.mark.slow
def test_05_migration(criterion, long_run):
    r = long_run
    f = r["frames"]
    dx = [displacement(a, b)[0] for a, b in zip(f, f[1:])]
    n = len(dx)
    nonneg = sum(d >= 0 for d in dx)
    # not gated: the accumulated short-gap displacement follows the dunes
    # through every wrap that the 1e4-gap measurement cannot see
    tr = r["track"]
    per = FRAME_GAP // TRACK_GAP
    steps = [displacement(a, b)[0] for a, b in zip(tr, tr[1:])]
    tracked = [sum(steps[k * per:(k + 1) * per]) for k in range(n)]
    ok = n >= 5 and nonneg >= 0.9 * n and max(dx) > 0
    criterion(5, ok, f"{n} pairs {FRAME_GAP} iterations apart, dx={dx}, non-negative "
                     f"{nonneg}/{n} (>= 90%), tracked cells per pair={tracked}")
    assert ok


# --- 6: speedup ---------------------------------------------------------------

@pytest.mark.slow
def test_06_speedup(criterion):
    p = SimParams(width=150, length=600)
    model = init_params(EmulatorSpec(4, 16, 2, 1, "sigmoid"), 0)
    rep = speed_benchmark(p, model, n_frames=3, steps_per_frame=30, repeats=3)
    s = rep["speedup"]
    ok = s >= 10
    criterion(6, ok, f"150x600, 30 steps/frame: CA {rep['ca_frames_per_sec']:.3g} fps, "
                     f"emulator {rep['model_frames_per_sec']:.3g} fps, speedup {s:.1f}x (>= 10); "
                     f"{rep.meta['hardware']}")
    assert ok


# --- 7: rollout error growth --------------------------------------------------

DUNE_SCALE = 20.0     # metres; frames are divided by this for the sigmoid output


@pytest.mark.slow
def test_07_error_growth(criterion):
    p = SimParams(width=64, length=128)
    series = [run(p, seed, 61, 3.0) for seed in range(4)]
    train_set, held = series[:3], series[3]
    tiles = tile_many(train_set, 4, 32, 16)
    spec = EmulatorSpec(4, 16, 2, 1, "sigmoid")
    cfg = TrainConfig(learning_rate=3e-3, batch_size=32, epochs=15, seed=0)
    params, _ = train(tiles.inputs / DUNE_SCALE, spec, cfg, targets=tiles.targets / DUNE_SCALE)
    thr = (p.init_depth + 1) * p.slab_height
    per = error_growth(persistence, held, 4, 20, thr)
    mod = error_growth(params, held, 4, 20, thr, scale=DUNE_SCALE)
    long = rollout(params, held.frames[-4:], 122, p.cell_size, 3.0, scale=DUNE_SCALE)
    finite = len(long) == 122 and bool(np.isfinite(long.frames).all())
    grow_p = per[-1][1] >= per[0][1]
    grow_m = mod[-1][1] >= mod[0][1]
    ok = grow_p and grow_m and finite
    criterion(7, ok, f"held-out rmse step1 -> step20: persistence {per[0][1]:.3f} -> "
                     f"{per[-1][1]:.3f} m, emulator {mod[0][1]:.3f} -> {mod[-1][1]:.3f} m; "
                     f"area accuracy step1 {per[0][2]:.3f}/{mod[0][2]:.3f}; "
                     f"122-step rollout finite={finite} (max {long.frames.max():.2f} m)")
    assert ok


# --- 8: metric sanity ---------------------------------------------------------

def test_08_metrics(criterion):
    g = np.random.default_rng(8)
    a = g.random((40, 60)).astype(np.float32)
    same = area_accuracy(a, a, 0.5)
    b = (a >= 0.5).astype(np.float32)
    comp = area_accuracy(b, 1 - b, 0.5)
    worst = -np.inf
    for _ in range(1000):
        shape = tuple(g.integers(1, 20, 2))
        x, y, z = (g.normal(0, g.uniform(0.1, 10), shape) for _ in range(3))
        worst = max(worst, rmse(x, z) - rmse(x, y) - rmse(y, z))
    ok = same == 1.0 and comp == 0.0 and worst <= 1e-12
    criterion(8, ok, f"identical {same}, complement {comp}, 1000 triangle triples, "
                     f"max violation {worst:.3g}")
    assert ok


# --- 9: serialization -------------------------------------------------------------

def random_f32(g, shape):
    bits = g.integers(0, 2**32, size=shape, dtype=np.uint64).astype(np.uint32).view(np.float32)
    bad = ~np.isfinite(bits)
    bits[bad] = g.normal(size=int(bad.sum()))
    return bits


def random_manifest(g):
    alphabet = list("abcxyz_.019 -+:/") + ["é", "µ", "漢"]
    m = {}
    for _ in range(int(g.integers(0, 6))):
        k = "".join(g.choice(alphabet[:-3], size=int(g.integers(1, 8)))).strip() or "k"
        m[k] = "".join(g.choice(alphabet + ["="], size=int(g.integers(0, 12))))
    return m


def test_09_serialization(criterion, tmp_path):
    g = np.random.default_rng(9)
    dfs_ok = 0
    for i in range(1000):
        n, r, c = (int(v) for v in g.integers(1, 6, 3))
        s = FrameSeries(random_f32(g, (n, r, c)), float(g.uniform(0.01, 5)),
                        float(g.uniform(0.1, 90)), random_manifest(g))
        if i % 100 == 0:
            dfs1.write_dfs1(s, tmp_path / "s.dfs1")
            back = dfs1.read_dfs1(tmp_path / "s.dfs1")
        else:
            back = dfs1.from_bytes(dfs1.to_bytes(s))
        dfs_ok += back == s and back.frames.tobytes() == s.frames.tobytes()
    emp_ok = 0
    for i in range(1000):
        spec = EmulatorSpec(int(g.integers(1, 5)), int(g.integers(1, 9)), int(g.integers(1, 4)),
                            int(g.integers(1, 3)), ("identity", "sigmoid")[g.integers(2)])
        shapes = spec.layer_shapes()
        p = EmulatorParams(spec, [random_f32(g, s) for s in shapes],
                           [random_f32(g, (s[0],)) for s in shapes])
        if i % 100 == 0:
            emp1.write_emp1(p, tmp_path / "p.emp1")
            back = emp1.read_emp1(tmp_path / "p.emp1")
        else:
            back = emp1.from_bytes(emp1.to_bytes(p))
        emp_ok += back == p
    errors = []
    for mod, blob in ((dfs1, dfs1.to_bytes(s)), (emp1, emp1.to_bytes(p))):
        for magic in (b"XXXX", b"\0\0\0\0", blob[:3] + b"2"):
            try:
                mod.from_bytes(magic + blob[4:])
                errors.append(None)
            except FormatError as exc:
                errors.append(exc.offset)
    ok = dfs_ok == 1000 and emp_ok == 1000 and errors == [0] * 6
    criterion(9, ok, f"DFS1 {dfs_ok}/1000, EMP1 {emp_ok}/1000 bit-exact; corrupted magic "
                     f"-> FormatError offsets {errors}")
    assert ok


# --- 10: paper-scale dry run -------------------------------------------------------

DRY_RUN = """\
data.n_series = 4
sim.width = 150
sim.length = 600
data.n_frames = 61
data.frame_interval_days = 3.0
tile.history = 4
tile.size = 32
tile.stride = 32
model.output_activation = sigmoid
model.height_scale = 20
train.learning_rate = 0.003
train.epochs = 5
train.n_series = 3
eval.series = 3
eval.horizon = 20
"""


@pytest.mark.slow
def test_10_dry_run(criterion, tmp_path):
    cfg = tmp_path / "paper.cfg"
    cfg.write_text(DRY_RUN)
    out = tmp_path / "run"
    t0 = time.perf_counter()
    code = main(["simulate", "--config", str(cfg), "--out", str(out)])
    dt = time.perf_counter() - t0
    geo = []
    for seed in range(4):
        s = dfs1.read_dfs1(out / f"series_{seed}.dfs1")
        m = s.manifest
        geo.append(len(s) == 61 and s.shape == (600, 150) and s.cell_size == 0.5
                   and s.frame_interval_days == 3.0 and float(m["extent_x_m"]) == 300.0
                   and float(m["extent_y_m"]) == 75.0 and float(m["duration_days"]) == 180.0
                   and m["seed"] == str(seed))
    # the accuracy target is reported, not gated
    acc = {}
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    for mode in ("model", "persistence"):
        assert main(["evaluate", "--config", str(cfg), "--out", str(out),
                     "--set", f"eval.mode={mode}"]) == 0
        rep = EvalReport.from_text((out / "report.txt").read_text())
        acc[mode] = (rep["area_accuracy"], rep["rollout_area_accuracy_step20"])
    ok = code == 0 and all(geo) and dt < 600
    criterion(10, ok, f"simulate 4 x 150x600 x 61 frames in {dt:.1f} s (< 600 s), manifests "
                      f"75x300 m / 180 days ok={all(geo)}; one-step dune-area accuracy "
                      f"emulator {acc['model'][0]:.3f}, persistence {acc['persistence'][0]:.3f}; "
                      f"step-20 rollout {acc['model'][1]:.3f}/{acc['persistence'][1]:.3f} "
                      f"(project target 0.8, not gated)")
    assert ok
