"""Rollout evaluation, interval sweeps, throughput benchmarks and reports."""

import os
import platform
import statistics
import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import _backend
from .ca import new_lattice, step
from .dfs1 import read_dfs1
from .emulator import EmulatorParams, forward, train
from .errors import ConfigError, ShapeError, ValidationError
from .frames import FrameSeries, tile
from .metrics import area_accuracy, rmse


def default_threshold(params):
    """Dune-cover threshold: one slab above the initial bed, in metres."""
    return (params.init_depth + 1) * params.slab_height


# --- report -----------------------------------------------------------------

@dataclass
class EvalReport:
    """Named metrics plus free-form comparison metadata.

    Serialised as ``key=value`` lines: ``metric.<id>=<value>``,
    ``units.<id>=<units>`` and ``meta.<key>=<value>``.
    """

    metrics: dict = field(default_factory=dict)
    units: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add(self, metric_id, value, units=""):
        value = float(value)
        if not np.isfinite(value):
            raise ValueError(f"metric {metric_id} is not finite ({value})")
        if "accuracy" in metric_id and not 0.0 <= value <= 1.0:
            raise ValueError(f"accuracy {metric_id}={value} outside [0, 1]")
        self.metrics[metric_id] = value
        self.units[metric_id] = units
        return self

    def __getitem__(self, metric_id):
        return self.metrics[metric_id]

    def to_text(self):
        lines = []
        for k, v in self.metrics.items():
            lines.append(f"metric.{k}={v!r}")
            lines.append(f"units.{k}={self.units.get(k, '')}")
        for k, v in self.meta.items():
            lines.append(f"meta.{k}={v}")
        return "".join(line + "\n" for line in lines)

    @classmethod
    def from_text(cls, text):
        rep = cls()
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            k, _, v = line.partition("=")
            kind, _, name = k.partition(".")
            if kind == "metric":
                rep.metrics[name] = float(v)
            elif kind == "units":
                rep.units[name] = v
            elif kind == "meta":
                rep.meta[name] = v
            else:
                raise ValidationError(f"unexpected report line {line!r}")
        return rep

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())


# --- predictors -------------------------------------------------------------

def persistence(window, t=None):
    """Baseline predictor: the next frame equals the newest one."""
    return window[-1]


class Oracle:
    """Predictor that looks up the true frame ``t`` of ``truth``."""

    def __init__(self, truth):
        self.frames = truth.frames if isinstance(truth, FrameSeries) else np.asarray(truth)

    def __call__(self, window, t):
        return self.frames[t]


def as_predictor(model, scale=1.0):
    """Wrap :class:`EmulatorParams` as ``f(window, t) -> next frame``.

    The network sees ``window / scale`` and its output is multiplied back.
    """
    if isinstance(model, EmulatorParams):
        def predict(window, t=None):
            x = (np.asarray(window, dtype=np.float32) / np.float32(scale))[None]
            return forward(model, x)[0, 0] * np.float32(scale)
        predict.history = model.spec.in_channels
        return predict
    if callable(model):
        return model
    raise TypeError("model must be EmulatorParams or a callable(window, t)")


def _frames(truth, frame_stride=1):
    f = truth.frames if isinstance(truth, FrameSeries) else np.asarray(truth, dtype=np.float32)
    return f[::frame_stride]


def error_growth(model, truth, history, horizon, threshold, start=0, frame_stride=1,
                 scale=1.0):
    """Autoregressive rollout scored against the truth at every step.

    The first ``history`` frames from ``start`` seed the window; prediction
    ``k`` (1-based) is compared with truth frame ``start + history + k - 1``
    of the (optionally subsampled) series.  Returns ``[(k, rmse, accuracy)]``.
    ``model`` is :class:`EmulatorParams` (inputs divided by ``scale``) or a
    callable ``f(window, t)``.
    """
    if history < 1 or horizon < 1:
        raise ConfigError("history and horizon must be >= 1")
    f = _frames(truth, frame_stride)
    if start + history + horizon > len(f):
        raise ConfigError(f"truth has {len(f)} frames, need {start + history + horizon} "
                          f"for history {history} + horizon {horizon} from frame {start}")
    predict = as_predictor(model, scale)
    need = getattr(predict, "history", None)
    if need is not None and need != history:
        raise ShapeError(f"model expects {need} history frames, got {history}", need, history)
    window = f[start:start + history].astype(np.float32)
    curve = []
    for k in range(1, horizon + 1):
        t = start + history + k - 1
        nxt = np.asarray(predict(window, t), dtype=np.float32)
        if nxt.shape != f[t].shape:
            raise ShapeError(f"prediction shape {nxt.shape} != truth {f[t].shape}",
                             f[t].shape, nxt.shape)
        if not np.isfinite(nxt).all():
            raise FloatingPointError(f"non-finite prediction at step {k}")
        curve.append((k, rmse(nxt, f[t]), area_accuracy(nxt, f[t], threshold)))
        window = np.concatenate([window[1:], nxt[None]])
    return curve


def one_step_scores(model, series, history, frame_stride, threshold, scale=1.0):
    """Mean one-step rmse and area accuracy over every valid window."""
    f = series.frames if isinstance(series, FrameSeries) else np.asarray(series)
    predict = as_predictor(model, scale)
    span = history * frame_stride
    if span >= len(f):
        raise ConfigError(f"frame stride {frame_stride} with history {history} does not fit "
                          f"a series of {len(f)} frames")
    errs, accs = [], []
    for t in range(len(f) - span):
        window = f[t:t + span:frame_stride]
        nxt = predict(window, t + span)
        errs.append(rmse(nxt, f[t + span]))
        accs.append(area_accuracy(nxt, f[t + span], threshold))
    return float(np.mean(errs)), float(np.mean(accs)), len(errs)


def interval_sweep(series, intervals, threshold, model=None, spec=None, config=None,
                   train_series=None, history=1, tile_size=32, tile_stride=None, scale=1.0):
    """One-step scores at each frame stride in ``intervals``, in order.

    With ``spec`` and ``config`` a fresh emulator is trained per stride on
    tiles of ``train_series`` (default: ``series``) cut at that stride; else
    ``model`` is scored as given (default: persistence).
    """
    train_list = train_series if train_series is not None else [series]
    if isinstance(train_list, FrameSeries):
        train_list = [train_list]
    rows = []
    for d in intervals:
        d = int(d)
        if d < 1 or d * history >= len(series):
            raise ConfigError(f"interval {d} frames exceeds what a {len(series)}-frame series "
                              f"allows with history {history}")
        m = model if model is not None else persistence
        if spec is not None and config is not None:
            sets = [tile(s, history, tile_size, tile_stride or tile_size, d, series_index=i)
                    for i, s in enumerate(train_list)]
            sets = [s for s in sets if len(s)]
            if not sets:
                raise ConfigError(f"no training tiles at interval {d}")
            x = np.concatenate([s.inputs for s in sets])
            y = np.concatenate([s.targets for s in sets])
            m, _ = train(x / np.float32(scale), spec, config, targets=y / np.float32(scale))
        err, acc, n = one_step_scores(m, series, history, d, threshold, scale)
        rows.append({"interval_frames": d,
                     "interval_days": d * float(series.frame_interval_days),
                     "area_accuracy": acc, "rmse": err, "n_pairs": n})
    return rows


# --- benchmarks -------------------------------------------------------------

def hardware_note():
    return (f"{platform.machine()} {platform.processor() or 'cpu'}, "
            f"{os.cpu_count()} logical cpus, python {platform.python_version()}, "
            f"backend {_backend.BACKEND}, single-threaded")


def _median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def ca_frame_rate(sim_params, n_frames, steps_per_frame, repeats=3, seed=0, warmup=5):
    """Frames per second of the automaton, each frame ``steps_per_frame`` sweeps."""
    lat = new_lattice(sim_params, seed)
    step(lat, warmup)   # compiles the kernels and leaves the flat start

    def run():
        for _ in range(n_frames):
            step(lat, steps_per_frame)
    return n_frames / _median_time(run, repeats)


def model_frame_rate(model, shape, n_frames, repeats=3):
    x = np.zeros((1, model.spec.in_channels) + tuple(shape), dtype=np.float32)
    forward(model, x)

    def run():
        for _ in range(n_frames):
            forward(model, x)
    return n_frames / _median_time(run, repeats)


def speed_benchmark(sim_params, model_params, n_frames, steps_per_frame=30, repeats=3, seed=0):
    """Throughput of the automaton against emulator forward passes on equal grids.

    Pass ``model_params=None`` to time the automaton against itself.  Every
    measurement is the median of ``repeats`` timed runs after a warm-up, with
    BLAS limited to one thread.  The returned report carries both rates, the
    speedup ``model / ca`` and the run geometry.
    """
    if n_frames < 1:
        raise ConfigError(f"n_frames must be >= 1 (got {n_frames})")
    if repeats < 3:
        raise ConfigError(f"at least 3 timing repetitions are required (got {repeats})")
    shape = (sim_params.length, sim_params.width)
    with threadpool_limits(limits=1):
        ca = ca_frame_rate(sim_params, n_frames, steps_per_frame, repeats, seed)
        if model_params is None:
            other = ca_frame_rate(sim_params, n_frames, steps_per_frame, repeats, seed)
        else:
            other = model_frame_rate(model_params, shape, n_frames, repeats)
    rep = EvalReport()
    rep.add("ca_frames_per_sec", ca, "1/s")
    rep.add("model_frames_per_sec", other, "1/s")
    rep.add("speedup", other / ca, "")
    rep.meta.update({"grid": f"{shape[0]}x{shape[1]}", "steps_per_frame": str(steps_per_frame),
                     "n_frames": str(n_frames), "repeats": str(repeats),
                     "model": "ca" if model_params is None else "cnn-emulator",
                     "hardware": hardware_note()})
    return rep


# --- external predictions ---------------------------------------------------

def ingest_external(path):
    """Read a DFS1 file of predictions; its manifest must name a ``generator``."""
    series = read_dfs1(path)
    if not series.manifest.get("generator"):
        raise ValidationError(f"{path}: manifest has no 'generator' key")
    return series


def compare_series(pred, truth, threshold, offset=0):
    """Frame-by-frame comparison of ``pred`` with ``truth[offset:]``."""
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction frames {pred.shape} != truth frames {truth.shape}",
                         truth.shape, pred.shape)
    n = min(len(pred), len(truth) - offset)
    if n < 1:
        raise ConfigError("no overlapping frames to compare")
    accs = [area_accuracy(pred.frames[i], truth.frames[offset + i], threshold) for i in range(n)]
    errs = [rmse(pred.frames[i], truth.frames[offset + i]) for i in range(n)]
    rep = EvalReport()
    rep.add("area_accuracy", float(np.mean(accs)))
    rep.add("area_accuracy_min", float(np.min(accs)))
    rep.add("rmse", float(np.mean(errs)), "m")
    rep.add("rmse_max", float(np.max(errs)), "m")
    rep.meta.update({"threshold_m": repr(float(threshold)), "n_frames": str(n),
                     "truth_offset": str(offset),
                     "pred_generator": pred.manifest.get("generator", ""),
                     "truth_generator": truth.manifest.get("generator", "")})
    return rep
