"""Command-line entry point: ``dunes <command> --config FILE [--out DIR]``.

Exit codes: 0 success, 1 unexpected failure, 2 bad configuration or
unwritable output, 3 empty tile set, 4 model/data shape mismatch,
5 render frame index out of range.
"""

import argparse
import os
import sys

import numpy as np

from .ca import run as run_ca
from .config import describe_keys, load_config
from .dfs1 import decode_manifest, read_dfs1, write_dfs1
from .emp1 import read_emp1, write_emp1
from .emulator import train as train_model
from .errors import ConfigError, DunesError, FormatError, ShapeError
from .evaluation import (EvalReport, Oracle, compare_series, error_growth, ingest_external,
                         interval_sweep, one_step_scores, persistence, speed_benchmark)
from .frames import export_config, tile_many
from .life import life_series, random_board

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_EMPTY = 3
EXIT_SHAPE = 4
EXIT_RANGE = 5

INDEX_FILE = "dataset.txt"


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _out_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".dunes-write-test")
        with open(probe, "wb"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise CliError(f"output path {path} is not writable: {exc.strerror or exc}",
                       EXIT_CONFIG) from None
    return path


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}", EXIT_CONFIG) from None


def _kv(d):
    return "".join(f"{k}={v}\n" for k, v in d.items())


# --- simulate ---------------------------------------------------------------

def make_series(cfg, seed):
    n_frames = cfg["data.n_frames"]
    interval = cfg["data.frame_interval_days"]
    if cfg["data.generator"] == "life":
        p = cfg.sim_params()
        board = random_board(p.width, p.length, cfg["data.life_density"], seed)
        s = life_series(board, n_frames, interval)
        s.manifest.update({"seed": str(seed), "life.density": repr(cfg["data.life_density"])})
        return s
    return run_ca(cfg.sim_params(), seed, n_frames, interval)


def cmd_simulate(cfg, out):
    out = _out_dir(out)
    index = {"n_series": str(cfg["data.n_series"]), "generator": cfg["data.generator"],
             "config_id": str(cfg["data.config_id"])}
    for i in range(cfg["data.n_series"]):
        seed = cfg["data.base_seed"] + i
        series = make_series(cfg, seed)
        cid = cfg["data.config_id"]
        if cid != 1:
            series = export_config(series, cid, noise_p=cfg["data.noise_p"], seed=seed)
        name = f"series_{seed}.dfs1"
        try:
            write_dfs1(series, os.path.join(out, name))
        except OSError as exc:
            raise CliError(f"cannot write {name}: {exc.strerror or exc}", EXIT_CONFIG) from None
        index[f"series.{i}"] = name
        index[f"seed.{i}"] = str(seed)
        print(f"wrote {os.path.join(out, name)} ({len(series)} frames "
              f"{series.shape[0]}x{series.shape[1]})")
    _write_text(os.path.join(out, INDEX_FILE), _kv(index))
    return EXIT_OK


def load_dataset(data_dir):
    path = os.path.join(data_dir, INDEX_FILE)
    try:
        with open(path, "rb") as fh:
            index = decode_manifest(fh.read())
    except OSError as exc:
        raise CliError(f"cannot read dataset index {path}: {exc.strerror}", EXIT_CONFIG) from None
    n = int(index.get("n_series", 0))
    return [read_dfs1(os.path.join(data_dir, index[f"series.{i}"])) for i in range(n)]


# --- train ------------------------------------------------------------------

def cmd_train(cfg, out):
    out = _out_dir(out)
    data_dir = cfg["paths.data"] or out
    series = load_dataset(data_dir)
    if cfg["train.n_series"] is not None:
        series = series[:cfg["train.n_series"]]
    tiles = tile_many(series, cfg["tile.history"], cfg["tile.size"], cfg["tile.stride"],
                      cfg["tile.frame_stride"]) if series else None
    if tiles is None or len(tiles) == 0:
        raise CliError("tile set is empty: no series frames fit the history/tile settings",
                       EXIT_EMPTY)
    spec = cfg.emulator_spec()
    tc = cfg.train_config()
    print(f"training on {len(tiles)} tiles of {cfg['tile.size']}x{cfg['tile.size']}, "
          f"{tc.epochs} epochs")
    scale = np.float32(cfg["model.height_scale"])
    params, history = train_model(tiles.inputs / scale, spec, tc, targets=tiles.targets / scale)
    params_path = cfg["paths.params"] or os.path.join(out, "params.emp1")
    try:
        write_emp1(params, params_path)
    except OSError as exc:
        raise CliError(f"cannot write {params_path}: {exc.strerror}", EXIT_CONFIG) from None
    _write_text(os.path.join(out, "loss.txt"),
                _kv({f"epoch.{i}": repr(v) for i, v in enumerate(history)}))
    print(f"wrote {params_path}; final loss {history[-1]:.6g}")
    return EXIT_OK


# --- evaluate ---------------------------------------------------------------

def cmd_evaluate(cfg, out):
    out = _out_dir(out)
    data_dir = cfg["paths.data"] or out
    series = load_dataset(data_dir)
    if not series:
        raise CliError("dataset has no series", EXIT_CONFIG)
    try:
        truth = series[cfg["eval.series"]]
    except IndexError:
        raise CliError(f"eval.series {cfg['eval.series']} out of range for {len(series)} series",
                       EXIT_CONFIG) from None
    threshold = cfg.threshold()
    mode = cfg["eval.mode"]
    history = cfg["tile.history"]
    stride = cfg["tile.frame_stride"]

    if mode == "external":
        if not cfg["eval.external"]:
            raise CliError("eval.mode = external needs eval.external", EXIT_CONFIG)
        pred = ingest_external(cfg["eval.external"])
        if pred.shape != truth.shape:
            raise CliError(f"external frames {pred.shape} do not match truth {truth.shape}",
                           EXIT_SHAPE)
        rep = compare_series(pred, truth, threshold, cfg["eval.truth_offset"])
    else:
        if mode == "model":
            params_path = cfg["paths.params"] or os.path.join(out, "params.emp1")
            try:
                model = read_emp1(params_path)
            except OSError as exc:
                raise CliError(f"cannot read {params_path}: {exc.strerror}", EXIT_CONFIG) from None
            if model.spec.in_channels != history:
                raise CliError(f"model takes {model.spec.in_channels} input frames but "
                               f"tile.history = {history}", EXIT_SHAPE)
        elif mode == "oracle":
            model = Oracle(truth.frames[::stride])
        else:
            model = persistence
        sub = truth.frames[::stride]
        horizon = min(cfg["eval.horizon"], len(sub) - history - cfg["eval.start"])
        if horizon < 1:
            raise CliError(f"truth series of {len(truth)} frames is too short for history "
                           f"{history} at frame stride {stride}", EXIT_CONFIG)
        scale = cfg["model.height_scale"]
        curve = error_growth(model, sub, history, horizon, threshold, start=cfg["eval.start"],
                             scale=scale)
        if mode == "oracle":
            err, acc = 0.0, 1.0
            for _, e, a in curve:
                err, acc = max(err, e), min(acc, a)
            n = len(curve)
        else:
            err, acc, n = one_step_scores(model, truth, history, stride, threshold, scale)
        rep = EvalReport()
        rep.add("area_accuracy", acc)
        rep.add("rmse", err, "m")
        rep.add("rollout_area_accuracy_step1", curve[0][2])
        rep.add("rollout_rmse_step1", curve[0][1], "m")
        rep.add(f"rollout_area_accuracy_step{horizon}", curve[-1][2])
        rep.add(f"rollout_rmse_step{horizon}", curve[-1][1], "m")
        for k, e, a in curve:
            rep.meta[f"curve.{k}"] = f"{e!r},{a!r}"
        rep.meta.update({"mode": mode, "threshold_m": repr(float(threshold)),
                         "history": str(history), "frame_stride": str(stride),
                         "n_pairs": str(n), "horizon": str(horizon),
                         "truth_seed": truth.manifest.get("seed", "")})
        if cfg["eval.intervals"] and mode != "oracle":
            rows = interval_sweep(truth, cfg["eval.intervals"], threshold,
                                  model=model if mode == "model" else None, history=history,
                                  scale=scale)
            for r in rows:
                rep.meta[f"interval.{r['interval_frames']}"] = (
                    f"{r['area_accuracy']!r},{r['rmse']!r},{r['n_pairs']}")
    rep.meta["target_area_accuracy"] = "0.8"
    path = os.path.join(out, "report.txt")
    _write_text(path, rep.to_text())
    print(f"area_accuracy={rep['area_accuracy']:.6f}")
    print(f"wrote {path}")
    return EXIT_OK


# --- render -----------------------------------------------------------------

def to_pgm(values):
    """Binary PGM bytes, min-max scaled to 0..255; a constant frame is all 128."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    if hi > lo:
        px = np.rint((v - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        px = np.full(v.shape, 128, dtype=np.uint8)
    rows, cols = v.shape
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + px.tobytes()


def cmd_render(cfg, out):
    out = _out_dir(out)
    path = cfg["render.series"]
    if not path:
        data_dir = cfg["paths.data"] or out
        series = load_dataset(data_dir)
        if not series:
            raise CliError("dataset has no series to render", EXIT_CONFIG)
        s = series[0]
    else:
        s = read_dfs1(path)
    i = cfg["render.frame"]
    if not 0 <= i < len(s):
        raise CliError(f"frame index {i} out of range (series has {len(s)} frames)", EXIT_RANGE)
    name = cfg["render.file"] or f"frame_{i}.pgm"
    dest = os.path.join(out, name)
    try:
        with open(dest, "wb") as fh:
            fh.write(to_pgm(s.frames[i]))
    except OSError as exc:
        raise CliError(f"cannot write {dest}: {exc.strerror}", EXIT_CONFIG) from None
    print(f"wrote {dest}")
    return EXIT_OK


# --- bench ------------------------------------------------------------------

def cmd_bench(cfg, out):
    from .emulator import init_params

    out = _out_dir(out)
    params_path = cfg["paths.params"]
    model = read_emp1(params_path) if params_path else init_params(cfg.emulator_spec(), 0)
    rep = speed_benchmark(cfg.sim_params(), model, cfg["bench.n_frames"],
                          cfg["bench.steps_per_frame"], cfg["bench.repeats"])
    rep.meta["paper_speedups"] = "1e4 (CNN emulator), 1e7 (GAN); hardware unspecified"
    path = os.path.join(out, "bench.txt")
    _write_text(path, rep.to_text())
    print(f"ca_frames_per_sec={rep['ca_frames_per_sec']:.4g}")
    print(f"model_frames_per_sec={rep['model_frames_per_sec']:.4g}")
    print(f"speedup={rep['speedup']:.4g}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "evaluate": cmd_evaluate,
            "render": cmd_render, "bench": cmd_bench}


def build_parser():
    ap = argparse.ArgumentParser(prog="dunes", description=__doc__.split("\n")[0],
                                 epilog="Config keys:\n" + describe_keys(),
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="key = value config file")
    ap.add_argument("--out", default=".", help="output directory (default: .)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key; may repeat")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        return COMMANDS[args.command](cfg, args.out)
    except CliError as exc:
        print(f"dunes {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"dunes {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ShapeError as exc:
        print(f"dunes {args.command}: shape mismatch: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except (FormatError, DunesError) as exc:
        print(f"dunes {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
