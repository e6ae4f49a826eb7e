"""Run configuration: one ``key = value`` per line, ``#`` starts a comment.

Every key is listed in :data:`KEYS` with its type, default and meaning.
Unknown keys and out-of-range values are rejected when the file is parsed,
so a bad config fails before any work starts.
"""

from dataclasses import fields

from .ca import SimParams
from .emulator import ACTIVATIONS, LOSSES, OPTIMIZERS, EmulatorSpec, TrainConfig
from .errors import ConfigError


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text):
    return [int(v) for v in text.replace(",", " ").split()]


def _opt_float(text):
    return None if text.strip().lower() in ("", "auto", "none") else float(text)


def _opt_int(text):
    return None if text.strip().lower() in ("", "auto", "none", "all") else int(text)


_SIM_DOC = {
    "width": "cells across the wind (y)",
    "length": "cells along the wind (x)",
    "init_depth": "initial sand depth, slabs",
    "cell_size": "cell edge, metres",
    "slab_height": "slab thickness, metres (auto = 0.5 * cell_size)",
    "hop_length": "saltation hop, cells",
    "p_deposit_sand": "deposition probability on sand",
    "p_deposit_bare": "deposition probability on bare ground",
    "shadow_slope": "tangent of the shadow angle",
    "repose_slope": "largest stable neighbour difference, slabs",
    "steps_per_day": "automaton iterations per simulated day",
    "wind_speed_label": "nominal wind speed, m/s (metadata only)",
    "perturb": "roughen the initial bed by +-1 slab",
    "max_hops": "hops after which a slab is forced to deposit",
}

# key: (parser, default, description)
KEYS = {}
_SIM_PARSE = {"width": int, "length": int, "init_depth": int, "hop_length": int,
              "max_hops": int, "perturb": _bool, "slab_height": _opt_float}
for _f in fields(SimParams):
    KEYS[f"sim.{_f.name}"] = (_SIM_PARSE.get(_f.name, float), _f.default, _SIM_DOC[_f.name])

KEYS.update({
    "data.generator": (str, "slab-ca", "slab-ca or life"),
    "data.n_series": (int, 1, "independent series to simulate"),
    "data.base_seed": (int, 0, "seed of series 0; series i uses base_seed + i"),
    "data.n_frames": (int, 61, "frames per series, including the initial state"),
    "data.frame_interval_days": (float, 3.0, "simulated days between frames"),
    "data.config_id": (int, 1, "export layout: 1 heights, 2 voxels, 4/5 the same with noise"),
    "data.noise_p": (float, 0.01, "per-pixel noise probability for configs 4 and 5"),
    "data.life_density": (float, 0.38, "initial live fraction for the life generator"),
    "tile.history": (int, 1, "input frames per sample"),
    "tile.size": (int, 32, "tile edge, cells"),
    "tile.stride": (int, 32, "spacing between tile corners, cells"),
    "tile.frame_stride": (int, 1, "frames between consecutive inputs and the target"),
    "model.hidden_channels": (int, 16, "channels of the 3x3 layer and hidden 1x1 layers"),
    "model.n_pointwise_layers": (int, 2, "number of 1x1 layers, output layer included"),
    "model.output_activation": (str, "identity", "identity or sigmoid"),
    "model.height_scale": (float, 1.0, "frames are divided by this before entering the network"),
    "train.learning_rate": (float, 0.001, "optimizer step size"),
    "train.batch_size": (int, 32, "samples per minibatch"),
    "train.epochs": (int, 10, "passes over the tile set"),
    "train.optimizer": (str, "adam", "sgd, momentum or adam"),
    "train.loss": (str, "mse", "mse or bce (bce needs sigmoid output)"),
    "train.seed": (int, 0, "initialisation and shuffling seed"),
    "train.n_series": (_opt_int, None, "use only the first n dataset series (all = every one)"),
    "eval.mode": (str, "model", "model, persistence, oracle or external"),
    "eval.series": (int, -1, "dataset series to score against (negative counts from the end)"),
    "eval.threshold": (_opt_float, None, "dune-cover threshold, metres (auto = init_depth + 1 slabs)"),
    "eval.horizon": (int, 20, "autoregressive rollout length"),
    "eval.start": (int, 0, "first truth frame of the rollout window"),
    "eval.intervals": (_int_list, [], "frame strides for the interval sweep (empty = skip)"),
    "eval.external": (str, "", "DFS1 file of external predictions (mode external)"),
    "eval.truth_offset": (int, 0, "truth frame matching external prediction 0"),
    "paths.data": (str, "", "dataset directory (default: the output directory)"),
    "paths.params": (str, "", "EMP1 parameter file (default: <out>/params.emp1)"),
    "render.series": (str, "", "DFS1 file to render (default: first dataset series)"),
    "render.frame": (int, 0, "frame index to render"),
    "render.file": (str, "", "PGM file name (default: frame_<index>.pgm)"),
    "bench.n_frames": (int, 3, "frames per timed repetition"),
    "bench.steps_per_frame": (int, 30, "automaton iterations per frame"),
    "bench.repeats": (int, 3, "timed repetitions (median reported)"),
})

_CHOICES = {
    "data.generator": ("slab-ca", "life"),
    "model.output_activation": ACTIVATIONS,
    "train.optimizer": OPTIMIZERS,
    "train.loss": LOSSES,
    "eval.mode": ("model", "persistence", "oracle", "external"),
}

_MIN = {
    "data.n_series": 1, "data.n_frames": 1, "tile.history": 1, "tile.size": 1,
    "tile.stride": 1, "tile.frame_stride": 1, "eval.horizon": 1, "eval.start": 0,
    "eval.truth_offset": 0, "render.frame": 0, "bench.n_frames": 1, "bench.repeats": 3,
    "bench.steps_per_frame": 1,
}


class RunConfig:
    """Validated settings for every subcommand; look values up with ``cfg[key]``."""

    def __init__(self, values=None, source="<config>"):
        self.source = source
        self.values = {k: v[1] for k, v in KEYS.items()}
        self.explicit = set()
        for k, v in (values or {}).items():
            self.set(k, v)
        self.validate()

    def set(self, key, value):
        if key not in KEYS:
            raise ConfigError(f"{self.source}: unknown config key {key!r}")
        parse = KEYS[key][0]
        if isinstance(value, str):
            try:
                value = parse(value)
            except ValueError as exc:
                raise ConfigError(f"{self.source}: bad value for {key}: {exc}") from None
        self.values[key] = value
        self.explicit.add(key)

    def __getitem__(self, key):
        return self.values[key]

    def validate(self):
        v = self.values
        for k, choices in _CHOICES.items():
            if v[k] not in choices:
                raise ConfigError(f"{self.source}: {k} must be one of {choices} (got {v[k]!r})")
        for k, lo in _MIN.items():
            if v[k] < lo:
                raise ConfigError(f"{self.source}: {k} must be >= {lo} (got {v[k]})")
        if not v["data.frame_interval_days"] > 0:
            raise ConfigError(f"{self.source}: data.frame_interval_days must be > 0")
        if not 0.0 <= v["data.noise_p"] <= 1.0:
            raise ConfigError(f"{self.source}: data.noise_p must lie in [0, 1]")
        if not 0.0 <= v["data.life_density"] <= 1.0:
            raise ConfigError(f"{self.source}: data.life_density must lie in [0, 1]")
        if v["data.config_id"] not in (1, 2, 3, 4, 5, 6):
            raise ConfigError(f"{self.source}: data.config_id must be 1-6 (got {v['data.config_id']})")
        if v["train.n_series"] is not None and v["train.n_series"] < 1:
            raise ConfigError(f"{self.source}: train.n_series must be >= 1")
        if not v["model.height_scale"] > 0:
            raise ConfigError(f"{self.source}: model.height_scale must be > 0")
        if v["train.loss"] == "bce" and v["model.output_activation"] != "sigmoid":
            raise ConfigError(f"{self.source}: train.loss = bce needs "
                              "model.output_activation = sigmoid")
        if any(d < 1 for d in v["eval.intervals"]):
            raise ConfigError(f"{self.source}: eval.intervals must all be >= 1")
        try:
            sim = self.sim_params()
            if v["data.generator"] == "slab-ca":
                sim.steps_between(v["data.frame_interval_days"])
            self.emulator_spec()
            self.train_config()
        except ConfigError as exc:
            raise ConfigError(f"{self.source}: {exc}") from None

    def sim_params(self):
        return SimParams(**{f.name: self.values[f"sim.{f.name}"] for f in fields(SimParams)})

    def emulator_spec(self):
        return EmulatorSpec(in_channels=self["tile.history"],
                            hidden_channels=self["model.hidden_channels"],
                            n_pointwise_layers=self["model.n_pointwise_layers"],
                            out_channels=1,
                            output_activation=self["model.output_activation"])

    def train_config(self):
        return TrainConfig(learning_rate=self["train.learning_rate"],
                           batch_size=self["train.batch_size"], epochs=self["train.epochs"],
                           optimizer=self["train.optimizer"], loss=self["train.loss"],
                           seed=self["train.seed"])

    def threshold(self):
        t = self["eval.threshold"]
        if t is not None:
            return t
        if self["data.generator"] == "life":
            return 0.5
        p = self.sim_params()
        return (p.init_depth + 1) * p.slab_height


def parse_config_text(text, source="<config>", overrides=()):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {k!r}")
        if k in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {k!r}")
        values[k] = v
    for item in overrides:
        k, sep, v = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        values[k.strip()] = v.strip()
    return RunConfig(values, source)


def load_config(path, overrides=()):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path), overrides)


def describe_keys():
    """``key = default  # description`` lines for every key."""
    out = []
    for k, (_, default, doc) in KEYS.items():
        if isinstance(default, list):
            default = ",".join(map(str, default))
        elif default is None:
            default = "auto"
        elif isinstance(default, bool):
            default = "true" if default else "false"
        out.append(f"{k} = {default}  # {doc}")
    return "\n".join(out)
