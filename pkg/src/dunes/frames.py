"""Frames, frame series and training tiles."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, UnsupportedConfiguration
from .rng import Xorshift


def _f32(x):
    # DFS1 stores these as float32; keep the in-memory value identical
    return float(np.float32(x))


@dataclass
class HeightFrame:
    """A 2D grid of values (metres, or 0/1 for binary boards).

    ``values`` has shape ``(height, width)``; for automaton output that is
    ``(length, width)``, i.e. rows run along the wind.
    """

    values: np.ndarray
    cell_size: float = 1.0

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ShapeError(f"frame must be 2D, got shape {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise ValueError("frame values must be finite")
        self.cell_size = _f32(self.cell_size)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


@dataclass
class FrameSeries:
    """Ordered, equally sized frames with their physical metadata."""

    frames: np.ndarray
    cell_size: float = 1.0
    frame_interval_days: float = 1.0
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float32)
        if f.ndim == 2:
            f = f[None]
        if f.ndim != 3 or f.shape[0] < 1:
            raise ShapeError(f"series needs shape (n_frames, height, width), got {f.shape}")
        if not np.isfinite(f).all():
            raise ValueError("series values must be finite")
        if not self.frame_interval_days > 0:
            raise ConfigError(f"frame_interval_days must be > 0 (got {self.frame_interval_days})")
        self.frames = np.ascontiguousarray(f)
        self.cell_size = _f32(self.cell_size)
        self.frame_interval_days = _f32(self.frame_interval_days)
        self.manifest = {str(k): str(v) for k, v in self.manifest.items()}

    @classmethod
    def from_frames(cls, frames, frame_interval_days=1.0, manifest=None):
        frames = list(frames)
        vals = np.stack([f.values for f in frames])
        return cls(vals, frames[0].cell_size, frame_interval_days, dict(manifest or {}))

    def __len__(self):
        return self.frames.shape[0]

    def __getitem__(self, i):
        return HeightFrame(self.frames[i], self.cell_size)

    @property
    def shape(self):
        return self.frames.shape[1:]

    def __eq__(self, other):
        if not isinstance(other, FrameSeries):
            return NotImplemented
        return (self.frames.shape == other.frames.shape
                and self.frames.tobytes() == other.frames.tobytes()
                and self.cell_size == other.cell_size
                and self.frame_interval_days == other.frame_interval_days
                and self.manifest == other.manifest)


@dataclass
class TileSet:
    """Training samples: ``inputs`` (n, history, t, t), ``targets`` (n, 1, t, t).

    ``provenance[i]`` is ``(series, t, x, y)``: the source series index, the
    first input frame, and the tile's top-left corner.
    """

    inputs: np.ndarray
    targets: np.ndarray
    provenance: np.ndarray

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def history(self):
        return self.inputs.shape[1]

    def subset(self, idx):
        return TileSet(self.inputs[idx], self.targets[idx], self.provenance[idx])

    @staticmethod
    def concat(sets):
        sets = [s for s in sets if len(s)]
        if not sets:
            raise ConfigError("no non-empty tile sets to concatenate")
        return TileSet(np.concatenate([s.inputs for s in sets]),
                       np.concatenate([s.targets for s in sets]),
                       np.concatenate([s.provenance for s in sets]))


def tile_positions(size, tile_size, stride):
    return range(0, size - tile_size + 1, stride)


def tile(series, history, tile_size, stride, frame_stride=1, series_index=0):
    """Cut a series into (history inputs, one target) spatial tiles.

    Inputs sit at frames ``t, t + d, ..., t + (history - 1) d`` and the
    target at ``t + history * d`` with ``d = frame_stride``.
    """
    if history < 1:
        raise ConfigError(f"history must be >= 1 (got {history})")
    if frame_stride < 1:
        raise ConfigError(f"frame_stride must be >= 1 (got {frame_stride})")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1 (got {stride})")
    rows, cols = series.shape
    if tile_size < 1 or tile_size > rows or tile_size > cols:
        raise ConfigError(f"tile_size {tile_size} does not fit frames of shape {(rows, cols)}")
    xs = tile_positions(rows, tile_size, stride)
    ys = tile_positions(cols, tile_size, stride)
    n_t = max(len(series) - history * frame_stride, 0)
    n = n_t * len(xs) * len(ys)
    inputs = np.empty((n, history, tile_size, tile_size), dtype=np.float32)
    targets = np.empty((n, 1, tile_size, tile_size), dtype=np.float32)
    prov = np.empty((n, 4), dtype=np.int64)
    f = series.frames
    i = 0
    for t in range(n_t):
        ts = t + frame_stride * np.arange(history + 1)
        for x in xs:
            for y in ys:
                win = f[ts, x:x + tile_size, y:y + tile_size]
                inputs[i] = win[:history]
                targets[i, 0] = win[history]
                prov[i] = (series_index, t, x, y)
                i += 1
    return TileSet(inputs, targets, prov)


def tile_many(series_list, history, tile_size, stride, frame_stride=1):
    if not series_list:
        raise ConfigError("no series to tile")
    sets = [tile(s, history, tile_size, stride, frame_stride, series_index=k)
            for k, s in enumerate(series_list)]
    nonempty = [s for s in sets if len(s)]
    return TileSet.concat(nonempty) if nonempty else sets[0]


def add_pixel_noise(frame, p, amplitude, seed):
    """Perturb each pixel with probability ``p`` by +-``amplitude``.

    Two draws are taken per pixel in row-major order, a uniform double for
    the decision and a 64-bit word whose top bit picks the sign (set means
    ``+``).  Results are clamped at zero; ``frame`` itself is untouched.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"noise probability must lie in [0, 1] (got {p})")
    vals = frame.values
    n = vals.size
    rng = Xorshift(seed)
    draws = rng.uint64(2 * n)
    u = (draws[0::2] >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
    hit = u < p
    sign = np.where(draws[1::2] >> np.uint64(63), np.float32(1), np.float32(-1))
    hit = (hit & (amplitude != 0)).reshape(vals.shape)
    moved = np.maximum(vals + sign.reshape(vals.shape) * np.float32(amplitude), np.float32(0))
    out = np.where(hit, moved, vals).astype(np.float32)
    return HeightFrame(out, frame.cell_size)


def binarize(frame, threshold):
    """1.0 where the value is >= ``threshold``, else 0.0."""
    return HeightFrame((frame.values >= np.float32(threshold)).astype(np.float32),
                       frame.cell_size)


NOISE_P = 0.01
SUPPORTED_CONFIGS = (1, 2, 4, 5)


def voxelize(frame_values, slab_height, n_layers):
    slabs = np.rint(np.asarray(frame_values, np.float64) / slab_height).astype(np.int64)
    z = np.arange(n_layers)[:, None, None]
    return (z < slabs[None]).astype(np.float32)


def export_config(source, config_id, n_layers=None, noise_p=NOISE_P, noise_amplitude=None,
                  seed=0):
    """Re-express a lattice or height series in one of the supported layouts.

    1: height frames.  2: binary grain/air voxels, one frame per z-layer
    (layers of frame ``t`` occupy frames ``t * n_layers ...``).  4 and 5 are
    1 and 2 after per-pixel noise of +-1 slab (probability ``noise_p``) on
    the height surface.  3 and 6 need wind-state cells and are refused.
    """
    if config_id in (3, 6):
        raise UnsupportedConfiguration(
            f"configuration {config_id} needs continuous wind-direction states, which this "
            "slab automaton does not model (no wind solver)")
    if config_id not in SUPPORTED_CONFIGS:
        raise UnsupportedConfiguration(f"unknown configuration {config_id}")
    from .ca import Lattice, surface_height

    if isinstance(source, Lattice):
        p = source.params
        series = FrameSeries(surface_height(source).values[None], p.cell_size, 1.0,
                             {"generator": "slab-ca", **p.to_manifest()})
        slab_height = p.slab_height
    else:
        series = source
        slab_height = float(series.manifest.get("sim.slab_height", 1.0))

    frames = series.frames
    manifest = dict(series.manifest)
    if config_id in (4, 5):
        amp = slab_height if noise_amplitude is None else noise_amplitude
        frames = np.stack([
            add_pixel_noise(HeightFrame(f, series.cell_size), noise_p, amp, seed + t).values
            for t, f in enumerate(frames)])
        manifest.update({"noise_p": repr(float(noise_p)), "noise_amplitude": repr(float(amp)),
                         "noise_seed": str(seed)})
    if config_id in (2, 5):
        if n_layers is None:
            n_layers = int(np.rint(frames.max() / slab_height)) + 1 if frames.size else 1
        frames = np.concatenate([voxelize(f, slab_height, n_layers) for f in frames])
        manifest["n_layers"] = str(n_layers)
    manifest["config_id"] = str(config_id)
    return FrameSeries(frames, series.cell_size, series.frame_interval_days, manifest)
