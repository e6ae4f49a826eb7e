"""Stochastic slab automaton of wind-blown sand.

Sand is stored as integer stacks of slabs on a periodic ``length x width``
bed; the wind blows along the first axis (``x``).  Each iteration draws
``length * width`` candidate events.  A candidate column that holds sand and
is not in a wind shadow loses its top slab, which then hops ``hop_length``
cells downwind until it sticks, with certainty in a shadow zone and with
``p_deposit_sand`` or ``p_deposit_bare`` elsewhere.  After every erosion and
deposition the neighbourhood is relaxed so that no slope exceeds
``repose_slope``.
"""

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import _ca_kernels as K
from ._backend import quiet_overflow
from .errors import ConfigError
from .frames import FrameSeries, HeightFrame
from .rng import Xorshift, new_state


@dataclass
class SimParams:
    """Physical and numerical parameters of one simulation.

    ``width`` counts cells across the wind (``y``), ``length`` along it
    (``x``); lengths are in cells and heights in slabs unless stated.
    ``shadow_slope`` is the tangent of the shadow angle in physical units and
    is converted to slabs per cell with ``cell_size / slab_height``.
    """

    width: int = 150
    length: int = 600
    init_depth: int = 10
    cell_size: float = 0.5
    slab_height: float | None = None
    hop_length: int = 5
    p_deposit_sand: float = 0.6
    p_deposit_bare: float = 0.4
    shadow_slope: float = 0.27
    repose_slope: float = 2.0
    steps_per_day: float = 10.0
    wind_speed_label: float = 10.0
    perturb: bool = False
    max_hops: int = 10000

    def __post_init__(self):
        if self.slab_height is None:
            self.slab_height = 0.5 * self.cell_size
        self.validate()

    def validate(self):
        def need(cond, what):
            if not cond:
                raise ConfigError(f"invalid SimParams: requires {what}")

        need(self.width >= 1, f"width >= 1 (got {self.width})")
        need(self.hop_length >= 1, f"hop_length >= 1 (got {self.hop_length})")
        need(self.length >= self.hop_length,
             f"length >= hop_length (got {self.length} < {self.hop_length})")
        need(self.init_depth >= 0, f"init_depth >= 0 (got {self.init_depth})")
        need(0.0 <= self.p_deposit_bare <= self.p_deposit_sand <= 1.0,
             "0 <= p_deposit_bare <= p_deposit_sand <= 1 "
             f"(got {self.p_deposit_bare}, {self.p_deposit_sand})")
        need(self.repose_slope >= 1, f"repose_slope >= 1 slab (got {self.repose_slope})")
        need(self.shadow_slope > 0, f"shadow_slope > 0 (got {self.shadow_slope})")
        need(self.cell_size > 0, f"cell_size > 0 (got {self.cell_size})")
        need(self.slab_height > 0, f"slab_height > 0 (got {self.slab_height})")
        need(self.steps_per_day > 0, f"steps_per_day > 0 (got {self.steps_per_day})")
        need(self.max_hops >= 1, f"max_hops >= 1 (got {self.max_hops})")

    @property
    def shadow_step(self):
        """Shadow-line drop per cell, in slabs."""
        return self.shadow_slope * self.cell_size / self.slab_height

    def steps_between(self, frame_interval_days):
        """Iterations separating two frames ``frame_interval_days`` apart."""
        n = self.steps_per_day * frame_interval_days
        k = int(round(n))
        if k < 1 or abs(n - k) > 1e-9 * max(1.0, n):
            raise ConfigError(
                f"steps_per_day * frame_interval_days must be a positive integer, got {n}")
        return k

    def to_manifest(self):
        return {f"sim.{k}": _fmt(v) for k, v in asdict(self).items()}

    @classmethod
    def from_manifest(cls, manifest):
        kwargs = {}
        for f in fields(cls):
            key = f"sim.{f.name}"
            if key in manifest:
                kwargs[f.name] = _parse_like(f.name, manifest[key])
        return cls(**kwargs)


_INT_FIELDS = {"width", "length", "init_depth", "hop_length", "max_hops"}


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _parse_like(name, text):
    if name == "perturb":
        return text.strip().lower() in ("1", "true", "yes")
    if name in _INT_FIELDS:
        return int(text)
    return float(text)


class Lattice:
    """One automaton world: slab heights plus generator state.

    Mutating calls (:func:`step`, :func:`avalanche`) work in place and need
    exclusive access.  ``shelter`` marks columns that behave as permanently
    shadowed (no erosion, certain deposition); it is all ``False`` unless set.
    """

    def __init__(self, heights, params, seed=0, shelter=None):
        h = np.asarray(heights)
        if h.shape != (params.length, params.width):
            raise ConfigError(
                f"heights shape {h.shape} != (length, width) = {(params.length, params.width)}")
        if (h < 0).any():
            raise ConfigError("heights must be >= 0")
        # kernels want the wind axis contiguous: store [y, x]
        self._h = np.ascontiguousarray(h.T, dtype=np.int32)
        self.params = params
        self.seed = int(seed)
        self.rng_state = new_state(seed)
        if shelter is None:
            shelter = np.zeros(h.shape, dtype=np.bool_)
        self._shelter = np.ascontiguousarray(np.asarray(shelter, dtype=np.bool_).T)
        self.counters = np.zeros(K.N_COUNTERS, dtype=np.int64)
        self.iterations = 0
        n = h.size
        self._stack = np.zeros(n, dtype=np.int64)
        self._inq = np.zeros(n, dtype=np.bool_)
        self._sd = np.ones(self._h.shape, dtype=np.int32)
        self._relaxed = False
        self._refresh_shadow()

    @property
    def heights(self):
        """Slab counts indexed ``[x, y]`` (a view; edit through :meth:`set_heights`)."""
        return self._h.T

    @property
    def shelter(self):
        return self._shelter.T

    def set_heights(self, heights):
        self._h[...] = np.asarray(heights, dtype=np.int32).T
        self._relaxed = False
        self._refresh_shadow()

    def _refresh_shadow(self):
        K.init_shadow(self._h, self._sd, self.params.shadow_step)

    def copy(self):
        other = Lattice.__new__(Lattice)
        other.__dict__.update(self.__dict__)
        for name in ("_h", "rng_state", "_shelter", "counters", "_stack", "_inq", "_sd"):
            setattr(other, name, getattr(self, name).copy())
        return other

    @property
    def total_slabs(self):
        return int(K.total_slabs(self._h))

    def voxels(self, n_layers=None):
        """Binary ``(n_layers, length, width)`` grain/air view of the columns."""
        if n_layers is None:
            n_layers = int(self.heights.max()) if self.heights.size else 0
        z = np.arange(n_layers, dtype=np.int32)[:, None, None]
        return (z < self.heights[None]).astype(np.float32)

    def __repr__(self):
        p = self.params
        return (f"Lattice({p.length}x{p.width}, slabs={self.total_slabs}, "
                f"iterations={self.iterations})")


def new_lattice(params, seed):
    """Flat bed of ``init_depth`` slabs, optionally roughened by +-1 slab."""
    params.validate()
    h = np.full((params.length, params.width), params.init_depth, dtype=np.int32)
    if params.perturb:
        rng = Xorshift(seed ^ 0x5EED)
        bump = np.floor(rng.random(h.size) * 3).astype(np.int32).reshape(h.shape) - 1
        h = np.maximum(h + bump, 0)
    lat = Lattice(h, params, seed)
    if params.perturb:
        avalanche(lat)
    return lat


def shadow_mask(lattice):
    """Boolean mask of columns lying strictly below an upwind shadow line."""
    p = lattice.params
    out = np.zeros(lattice._h.shape, dtype=np.bool_)
    K.mask_from_shadow(lattice._h, lattice._sd, p.shadow_step, out)
    return out.T


def shadow_mask_brute(heights, shadow_step):
    """Direct search over every upwind distance; slow, used as a check."""
    h = np.ascontiguousarray(np.asarray(heights).T, dtype=np.int32)
    out = np.zeros(h.shape, dtype=np.bool_)
    K.brute_mask(h, float(shadow_step), out)
    return out.T


def avalanche(lattice):
    """Relax until every 4-neighbour height difference is <= ``repose_slope``."""
    p = lattice.params
    K.relax_all(lattice._h, lattice._sd, lattice._stack, lattice._inq,
                float(p.repose_slope), p.shadow_step, lattice.counters)
    lattice._relaxed = True
    return lattice


def step(lattice, iterations=1, verify=False, check_slopes=False):
    """Advance ``lattice`` in place by ``iterations`` sweeps of events.

    ``check_slopes=True`` inspects the neighbourhood of every column whose
    height changes and raises :class:`AssertionError` if a slope ends above
    ``repose_slope``; it is cheap.  ``verify=True`` implies it and also
    cross-checks every shadow lookup against a direct search, raising on any
    mismatch or on an erosion from a shadowed column.  Neither changes the
    trajectory.
    """
    p = lattice.params
    if not lattice._relaxed:
        avalanche(lattice)
    n_events = int(iterations) * p.length * p.width
    if n_events <= 0:
        return lattice
    level = K.CHECK_SHADOW if verify else K.CHECK_SLOPES if check_slopes else 0
    before = lattice.counters.copy()
    with quiet_overflow():
        K.run_events(lattice._h, lattice._sd, lattice._shelter, lattice.rng_state,
                     n_events, p.hop_length, float(p.p_deposit_sand),
                     float(p.p_deposit_bare), p.shadow_step, float(p.repose_slope),
                     p.max_hops, lattice.counters, level)
    lattice.iterations += int(iterations)
    if level:
        delta = lattice.counters - before
        assert delta[K.SLOPE_VIOLATIONS] == 0, "slope above repose after relaxation"
    if verify:
        assert delta[K.SHADOW_MISMATCHES] == 0, "incremental shadow disagrees with direct search"
        assert delta[K.SHADOWED_EROSIONS] == 0, "slab eroded from a shadowed column"
        assert max_slope(lattice) <= p.repose_slope, "slope above repose after relaxation"
    return lattice


def max_slope(lattice):
    return int(K.max_slope(lattice._h))


def surface_height(lattice):
    """Surface elevation in metres as a :class:`HeightFrame`."""
    p = lattice.params
    values = (lattice.heights * np.float32(p.slab_height)).astype(np.float32)
    return HeightFrame(values, p.cell_size)


def run(params, seed, n_frames, frame_interval_days, generator="slab-ca"):
    """Simulate and capture ``n_frames`` surfaces, frame 0 being the start."""
    if n_frames < 1:
        raise ConfigError(f"n_frames must be >= 1 (got {n_frames})")
    if not frame_interval_days > 0:
        raise ConfigError(f"frame_interval_days must be > 0 (got {frame_interval_days})")
    params.validate()
    per_frame = params.steps_between(frame_interval_days)
    lat = new_lattice(params, seed)
    frames = np.empty((n_frames, params.length, params.width), dtype=np.float32)
    frames[0] = surface_height(lat).values
    for i in range(1, n_frames):
        step(lat, per_frame)
        frames[i] = surface_height(lat).values
    manifest = {
        "generator": generator,
        "rng": Xorshift.name,
        "seed": str(int(seed)),
        "config_id": "1",
        "steps_per_day": _fmt(float(params.steps_per_day)),
        "steps_per_frame": str(per_frame),
        "n_frames": str(n_frames),
        "extent_x_m": _fmt(params.length * params.cell_size),
        "extent_y_m": _fmt(params.width * params.cell_size),
        "duration_days": _fmt((n_frames - 1) * float(frame_interval_days)),
    }
    manifest.update(params.to_manifest())
    return FrameSeries(frames, params.cell_size, frame_interval_days, manifest)
