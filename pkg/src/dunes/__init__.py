"""Slab cellular automaton of wind-blown sand dunes, Game of Life reference
automaton, and a small hand-written convolutional emulator of both."""

from .ca import (Lattice, SimParams, avalanche, max_slope, new_lattice, run, shadow_mask,
                 shadow_mask_brute, step, surface_height)
from .dfs1 import read_dfs1, write_dfs1
from .emp1 import read_emp1, write_emp1
from .emulator import (EmulatorParams, EmulatorSpec, TrainConfig, forward, init_params,
                       life_exact_params, life_training_defaults,
                       loss_and_gradient, rollout, train)
from .errors import (ConfigError, DunesError, FormatError, NonFiniteLoss, ShapeError,
                     UndefinedDisplacement, UnsupportedConfiguration, ValidationError)
from .evaluation import (EvalReport, error_growth, ingest_external, interval_sweep,
                         speed_benchmark)
from .frames import (FrameSeries, HeightFrame, TileSet, add_pixel_noise, binarize,
                     export_config, tile)
from .life import LifeBoard, life_step, random_board
from .metrics import area_accuracy, displacement, rmse
from .rng import Xorshift

__version__ = "0.1.0"
