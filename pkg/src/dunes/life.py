"""Conway's Game of Life (B3/S23) on a torus.

A deterministic binary automaton whose next state is a function of each
cell's 3x3 neighbourhood, used as the reference case for convolutional
emulation.
"""

import numpy as np

from .errors import ConfigError
from .frames import FrameSeries, HeightFrame
from .rng import Xorshift


class LifeBoard:
    """Read-only binary grid of shape ``(height, width)``."""

    __slots__ = ("cells",)

    def __init__(self, cells):
        c = np.array(cells, dtype=np.uint8)
        if c.ndim != 2:
            raise ConfigError(f"board must be 2D, got shape {c.shape}")
        if c.size and c.max() > 1:
            raise ConfigError("board cells must be 0 or 1")
        c.flags.writeable = False
        self.cells = c

    @property
    def height(self):
        return self.cells.shape[0]

    @property
    def width(self):
        return self.cells.shape[1]

    @property
    def shape(self):
        return self.cells.shape

    def population(self):
        return int(self.cells.sum())

    def __eq__(self, other):
        if isinstance(other, LifeBoard):
            other = other.cells
        return np.array_equal(self.cells, np.asarray(other))

    def __repr__(self):
        return f"LifeBoard({self.height}x{self.width}, alive={self.population()})"


def _cells(board):
    return board.cells if isinstance(board, LifeBoard) else np.asarray(board, dtype=np.uint8)


def neighbour_count(cells):
    c = cells.astype(np.int16)
    n = np.zeros_like(c)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr or dc:
                n += np.roll(np.roll(c, dr, axis=0), dc, axis=1)
    return n


def life_step(board):
    """One B3/S23 generation with wrap-around neighbours."""
    c = _cells(board)
    n = neighbour_count(c)
    nxt = (n == 3) | ((c == 1) & (n == 2))
    return LifeBoard(nxt)


def random_board(width, height, density, seed):
    """Each cell alive independently with probability ``density``.

    Draws one double per cell in row-major order; alive iff draw < density.
    """
    if not 0.0 <= density <= 1.0:
        raise ConfigError(f"density must lie in [0, 1] (got {density})")
    u = Xorshift(seed).random(int(width) * int(height)).reshape(int(height), int(width))
    return LifeBoard(u < density)


def board_to_frame(board):
    """Board as a single-channel 0.0/1.0 frame."""
    return HeightFrame(_cells(board).astype(np.float32), 1.0)


def life_series(board, n_frames, frame_interval_days=1.0, generator="life"):
    """``n_frames`` consecutive generations starting from ``board``."""
    if n_frames < 1:
        raise ConfigError(f"n_frames must be >= 1 (got {n_frames})")
    b = board if isinstance(board, LifeBoard) else LifeBoard(board)
    frames = np.empty((n_frames,) + b.shape, dtype=np.float32)
    for i in range(n_frames):
        frames[i] = b.cells
        if i + 1 < n_frames:
            b = life_step(b)
    manifest = {"generator": generator, "rng": Xorshift.name, "config_id": "1",
                "n_frames": str(n_frames)}
    return FrameSeries(frames, 1.0, frame_interval_days, manifest)


def life_dataset(n_boards, size, density, seed, generations=1):
    """Random boards and their successors as ``(inputs, targets)`` arrays.

    Shapes are ``(n_boards * generations, 1, size, size)``.  Board ``k``
    is drawn with seed ``seed + k``; each of its ``generations`` transitions
    is one sample.
    """
    xs, ys = [], []
    for k in range(n_boards):
        b = random_board(size, size, density, seed + k)
        for _ in range(generations):
            nb = life_step(b)
            xs.append(b.cells)
            ys.append(nb.cells)
            b = nb
    x = np.asarray(xs, dtype=np.float32)[:, None]
    y = np.asarray(ys, dtype=np.float32)[:, None]
    return x, y
