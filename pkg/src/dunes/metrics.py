"""Frame comparison metrics."""

import numpy as np

from .errors import ShapeError, UndefinedDisplacement


def _values(frame):
    return np.asarray(getattr(frame, "values", frame), dtype=np.float64)


def _pair(a, b):
    a, b = _values(a), _values(b)
    if a.shape != b.shape:
        raise ShapeError(f"frame shapes differ: {a.shape} vs {b.shape}", a.shape, b.shape)
    return a, b


def area_accuracy(pred, truth, threshold):
    """Fraction of pixels on which ``value >= threshold`` agrees."""
    a, b = _pair(pred, truth)
    t = np.float32(threshold)
    pa = a.astype(np.float32) >= t
    pb = b.astype(np.float32) >= t
    return float((pa == pb).mean())


def rmse(pred, truth):
    a, b = _pair(pred, truth)
    d = a - b
    return float(np.sqrt(np.mean(d * d)))


def correlation_surface(frame_a, frame_b):
    """Normalised cyclic cross-correlation ``c[dx, dy]`` of mean-free frames.

    ``c[dx, dy]`` compares ``b`` with ``a`` rolled by ``(dx, dy)``, so a pure
    shift ``b = roll(a, (dx, dy))`` peaks at exactly ``(dx, dy)`` with 1.0.
    """
    a, b = _pair(frame_a, frame_b)
    a = a - a.mean()
    b = b - b.mean()
    na = np.sqrt((a * a).sum())
    nb = np.sqrt((b * b).sum())
    if na == 0 or nb == 0:
        raise UndefinedDisplacement("cross-correlation undefined: a frame has zero variance")
    c = np.fft.ifft2(np.conj(np.fft.fft2(a)) * np.fft.fft2(b)).real
    return c / (na * nb)


def displacement(frame_a, frame_b, max_shift=None, surface=None):
    """Cyclic shift ``(dx, dy)`` of ``frame_b`` relative to ``frame_a``.

    Candidates are every ``(dx, dy)`` with ``|dx|, |dy| <= max_shift``
    (default: half the smaller dimension, rounded down, capped below it).
    Correlations within 1e-9 of the best count as tied; ties go to the
    smallest ``|dx| + |dy|``, then to the lexicographically smallest pair.
    ``dx`` runs along the first (wind) axis.
    """
    a, b = _pair(frame_a, frame_b)
    rows, cols = a.shape
    lim = min(rows, cols)
    if max_shift is None:
        max_shift = max(min(lim // 2, lim - 1), 0)
    if not 0 <= max_shift < lim:
        raise ValueError(f"max_shift must lie in [0, {lim - 1}] (got {max_shift})")
    c = correlation_surface(a, b) if surface is None else surface
    s = np.arange(-max_shift, max_shift + 1)
    sub = c[np.ix_(s % rows, s % cols)]
    best = sub.max()
    cand = np.argwhere(sub >= best - 1e-9)
    pairs = sorted((abs(s[i]) + abs(s[j]), int(s[i]), int(s[j])) for i, j in cand)
    _, dx, dy = pairs[0]
    return dx, dy
