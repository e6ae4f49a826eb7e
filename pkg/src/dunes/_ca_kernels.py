"""Inner loops of the slab automaton.

Kernels work on int32 heights stored as ``h[y, x]``: one contiguous row per
cross-wind position, with the wind blowing toward increasing ``x`` and both
axes wrapping.  (The public :class:`~dunes.ca.Lattice` exposes the transposed
``[x, y]`` view.)

Shadowing is tracked incrementally.  ``sd[y, x]`` holds the distance to the
upwind column whose shadow line is highest over ``x``, so that

    line(x) = h[x - sd[x]] - slope * sd[x]

and ``x`` is shadowed when ``line(x) > h[x]``.  The line obeys
``line(x + 1) = max(h[x], line(x)) - slope``, so a height change only has to
be pushed downwind until the source assignment stops changing.
"""

import numpy as np

from ._backend import njit
from .rng import next_below, next_double

# counter slots
EVENTS = 0
EROSIONS = 1
HOPS = 2
AVALANCHE_MOVES = 3
SHADOW_MISMATCHES = 4
SHADOWED_EROSIONS = 5
FORCED_DEPOSITS = 6
SLOPE_VIOLATIONS = 7
N_COUNTERS = 8

# run_events verify levels
CHECK_SLOPES = 1
CHECK_SHADOW = 2


@njit(inline=True)
def shadowed_at(h, sd, y, x, slope):
    d = sd[y, x]
    xs = x - d
    if xs < 0:
        xs += h.shape[1]
    return h[y, xs] - slope * d > h[y, x]


@njit
def shadowed_brute(h, y, x, slope):
    length = h.shape[1]
    hx = h[y, x]
    for d in range(1, length):
        xs = x - d
        if xs < 0:
            xs += length
        if h[y, xs] - slope * d > hx:
            return True
    return False


@njit
def brute_mask(h, slope, out):
    width, length = h.shape
    for y in range(width):
        for x in range(length):
            out[y, x] = shadowed_brute(h, y, x, slope)


@njit
def mask_from_shadow(h, sd, slope, out):
    width, length = h.shape
    for y in range(width):
        for x in range(length):
            out[y, x] = shadowed_at(h, sd, y, x, slope)


@njit
def init_shadow(h, sd, slope):
    width, length = h.shape
    for y in range(width):
        m = 0
        for x in range(1, length):
            if h[y, x] > h[y, m]:
                m = x
        # the row maximum always casts the line over its downwind neighbour
        src = m
        hs = h[y, m]
        d = 0
        p = m
        for _ in range(length):
            q = p + 1
            if q == length:
                q = 0
            hp = h[y, p]
            if d == 0 or hp >= hs - slope * d:
                src = p
                hs = hp
                d = 1
            else:
                d += 1
            sd[y, q] = d
            p = q


@njit(inline=True)
def propagate(h, sd, y, x, slope):
    """Refresh shadow sources downwind of a height change at ``(y, x)``."""
    length = h.shape[1]
    d = sd[y, x]
    src = x - d
    if src < 0:
        src += length
    hs = h[y, src]
    p = x
    for _ in range(2 * length + 2):
        q = p + 1
        if q == length:
            q = 0
        hp = h[y, p]
        if hp >= hs - slope * d:
            src = p
            hs = hp
            d = 1
        else:
            d += 1
        if d == sd[y, q] and src != x:
            return
        sd[y, q] = d
        p = q


@njit(inline=True)
def _push(stack, inq, top, c):
    if not inq[c]:
        inq[c] = True
        stack[top] = c
        top += 1
    return top


@njit
def relax(h, sd, stack, inq, top, repose, slope, counters):
    """Topple columns on the stack until no slope exceeds ``repose``.

    A slab always moves to the lowest 4-neighbour, ties going to the first of
    +x, -x, +y, -y.  Each move lowers the sum of squared heights by at least
    two, so the loop terminates.  Stack entries are ``y * length + x``.
    """
    width, length = h.shape
    while top > 0:
        top -= 1
        c = stack[top]
        inq[c] = False
        y = c // length
        x = c - y * length
        xp = x + 1 if x + 1 < length else 0
        xm = x - 1 if x > 0 else length - 1
        yp = y + 1 if y + 1 < width else 0
        ym = y - 1 if y > 0 else width - 1
        bx = xp
        by = y
        best = h[y, xp]
        if h[y, xm] < best:
            best = h[y, xm]
            bx = xm
            by = y
        if h[yp, x] < best:
            best = h[yp, x]
            bx = x
            by = yp
        if h[ym, x] < best:
            best = h[ym, x]
            bx = x
            by = ym
        if h[y, x] - best > repose:
            h[y, x] -= 1
            h[by, bx] += 1
            counters[AVALANCHE_MOVES] += 1
            propagate(h, sd, y, x, slope)
            propagate(h, sd, by, bx, slope)
            top = _push(stack, inq, top, c)
            top = _push(stack, inq, top, by * length + bx)
            top = _push(stack, inq, top, y * length + xp)
            top = _push(stack, inq, top, y * length + xm)
            top = _push(stack, inq, top, yp * length + x)
            top = _push(stack, inq, top, ym * length + x)
    return top


@njit
def relax_all(h, sd, stack, inq, repose, slope, counters):
    top = 0
    for c in range(h.size):
        top = _push(stack, inq, top, c)
    relax(h, sd, stack, inq, top, repose, slope, counters)


@njit(inline=True)
def _unsettle(h, y, x, repose, counters):
    """Column that finally gives up a slab taken from ``(y, x)``.

    On a stable bed a hole can only destabilise a neighbour standing more
    than ``repose`` above it, and that neighbour's unique lowest side is the
    hole, so toppling it refills the hole and moves the deficit one cell
    uphill.  The cascade is one path up the steepest ascent (ties go to the
    first of +x, -x, +y, -y) and only its last column changes height.
    """
    width, length = h.shape
    while True:
        xp = x + 1 if x + 1 < length else 0
        xm = x - 1 if x > 0 else length - 1
        yp = y + 1 if y + 1 < width else 0
        ym = y - 1 if y > 0 else width - 1
        bx = xp
        by = y
        best = h[y, xp]
        if h[y, xm] > best:
            best = h[y, xm]
            bx = xm
            by = y
        if h[yp, x] > best:
            best = h[yp, x]
            bx = x
            by = yp
        if h[ym, x] > best:
            best = h[ym, x]
            bx = x
            by = ym
        if best - (h[y, x] - 1) > repose:
            counters[AVALANCHE_MOVES] += 1
            x = bx
            y = by
        else:
            return y * length + x


@njit(inline=True)
def _settle(h, y, x, repose, counters):
    """Column where a slab dropped on ``(y, x)`` finally comes to rest.

    On a stable bed only the column receiving the slab can become unstable,
    and toppling it restores its old height, so the cascade is one path down
    the steepest descent with the same tie order as :func:`relax`.
    """
    width, length = h.shape
    while True:
        xp = x + 1 if x + 1 < length else 0
        xm = x - 1 if x > 0 else length - 1
        yp = y + 1 if y + 1 < width else 0
        ym = y - 1 if y > 0 else width - 1
        bx = xp
        by = y
        best = h[y, xp]
        if h[y, xm] < best:
            best = h[y, xm]
            bx = xm
            by = y
        if h[yp, x] < best:
            best = h[yp, x]
            bx = x
            by = yp
        if h[ym, x] < best:
            best = h[ym, x]
            bx = x
            by = ym
        if h[y, x] + 1 - best > repose:
            counters[AVALANCHE_MOVES] += 1
            x = bx
            y = by
        else:
            return y * length + x


@njit
def run_events(h, sd, shelter, state, n_events, hop, p_sand, p_bare, slope,
               repose, max_hops, counters, verify):
    """Apply ``n_events`` candidate erosion events.

    Random draws per event, in order: one ``next_below(length * width)``
    picking column ``(x, y) = divmod(index, width)``; then, for each landing
    that is not shadowed, one ``next_double`` compared with the deposition
    probability.  Shadowed landings deposit without a draw.

    ``verify`` >= CHECK_SLOPES counts repose violations around every changed
    column; >= CHECK_SHADOW also compares each shadow lookup with a direct
    upwind search.  Neither consumes random draws.
    """
    width, length = h.shape
    n_cells = length * width
    counters[EVENTS] += n_events
    for _ in range(n_events):
        c = next_below(state, n_cells)
        x = c // width
        y = c - x * width
        # one combined test: separate branches mispredict on every event
        shade = shadowed_at(h, sd, y, x, slope)
        erode = (h[y, x] > 0) & (not shade) & (not shelter[y, x])
        if verify >= CHECK_SHADOW and h[y, x] > 0:
            brute = shadowed_brute(h, y, x, slope)
            if shade != brute:
                counters[SHADOW_MISMATCHES] += 1
            if brute and erode:
                counters[SHADOWED_EROSIONS] += 1
        if not erode:
            continue
        counters[EROSIONS] += 1
        c = _unsettle(h, y, x, repose, counters)
        yr = c // length
        xr = c - yr * length
        h[yr, xr] -= 1
        propagate(h, sd, yr, xr, slope)
        if verify >= CHECK_SLOPES and local_slope(h, yr, xr) > repose:
            counters[SLOPE_VIOLATIONS] += 1

        xl = x
        n_hops = 0
        while True:
            xl += hop
            while xl >= length:
                xl -= length
            n_hops += 1
            land_shade = shadowed_at(h, sd, y, xl, slope)
            if verify >= CHECK_SHADOW and land_shade != shadowed_brute(h, y, xl, slope):
                counters[SHADOW_MISMATCHES] += 1
            if land_shade or shelter[y, xl]:
                break
            p = p_sand if h[y, xl] > 0 else p_bare
            if next_double(state) < p:
                break
            if n_hops >= max_hops:
                counters[FORCED_DEPOSITS] += 1
                break
        counters[HOPS] += n_hops
        c = _settle(h, y, xl, repose, counters)
        yr = c // length
        xr = c - yr * length
        h[yr, xr] += 1
        propagate(h, sd, yr, xr, slope)
        if verify >= CHECK_SLOPES and local_slope(h, yr, xr) > repose:
            counters[SLOPE_VIOLATIONS] += 1


@njit(inline=True)
def local_slope(h, y, x):
    """Largest height difference between ``(y, x)`` and a 4-neighbour."""
    width, length = h.shape
    hc = h[y, x]
    xp = x + 1 if x + 1 < length else 0
    xm = x - 1 if x > 0 else length - 1
    yp = y + 1 if y + 1 < width else 0
    ym = y - 1 if y > 0 else width - 1
    return max(abs(hc - h[y, xp]), abs(hc - h[y, xm]),
               abs(hc - h[yp, x]), abs(hc - h[ym, x]))


@njit
def max_slope(h):
    """Largest height difference between any two 4-adjacent columns."""
    width, length = h.shape
    worst = 0
    for y in range(width):
        yp = y + 1 if y + 1 < width else 0
        for x in range(length):
            xp = x + 1 if x + 1 < length else 0
            d = abs(h[y, x] - h[y, xp])
            if d > worst:
                worst = d
            d = abs(h[y, x] - h[yp, x])
            if d > worst:
                worst = d
    return worst


@njit
def total_slabs(h):
    s = np.int64(0)
    for y in range(h.shape[0]):
        for x in range(h.shape[1]):
            s += h[y, x]
    return s
