"""Inner loops of the two processes.

State is a bundle of flat arrays so the same code runs under numba and as
plain Python (``SCHELLING_DISABLE_JIT=1``):

* ``types``   int8[n], 1 = ALPHA, 0 = BETA
* ``acount``  int32[n], ALPHA count in ``[u-w, u+w]``
* ``items``   int64[2, n], unhappy nodes of each type (row = type)
* ``sizes``   int64[2], occupied prefix of each row
* ``pos``     int64[n], slot of u in its row or -1
* ``counters`` int64[4]: stage, events, boundaries, blocked streak
"""

import numpy as np

from ._accel import kernel
from .rng import randbelow

SWAPPED = 0
FLIPPED = 1
BLOCKED = 2
NO_UNHAPPY_PAIR = 3
NO_UNHAPPY = 4

STOP_TERMINATED = 0
STOP_SEGREGATED = 1
STOP_MAX_STAGES = 2
STOP_BUFFER_FULL = 3

STAGE = 0
EVENTS = 1
BOUNDARIES = 2
STREAK = 3


@kernel
def same_count(types, acount, u, W):
    if types[u] == 1:
        return acount[u]
    return W - acount[u]


@kernel
def set_insert(items, sizes, pos, s, u):
    k = sizes[s]
    items[s, k] = u
    pos[u] = k
    sizes[s] = k + 1


@kernel
def set_remove(items, sizes, pos, s, u):
    k = pos[u]
    last = sizes[s] - 1
    moved = items[s, last]
    items[s, k] = moved
    pos[moved] = k
    sizes[s] = last
    pos[u] = -1


@kernel
def refresh(u, types, acount, items, sizes, pos, W, T):
    unhappy = same_count(types, acount, u, W) < T
    if unhappy and pos[u] < 0:
        set_insert(items, sizes, pos, types[u], u)
    elif not unhappy and pos[u] >= 0:
        set_remove(items, sizes, pos, types[u], u)


@kernel
def flip(u, n, w, T, types, acount, items, sizes, pos, counters):
    """Change the type of u and repair counts, unhappy sets and boundaries."""
    W = 2 * w + 1
    if pos[u] >= 0:
        set_remove(items, sizes, pos, types[u], u)
    left = u - 1 if u > 0 else n - 1
    right = u + 1 if u < n - 1 else 0
    before = int(types[left] != types[u]) + int(types[right] != types[u])
    new = 1 - types[u]
    types[u] = new
    after = int(types[left] != new) + int(types[right] != new)
    counters[BOUNDARIES] += after - before
    delta = 1 if new == 1 else -1
    for k in range(-w, w + 1):
        y = u + k
        if y < 0:
            y += n
        elif y >= n:
            y -= n
        acount[y] += delta
    for k in range(-w, w + 1):
        y = u + k
        if y < 0:
            y += n
        elif y >= n:
            y -= n
        refresh(y, types, acount, items, sizes, pos, W, T)


@kernel
def circ_dist(u, v, n):
    d = u - v if u >= v else v - u
    return d if 2 * d <= n else n - d


@kernel
def legal_pair(u, v, n, w, acount):
    """Swap legality for ALPHA u and BETA v, judged on the post-swap ring.

    The ALPHA mover keeps ``acount[u]-1`` like neighbours and gains
    ``acount[v]-[u in N(v)]``; the BETA mover's inequality reduces to the
    same expression.
    """
    near = 1 if circ_dist(u, v, n) <= w else 0
    return acount[v] - near >= acount[u] - 1


@kernel
def step_standard(n, w, T, types, acount, items, sizes, pos, rng, counters,
                  ev_stage, ev_node, ev_from, ev_base, out):
    if sizes[1] == 0 or sizes[0] == 0:
        return NO_UNHAPPY_PAIR
    u = items[1, randbelow(rng, sizes[1])]
    v = items[0, randbelow(rng, sizes[0])]
    out[0] = u
    out[1] = v
    counters[STAGE] += 1
    if not legal_pair(u, v, n, w, acount):
        return BLOCKED
    flip(u, n, w, T, types, acount, items, sizes, pos, counters)
    flip(v, n, w, T, types, acount, items, sizes, pos, counters)
    k = counters[EVENTS] - ev_base
    if ev_stage.size >= k + 2:
        ev_stage[k] = counters[STAGE]
        ev_node[k] = u
        ev_from[k] = 1
        ev_stage[k + 1] = counters[STAGE]
        ev_node[k + 1] = v
        ev_from[k + 1] = 0
    counters[EVENTS] += 2
    return SWAPPED


@kernel
def step_simple(n, w, T, types, acount, items, sizes, pos, rng, counters,
                ev_stage, ev_node, ev_from, ev_base, out):
    total = sizes[0] + sizes[1]
    if total == 0:
        return NO_UNHAPPY
    r = randbelow(rng, total)
    if r < sizes[1]:
        u = items[1, r]
    else:
        u = items[0, r - sizes[1]]
    out[0] = u
    out[1] = -1
    counters[STAGE] += 1
    W = 2 * w + 1
    c_old = same_count(types, acount, u, W)
    if W - c_old + 1 < c_old:
        return BLOCKED
    t = types[u]
    flip(u, n, w, T, types, acount, items, sizes, pos, counters)
    k = counters[EVENTS] - ev_base
    if ev_stage.size >= k + 1:
        ev_stage[k] = counters[STAGE]
        ev_node[k] = u
        ev_from[k] = t
    counters[EVENTS] += 1
    return FLIPPED


@kernel
def has_legal_move(simple, n, w, acount, items, sizes, types):
    W = 2 * w + 1
    if simple:
        for s in range(2):
            for i in range(sizes[s]):
                u = items[s, i]
                c = same_count(types, acount, u, W)
                if W - c + 1 >= c:
                    return True
        return False
    for i in range(sizes[1]):
        u = items[1, i]
        for j in range(sizes[0]):
            if legal_pair(u, items[0, j], n, w, acount):
                return True
    return False


@kernel
def run_loop(simple, n, w, T, types, acount, items, sizes, pos, rng, counters,
             max_stages, stop_seg, stop_term, ev_stage, ev_node, ev_from, ev_base):
    """Step until a stop rule fires or the event buffer would overflow.

    Event slots are addressed as ``counters[EVENTS] - ev_base``.
    """
    out = np.empty(2, dtype=np.int64)
    cap = ev_stage.size
    while True:
        if stop_seg and counters[BOUNDARIES] <= 2:
            return STOP_SEGREGATED
        if counters[STAGE] >= max_stages:
            return STOP_MAX_STAGES
        if counters[EVENTS] - ev_base + 2 > cap:
            return STOP_BUFFER_FULL
        if simple:
            code = step_simple(n, w, T, types, acount, items, sizes, pos, rng, counters,
                               ev_stage, ev_node, ev_from, ev_base, out)
        else:
            code = step_standard(n, w, T, types, acount, items, sizes, pos, rng, counters,
                                 ev_stage, ev_node, ev_from, ev_base, out)
        if code == NO_UNHAPPY_PAIR or code == NO_UNHAPPY:
            return STOP_TERMINATED
        if code == BLOCKED:
            counters[STREAK] += 1
            if counters[STREAK] >= 4 * (sizes[0] + sizes[1]) + 16:
                counters[STREAK] = 0
                if stop_term and not has_legal_move(simple, n, w, acount, items, sizes, types):
                    return STOP_TERMINATED
        else:
            counters[STREAK] = 0


@kernel
def build_sets(n, W, T, types, acount, items, sizes, pos):
    sizes[0] = 0
    sizes[1] = 0
    for u in range(n):
        pos[u] = -1
    for u in range(n):
        if same_count(types, acount, u, W) < T:
            set_insert(items, sizes, pos, types[u], u)
