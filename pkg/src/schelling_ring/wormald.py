"""Disjoint-cycle comparison process and its differential-equation limit.

The ring C_n is compared with G_n, the same n nodes wired as n/L disjoint
cycles of length L (node ``cL + i`` sits at position i of cycle c).  A node's
*view* is the L-bit word whose bit i is the type of the node i steps to its
right within its cycle, so bit 0 is the node itself.  The census counts
nodes by view; it always has n/L * L = n entries in total.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import _kernels as K
from ._accel import kernel
from .dynamics import random_config
from .ring import RingConfig, happiness_threshold, parse_tau, window_alpha_counts
from .rng import new_state, randbelow

MAX_L = 14
# cycle words live in int64, so without a census L may go up to this
MAX_L_UNTRACKED = 62
TABLE_MAX_L = 8


@dataclass(frozen=True)
class MultiCycleParams:
    n: int
    L: int
    w: int
    tau: Fraction
    census: bool = True
    threshold: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "tau", parse_tau(self.tau))
        if self.w < 1:
            raise ValueError("w must be >= 1")
        if self.census and self.L > MAX_L:
            raise ValueError(f"L={self.L} exceeds the cap of {MAX_L} (2^L census states)")
        if self.L > MAX_L_UNTRACKED:
            raise ValueError(f"L={self.L} exceeds {MAX_L_UNTRACKED}")
        if self.L < 2 * self.w + 2:
            raise ValueError(f"need L >= 2w+2 = {2 * self.w + 2}, got L={self.L}")
        if self.n % self.L:
            raise ValueError(f"L={self.L} does not divide n={self.n}")
        if self.n < 2 * self.w + 2:
            raise ValueError("ring too small")
        object.__setattr__(self, "threshold", happiness_threshold(self.tau, self.w))

    @property
    def states(self) -> int:
        return 1 << self.L

    @property
    def cycles(self) -> int:
        return self.n // self.L


# --- views and census ---------------------------------------------------------


def rotate(code: int, i: int, L: int) -> int:
    """View of the node i places right of the node whose view is ``code``."""
    i %= L
    mask = (1 << L) - 1
    return ((code >> i) | (code << (L - i))) & mask


def view_to_string(code: int, L: int) -> str:
    return "".join(str((code >> i) & 1) for i in range(L))


def string_to_view(s: str) -> int:
    return sum(int(c) << i for i, c in enumerate(s))


def view_index(config: RingConfig, u: int, L: int) -> int:
    n = config.n
    u %= n
    base = u - u % L
    t = config.types
    return sum(int(t[base + (u - base + i) % L]) << i for i in range(L))


def node_view(config: RingConfig, u: int, L: int) -> str:
    """View of u as a 0/1 string, own type first."""
    if config.n % L:
        raise ValueError("L must divide n")
    return view_to_string(view_index(config, u, L), L)


def cycle_codes(types: np.ndarray, L: int) -> np.ndarray:
    """Per-cycle word with bit i = type at position i."""
    if types.size % L:
        raise ValueError("L must divide n")
    bits = types.reshape(-1, L).astype(np.int64)
    return (bits << np.arange(L, dtype=np.int64)).sum(axis=1)


def all_rotations(codes: np.ndarray, L: int) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    i = np.arange(L, dtype=np.int64)
    mask = (1 << L) - 1
    return ((codes[..., None] >> i) | (codes[..., None] << (L - i))) & mask


def census(config: RingConfig, L: int) -> np.ndarray:
    """Count of nodes per view, length 2^L."""
    views = all_rotations(cycle_codes(config.types, L), L)
    return np.bincount(views.ravel(), minlength=1 << L).astype(np.int64)


def view_unhappy(L: int, w: int, T: int) -> np.ndarray:
    """Whether the node at position 0 of each view is unhappy within its cycle."""
    codes = np.arange(1 << L, dtype=np.int64)
    own = codes & 1
    same = np.zeros(codes.size, dtype=np.int64)
    for j in list(range(w + 1)) + list(range(L - w, L)):
        same += ((codes >> j) & 1) == own
    return same < T


# --- the ODE ------------------------------------------------------------------


@dataclass
class OdeSystem:
    """Quadratic system ``z' = sum a(s, s', s'') z_s' z_s''``.

    ``a`` factorises: a swap of nodes with views s' and s'' in distinct cycles
    changes the census by the flip of s' plus the flip of s'', so only the
    2^L x 2^L flip matrix ``M`` (column s' = census change when a node of
    view s' flips) is stored.
    """

    L: int
    w: int
    threshold: int
    unhappy: np.ndarray
    alpha: np.ndarray
    M: sp.csr_matrix

    @property
    def states(self) -> int:
        return 1 << self.L

    @property
    def unhappy_alpha(self) -> np.ndarray:
        return self.unhappy & self.alpha

    @property
    def unhappy_beta(self) -> np.ndarray:
        return self.unhappy & ~self.alpha

    def active(self, s1: int, s2: int) -> bool:
        return bool(self.alpha[s1] != self.alpha[s2] and self.unhappy[s1] and self.unhappy[s2])

    def coefficients(self, s1: int, s2: int) -> list[tuple[int, int]]:
        """Nonzero ``(s, a(s, s1, s2))`` entries for one ordered pair."""
        if not self.active(s1, s2):
            return []
        col = self.M[:, s1].toarray().ravel() + self.M[:, s2].toarray().ravel()
        nz = np.flatnonzero(col)
        return [(int(s), int(col[s])) for s in nz]

    def table(self) -> np.ndarray:
        """Dense ``a[s, s1, s2]`` (small L only)."""
        if self.L > TABLE_MAX_L:
            raise ValueError(f"dense table limited to L <= {TABLE_MAX_L}")
        D = self.M.toarray().astype(np.int16)
        act = (self.alpha[:, None] != self.alpha[None, :]) & self.unhappy[:, None] & self.unhappy[None, :]
        a = D[:, :, None] + D[:, None, :]
        return a * act[None, :, :]


def build_ode(params: MultiCycleParams) -> OdeSystem:
    L, n_states = params.L, params.states
    unhappy = view_unhappy(L, params.w, params.threshold)
    codes = np.arange(n_states, dtype=np.int64)
    before = all_rotations(codes, L)
    after = all_rotations(codes ^ 1, L)
    cols = np.repeat(codes, L)
    rows = np.concatenate((after.ravel(), before.ravel()))
    vals = np.concatenate((np.ones(cols.size), -np.ones(cols.size)))
    M = sp.csr_matrix((vals, (rows, np.concatenate((cols, cols)))), shape=(n_states, n_states))
    M.sum_duplicates()
    M.eliminate_zeros()
    return OdeSystem(L, params.w, params.threshold, unhappy, (codes & 1).astype(bool), M)


def ode_rhs(z: np.ndarray, sys: OdeSystem) -> np.ndarray:
    za = np.where(sys.unhappy_alpha, z, 0.0)
    zb = np.where(sys.unhappy_beta, z, 0.0)
    return 2.0 * (zb.sum() * (sys.M @ za) + za.sum() * (sys.M @ zb))


def ode_rhs_naive(z: np.ndarray, sys: OdeSystem, table: np.ndarray | None = None) -> np.ndarray:
    """Direct double sum over the dense coefficient table."""
    a = sys.table() if table is None else table
    return np.einsum("ijk,j,k->i", a, z, z)


def symmetry_map(z: np.ndarray, L: int) -> np.ndarray:
    """Swap the components of complementary views."""
    z = np.asarray(z)
    if z.shape[-1] != 1 << L:
        raise ValueError("vector length must be 2^L")
    return z[..., np.arange(1 << L) ^ ((1 << L) - 1)]


def delta_functional(z: np.ndarray, sys: OdeSystem) -> float:
    """Unhappy ALPHA mass minus unhappy BETA mass."""
    u = sys.unhappy_alpha.astype(np.float64) - sys.unhappy_beta.astype(np.float64)
    return float(u @ z)


@dataclass
class Trajectory:
    x: np.ndarray
    z: np.ndarray
    max_drift: float
    min_value: float

    @property
    def negative(self) -> bool:
        return self.min_value < -1e-9

    def at(self, x: float) -> np.ndarray:
        """Linear interpolation between integration points."""
        if x < self.x[0] - 1e-12 or x > self.x[-1] + 1e-12:
            raise ValueError(f"x={x} outside the integrated horizon [{self.x[0]}, {self.x[-1]}]")
        k = int(np.searchsorted(self.x, x))
        if k == 0:
            return self.z[0]
        if k >= self.x.size:
            return self.z[-1]
        x0, x1 = self.x[k - 1], self.x[k]
        f = (x - x0) / (x1 - x0)
        return (1 - f) * self.z[k - 1] + f * self.z[k]


def integrate(z0, horizon: float, dt: float, sys: OdeSystem, record_every: int = 1) -> Trajectory:
    """Fixed-step RK4 from ``z0`` over ``[0, horizon]``."""
    z = np.array(z0, dtype=np.float64)
    if z.shape != (sys.states,):
        raise ValueError(f"z0 must have length {sys.states}")
    if abs(z.sum() - 1.0) > 1e-12:
        raise ValueError(f"z0 must sum to 1, sums to {z.sum()!r}")
    if dt <= 0 or horizon < 0:
        raise ValueError("need dt > 0 and horizon >= 0")
    steps = int(round(horizon / dt))
    if abs(steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError("horizon must be a whole number of steps")
    xs, zs = [0.0], [z.copy()]
    drift, low = 0.0, float(z.min())
    f = lambda y: ode_rhs(y, sys)  # noqa: E731
    for i in range(1, steps + 1):
        k1 = f(z)
        k2 = f(z + 0.5 * dt * k1)
        k3 = f(z + 0.5 * dt * k2)
        k4 = f(z + dt * k3)
        z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise FloatingPointError(f"integration blew up at step {i}")
        drift = max(drift, float(abs(z.sum() - 1.0)))
        low = min(low, float(z.min()))
        if i % record_every == 0 or i == steps:
            xs.append(i * dt)
            zs.append(z.copy())
    return Trajectory(np.array(xs), np.array(zs), drift, low)


def uniform_initial(L: int) -> np.ndarray:
    """Expected initial census density for independent fair types."""
    return np.full(1 << L, 1.0 / (1 << L))


# --- coupled simulation -------------------------------------------------------


@kernel
def _g_flip(u, L, codes, census, track):
    c = u // L
    old = codes[c]
    mask = (1 << L) - 1
    new = old ^ (1 << (u - c * L))
    codes[c] = new
    if track:
        for i in range(L):
            census[((old >> i) | (old << (L - i))) & mask] -= 1
            census[((new >> i) | (new << (L - i))) & mask] += 1


@kernel
def _g_view(u, L, codes):
    c = u // L
    i = u - c * L
    return ((codes[c] >> i) | (codes[c] << (L - i))) & ((1 << L) - 1)


@kernel
def _g_unhappy(view, L, w, T):
    own = view & 1
    same = 0
    for j in range(-w, w + 1):
        same += ((view >> (j % L)) & 1) == own
    return same < T


@kernel
def _c_toggle(u, n, w, types, acount):
    types[u] = 1 - types[u]
    d = 1 if types[u] == 1 else -1
    for k in range(-w, w + 1):
        y = (u + k) % n
        acount[y] += d


@kernel
def _taint_around(u, n, L, w, taint):
    added = 0
    for k in range(-w, w + 1):
        y = (u + k) % n
        if not taint[y]:
            taint[y] = True
            added += 1
    base = u - u % L
    for k in range(-w, w + 1):
        y = base + (u - base + k) % L
        if not taint[y]:
            taint[y] = True
            added += 1
    return added


@kernel
def _coupled_run(n, L, w, T, typesC, acount, codes, census, track, taint, stats, rng,
                 stages, every, snaps, taint_trace, incr_trace):
    """stats: [stage, taint size, max increment, C swaps, G swaps, snapshots]."""
    W = 2 * w + 1
    for _ in range(stages):
        u = randbelow(rng, n)
        v = randbelow(rng, n)
        stats[0] += 1
        swap_c = False
        if typesC[u] != typesC[v]:
            su = acount[u] if typesC[u] == 1 else W - acount[u]
            sv = acount[v] if typesC[v] == 1 else W - acount[v]
            if su < T and sv < T:
                if typesC[u] == 1:
                    swap_c = K.legal_pair(u, v, n, w, acount)
                else:
                    swap_c = K.legal_pair(v, u, n, w, acount)
        vu = _g_view(u, L, codes)
        vv = _g_view(v, L, codes)
        swap_g = (vu & 1) != (vv & 1) and _g_unhappy(vu, L, w, T) and _g_unhappy(vv, L, w, T)
        inc = 0
        if taint[u] or taint[v] or swap_c != swap_g:
            inc += _taint_around(u, n, L, w, taint)
            inc += _taint_around(v, n, L, w, taint)
        stats[1] += inc
        incr_trace[stats[0] - 1] = inc
        if inc > stats[2]:
            stats[2] = inc
        if swap_c:
            _c_toggle(u, n, w, typesC, acount)
            _c_toggle(v, n, w, typesC, acount)
            stats[3] += 1
        if swap_g:
            _g_flip(u, L, codes, census, track)
            _g_flip(v, L, codes, census, track)
            stats[4] += 1
        if every > 0 and stats[0] % every == 0:
            k = stats[5]
            if k < snaps.shape[0]:
                if track:
                    snaps[k, :] = census
                taint_trace[k] = stats[1]
                stats[5] = k + 1


def initial_taint(n: int, L: int, w: int) -> np.ndarray:
    """Nodes whose neighbourhoods differ between C_n and G_n."""
    pos = np.arange(n) % L
    return (pos < w) | (pos >= L - w)


class CoupledState:
    """C_n and G_n started from the same configuration, driven by shared draws."""

    def __init__(self, config: RingConfig, params: MultiCycleParams, seed: int):
        if config.n != params.n:
            raise ValueError(f"config has n={config.n}, params say n={params.n}")
        self.params = params
        self.initial = config.copy()
        self.typesC = config.types.copy()
        self.acount = window_alpha_counts(self.typesC, params.w).astype(np.int64)
        self.codes = cycle_codes(config.types, params.L)
        # without a census the snapshots carry only the taint size
        self.census = census(config, params.L) if params.census else np.zeros(1, dtype=np.int64)
        self.taint = initial_taint(params.n, params.L, params.w)
        self.stats = np.zeros(6, dtype=np.int64)
        self.stats[1] = int(self.taint.sum())
        self.rng = new_state(seed)

    @property
    def stage(self) -> int:
        return int(self.stats[0])

    @property
    def taint_size(self) -> int:
        return int(self.stats[1])

    def config_c(self) -> RingConfig:
        return RingConfig(self.typesC)

    def config_g(self) -> RingConfig:
        L = self.params.L
        bits = (self.codes[:, None] >> np.arange(L)) & 1
        return RingConfig(bits.ravel().astype(np.int8))

    def run(self, stages: int, every: int = 0) -> "CoupledTrace":
        p = self.params
        count = stages // every if every > 0 else 0
        snaps = np.zeros((count, p.states if p.census else 1), dtype=np.int64)
        taint_trace = np.zeros(count, dtype=np.int64)
        incr = np.zeros(stages, dtype=np.int64)
        start = self.stage
        self.stats[5] = 0
        _coupled_run(p.n, p.L, p.w, p.threshold, self.typesC, self.acount, self.codes, self.census,
                     p.census, self.taint, self.stats, self.rng, stages, every, snaps,
                     taint_trace, incr)
        k = int(self.stats[5])
        s = start + every * np.arange(1, k + 1) if every > 0 else np.zeros(0, dtype=np.int64)
        return CoupledTrace(p.n, s, snaps[:k], taint_trace[:k], incr)

    def step(self) -> int:
        """One shared stage; returns the taint increment."""
        return int(self.run(1).increments[0])


@dataclass
class CoupledTrace:
    n: int
    stages: np.ndarray
    census: np.ndarray
    taint: np.ndarray
    increments: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.stages / self.n


def simulate_census(params: MultiCycleParams, seed: int, horizon: float, snapshots: int = 50):
    """Random start, run to ``horizon * n`` stages; returns (initial census, trace)."""
    config = random_config(params.n, seed)
    state = CoupledState(config, params, seed ^ 0x5DEECE66D)
    zeta0 = state.census.copy()
    total = int(round(horizon * params.n))
    every = max(1, total // snapshots)
    trace = state.run(total, every)
    return zeta0, trace, state


def compare_trajectories(trace: CoupledTrace, traj: Trajectory) -> float:
    """max over snapshots and views of |zeta/n - z(s/n)|."""
    if trace.stages.size == 0:
        return 0.0
    if trace.x[-1] > traj.x[-1] + 1e-12:
        raise ValueError(f"simulation reaches x={trace.x[-1]}, trajectory stops at {traj.x[-1]}")
    worst = 0.0
    for x, zeta in zip(trace.x, trace.census):
        worst = max(worst, float(np.abs(zeta / trace.n - traj.at(x)).max()))
    return worst


def taint_envelope(params: MultiCycleParams, s) -> np.ndarray:
    """2 e^{14 w s / n} (2w-1)/L."""
    s = np.asarray(s, dtype=np.float64)
    return 2 * np.exp(14 * params.w * s / params.n) * (2 * params.w - 1) / params.L


def format_trajectory_csv(xs, zs, L: int, integer: bool = False) -> str:
    """Rows ``s,sigma,z``: stage, view string, density (or count when ``integer``)."""
    lines = ["s,sigma,z"]
    for s, row in zip(xs, zs):
        for code in np.flatnonzero(row):
            val = int(row[code]) if integer else repr(float(row[code]))
            lines.append(f"{int(s)},{view_to_string(int(code), L)},{val}")
    return "\n".join(lines) + "\n"


def write_trajectory_csv(path, xs, zs, L: int, integer: bool = False) -> None:
    Path(path).write_text(format_trajectory_csv(xs, zs, L, integer))


__all__ = [
    "MultiCycleParams", "OdeSystem", "Trajectory", "CoupledState", "CoupledTrace",
    "node_view", "view_index", "census", "build_ode", "ode_rhs", "ode_rhs_naive", "integrate",
    "symmetry_map", "delta_functional", "compare_trajectories", "simulate_census",
    "initial_taint", "taint_envelope", "uniform_initial", "rotate",
]
