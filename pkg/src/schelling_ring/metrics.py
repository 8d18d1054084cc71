"""Structural analysis of ring configurations."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, NamedTuple

import numpy as np

from .ring import IntervalRef, ModelParams, NodeType, RingConfig, parse_tau, window_alpha_counts
from .rng import SplitMix64


class Run(NamedTuple):
    start: int
    length: int
    type: NodeType


@dataclass(frozen=True)
class RunList:
    """Maximal circular runs, ordered by start index."""

    starts: np.ndarray
    lengths: np.ndarray
    types: np.ndarray

    def __len__(self):
        return int(self.starts.size)

    def __iter__(self) -> Iterator[Run]:
        for s, ln, t in zip(self.starts.tolist(), self.lengths.tolist(), self.types.tolist()):
            yield Run(s, ln, NodeType(t))

    def __getitem__(self, i) -> Run:
        return Run(int(self.starts[i]), int(self.lengths[i]), NodeType(int(self.types[i])))

    def as_tuples(self) -> list[tuple[int, int, str]]:
        return [(r.start, r.length, r.type.letter) for r in self]

    def select(self, mask) -> "RunList":
        return RunList(self.starts[mask], self.lengths[mask], self.types[mask])


def runs(config: RingConfig) -> RunList:
    t = config.types
    n = t.size
    cut = np.flatnonzero(t != np.roll(t, 1))
    if cut.size == 0:
        return RunList(np.array([0]), np.array([n]), t[:1].copy())
    lengths = np.diff(np.concatenate((cut, [cut[0] + n])))
    return RunList(cut, lengths, t[cut])


def run_lengths_by_node(config: RingConfig) -> np.ndarray:
    """Length of the maximal run containing each node."""
    rl = runs(config)
    n = config.n
    out = np.empty(n, dtype=np.int64)
    if len(rl) == 1:
        out[:] = n
        return out
    # unroll so the wrapping run is contiguous
    idx = (rl.starts[0] + np.arange(n)) % n
    out[idx] = np.repeat(rl.lengths, rl.lengths)
    return out


def run_containing(config: RingConfig, u: int) -> int:
    t = config.types
    n = t.size
    u %= n
    kind = t[u]
    left = 0
    while left < n and t[(u - left - 1) % n] == kind:
        left += 1
    if left >= n:
        return n
    right = 0
    while t[(u + right + 1) % n] == kind:
        right += 1
    return left + right + 1


def firewalls(config: RingConfig, w: int) -> RunList:
    rl = runs(config)
    return rl.select(rl.lengths >= w + 1)


def is_completely_segregated(config: RingConfig) -> bool:
    return len(runs(config)) <= 2


def _ceil_tau(tau_prime, w: int) -> int:
    x = parse_tau(tau_prime) * (2 * w + 1)
    return -((-x.numerator) // x.denominator)


def stable_masks(config: RingConfig, w: int, tau_prime) -> tuple[np.ndarray, np.ndarray]:
    """Boolean arrays over starts ``a``: ``[a, a+w]`` is ALPHA-/BETA-stable."""
    tau_prime = parse_tau(tau_prime)
    if not (0 < tau_prime <= 1):
        raise ValueError("tau' must lie in (0, 1]")
    need = _ceil_tau(tau_prime, w)
    t = config.types.astype(np.int64)
    n = t.size
    if w + 1 > n:
        raise ValueError("window longer than ring")
    ext = np.concatenate((t, t[:w]))
    c = np.concatenate(([0], np.cumsum(ext)))
    alpha = c[w + 1 : w + 1 + n] - c[:n]
    return alpha >= need, (w + 1 - alpha) >= need


def stable_intervals(config: RingConfig, w: int, tau_prime) -> list[tuple[int, NodeType]]:
    a, b = stable_masks(config, w, tau_prime)
    out = [(int(s), NodeType.ALPHA) for s in np.flatnonzero(a)]
    out += [(int(s), NodeType.BETA) for s in np.flatnonzero(b)]
    out.sort()
    return out


def stable_nodes(config: RingConfig, w: int, tau_prime) -> np.ndarray:
    """Nodes lying in an interval that is stable for their own type."""
    a, b = stable_masks(config, w, tau_prime)
    n = config.n
    cover = np.zeros((2, n + w + 1), dtype=np.int64)
    for row, mask in ((1, a), (0, b)):
        starts = np.flatnonzero(mask)
        np.add.at(cover[row], starts, 1)
        np.add.at(cover[row], starts + w + 1, -1)
    cov = np.cumsum(cover, axis=1)
    wrapped = cov[:, :n].copy()
    wrapped[:, : w + 1] += cov[:, n : n + w + 1]
    t = config.types
    return np.where(t == 1, wrapped[1] > 0, wrapped[0] > 0)


class BiasTag(enum.IntEnum):
    NORMAL = 0
    HIGH = 1
    BORDERLINE = 2


@dataclass(frozen=True)
class BiasClass:
    tags: np.ndarray

    @property
    def high(self) -> np.ndarray:
        return self.tags >= BiasTag.HIGH

    @property
    def borderline(self) -> np.ndarray:
        return self.tags == BiasTag.BORDERLINE


def high_bias_bound(tau, w: int) -> Fraction:
    """``(1 - 2 tau)(2w+1)``; high bias means ``|bias|`` strictly above it."""
    tau = parse_tau(tau)
    if tau >= Fraction(1, 2):
        raise ValueError("bias classes need tau < 1/2")
    return (1 - 2 * tau) * (2 * w + 1)


def borderline_modulus(tau, w: int) -> int:
    """Smallest odd integer strictly above the high-bias bound."""
    x = high_bias_bound(tau, w)
    m = x.numerator // x.denominator + 1
    return m if m % 2 else m + 1


def classify_bias(config: RingConfig, params: ModelParams) -> BiasClass:
    w = params.w
    x = high_bias_bound(params.tau, w)
    mod = np.abs(2 * window_alpha_counts(config.types, w).astype(np.int64) - (2 * w + 1))
    high = mod * x.denominator > x.numerator
    tags = np.where(high, BiasTag.HIGH, BiasTag.NORMAL).astype(np.int8)
    tags[mod == borderline_modulus(params.tau, w)] = BiasTag.BORDERLINE
    return BiasClass(tags)


def split_interval(interval: IntervalRef, j: int, k: int, from_right: bool = False) -> IntervalRef:
    """The j-th of k near-equal pieces of ``interval`` (floor endpoints).

    With ``from_right`` the pieces are counted from the right-hand end.
    """
    if k < 1 or not (1 <= j <= k):
        raise ValueError(f"need 1 <= j <= k, got j={j}, k={k}")
    if interval.length < k:
        raise ValueError(f"interval of length {interval.length} cannot be split into {k}")
    if from_right:
        j = k - j + 1
    a, d = interval.start, interval.length - 1
    lo = a if j == 1 else a + (j - 1) * d // k + 1
    hi = a + j * d // k
    return IntervalRef(lo, hi - lo + 1)


def _interval_alpha(types: np.ndarray, iv: IntervalRef) -> int:
    return int(types[iv.nodes(types.size)].sum())


def is_smooth(config: RingConfig, u: int, params: ModelParams, k: int, eps) -> bool:
    """Smooth decay of bias away from a high-bias node u.

    Bias at the probe nodes is measured in the direction of u's own bias, so
    BETA-biased nodes are handled by symmetry.
    """
    w, n = params.w, config.n
    W = 2 * w + 1
    if k < 2 or k % 2:
        raise ValueError("k must be a positive even integer")
    eps = parse_tau(eps) if not isinstance(eps, Fraction) else eps
    if eps <= 0:
        raise ValueError("eps must be positive")
    if n <= 2 * W + 1:
        raise ValueError("ring too small for the probe intervals")
    t = config.types
    acount = window_alpha_counts(t, w).astype(np.int64)
    theta_u = 2 * int(acount[u % n]) - W
    bound = high_bias_bound(params.tau, w)
    if abs(theta_u) * bound.denominator <= bound.numerator:
        raise ValueError(f"node {u} does not have high bias")
    rho = abs(theta_u)
    sign = 1 if theta_u > 0 else -1
    left = IntervalRef(u - W, W + 1)
    right = IntervalRef(u, W + 1)
    for j in range(1, k + 1):
        probes = (split_interval(right, j, k).end, split_interval(left, j, k, from_right=True).start)
        for v in probes:
            theta_v = sign * (2 * int(acount[v % n]) - W)
            # |theta_v - rho(k-j)/k| / w < eps, cleared of denominators
            if abs(k * theta_v - rho * (k - j)) >= eps * k * w:
                return False
    prop = Fraction(int(acount[u % n]), W)
    for j in range(1, k // 2 + 1):
        for iv in (split_interval(left, j, k, from_right=True), split_interval(right, j, k)):
            p = Fraction(_interval_alpha(t, iv), iv.length)
            if abs(p - prop) > eps:
                return False
    return True


def run_length_distribution(config: RingConfig) -> dict[int, Fraction]:
    """Exact node-weighted law of the run length at a uniform node."""
    rl = runs(config)
    n = config.n
    mass = Counter()
    for ln in rl.lengths.tolist():
        mass[ln] += ln
    return {ln: Fraction(m, n) for ln, m in sorted(mass.items())}


QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)


def summarize_lengths(lengths: np.ndarray) -> dict[str, float]:
    lengths = np.asarray(lengths, dtype=np.float64)
    out = {"samples": float(lengths.size), "mean": float(lengths.mean())}
    for q in QUANTILES:
        out[f"q{int(round(q * 100)):02d}"] = float(np.quantile(lengths, q, method="lower"))
    out["min"] = float(lengths.min())
    out["max"] = float(lengths.max())
    return out


def run_length_stats(config: RingConfig, samples: int, rng: SplitMix64 | int) -> dict[str, float]:
    """Run-length summary at ``samples`` uniformly drawn nodes."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not isinstance(rng, SplitMix64):
        rng = SplitMix64(rng)
    nodes = rng.integers(config.n, samples)
    return summarize_lengths(run_lengths_by_node(config)[nodes])


def metrics_rows(config: RingConfig, w: int, samples: int | None = None, seed: int = 0):
    """``(metric, key, value)`` rows for CSV export."""
    rl = runs(config)
    rows = [
        ("config", "n", config.n),
        ("config", "alpha", config.alpha_count()),
        ("runs", "count", len(rl)),
        ("runs", "firewalls", len(firewalls(config, w))),
        ("runs", "segregated", int(len(rl) <= 2)),
    ]
    if samples:
        stats = run_length_stats(config, samples, seed)
    else:
        stats = summarize_lengths(run_lengths_by_node(config))
    rows += [("runlen", k, v) for k, v in stats.items()]
    return rows


def format_metrics_csv(rows) -> str:
    lines = ["metric,key,value"]
    for m, k, v in rows:
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        lines.append(f"{m},{k},{v}")
    return "\n".join(lines) + "\n"
