"""Binomial tail quantities behind the threshold behaviour.

Probabilities are carried as natural logs (``-inf`` for zero) because the
tails underflow doubles long before w reaches the thousands.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .ring import parse_tau

NEG_INF = -math.inf
EXACT_LIMIT = 64


def g(tau: float) -> float:
    """Per-unit-w log of the asymptotic ratio of unhappy to stable probability."""
    return (1 - 2 * tau) * math.log(0.5 - tau) - (2 - 2 * tau) * math.log(1 - tau)


def kappa(tolerance: float = 1e-12, max_iter: int = 200) -> float:
    """Root of :func:`g` in (1/4, 1/2) by bisection."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    lo, hi = 0.25, 0.5 - 1e-15
    glo = g(lo)
    for _ in range(max_iter):
        if hi - lo < tolerance:
            break
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if (gm < 0) == (glo < 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _as_fraction(p) -> Fraction:
    if isinstance(p, Fraction):
        return p
    if isinstance(p, (int, str)):
        return Fraction(p)
    raise TypeError(f"expected an exact rational, got {type(p).__name__}")


def _log_pmf_terms(N: int, p: Fraction, ks: np.ndarray) -> np.ndarray:
    lp, lq = math.log(p), math.log1p(-float(p))
    lg = math.lgamma(N + 1)
    out = np.array([lg - math.lgamma(k + 1) - math.lgamma(N - k + 1) for k in ks.tolist()])
    return out + ks * lp + (N - ks) * lq


def _logsumexp(x: np.ndarray) -> float:
    m = float(x.max())
    return m + math.log(float(np.exp(x - m).sum()))


def binom_pmf_log(N: int, p, h: int) -> float:
    p = _as_fraction(p)
    if not 0 <= h <= N:
        return NEG_INF
    return float(_log_pmf_terms(N, p, np.array([h]))[0])


def binom_tail_log(N: int, p, h: int) -> float:
    """``log P(X >= h)`` for ``X ~ Bin(N, p)``."""
    p = _as_fraction(p)
    if N < 0:
        raise ValueError("N must be non-negative")
    if not 0 <= h <= N + 1:
        raise ValueError(f"h must lie in [0, N+1], got h={h}, N={N}")
    if not 0 < p < 1:
        raise ValueError("p must lie strictly between 0 and 1")
    if h == 0:
        return 0.0
    if h == N + 1:
        return NEG_INF
    # sum the smaller side, complement when the tail is the bulk
    if h <= N * p:
        low = _log_pmf_terms(N, p, np.arange(0, h))
        s = _logsumexp(low)
        return math.log1p(-math.exp(s)) if s < 0 else NEG_INF
    return _logsumexp(_log_pmf_terms(N, p, np.arange(h, N + 1)))


def binom_tail_exact(N: int, p, h: int) -> Fraction:
    """Exact ``P(X >= h)`` in rational arithmetic (oracle, small N)."""
    p = _as_fraction(p)
    if not 0 <= h <= N + 1:
        raise ValueError(f"h must lie in [0, N+1], got h={h}, N={N}")
    q = 1 - p
    return sum((math.comb(N, k) * p**k * q ** (N - k) for k in range(h, N + 1)), Fraction(0))


def _ceil(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def _floor(x: Fraction) -> int:
    return x.numerator // x.denominator


def _check_open_tau(tau) -> Fraction:
    tau = parse_tau(tau) if not isinstance(tau, Fraction) else tau
    if not 0 < tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    return tau


def stab_threshold(w: int, tau) -> int:
    """Smallest integer at least ``(2w+1)tau - 1`` (clipped at 0)."""
    tau = _check_open_tau(tau)
    return max(0, _ceil((2 * w + 1) * tau - 1))


def unhap_threshold(w: int, tau) -> int:
    """Smallest integer strictly above ``(2w+1)(1 - tau)``."""
    tau = _check_open_tau(tau)
    return _floor((2 * w + 1) * (1 - tau)) + 1


def p_stab(w: int, tau) -> float:
    """log P(X >= (2w+1)tau - 1), X ~ Bin(w, 1/2)."""
    h = min(stab_threshold(w, tau), w + 1)
    return binom_tail_log(w, Fraction(1, 2), h)


def p_unhap(w: int, tau) -> float:
    """log P(Y > (2w+1)(1 - tau)), Y ~ Bin(2w, 1/2)."""
    h = min(unhap_threshold(w, tau), 2 * w + 1)
    return binom_tail_log(2 * w, Fraction(1, 2), h)


def p_stab_exact(w: int, tau) -> Fraction:
    return binom_tail_exact(w, Fraction(1, 2), min(stab_threshold(w, tau), w + 1))


def p_unhap_exact(w: int, tau) -> Fraction:
    return binom_tail_exact(2 * w, Fraction(1, 2), min(unhap_threshold(w, tau), 2 * w + 1))


def ratio_exact(w: int, tau) -> float:
    """log(P_unhap / P_stab)."""
    return p_unhap(w, tau) - p_stab(w, tau)


def ratio_asymptotic(w: int, tau) -> float:
    tau = _check_open_tau(tau)
    if not Fraction(1, 4) < tau < Fraction(1, 2):
        raise ValueError(f"asymptotic ratio needs 1/4 < tau < 1/2, got {tau}")
    return w * g(float(tau))


def _below_half(tau) -> Fraction:
    tau = parse_tau(tau) if not isinstance(tau, Fraction) else tau
    if tau >= Fraction(1, 2):
        raise ValueError(f"need tau < 1/2, got {tau}")
    return tau


def d_const(tau) -> float:
    tau = _below_half(tau)
    return float(2 / (1 - 2 * tau) ** 2)


def hoeffding_high_bias(w: int, tau) -> float:
    """Hoeffding bound on P(|bias| > (1-2tau)(2w+1)) for a random neighbourhood."""
    tau = _below_half(tau)
    return 2 * math.exp(-float((1 - 2 * tau) ** 2) * (2 * w + 1) / 2)


def high_bias_exact(w: int, tau) -> Fraction:
    """Exact P(|2A - W| > (1-2tau)W) with A ~ Bin(W, 1/2), W = 2w+1."""
    tau = _below_half(tau)
    W = 2 * w + 1
    bound = (1 - 2 * tau) * W
    hits = sum(math.comb(W, a) for a in range(W + 1) if abs(2 * a - W) > bound)
    return Fraction(hits, 2**W)


def high_bias_log(w: int, tau) -> float:
    """log of :func:`high_bias_exact` via two symmetric tails."""
    tau = _below_half(tau)
    W = 2 * w + 1
    # |2A - W| > b  <=>  A > (W + b)/2  or  A < (W - b)/2
    upper = _floor((W + (1 - 2 * tau) * W) / 2) + 1
    if upper > W:
        return NEG_INF
    return math.log(2) + binom_tail_log(W, Fraction(1, 2), upper)


def binom_ratio_bounds(N: int, p, h: int, k: float) -> tuple[float, float]:
    """Bracket ``log P(X >= h)`` by ``log P(X = h)`` and that plus ``log 1/(1-k)``."""
    p = _as_fraction(p)
    problems = []
    if not 0 < k < 1:
        problems.append(f"k={k} not in (0,1)")
    if not 0 < p < 1:
        problems.append(f"p={p} not in (0,1)")
    else:
        if not (1 + (1 / float(p) - 1) * k) * h > N:
            problems.append(f"(1 + (1/p - 1)k)h = {(1 + (1 / float(p) - 1) * k) * h:.6g} <= N = {N}")
        if not N >= h:
            problems.append(f"h={h} exceeds N={N}")
        if not h > p * N:
            problems.append(f"h={h} <= pN={float(p * N):.6g}")
        if not p * N > 0:
            problems.append("pN must be positive")
    if problems:
        raise ValueError("hypothesis violated: " + "; ".join(problems))
    lower = binom_pmf_log(N, p, h)
    return lower, lower - math.log1p(-k)


class Regime(enum.Enum):
    BELOW_KAPPA = "below_kappa"
    AT_KAPPA = "at_kappa"
    KAPPA_TO_HALF = "kappa_to_half"
    AT_HALF_EQUIV = "at_half_equiv"
    ABOVE_HALF = "above_half"


@dataclass(frozen=True)
class RegimeReport:
    tau: Fraction
    w: int
    regime: Regime
    kappa_value: float
    notes: str = ""


KAPPA_TOL = 1e-9


def classify_regime(tau, w: int) -> RegimeReport:
    tau = parse_tau(tau) if not isinstance(tau, Fraction) else tau
    if not 0 <= tau <= 1:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    k = kappa(KAPPA_TOL)
    equiv = Fraction(w + 1, 2 * w + 1)
    if tau > equiv:
        return RegimeReport(tau, w, Regime.ABOVE_HALF, k)
    if tau >= Fraction(1, 2):
        note = "" if tau == Fraction(1, 2) else f"same threshold as 1/2 since tau <= {equiv}"
        return RegimeReport(tau, w, Regime.AT_HALF_EQUIV, k, note)
    x = float(tau)
    if abs(x - k) <= KAPPA_TOL:
        return RegimeReport(tau, w, Regime.AT_KAPPA, k, "within solver tolerance of kappa")
    if x < k:
        return RegimeReport(tau, w, Regime.BELOW_KAPPA, k)
    return RegimeReport(tau, w, Regime.KAPPA_TO_HALF, k)
