"""Ring configurations, thresholds and neighbourhood counts.

Types are stored as ``int8`` with ``1`` for ALPHA and ``0`` for BETA, the same
bit convention used by the cycle views in :mod:`schelling_ring.wormald`.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np


class NodeType(enum.IntEnum):
    BETA = 0
    ALPHA = 1

    @property
    def star(self) -> "NodeType":
        return NodeType(1 - self)

    @property
    def letter(self) -> str:
        return "A" if self is NodeType.ALPHA else "B"

    @classmethod
    def from_letter(cls, s: str) -> "NodeType":
        try:
            return {"A": cls.ALPHA, "B": cls.BETA}[s]
        except KeyError:
            raise ValueError(f"unknown node type {s!r}") from None


class Model(enum.Enum):
    STANDARD = "standard"
    SIMPLE = "simple"


def parse_tau(text) -> Fraction:
    """Parse ``p/q`` (or an integer) into an exact rational.

    Decimal text is refused: regime boundaries are too thin for floats.
    """
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    m = re.fullmatch(r"\s*(\d+)\s*(?:/\s*(\d+))?\s*", str(text))
    if not m:
        raise ValueError(f"tau must be an exact fraction like 19/50, got {text!r}")
    den = int(m.group(2)) if m.group(2) else 1
    if den == 0:
        raise ValueError("tau denominator is zero")
    return Fraction(int(m.group(1)), den)


def happiness_threshold(tau, w: int) -> int:
    """Smallest integer ``T >= tau * (2w+1)``, in exact arithmetic."""
    tau = parse_tau(tau)
    if not (0 < tau <= 1):
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if w < 1:
        raise ValueError(f"w must be >= 1, got {w}")
    x = tau * (2 * w + 1)
    return -((-x.numerator) // x.denominator)


@dataclass(frozen=True)
class ModelParams:
    n: int
    w: int
    tau: Fraction
    model: Model = Model.STANDARD
    threshold: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "tau", parse_tau(self.tau))
        if isinstance(self.model, str):
            object.__setattr__(self, "model", Model(self.model.lower()))
        if self.w < 1:
            raise ValueError("w must be >= 1")
        if self.n <= 2 * (2 * self.w + 1):
            raise ValueError(f"need n > 2(2w+1) = {2 * (2 * self.w + 1)}, got n={self.n}")
        object.__setattr__(self, "threshold", happiness_threshold(self.tau, self.w))

    @property
    def window(self) -> int:
        return 2 * self.w + 1


@dataclass(frozen=True)
class IntervalRef:
    """Circular interval ``[start, start+length-1]`` (indices taken mod n)."""

    start: int
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("interval length must be positive")

    @property
    def end(self) -> int:
        return self.start + self.length - 1

    def nodes(self, n: int) -> np.ndarray:
        if self.length > n:
            raise ValueError("interval longer than the ring")
        return (self.start + np.arange(self.length)) % n


class RingConfig:
    """Circular array of node types."""

    __slots__ = ("types",)

    def __init__(self, types):
        arr = np.array(types, dtype=np.int8, copy=True).ravel()
        if arr.size == 0:
            raise ValueError("empty ring")
        if np.any((arr != 0) & (arr != 1)):
            raise ValueError("types must be 0 (BETA) or 1 (ALPHA)")
        self.types = arr

    @classmethod
    def from_string(cls, s: str) -> "RingConfig":
        """Build from a string of ``A``/``B`` letters."""
        return cls([NodeType.from_letter(c) for c in s])

    @property
    def n(self) -> int:
        return int(self.types.size)

    def __len__(self):
        return self.n

    def __getitem__(self, u) -> NodeType:
        return NodeType(int(self.types[u % self.n]))

    def __eq__(self, other):
        return isinstance(other, RingConfig) and np.array_equal(self.types, other.types)

    def __hash__(self):
        return hash(self.types.tobytes())

    def __repr__(self):
        s = "".join("A" if t else "B" for t in self.types[:40])
        return f"RingConfig(n={self.n}, {s}{'...' if self.n > 40 else ''})"

    def copy(self) -> "RingConfig":
        return RingConfig(self.types)

    def alpha_count(self) -> int:
        return int(self.types.sum(dtype=np.int64))


def window_alpha_counts(types: np.ndarray, w: int) -> np.ndarray:
    """Number of ALPHA nodes in ``[u-w, u+w]`` for every u (circular)."""
    n = types.size
    if 2 * w + 1 > n:
        raise ValueError("neighbourhood wider than the ring")
    ext = np.concatenate((types[n - w :], types, types[:w])).astype(np.int64)
    c = np.concatenate(([0], np.cumsum(ext)))
    return (c[2 * w + 1 :] - c[: n]).astype(np.int32)


def _check(config: RingConfig, w: int):
    if w < 1 or config.n <= 2 * w + 1:
        raise ValueError(f"need w >= 1 and n > 2w+1 (n={config.n}, w={w})")


def bias(config: RingConfig, u: int, w: int) -> int:
    """#ALPHA - #BETA over the neighbourhood of u."""
    _check(config, w)
    idx = (u + np.arange(-w, w + 1)) % config.n
    a = int(config.types[idx].sum())
    return 2 * a - (2 * w + 1)


def same_type_count(config: RingConfig, u: int, w: int) -> int:
    _check(config, w)
    idx = (u + np.arange(-w, w + 1)) % config.n
    t = config.types[u % config.n]
    return int(np.count_nonzero(config.types[idx] == t))


def same_type_counts(config: RingConfig, w: int) -> np.ndarray:
    """Vectorised :func:`same_type_count` for all nodes."""
    _check(config, w)
    a = window_alpha_counts(config.types, w)
    return np.where(config.types == 1, a, 2 * w + 1 - a).astype(np.int32)


def is_happy(config: RingConfig, u: int, params: ModelParams) -> bool:
    return same_type_count(config, u, params.w) >= params.threshold


def harmony_index(config: RingConfig, w: int) -> int:
    """Sum over nodes of same-type counts in their neighbourhoods."""
    return int(same_type_counts(config, w).sum(dtype=np.int64))


# --- snapshot files -------------------------------------------------------

_HEADER = re.compile(r"n=(\d+) w=(\d+)")


def format_snapshot(config: RingConfig, w: int) -> str:
    t = config.types
    cut = np.flatnonzero(np.diff(t)) + 1
    starts = np.concatenate(([0], cut))
    lengths = np.diff(np.concatenate((starts, [t.size])))
    body = ",".join(f"{'A' if t[s] else 'B'}:{ln}" for s, ln in zip(starts, lengths))
    return f"n={config.n} w={w}\n{body}\n"


def parse_snapshot(text: str) -> tuple[RingConfig, int]:
    lines = text.splitlines()
    if len(lines) < 2:
        raise ValueError("snapshot needs a header line and a run-length line")
    m = _HEADER.fullmatch(lines[0].strip())
    if not m:
        raise ValueError(f"bad snapshot header {lines[0]!r}")
    n, w = int(m.group(1)), int(m.group(2))
    parts = []
    for tok in lines[1].strip().split(","):
        letter, _, ln = tok.partition(":")
        parts.append(np.full(int(ln), NodeType.from_letter(letter), dtype=np.int8))
    types = np.concatenate(parts)
    if types.size != n:
        raise ValueError(f"run lengths sum to {types.size}, header says n={n}")
    return RingConfig(types), w


def write_snapshot(path, config: RingConfig, w: int) -> None:
    Path(path).write_text(format_snapshot(config, w))


def read_snapshot(path) -> tuple[RingConfig, int]:
    return parse_snapshot(Path(path).read_text())

