"""Standard (swap) and simple (flip) Schelling processes on the ring."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .rng import new_state, random_bits
from .ring import Model, ModelParams, NodeType, RingConfig, window_alpha_counts

_EVENT_CHUNK = 1 << 16


class StopReason(enum.Enum):
    TERMINATED = "TERMINATED"
    SEGREGATED = "SEGREGATED"
    MAX_STAGES = "MAX_STAGES"


_STOP_CODES = {
    K.STOP_TERMINATED: StopReason.TERMINATED,
    K.STOP_SEGREGATED: StopReason.SEGREGATED,
    K.STOP_MAX_STAGES: StopReason.MAX_STAGES,
}


class Outcome(enum.Enum):
    SWAPPED = K.SWAPPED
    FLIPPED = K.FLIPPED
    BLOCKED = K.BLOCKED
    NO_UNHAPPY_PAIR = K.NO_UNHAPPY_PAIR
    NO_UNHAPPY = K.NO_UNHAPPY


@dataclass(frozen=True)
class StepOutcome:
    kind: Outcome
    nodes: tuple = ()


@dataclass(frozen=True)
class StopCondition:
    max_stages: int | None = None
    stop_on_segregation: bool = False
    stop_on_termination: bool = True

    def __post_init__(self):
        if self.max_stages is None and not (self.stop_on_segregation or self.stop_on_termination):
            raise ValueError("at least one stopping rule must be enabled")
        if self.max_stages is not None and self.max_stages < 0:
            raise ValueError("max_stages must be nonnegative")

    @classmethod
    def default_for(cls, params: ModelParams) -> "StopCondition":
        """Termination for tau <= 1/2; segregation plus an attempt guard above."""
        if params.threshold > params.w + 1 and params.model is Model.STANDARD:
            return cls(max_stages=50 * params.n * params.window, stop_on_segregation=True)
        return cls()

    @classmethod
    def parse(cls, text: str) -> "StopCondition":
        """``seg``, ``term``, ``max:<k>`` or a comma-separated combination."""
        seg = term = False
        max_stages = None
        for tok in text.split(","):
            tok = tok.strip()
            if tok == "seg":
                seg = True
            elif tok == "term":
                term = True
            elif tok.startswith("max:"):
                max_stages = int(tok[4:])
            else:
                raise ValueError(f"unknown stop rule {tok!r}")
        return cls(max_stages=max_stages, stop_on_segregation=seg, stop_on_termination=term)


@dataclass
class Trace:
    """Type changes of one run, in stage order."""

    initial: RingConfig
    stage: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    node: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    src: np.ndarray = field(default_factory=lambda: np.empty(0, np.int8))
    stop_reason: StopReason | None = None
    stages: int = 0

    def __len__(self):
        return int(self.node.size)

    @property
    def dst(self) -> np.ndarray:
        return (1 - self.src).astype(np.int8)

    def events(self):
        for s, u, f in zip(self.stage.tolist(), self.node.tolist(), self.src.tolist()):
            yield s, u, NodeType(f), NodeType(1 - f)

    def final_config(self) -> RingConfig:
        t = self.initial.types.copy()
        # each event toggles its node
        np.bitwise_xor.at(t, self.node, 1)
        return RingConfig(t)

    def to_csv(self) -> str:
        lines = ["stage,node,from,to"]
        letters = ("B", "A")
        for s, u, f in zip(self.stage.tolist(), self.node.tolist(), self.src.tolist()):
            lines.append(f"{s},{u},{letters[f]},{letters[1 - f]}")
        reason = self.stop_reason.value if self.stop_reason else "NONE"
        lines.append(f"# stop={reason} stages={self.stages} events={len(self)}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str, initial: RingConfig) -> "Trace":
        lines = text.splitlines()
        if not lines or lines[0].strip() != "stage,node,from,to":
            raise ValueError("trace CSV must start with header 'stage,node,from,to'")
        stage, node, src = [], [], []
        reason, stages = None, 0
        for line in lines[1:]:
            if line.startswith("#"):
                meta = dict(kv.split("=", 1) for kv in line[1:].split())
                reason = None if meta["stop"] == "NONE" else StopReason(meta["stop"])
                stages = int(meta["stages"])
                continue
            if not line.strip():
                continue
            s, u, f, t = line.split(",")
            if NodeType.from_letter(f) == NodeType.from_letter(t):
                raise ValueError(f"event does not change type: {line!r}")
            stage.append(int(s))
            node.append(int(u))
            src.append(int(NodeType.from_letter(f)))
        return cls(
            initial=initial,
            stage=np.array(stage, np.int64),
            node=np.array(node, np.int64),
            src=np.array(src, np.int8),
            stop_reason=reason,
            stages=stages,
        )

    @classmethod
    def read_csv(cls, path, initial: RingConfig) -> "Trace":
        return cls.from_csv(Path(path).read_text(), initial)


class EngineState:
    """Mutable process state with incrementally maintained counts.

    ``acount`` holds ALPHA counts per neighbourhood; same-type counts are
    derived from it (:attr:`counts`).  Unhappy nodes of each type live in an
    array-backed index set with a position map.
    """

    def __init__(self, config: RingConfig, params: ModelParams, seed: int = 0):
        if config.n != params.n:
            raise ValueError(f"config has n={config.n}, params say n={params.n}")
        n = params.n
        self.params = params
        self.types = config.types.copy()
        self.acount = window_alpha_counts(self.types, params.w)
        self.items = np.zeros((2, n), dtype=np.int64)
        self.sizes = np.zeros(2, dtype=np.int64)
        self.pos = np.full(n, -1, dtype=np.int64)
        K.build_sets(n, params.window, params.threshold, self.types, self.acount,
                     self.items, self.sizes, self.pos)
        self.rng = new_state(seed)
        self.counters = np.zeros(4, dtype=np.int64)
        self.counters[K.BOUNDARIES] = int(np.count_nonzero(self.types != np.roll(self.types, -1)))
        self.trace = Trace(initial=RingConfig(self.types))
        self._chunks: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []

    # --- views --------------------------------------------------------------
    @property
    def config(self) -> RingConfig:
        return RingConfig(self.types)

    @property
    def counts(self) -> np.ndarray:
        W = self.params.window
        return np.where(self.types == 1, self.acount, W - self.acount).astype(np.int32)

    @property
    def unhappy_alpha(self) -> np.ndarray:
        return self.items[1, : self.sizes[1]].copy()

    @property
    def unhappy_beta(self) -> np.ndarray:
        return self.items[0, : self.sizes[0]].copy()

    @property
    def stage(self) -> int:
        return int(self.counters[K.STAGE])

    @property
    def events(self) -> int:
        return int(self.counters[K.EVENTS])

    @property
    def boundaries(self) -> int:
        return int(self.counters[K.BOUNDARIES])

    def is_unhappy(self, u: int) -> bool:
        return bool(self.pos[u] >= 0)

    def matches(self, other: "EngineState") -> bool:
        """Equality of config, counts and unhappy sets (order ignored)."""
        return (
            np.array_equal(self.types, other.types)
            and np.array_equal(self.acount, other.acount)
            and np.array_equal(np.sort(self.unhappy_alpha), np.sort(other.unhappy_alpha))
            and np.array_equal(np.sort(self.unhappy_beta), np.sort(other.unhappy_beta))
            and self.boundaries == other.boundaries
        )

    # --- stepping -----------------------------------------------------------
    def _record(self, stage, node, src):
        self._chunks.append((stage, node, src))

    def _flush_trace(self):
        if self._chunks:
            tr = self.trace
            tr.stage = np.concatenate([tr.stage] + [c[0] for c in self._chunks])
            tr.node = np.concatenate([tr.node] + [c[1] for c in self._chunks])
            tr.src = np.concatenate([tr.src] + [c[2] for c in self._chunks])
            self._chunks.clear()
        self.trace.stages = self.stage

    def step(self) -> StepOutcome:
        p = self.params
        ev_s = np.empty(2, np.int64)
        ev_n = np.empty(2, np.int64)
        ev_f = np.empty(2, np.int8)
        out = np.full(2, -1, np.int64)
        before = self.events
        fn = K.step_simple if p.model is Model.SIMPLE else K.step_standard
        code = fn(p.n, p.w, p.threshold, self.types, self.acount, self.items, self.sizes,
                  self.pos, self.rng, self.counters, ev_s, ev_n, ev_f, before, out)
        k = self.events - before
        if k:
            self._record(ev_s[:k].copy(), ev_n[:k].copy(), ev_f[:k].copy())
            self._flush_trace()
        else:
            self.trace.stages = self.stage
        kind = Outcome(int(code))
        if kind in (Outcome.SWAPPED, Outcome.BLOCKED) and p.model is Model.STANDARD:
            return StepOutcome(kind, (int(out[0]), int(out[1])))
        if kind in (Outcome.FLIPPED, Outcome.BLOCKED):
            return StepOutcome(kind, (int(out[0]),))
        return StepOutcome(kind)

    def run(self, stop: StopCondition | None = None) -> Trace:
        p = self.params
        stop = stop or StopCondition.default_for(p)
        validate_stop(p, stop)
        max_stages = stop.max_stages if stop.max_stages is not None else np.iinfo(np.int64).max
        simple = p.model is Model.SIMPLE
        while True:
            ev_s = np.empty(_EVENT_CHUNK, np.int64)
            ev_n = np.empty(_EVENT_CHUNK, np.int64)
            ev_f = np.empty(_EVENT_CHUNK, np.int8)
            base = self.events
            code = K.run_loop(simple, p.n, p.w, p.threshold, self.types, self.acount,
                              self.items, self.sizes, self.pos, self.rng, self.counters,
                              max_stages, stop.stop_on_segregation, stop.stop_on_termination,
                              ev_s, ev_n, ev_f, base)
            k = self.events - base
            if k:
                self._record(ev_s[:k], ev_n[:k], ev_f[:k])
            if code != K.STOP_BUFFER_FULL:
                break
        self._flush_trace()
        self.trace.stop_reason = _STOP_CODES[int(code)]
        return self.trace


def validate_stop(params: ModelParams, stop: StopCondition) -> None:
    if (
        params.threshold > params.w + 1
        and params.model is Model.STANDARD
        and not stop.stop_on_segregation
        and stop.max_stages is None
    ):
        raise ValueError(
            "standard model with tau > (w+1)/(2w+1) need not terminate; "
            "enable stop-on-segregation or a stage limit"
        )


def random_config(n: int, seed: int) -> RingConfig:
    """Each node ALPHA with probability 1/2, from the seeded stream."""
    return RingConfig(random_bits(seed, n).astype(np.int8))


def init_random(params: ModelParams, seed: int) -> EngineState:
    # config bits and process draws use decorrelated streams of the same seed
    config = random_config(params.n, seed)
    return EngineState(config, params, seed=seed ^ 0x5DEECE66D)


def legal_swap(state: EngineState, u: int, v: int) -> bool:
    """Whether unhappy ALPHA ``u`` and unhappy BETA ``v`` may swap."""
    if not (state.types[u] == 1 and state.is_unhappy(u)):
        raise ValueError(f"node {u} is not an unhappy ALPHA node")
    if not (state.types[v] == 0 and state.is_unhappy(v)):
        raise ValueError(f"node {v} is not an unhappy BETA node")
    return bool(K.legal_pair(u, v, state.params.n, state.params.w, state.acount))


def legal_swap_bruteforce(config: RingConfig, u: int, v: int, w: int) -> bool:
    """Materialise the swapped ring and compare like-neighbour counts."""
    n = config.n
    t = config.types
    after = t.copy()
    after[u], after[v] = t[v], t[u]

    def like_neighbours(types, x, kind):
        idx = [(x + k) % n for k in range(-w, w + 1) if k != 0]
        return sum(1 for y in idx if types[y] == kind)

    alpha_ok = like_neighbours(after, v, 1) >= like_neighbours(t, u, 1)
    beta_ok = like_neighbours(after, u, 0) >= like_neighbours(t, v, 0)
    return alpha_ok and beta_ok


def step_standard(state: EngineState) -> StepOutcome:
    if state.params.model is not Model.STANDARD:
        raise ValueError("state is not running the standard model")
    return state.step()


def step_simple(state: EngineState) -> StepOutcome:
    if state.params.model is not Model.SIMPLE:
        raise ValueError("state is not running the simple model")
    return state.step()


def run(state: EngineState, stop: StopCondition | None = None) -> Trace:
    return state.run(stop)


def recompute_oracle(config: RingConfig, params: ModelParams) -> EngineState:
    """Fresh state built by direct O(n*w) recounting, no shared helpers."""
    n, w, T = params.n, params.w, params.threshold
    t = config.types.tolist()
    acount = []
    for u in range(n):
        acount.append(sum(t[(u + k) % n] for k in range(-w, w + 1)))
    state = EngineState.__new__(EngineState)
    state.params = params
    state.types = config.types.copy()
    state.acount = np.array(acount, dtype=np.int32)
    state.items = np.zeros((2, n), dtype=np.int64)
    state.sizes = np.zeros(2, dtype=np.int64)
    state.pos = np.full(n, -1, dtype=np.int64)
    for u in range(n):
        same = acount[u] if t[u] == 1 else 2 * w + 1 - acount[u]
        if same < T:
            s = t[u]
            state.items[s, state.sizes[s]] = u
            state.pos[u] = state.sizes[s]
            state.sizes[s] += 1
    state.rng = new_state(0)
    state.counters = np.zeros(4, dtype=np.int64)
    state.counters[K.BOUNDARIES] = sum(1 for u in range(n) if t[u] != t[(u + 1) % n])
    state.trace = Trace(initial=config.copy())
    state._chunks = []
    return state
