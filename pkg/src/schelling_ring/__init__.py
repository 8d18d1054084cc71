"""One-dimensional Schelling segregation on a ring: simulation and theory."""

import importlib

__version__ = "0.1.0"

# names resolve on first use so that importing a light submodule (theory,
# ring) does not drag in numba
_LAZY = {
    "EngineState": "dynamics",
    "StopCondition": "dynamics",
    "StopReason": "dynamics",
    "Trace": "dynamics",
    "init_random": "dynamics",
    "random_config": "dynamics",
    "run": "dynamics",
    "Model": "ring",
    "ModelParams": "ring",
    "NodeType": "ring",
    "RingConfig": "ring",
    "happiness_threshold": "ring",
    "parse_tau": "ring",
}

__all__ = sorted(_LAZY)


def __getattr__(name):
    if name in _LAZY:
        value = getattr(importlib.import_module(f".{_LAZY[name]}", __name__), name)
        globals()[name] = value
        return value
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
