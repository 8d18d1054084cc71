"""The numba kernels and their pure-Python fallback must agree bit for bit."""

import os
import subprocess
import sys

import pytest

SCRIPT = r"""
import hashlib
from fractions import Fraction
import numpy as np
from schelling_ring._accel import JIT_ENABLED
from schelling_ring.dynamics import StopCondition, init_random
from schelling_ring.ring import Model, ModelParams
from schelling_ring.wormald import MultiCycleParams, simulate_census

print("jit", JIT_ENABLED)
for model, tau in (("standard", "19/50"), ("simple", "3/5"), ("standard", "3/5")):
    params = ModelParams(400, 3, Fraction(tau), Model(model))
    state = init_random(params, 11)
    trace = state.run(StopCondition(max_stages=5000))
    print(model, tau, hashlib.sha256(trace.to_csv().encode()).hexdigest())
zeta0, trace, state = simulate_census(MultiCycleParams(600, 6, 1, "2/5"), 4, 0.5, 5)
digest = hashlib.sha256(trace.census.tobytes() + trace.increments.tobytes() + state.taint.tobytes()).hexdigest()
print("coupled", digest)
"""


def _run(disable):
    env = dict(os.environ)
    env.pop("SCHELLING_DISABLE_JIT", None)
    if disable:
        env["SCHELLING_DISABLE_JIT"] = "1"
    res = subprocess.run([sys.executable, "-c", SCRIPT], capture_output=True, text=True, env=env, timeout=600)
    assert res.returncode == 0, res.stderr
    return res.stdout.splitlines()


def test_fallback_matches_jit():
    jit, pure = _run(False), _run(True)
    if jit[0] != "jit True":
        pytest.skip("numba unavailable")
    assert pure[0] == "jit False"
    assert jit[1:] == pure[1:]
