from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from clickipi import kernels
from clickipi._jit import HAS_NUMBA
from clickipi.actions import DEFAULT_TAXONOMY as TAX
from clickipi.simgen import simulate_weekly_hazard

from oracles import brute_window_distance
from clickipi.encode import SYMBOLS

needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")


@pytest.mark.parametrize("use_numba", [pytest.param(True, marks=needs_numba), False])
def test_window_rows_match_brute_force(use_numba):
    rng = np.random.default_rng(0)
    for _ in range(30):
        stream = rng.integers(0, 8, size=int(rng.integers(0, 9)))
        dist = kernels.window_distances(stream, TAX.codes, TAX.lengths, 0.1, 1.0, 1.0, use_numba=use_numba)
        toks = [SYMBOLS[c] for c in stream]
        for p, pat in enumerate(TAX.flat_patterns[:10]):
            assert dist[p] == pytest.approx(brute_window_distance(toks, pat), abs=1e-12)


@needs_numba
def test_backends_bit_identical_edit_distance():
    rng = np.random.default_rng(1)
    for _ in range(50):
        stream = rng.integers(0, 8, size=int(rng.integers(0, 60)))
        costs = rng.uniform(0, 2, size=3)
        a = kernels.window_last_rows(stream, TAX.codes, TAX.lengths, *costs, use_numba=True)
        b = kernels.window_last_rows(stream, TAX.codes, TAX.lengths, *costs, use_numba=False)
        assert np.array_equal(a, b)


@needs_numba
def test_backends_agree_on_cox():
    X, start, stop, event, _ = simulate_weekly_hazard(800, beta=-0.45, seed=3)
    X = np.hstack([X, np.random.default_rng(4).standard_normal((800, 1))])
    beta = np.array([-0.2, 0.3])
    a = kernels.cox_loglik_grad_hess(X, start, stop, event, beta, use_numba=True)
    b = kernels.cox_loglik_grad_hess(X, start, stop, event, beta, use_numba=False)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=1e-10, atol=1e-10)


def test_env_flag_selects_numpy_backend():
    code = "from clickipi import backend_name; print(backend_name())"
    env = dict(os.environ, CLICKIPI_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env["CLICKIPI_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == ("numba" if HAS_NUMBA else "numpy")
