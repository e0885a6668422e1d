"""Compiled and pure-Python kernels must agree."""
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from midas import _backend, _kernels_py
from midas.compress import gaussian_survival

compiled = pytest.importorskip("midas._kernels")

LEVELS = np.linspace(10.0, 160.0, 7)


def _curves(rng, n):
    A = rng.uniform(1, 10, n)
    mu = rng.uniform(40, 120, n)
    sigma = rng.uniform(10, 40, n)
    dwell = np.array([gaussian_survival(LEVELS, a, m, s) for a, m, s in zip(A, mu, sigma)])
    return dwell * (1 + 0.01 * rng.standard_normal(dwell.shape))


@pytest.mark.skipif(os.environ.get("MIDAS_PURE_PYTHON") == "1", reason="fallback forced")
def test_default_backend_is_compiled():
    assert _backend.BACKEND == "compiled"


def test_env_forces_python_backend():
    code = "import midas._backend as b; print(b.BACKEND)"
    env = dict(os.environ, MIDAS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_cumulative_counts_agree(rng):
    seg = rng.normal(80, 30, (20, 200))
    a = compiled.cumulative_counts(seg, LEVELS, 0.025)
    b = _kernels_py.cumulative_counts(seg, LEVELS, 0.025)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("fixed", [math.nan, 5.0])
def test_fit_batch_agrees(rng, fixed):
    dwell = _curves(rng, 60)
    pa, ra, sa, _ = compiled.fit_cdf_batch(LEVELS, dwell, 200, 1e-8, fixed)
    pb, rb, sb, _ = _kernels_py.fit_cdf_batch(LEVELS, dwell, 200, 1e-8, fixed)
    np.testing.assert_array_equal(sa, sb)
    # both stop on the same relative step tolerance; libm erf vs the C erf
    # rounding moves the stopping iterate slightly
    np.testing.assert_allclose(pa, pb, rtol=1e-4)
    np.testing.assert_allclose(ra, rb, rtol=1e-3, atol=1e-9)


def test_fit_no_events_both():
    dwell = np.array([[1.0, 0.5, 0, 0, 0, 0, 0]])
    for k in (compiled, _kernels_py):
        p, r, s, _ = k.fit_cdf_batch(LEVELS, dwell, 200, 1e-8, math.nan)
        assert s[0] == _backend.FIT_NO_EVENTS
        assert np.all(np.isnan(p))


def test_spirit_track_agrees(rng):
    x = rng.standard_normal((300, 6)) @ rng.standard_normal((6, 6))
    w0 = np.eye(6, 2)
    e0 = np.full(2, 1e-3)
    wa, ea, ha = compiled.spirit_track(x, w0, e0, 0.99)
    wb, eb, hb = _kernels_py.spirit_track(x, w0, e0, 0.99)
    np.testing.assert_allclose(wa, wb, atol=1e-12)
    np.testing.assert_allclose(ea, eb, rtol=1e-12)
    np.testing.assert_allclose(ha, hb, atol=1e-10)
