import os
import subprocess
import sys

import numpy as np
import pytest

from ldpspde import _fallback, kernels


def _cases():
    rng = np.random.default_rng(0)
    y0 = rng.standard_normal((7, 5))
    decay = rng.uniform(0.5, 1.0, (11, 5))
    inc = rng.standard_normal((7, 11, 5))
    return y0, decay, inc


def test_recurrence_matches_loop():
    y0, decay, inc = _cases()
    out = _fallback.linear_recurrence(y0, decay, inc)
    y = y0.copy()
    for k in range(11):
        y = decay[k] * y + inc[:, k]
        np.testing.assert_allclose(out[:, k + 1], y, rtol=1e-15)


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")
def test_backends_agree():
    from ldpspde import _kernels
    y0, decay, inc = _cases()
    np.testing.assert_allclose(_kernels.linear_recurrence(y0, decay, inc),
                               _fallback.linear_recurrence(y0, decay, inc), rtol=1e-14, atol=0)
    rng = np.random.default_rng(1)
    y = rng.standard_normal((50, 6))
    d = np.eye(6)[0]
    paths = rng.integers(0, 50, 300)
    amps = rng.uniform(-1, 1, 300)
    a, b = y.copy(), y.copy()
    _kernels.apply_saturated_jumps(a, d, paths, amps, 0.3, 2.0)
    _fallback.apply_saturated_jumps(b, d, paths, amps, 0.3, 2.0)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)


def test_saturated_jumps_sequential_semantics():
    y = np.array([[3.0, 4.0], [0.0, 0.0]])
    d = np.array([1.0, 0.0])
    expect = y.copy()
    for p, a in [(0, 1.0), (0, -0.5), (1, 2.0)]:
        expect[p] += 0.5 * a * 2.0 * np.tanh((1 + np.linalg.norm(expect[p])) / 2.0) * d
    for impl in {kernels.apply_saturated_jumps, _fallback.apply_saturated_jumps}:
        got = y.copy()
        impl(got, d, np.array([0, 0, 1]), np.array([1.0, -0.5, 2.0]), 0.5, 2.0)
        np.testing.assert_allclose(got, expect, rtol=1e-14)


def test_shape_errors():
    with pytest.raises(ValueError):
        _fallback.linear_recurrence(np.zeros((2, 3)), np.zeros((4, 2)), np.zeros((2, 4, 3)))
    with pytest.raises(IndexError):
        _fallback.apply_saturated_jumps(np.zeros((2, 2)), np.ones(2), np.array([5]), np.ones(1), 1.0, 1.0)


def test_env_var_forces_fallback():
    env = dict(os.environ, LDPSPDE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import ldpspde.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
