import subprocess
import sys

import numpy as np
import pytest

from dmtfb import kernels
from dmtfb.rng import Streams
from dmtfb.sim import draw_fading

BACKENDS = [pytest.param(False, id="numpy")]
if kernels.HAVE_NUMBA:
    BACKENDS.append(pytest.param(True, id="numba"))


def _direct_logdet(Hs, powers, S, m):
    n = Hs.shape[1]
    A = np.eye(n, dtype=complex)
    for i in S:
        A += powers[i] / m * Hs[i] @ Hs[i].conj().T
    sign, val = np.linalg.slogdet(A)
    return val / np.log(2)


@pytest.mark.parametrize("use_numba", BACKENDS)
@pytest.mark.parametrize("L, n, m", [(1, 1, 1), (2, 2, 1), (2, 3, 2), (3, 2, 2)])
def test_level_outage_matches_slogdet(use_numba, L, n, m):
    gen = Streams(11).generator(L, n, m)
    H = draw_fading(gen, 400, L, n, m)
    rates = gen.uniform(0.2, 2.5, size=L)
    levels = np.array([0.5, 3.0, 20.0])
    U = kernels.level_outage(H, rates, levels, m, use_numba)
    masks = kernels.subset_masks(L)
    for t in range(0, 400, 7):
        for k, P in enumerate(levels):
            expect = any(
                _direct_logdet(H[t], [P] * L, np.flatnonzero(mk), m) < rates[mk].sum()
                for mk in masks
            )
            assert U[t, k] == expect


@pytest.mark.parametrize("use_numba", BACKENDS)
def test_outage_with_per_user_powers(use_numba):
    gen = Streams(12).generator(0)
    L, n, m = 2, 2, 2
    H = draw_fading(gen, 300, L, n, m)
    powers = np.exp(gen.normal(1.0, 1.5, size=(300, L)))
    rates = np.array([1.2, 0.8])
    got = kernels.outage(H, rates, powers, m, use_numba)
    masks = kernels.subset_masks(L)
    for t in range(300):
        expect = any(
            _direct_logdet(H[t], powers[t], np.flatnonzero(mk), m) < rates[mk].sum()
            for mk in masks
        )
        assert got[t] == expect


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")
def test_backends_agree_on_shared_draws():
    gen = Streams(3).generator(9)
    H = draw_fading(gen, 5000, 2, 2, 1)
    rates = np.array([0.7, 0.9])
    levels = np.array([1.0, 5.0, 40.0, 300.0])
    a = kernels.level_outage(H, rates, levels, 1, use_numba=True)
    b = kernels.level_outage(H, rates, levels, 1, use_numba=False)
    np.testing.assert_array_equal(a, b)
    u = gen.random((5000, 2, 2))
    idx = gen.integers(0, 4, 5000)
    np.testing.assert_array_equal(
        kernels.corrupt(idx, u[..., 0], u[..., 1], 0.3, 4, use_numba=True),
        kernels.corrupt(idx, u[..., 0], u[..., 1], 0.3, 4, use_numba=False),
    )


@pytest.mark.parametrize("use_numba", BACKENDS)
def test_level_outage_monotone_in_power(use_numba):
    gen = Streams(5).generator(1)
    H = draw_fading(gen, 20000, 2, 2, 2)
    U = kernels.level_outage(H, [1.0, 1.3], np.geomspace(0.1, 1e4, 9), 2, use_numba)
    assert np.all(np.diff(U.astype(int), axis=1) <= 0)


@pytest.mark.parametrize("use_numba", BACKENDS)
def test_corrupt_never_returns_sent_index_on_error(use_numba):
    K = 5
    idx = np.arange(K).repeat(200)
    u = np.random.default_rng(0).random((len(idx), 3, 2))
    u[..., 0] = 0.0  # always in error
    out = kernels.corrupt(idx, u[..., 0], u[..., 1], 0.5, K, use_numba)
    assert np.all(out != idx[:, None])
    assert out.min() >= 0 and out.max() <= K - 1


def test_feedback_from_levels_rule():
    U = np.array([
        [0, 0, 0],  # fine at level 1
        [1, 0, 0],  # needs level 2
        [1, 1, 0],  # needs level 3
        [1, 1, 1],  # hopeless: index 1
    ], dtype=np.uint8)
    np.testing.assert_array_equal(kernels.feedback_from_levels(U), [0, 1, 2, 0])


def test_env_flag_disables_numba():
    code = "from dmtfb import kernels; print(kernels.numba_enabled())"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={"DMTFB_DISABLE_NUMBA": "1", "PATH": ""}, check=True)
    assert out.stdout.strip() == "False"
