import os
import subprocess
import sys

import numpy as np
import pytest

from dgtwophase import _accel
from dgtwophase.kernels import brooks_corey_kernel, scaling_factors


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("cutoff", [False, True])
def test_brooks_corey_backends_agree(cutoff):
    rng = np.random.default_rng(1)
    s = rng.uniform(-0.05 if cutoff else 0.0, 0.95 if cutoff else 0.85, 500)
    args = (s, 0.12, 0.0, 2.7, 755.0, 9e-4, 1e-3, cutoff, 1e-5)
    a = brooks_corey_kernel(*args, use_numba=True)
    b = brooks_corey_kernel(*args, use_numba=False)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-300)


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
def test_scaling_factor_backends_agree():
    rng = np.random.default_rng(2)
    mean = rng.uniform(0, 1, 200)
    vals = mean[:, None] + rng.normal(scale=0.4, size=(200, 30))
    vals[:5] = mean[:5, None]  # constant elements
    a = scaling_factors(mean, vals, 0.0, 1.0, use_numba=True)
    b = scaling_factors(mean, vals, 0.0, 1.0, use_numba=False)
    assert np.allclose(a, b, rtol=1e-14)
    assert np.all(a[:5] == 1.0)


def test_backend_flag_selects_numpy():
    env = dict(os.environ, DGTWOPHASE_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c",
                          "from dgtwophase import _accel; print(_accel.USE_NUMBA)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
