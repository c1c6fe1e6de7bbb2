"""The compiled and pure-Python kernel backends must agree bit-for-bit."""

import numpy as np
import pytest

from planeflow import _core_py, core


@pytest.fixture(scope="module")
def native():
    if core.BACKEND != "native":
        pytest.skip("compiled backend not available")
    from planeflow import _core

    return _core


@pytest.mark.parametrize("seed", [0, 1, 7, 2**63 + 5])
def test_nnf_search_bit_identical(native, seed):
    rng = np.random.default_rng(seed % 2**32)
    a = rng.random((13, 11, 3))
    b = rng.random((12, 14, 3))
    mask = (rng.random((13, 11)) < 0.2).astype(np.uint8)
    seed_u = rng.integers(0, 14, (13, 11)).astype(np.int32)
    seed_v = rng.integers(0, 12, (13, 11)).astype(np.int32)
    xs = np.arange(11)[None, :]
    ys = np.arange(13)[:, None]
    seed_u = (seed_u - xs).astype(np.int32)
    seed_v = (seed_v - ys).astype(np.int32)
    seed_valid = (rng.random((13, 11)) < 0.7).astype(np.uint8)
    seed_valid |= mask  # masked pixels require valid seeds

    args = (a, b, 2, 3, 0.5, seed & 0xFFFFFFFFFFFFFFFF, mask, seed_valid,
            seed_u, seed_v)
    un, vn, cn, tn = native.nnf_search(*args)
    up, vp, cp, tp = _core_py.nnf_search(*args)
    np.testing.assert_array_equal(un, up)
    np.testing.assert_array_equal(vn, vp)
    np.testing.assert_array_equal(cn, cp)
    np.testing.assert_array_equal(tn, tp)


@pytest.mark.parametrize("seed", [3, 12])
def test_knn_geodesic_bit_identical(native, seed):
    rng = np.random.default_rng(seed)
    nodew = 1.0 + 50.0 * rng.random((10, 12))
    n_seeds = 9
    seeds = rng.choice(120, size=n_seeds, replace=False).astype(np.int64)
    dn, sn = native.knn_geodesic(nodew, seeds, 4)
    dp, sp = _core_py.knn_geodesic(nodew, seeds, 4)
    np.testing.assert_array_equal(dn, dp)
    np.testing.assert_array_equal(sn, sp)


def test_patch_cost_at_bit_identical(native):
    rng = np.random.default_rng(5)
    a = rng.random((9, 9, 3))
    b = rng.random((9, 9, 3))
    for _ in range(20):
        py, px = rng.integers(0, 9, 2)
        qy, qx = rng.integers(0, 9, 2)
        cn = native.patch_cost_at(a, b, py, px, qy, qx, 2)
        cp = _core_py.patch_cost_at(a, b, py, px, qy, qx, 2)
        assert cn == cp


def test_backend_env_override():
    import os
    import subprocess
    import sys

    env = dict(os.environ, PLANEFLOW_BACKEND="python")
    out = subprocess.run(
        [sys.executable, "-c", "from planeflow import core; print(core.BACKEND)"],
        env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"
