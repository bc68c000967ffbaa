"""Compiled and pure-python kernels must agree: bit-identically where
the accumulation order is pinned (matmul, convolutions), and to float32
round-off for the GRU (libm vs numpy transcendentals)."""

import numpy as np
import pytest

from duovc import backend
from duovc.backend import pykernels

compiled_missing = "compiled" not in backend.available()
pytestmark = pytest.mark.skipif(compiled_missing, reason="compiled backend not built")


def _core():
    from duovc.backend import _core
    return _core


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_gemm_bitwise_equal(dtype):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((40, 17)).astype(dtype)
    b = rng.standard_normal((17, 9)).astype(dtype)
    assert np.array_equal(_core().gemm(a, b), pykernels.gemm(a, b))


def test_gemm_row_stable_across_heights():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((64, 33)).astype(np.float32)
    b = rng.standard_normal((33, 21)).astype(np.float32)
    full = _core().gemm(a, b)
    for m in (1, 2, 7, 63):
        assert np.array_equal(_core().gemm(a[:m], b), full[:m])


@pytest.mark.parametrize("left_pad", [0, 1, 2])
def test_conv_bitwise_equal(left_pad):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((20, 4)).astype(np.float32)
    w = rng.standard_normal((3, 4, 5)).astype(np.float32)
    b = rng.standard_normal(5).astype(np.float32)
    lctx = np.zeros((0, 4), dtype=np.float32)
    assert np.array_equal(_core().conv1d_fwd(x, w, b, left_pad, lctx),
                          pykernels.conv1d_fwd(x, w, b, left_pad, lctx))


def test_conv_left_context_matches_offline():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((30, 3)).astype(np.float32)
    w = rng.standard_normal((4, 3, 6)).astype(np.float32)
    b = np.zeros(6, dtype=np.float32)
    offline = _core().conv1d_fwd(x, w, b, 3, np.zeros((0, 3), np.float32))
    chunk = _core().conv1d_fwd(x[10:], w, b, 3, x[7:10].copy())
    assert np.array_equal(chunk, offline[10:])


def test_conv_backward_consistent():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((12, 3)).astype(np.float32)
    w = rng.standard_normal((3, 3, 4)).astype(np.float32)
    dy = rng.standard_normal((12, 4)).astype(np.float32)
    got = _core().conv1d_bwd(x, w, 2, dy)
    ref = pykernels.conv1d_bwd(x, w, 2, dy)
    for g, r in zip(got, ref):
        np.testing.assert_allclose(g, r, atol=1e-5)


def test_dwconv_bitwise_equal():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((15, 6)).astype(np.float32)
    w = rng.standard_normal((5, 6)).astype(np.float32)
    b = rng.standard_normal(6).astype(np.float32)
    lctx = np.zeros((0, 6), dtype=np.float32)
    assert np.array_equal(_core().dwconv1d_fwd(x, w, b, 4, lctx),
                          pykernels.dwconv1d_fwd(x, w, b, 4, lctx))


def test_gru_close_across_backends():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((25, 4)).astype(np.float32)
    h0 = np.zeros(7, dtype=np.float32)
    wi = (rng.standard_normal((4, 21)) * 0.3).astype(np.float32)
    wh = (rng.standard_normal((7, 21)) * 0.3).astype(np.float32)
    bi = (rng.standard_normal(21) * 0.1).astype(np.float32)
    bh = (rng.standard_normal(21) * 0.1).astype(np.float32)
    ha = _core().gru_fwd(x, h0, wi, wh, bi, bh)[0]
    hb = pykernels.gru_fwd(x, h0, wi, wh, bi, bh)[0]
    np.testing.assert_allclose(ha, hb, atol=1e-5)


def test_gru_chunk_continuation_bitwise():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((20, 3)).astype(np.float32)
    h0 = np.zeros(5, dtype=np.float32)
    wi = (rng.standard_normal((3, 15)) * 0.4).astype(np.float32)
    wh = (rng.standard_normal((5, 15)) * 0.4).astype(np.float32)
    bi = np.zeros(15, dtype=np.float32)
    bh = np.zeros(15, dtype=np.float32)
    for kernels in (_core(), pykernels):
        full = kernels.gru_fwd(x, h0, wi, wh, bi, bh)[0]
        first = kernels.gru_fwd(x[:9], h0, wi, wh, bi, bh)[0]
        rest = kernels.gru_fwd(x[9:], first[-1].copy(), wi, wh, bi, bh)[0]
        assert np.array_equal(np.vstack([first, rest]), full)


def test_backend_switch_context():
    assert backend.name() in ("compiled", "python")
    with backend.use("python"):
        assert backend.name() == "python"
    with backend.use("compiled"):
        assert backend.name() == "compiled"


def test_model_forward_close_across_backends(tiny_model):
    from duovc.layers import Mode
    from duovc.rng import Rng
    x = Rng(31).normal((40, 6))
    with backend.use("compiled"):
        out_c = tiny_model.convert(x, 1, Mode.STREAMING)
    with backend.use("python"):
        out_p = tiny_model.convert(x, 1, Mode.STREAMING)
    np.testing.assert_allclose(out_c, out_p, atol=2e-4)
