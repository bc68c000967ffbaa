"""Neural layers: causal/non-causal 1-d convolutions, the
depthwise-separable conv sandwich, dual-branch conv blocks selected by
inference mode, unidirectional GRU, highway, linear, per-frame layer
norm, and dropout.

Sequence tensors are [T, C] (time major).  Layers that look back in time
accept an optional ``state`` dict of raw left-context frames keyed by a
layer path; the offline forward passes ``state=None`` and gets zero
context, which is exactly what chunked inference reproduces, so both
paths share one code path and stay bit-identical.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .backend import kernels
from .errors import ConfigError, ContractError, ShapeError
from .rng import Rng
from .tensor import Tensor, add, grad_enabled, mul, relu, sigmoid, sub


class Mode(Enum):
    """Inference mode: streaming uses only causal branches."""

    STREAMING = "streaming"
    NON_STREAMING = "non-streaming"


class Module:
    """Minimal parameter container with named traversal."""

    def named_parameters(self, prefix: str = ""):
        for attr, value in vars(self).items():
            name = f"{prefix}.{attr}" if prefix else attr
            if isinstance(value, Tensor):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def replace_parameters(self, mapping: dict):
        """Swap parameter tensors by path name (gradient checking, loading)."""
        for name, new in mapping.items():
            obj = self
            *path, leaf = name.split(".")
            for part in path:
                obj = obj[int(part)] if isinstance(obj, (list, tuple)) else getattr(obj, part)
            if isinstance(obj, (list, tuple)):
                raise KeyError(name)
            if not isinstance(getattr(obj, leaf), Tensor):
                raise KeyError(name)
            setattr(obj, leaf, new)


def _uniform_init(rng: Rng, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(shape, -bound, bound)


def _ring_read(state, path: str, frames: int, dim: int, dtype) -> np.ndarray:
    if state is None or frames == 0:
        return np.zeros((0, dim), dtype=dtype)
    ring = state.get(path)
    if ring is None:
        ring = np.zeros((frames, dim), dtype=dtype)
        state[path] = ring
    return ring


def _ring_update(state, path: str, frames: int, new_rows: np.ndarray) -> None:
    if state is None or frames == 0:
        return
    merged = np.concatenate([state[path], new_rows], axis=0)
    state[path] = merged[-frames:]


def _stream_guard(state) -> None:
    if state is not None and grad_enabled():
        raise ContractError("stateful (chunked) forward is inference-only; wrap in no_grad()")


class Conv1d(Module):
    """Length-preserving 1-d convolution over [T, C_in].

    Causal layers put all k-1 padding frames on the left; non-causal
    layers split it ceil((k-1)/2) left / floor((k-1)/2) right, so output
    frame t of a causal layer depends on input frames <= t only.
    """

    def __init__(self, in_ch: int, out_ch: int, kernel_size: int, causal: bool, rng: Rng):
        if kernel_size < 1:
            raise ConfigError(f"kernel_size must be >= 1, got {kernel_size}")
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel_size = kernel_size
        self.causal = causal
        self.weight = Tensor(_uniform_init(rng, (out_ch, in_ch, kernel_size), in_ch * kernel_size),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch, dtype=np.float32), requires_grad=True)

    @property
    def left_pad(self) -> int:
        k = self.kernel_size
        return k - 1 if self.causal else (k - 1 + 1) // 2

    def forward(self, x: Tensor, lctx: np.ndarray | None = None) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.in_ch:
            raise ShapeError(f"conv1d expects [T, {self.in_ch}], got {x.shape}")
        if lctx is not None and grad_enabled() and (x.requires_grad or self.weight.requires_grad):
            raise ContractError("conv left context is inference-only")
        ker = kernels()
        w, b = self.weight, self.bias
        w_kio = np.ascontiguousarray(w.data.transpose(2, 1, 0))
        ctx = lctx if lctx is not None else np.zeros((0, self.in_ch), dtype=x.dtype)
        data = ker.conv1d_fwd(np.ascontiguousarray(x.data), w_kio, b.data, self.left_pad,
                              np.ascontiguousarray(ctx.astype(x.dtype, copy=False)))

        def bwd(out):
            dx, dw, db = ker.conv1d_bwd(np.ascontiguousarray(x.data), w_kio,
                                        self.left_pad, np.ascontiguousarray(out.grad))
            if x.requires_grad:
                x._accum_grad(dx)
            if w.requires_grad:
                w._accum_grad(dw.transpose(2, 1, 0))
            if b.requires_grad:
                b._accum_grad(db)

        return Tensor.from_op(data, (x, w, b), bwd, "conv1d")

    __call__ = forward

    def flops_per_frame(self) -> int:
        return 2 * self.in_ch * self.out_ch * self.kernel_size


class DepthwiseConv1d(Module):
    """Per-channel 1-d convolution (one k-tap filter per channel)."""

    def __init__(self, channels: int, kernel_size: int, causal: bool, rng: Rng):
        if kernel_size < 1:
            raise ConfigError(f"kernel_size must be >= 1, got {kernel_size}")
        self.channels = channels
        self.kernel_size = kernel_size
        self.causal = causal
        self.weight = Tensor(_uniform_init(rng, (channels, kernel_size), kernel_size),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)

    @property
    def left_pad(self) -> int:
        k = self.kernel_size
        return k - 1 if self.causal else (k - 1 + 1) // 2

    def forward(self, x: Tensor, lctx: np.ndarray | None = None) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.channels:
            raise ShapeError(f"depthwise conv expects [T, {self.channels}], got {x.shape}")
        if lctx is not None and grad_enabled() and (x.requires_grad or self.weight.requires_grad):
            raise ContractError("conv left context is inference-only")
        ker = kernels()
        w, b = self.weight, self.bias
        w_kc = np.ascontiguousarray(w.data.T)
        ctx = lctx if lctx is not None else np.zeros((0, self.channels), dtype=x.dtype)
        data = ker.dwconv1d_fwd(np.ascontiguousarray(x.data), w_kc, b.data, self.left_pad,
                                np.ascontiguousarray(ctx.astype(x.dtype, copy=False)))

        def bwd(out):
            dx, dw, db = ker.dwconv1d_bwd(np.ascontiguousarray(x.data), w_kc,
                                          self.left_pad, np.ascontiguousarray(out.grad))
            if x.requires_grad:
                x._accum_grad(dx)
            if w.requires_grad:
                w._accum_grad(dw.T)
            if b.requires_grad:
                b._accum_grad(db)

        return Tensor.from_op(data, (x, w, b), bwd, "dwconv1d")

    __call__ = forward

    def flops_per_frame(self) -> int:
        return 2 * self.channels * self.kernel_size


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: Rng, bias_init: float = 0.0):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Tensor(_uniform_init(rng, (in_dim, out_dim), in_dim), requires_grad=True)
        self.bias = Tensor(np.full(out_dim, bias_init, dtype=np.float32), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"linear expects [.., {self.in_dim}], got {x.shape}")
        return add(x @ self.weight, self.bias)

    __call__ = forward

    def flops_per_frame(self) -> int:
        return 2 * self.in_dim * self.out_dim


class LayerNorm(Module):
    """Per-frame normalization: statistics over channels within one frame."""

    def __init__(self, dim: int, eps: float = 1e-5):
        self.dim = dim
        self.eps = eps
        self.gain = Tensor(np.ones(dim, dtype=np.float32), requires_grad=True)
        self.bias = Tensor(np.zeros(dim, dtype=np.float32), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.dim:
            raise ShapeError(f"layernorm expects [T, {self.dim}], got {x.shape}")
        g, b = self.gain, self.bias
        mu = x.data.mean(axis=1, keepdims=True)
        xc = x.data - mu
        var = (xc * xc).mean(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + np.asarray(self.eps, dtype=x.dtype))
        xhat = xc * inv
        data = xhat * g.data + b.data

        def bwd(out):
            dxhat = out.grad * g.data
            if x.requires_grad:
                m1 = dxhat.mean(axis=1, keepdims=True)
                m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
                x._accum_grad(inv * (dxhat - m1 - xhat * m2))
            if g.requires_grad:
                g._accum_grad((out.grad * xhat).sum(axis=0))
            if b.requires_grad:
                b._accum_grad(out.grad.sum(axis=0))

        return Tensor.from_op(data, (x, g, b), bwd, "layer_norm")

    __call__ = forward

    def flops_per_frame(self) -> int:
        # mean, centering, variance, scale, affine: ~5 passes over the frame
        return 5 * self.dim


def dropout(x: Tensor, rate: float, training: bool, rng: Rng | None) -> Tensor:
    """Inverted dropout; identity outside training."""
    if rate < 0 or rate >= 1:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("training-mode dropout needs an rng")
    keep = (rng.uniform(x.shape) >= rate).astype(x.dtype) / np.asarray(1.0 - rate, dtype=x.dtype)
    return mul(x, Tensor(keep, dtype=x.dtype))


class BasicConvLayer(Module):
    """Depthwise-separable sandwich: pointwise -> relu -> depthwise ->
    relu -> pointwise -> per-frame norm -> dropout."""

    def __init__(self, in_ch: int, out_ch: int, kernel_size: int, causal: bool,
                 dropout_rate: float, rng: Rng):
        if dropout_rate < 0 or dropout_rate >= 1:
            raise ConfigError(f"dropout rate must be in [0, 1), got {dropout_rate}")
        self.pw_in = Conv1d(in_ch, out_ch, 1, causal, rng)
        self.dw = DepthwiseConv1d(out_ch, kernel_size, causal, rng)
        self.pw_out = Conv1d(out_ch, out_ch, 1, causal, rng)
        self.norm = LayerNorm(out_ch)
        self.dropout_rate = dropout_rate
        self.causal = causal

    def forward(self, x: Tensor, training: bool = False, rng: Rng | None = None,
                state: dict | None = None, path: str = "") -> Tensor:
        _stream_guard(state)
        h = relu(self.pw_in(x))
        ring_key = f"{path}.dw"
        lp = self.dw.left_pad
        lctx = _ring_read(state, ring_key, lp, self.dw.channels, h.dtype) if state is not None else None
        pre_dw = h.data
        h = relu(self.dw(h, lctx=lctx))
        _ring_update(state, ring_key, lp, pre_dw)
        h = self.pw_out(h)
        h = self.norm(h)
        return dropout(h, self.dropout_rate, training, rng)

    __call__ = forward

    def flops_per_frame(self) -> int:
        c = self.dw.channels
        return (self.pw_in.flops_per_frame() + c + self.dw.flops_per_frame() + c
                + self.pw_out.flops_per_frame() + self.norm.flops_per_frame())


class DualModeConvBlock(Module):
    """Two parallel depthwise-separable conv layers with independent
    parameters; the inference mode selects exactly one branch, so the
    unselected branch contributes neither compute nor gradient."""

    def __init__(self, in_ch: int, out_ch: int, kernel_size: int, dropout_rate: float, rng: Rng):
        self.causal_branch = BasicConvLayer(in_ch, out_ch, kernel_size, True, dropout_rate, rng)
        self.noncausal_branch = BasicConvLayer(in_ch, out_ch, kernel_size, False, dropout_rate, rng)

    def branch(self, mode: Mode) -> BasicConvLayer:
        return self.causal_branch if mode is Mode.STREAMING else self.noncausal_branch

    def forward(self, x: Tensor, mode: Mode, training: bool = False, rng: Rng | None = None,
                state: dict | None = None, path: str = "") -> Tensor:
        sub_path = f"{path}.causal" if mode is Mode.STREAMING else f"{path}.noncausal"
        return self.branch(mode)(x, training=training, rng=rng, state=state, path=sub_path)

    __call__ = forward

    def flops_per_frame(self) -> int:
        # branches are shape-identical; only one runs per forward
        return self.causal_branch.flops_per_frame()


class GruLayer(Module):
    """Unidirectional GRU; h_t depends only on x_{<=t}.

    Packed gate order (reset, update, candidate), candidate
    n_t = tanh(W_n x + b_n + r_t * (U_n h + c_n)), and
    h_t = (1 - z_t) * n_t + z_t * h_{t-1}.
    """

    def __init__(self, in_dim: int, hidden: int, rng: Rng):
        self.in_dim = in_dim
        self.hidden = hidden
        self.w_in = Tensor(_uniform_init(rng, (in_dim, 3 * hidden), in_dim), requires_grad=True)
        self.w_hid = Tensor(_uniform_init(rng, (hidden, 3 * hidden), hidden), requires_grad=True)
        self.b_in = Tensor(np.zeros(3 * hidden, dtype=np.float32), requires_grad=True)
        self.b_hid = Tensor(np.zeros(3 * hidden, dtype=np.float32), requires_grad=True)

    def forward_seq(self, x: Tensor, h0: np.ndarray | None = None,
                    state: dict | None = None, path: str = "") -> Tensor:
        """Full-sequence forward: the left fold of single steps from h0 (zeros)."""
        if x.data.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"gru expects [T, {self.in_dim}], got {x.shape}")
        _stream_guard(state)
        key = f"{path}.h"
        if state is not None:
            h0 = state.get(key)
        if h0 is None:
            h0 = np.zeros(self.hidden, dtype=x.dtype)
        h0 = np.ascontiguousarray(h0.astype(x.dtype, copy=False))
        ker = kernels()
        wi, wh, bi, bh = self.w_in, self.w_hid, self.b_in, self.b_hid
        h, r, z, n, ghn = ker.gru_fwd(np.ascontiguousarray(x.data), h0, wi.data, wh.data,
                                      bi.data, bh.data)
        if state is not None:
            state[key] = h[-1].copy()

        def bwd(out):
            dx, dwi, dwh, dbi, dbh = ker.gru_bwd(np.ascontiguousarray(x.data), h0,
                                                 wi.data, wh.data, h, r, z, n, ghn,
                                                 np.ascontiguousarray(out.grad))
            if x.requires_grad:
                x._accum_grad(dx)
            if wi.requires_grad:
                wi._accum_grad(dwi)
            if wh.requires_grad:
                wh._accum_grad(dwh)
            if bi.requires_grad:
                bi._accum_grad(dbi)
            if bh.requires_grad:
                bh._accum_grad(dbh)

        return Tensor.from_op(h, (x, wi, wh, bi, bh), bwd, "gru_seq")

    __call__ = forward_seq

    def step(self, x_t: Tensor, h_prev: np.ndarray) -> Tensor:
        """One recurrence step; identical arithmetic to forward_seq on one frame."""
        if x_t.data.ndim == 1:
            x_t = x_t.reshape(1, -1)
        if h_prev.shape != (self.hidden,):
            raise ShapeError(f"h_prev must be [{self.hidden}], got {h_prev.shape}")
        return self.forward_seq(x_t, h0=h_prev)

    def flops_per_frame(self) -> int:
        # two packed matmuls plus gate arithmetic (r: 2H, z: 2H, n: 3H, blend: 4H)
        h, i = self.hidden, self.in_dim
        return 6 * h * (i + h) + 11 * h


class Highway(Module):
    """Gated skip layer: y = x + t * (relu(W_h x) - x), t = sigmoid(W_t x)."""

    def __init__(self, dim: int, rng: Rng):
        self.lin_h = Linear(dim, dim, rng)
        self.lin_t = Linear(dim, dim, rng, bias_init=-1.0)

    def forward(self, x: Tensor) -> Tensor:
        h = relu(self.lin_h(x))
        t = sigmoid(self.lin_t(x))
        return add(x, mul(t, sub(h, x)))

    __call__ = forward

    def flops_per_frame(self) -> int:
        dim = self.lin_h.in_dim
        # two linears plus relu, sigmoid, and the 3-op gate blend
        return self.lin_h.flops_per_frame() + self.lin_t.flops_per_frame() + 5 * dim
