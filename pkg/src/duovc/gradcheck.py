"""Finite-difference validation of reverse-mode gradients.

The whole graph is re-run in float64: analytic gradients come from one
backward pass, numeric ones from central differences per coordinate.
The reported figure is the worst relative error over every coordinate
of every input.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError
from .rng import Rng
from .tensor import Tensor, mul, tsum

DEFAULT_EPS = 1e-4


def randomize_parameters(module, rng: Rng, scale: float = 0.5) -> None:
    """Give every parameter a random value (including zero-initialized
    biases) so pre-activations don't sit exactly on ReLU kinks, where
    central differences and subgradients legitimately disagree."""
    for _, p in module.named_parameters():
        p.assign(rng.normal(p.shape, 0.0, scale))


def probe_scalar(out: Tensor, seed: int = 0) -> Tensor:
    """Project a tensor onto a fixed random direction.

    Plain sums can be blind to whole gradient subspaces (e.g. a
    freshly initialized layer norm sums to a constant), so checks
    scalarize through this instead.
    """
    w = Rng(seed ^ 0x9E3779B9).normal(out.shape).astype(np.float64)
    return tsum(mul(out, Tensor(w, dtype=out.dtype)))


def grad_check(op: Callable[..., Tensor], inputs: Sequence[Tensor],
               eps: float = DEFAULT_EPS) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``op`` must map the given tensors to a scalar and be deterministic
    (re-evaluated many times).  Error per coordinate is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    base = [np.asarray(t.data, dtype=np.float64) for t in inputs]
    leaves = [Tensor(b, requires_grad=True, dtype=np.float64) for b in base]
    out = op(*leaves)
    if out.data.size != 1:
        raise ContractError(f"grad_check target must be scalar, got shape {out.shape}")
    out.backward()
    analytic = [np.zeros_like(b) if leaf.grad is None else leaf.grad.copy()
                for b, leaf in zip(base, leaves)]

    def evaluate(arrays) -> float:
        tensors = [Tensor(a, dtype=np.float64) for a in arrays]
        return op(*tensors).item()

    worst = 0.0
    for i, b in enumerate(base):
        flat = b.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            plus = [a.copy() for a in base]
            plus[i].reshape(-1)[j] = orig + eps
            minus = [a.copy() for a in base]
            minus[i].reshape(-1)[j] = orig - eps
            numeric = (evaluate(plus) - evaluate(minus)) / (2.0 * eps)
            a_val = analytic[i].reshape(-1)[j]
            denom = max(abs(a_val), abs(numeric), 1e-8)
            worst = max(worst, abs(a_val - numeric) / denom)
    return worst
