"""Monte-Carlo estimate of the finite-width empirical NTK.

The sampled network has ``depth`` hidden ReLU layers of width ``width``::

    g_1     = W_1 x + beta * b_1
    g_{h+1} = sqrt(2 / width) * W_{h+1} relu(g_h) + beta * b_{h+1}
    f(x)    = g_{depth+1}          (scalar)

with standard-normal weights and biases initialised at zero.  The bias
parameters still contribute their gradients, ``beta * delta``, so as the width
grows the empirical kernel ``sum_p df(x)/dp * df(z)/dp`` converges to the
unnormalised recursion ``Theta^(depth)(x, z)`` of :mod:`ntkgp.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError, ShapeError


@dataclass(frozen=True)
class FiniteNetConfig:
    depth: int
    width: int
    bias: float = 0.0
    samples: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.depth < 0 or self.width < 1 or self.samples < 1:
            raise ContractError("need depth >= 0, width >= 1 and samples >= 1")
        if self.bias < 0:
            raise ContractError("bias must be >= 0")


def _one_network(X, Z, depth, width, rng):
    """Weight and bias parts of the empirical NTK for one sampled network.

    Returns two arrays over the rows of ``X``/``Z``: the sum over weight
    parameters of ``df(x) df(z)`` and the same sum over bias parameters
    with ``beta = 1``.
    """
    U = np.vstack([X, Z])  # forward both sets together
    n = len(X)
    d = U.shape[1]
    scale = np.sqrt(2.0 / width)
    weights = []
    inputs = []  # layer inputs, already multiplied by the layer's scale
    pre = []
    h = U
    fan_in = d
    for layer in range(depth + 1):
        out = 1 if layer == depth else width
        W = rng.standard_normal((out, fan_in))
        s = 1.0 if layer == 0 else scale
        inputs.append(s * h)
        weights.append(W)
        g = inputs[-1] @ W.T
        pre.append(g)
        h = np.maximum(g, 0.0)
        fan_in = out

    # backprop: delta = df/dg for each layer, starting at the scalar output
    delta = np.ones((len(U), 1))
    w_part = np.zeros(n)
    b_part = np.zeros(n)
    for layer in range(depth, -1, -1):
        a = inputs[layer]
        w_part += np.einsum("ij,ij->i", delta[:n], delta[n:]) * np.einsum("ij,ij->i", a[:n], a[n:])
        b_part += np.einsum("ij,ij->i", delta[:n], delta[n:])
        if layer > 0:
            s = scale
            delta = (delta @ weights[layer]) * s * (pre[layer - 1] > 0)
    if not (np.all(np.isfinite(w_part)) and np.all(np.isfinite(b_part))):
        raise NumericError("non-finite gradient in sampled network")
    return w_part, b_part


def empirical_ntk_batch(X, Z, cfg: FiniteNetConfig, biases=None):
    """Row-paired estimates for many pairs and bias values at once.

    The forward and backward passes do not depend on ``beta`` (biases start
    at zero), so one set of sampled networks serves every entry of
    ``biases``.  Returns ``(mean, stderr)`` arrays of shape
    ``(len(biases), len(X))``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if X.shape != Z.shape:
        raise ShapeError(f"paired inputs must have equal shapes, got {X.shape} and {Z.shape}")
    biases = np.atleast_1d(cfg.bias if biases is None else np.asarray(biases, dtype=float))
    rng = np.random.default_rng(cfg.seed)
    draws = np.empty((cfg.samples, len(biases), len(X)))
    for s in range(cfg.samples):
        w_part, b_part = _one_network(X, Z, cfg.depth, cfg.width, rng)
        draws[s] = w_part[None, :] + (biases**2)[:, None] * b_part[None, :]
    mean = draws.mean(axis=0)
    if cfg.samples > 1:
        stderr = draws.std(axis=0, ddof=1) / np.sqrt(cfg.samples)
    else:
        stderr = np.full_like(mean, np.inf)
    return mean, stderr


def empirical_ntk(x, z, cfg: FiniteNetConfig):
    """Average empirical NTK of ``cfg.samples`` sampled networks and its standard error."""
    mean, stderr = empirical_ntk_batch(np.asarray(x)[None, :], np.asarray(z)[None, :], cfg)
    return float(mean[0, 0]), float(stderr[0, 0])
