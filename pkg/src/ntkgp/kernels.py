r"""Covariance functions: recursive NTK, Laplace and Gaussian kernels.

Depth convention
----------------
``depth`` counts the hidden ReLU layers of the network the kernel describes,
which is also the number of steps of the recursion

.. math::

    \Theta^{(0)} = x^\top z + \beta^2, \qquad
    \Theta^{(h)} = \Theta^{(h-1)} \kappa_0(\lambda^{(h-1)})
                   + \kappa_1(\lambda^{(h-1)})\,\|x\|\|z\| + \beta^2 .

The network therefore has ``depth + 1`` weight layers and on the unit sphere
the diagonal of the kernel equals ``(depth + 1) * (beta**2 + 1)``.  The
normalised kernel divides by that quantity.  For inputs off the sphere the
default ``"diagonal"`` normalisation divides by
``sqrt(Theta(x, x) * Theta(z, z))`` instead, which agrees with the constant
factor on the sphere and keeps the diagonal at one everywhere.  The literal
constant factor is available as ``normalization="constant"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ContractError, DegenerateInputError, DomainError, ShapeError

CLAMP_TOL = 1e-9
C_SIGMA = 2.0  # ReLU; enters the recursion only through c_sigma / 2 = 1
DEFAULT_BOUNDS = (1e-5, 1e5)

NTK = "ntk"
LAPLACE = "laplace"
GAUSSIAN = "gaussian"
KINDS = (NTK, LAPLACE, GAUSSIAN)
NORMALIZATIONS = ("diagonal", "constant")


def _clamp_unit(u):
    u = np.asarray(u, dtype=float)
    if np.any(np.isnan(u)) or np.any(np.abs(u) > 1.0 + CLAMP_TOL):
        raise DomainError("cosine argument outside [-1, 1] beyond tolerance")
    return np.clip(u, -1.0, 1.0)


def kappa0(u):
    """Arc-cosine kernel of degree 0, ``(pi - arccos u) / pi``."""
    u = _clamp_unit(u)
    return ((np.pi - np.arccos(u)) / np.pi)[()]


def kappa1(u):
    """Arc-cosine kernel of degree 1, ``(u (pi - arccos u) + sqrt(1 - u^2)) / pi``."""
    u = _clamp_unit(u)
    return ((u * (np.pi - np.arccos(u)) + np.sqrt(1.0 - u * u)) / np.pi)[()]


# ---------------------------------------------------------------------------
# parameter containers


@dataclass(frozen=True)
class NtkParams:
    """Parameters of the infinite-width NTK.

    ``depth`` is the number of hidden layers (recursion steps), ``bias`` the
    bias scale beta.  ``constant`` and ``noise`` are the output scale ``c``
    and white-noise variance; ``noise=None`` means no noise term.
    """

    depth: int
    bias: float = 0.0
    constant: float = 1.0
    noise: Optional[float] = None
    normalization: str = "diagonal"

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 0:
            raise ContractError(f"depth must be a non-negative integer, got {self.depth}")
        if not self.bias >= 0:
            raise ContractError(f"bias must be >= 0, got {self.bias}")
        if not self.constant > 0:
            raise ContractError(f"constant must be > 0, got {self.constant}")
        if self.noise is not None and not self.noise >= 0:
            raise ContractError(f"noise must be >= 0, got {self.noise}")
        if self.normalization not in NORMALIZATIONS:
            raise ContractError(f"unknown normalization {self.normalization!r}")


@dataclass(frozen=True)
class MaternParams:
    """Closed-form Matern cases: ``nu="half"`` (Laplace) or ``nu="inf"`` (Gaussian)."""

    length_scale: float
    nu: str = "half"
    constant: float = 1.0
    noise: Optional[float] = None

    def __post_init__(self):
        if self.nu not in ("half", "inf"):
            raise ContractError(f"nu must be 'half' or 'inf', got {self.nu!r}")
        if not self.length_scale > 0:
            raise ContractError(f"length_scale must be > 0, got {self.length_scale}")
        if not self.constant > 0:
            raise ContractError(f"constant must be > 0, got {self.constant}")
        if self.noise is not None and not self.noise >= 0:
            raise ContractError(f"noise must be >= 0, got {self.noise}")


@dataclass
class NtkRecursionState:
    """Per-layer values of the recursion for one input pair (index h = 0..depth)."""

    sigma: list
    sigma_dot: list
    theta: list
    lam: list


# ---------------------------------------------------------------------------
# NTK recursion


def _recursion(prod, sq_x, sq_z, depth, bias):
    """Vectorised recursion; returns ``(Theta, dTheta/dbeta)`` elementwise.

    ``prod`` holds x.z for every pair, ``sq_x``/``sq_z`` the squared norms
    (broadcastable against ``prod``).
    """
    if np.any(np.asarray(sq_x) <= 0) or np.any(np.asarray(sq_z) <= 0):
        raise DegenerateInputError("NTK is undefined for zero-norm inputs")
    b2 = bias * bias
    # Sigma^(h)(x, x) = kappa1(1) Sigma^(h-1)(x, x) = |x|^2 for every h
    norm = np.sqrt(sq_x * sq_z)
    sigma = prod
    theta = prod + b2
    dtheta = np.full(np.shape(theta), 2.0 * bias)
    for _ in range(depth):
        lam = _clamp_unit(sigma / norm)
        sigma_dot = (np.pi - np.arccos(lam)) / np.pi
        sigma = (lam * (np.pi - np.arccos(lam)) + np.sqrt(1.0 - lam * lam)) / np.pi * norm
        theta = theta * sigma_dot + sigma + b2
        dtheta = dtheta * sigma_dot + 2.0 * bias
    return theta, dtheta


def _normalize(theta, dtheta, sq_x, sq_z, depth, bias, normalization):
    b2 = bias * bias
    if normalization == "constant":
        scale = (depth + 1) * (b2 + 1.0)
        k = theta / scale
        dk = (dtheta - 2.0 * bias / (b2 + 1.0) * theta) / scale
    else:
        diag_x = (depth + 1) * (sq_x + b2)
        diag_z = (depth + 1) * (sq_z + b2)
        k = theta / np.sqrt(diag_x * diag_z)
        dk = dtheta / np.sqrt(diag_x * diag_z) - k * bias * (1.0 / (sq_x + b2) + 1.0 / (sq_z + b2))
    return k, dk


def _pair(x, z):
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.ndim != 1 or x.shape != z.shape:
        raise ShapeError(f"expected two vectors of equal length, got {x.shape} and {z.shape}")
    return x, z


def ntk_recursion(x, z, depth: int, bias: float = 0.0) -> NtkRecursionState:
    """Expose every layer of the recursion for a single pair (diagnostics)."""
    x, z = _pair(x, z)
    sq_x, sq_z, prod = float(x @ x), float(z @ z), float(x @ z)
    if sq_x == 0 or sq_z == 0:
        raise DegenerateInputError("NTK is undefined for zero-norm inputs")
    norm = math.sqrt(sq_x * sq_z)
    state = NtkRecursionState([prod], [None], [prod + bias * bias], [])
    for _ in range(depth):
        lam = float(_clamp_unit(state.sigma[-1] / norm))
        state.lam.append(lam)
        state.sigma_dot.append(float(kappa0(lam)))
        state.sigma.append(float(kappa1(lam)) * norm)
        state.theta.append(state.theta[-1] * state.sigma_dot[-1] + state.sigma[-1] + bias * bias)
    return state


def ntk_eval(x, z, p: NtkParams) -> float:
    """Unnormalised NTK value Theta^(depth)(x, z)."""
    x, z = _pair(x, z)
    theta, _ = _recursion(x @ z, x @ x, z @ z, p.depth, p.bias)
    return float(theta)


def ntk_eval_normalized(x, z, p: NtkParams) -> float:
    """Normalised NTK; equals one on the diagonal."""
    x, z = _pair(x, z)
    sq_x, sq_z = x @ x, z @ z
    theta, dtheta = _recursion(x @ z, sq_x, sq_z, p.depth, p.bias)
    k, _ = _normalize(theta, dtheta, sq_x, sq_z, p.depth, p.bias, p.normalization)
    return float(k)


def ntk_beta_grad(x, z, p: NtkParams) -> float:
    """Derivative of :func:`ntk_eval_normalized` with respect to the bias.

    Uses the layerwise recursion dTheta^(h) = dTheta^(h-1) * Sigma_dot^(h) + 2 beta
    so antipodal inputs (Sigma_dot = 0) need no special casing.
    """
    x, z = _pair(x, z)
    sq_x, sq_z = x @ x, z @ z
    theta, dtheta = _recursion(x @ z, sq_x, sq_z, p.depth, p.bias)
    _, dk = _normalize(theta, dtheta, sq_x, sq_z, p.depth, p.bias, p.normalization)
    return float(dk)


def ntk_shallow_limit(x, z) -> float:
    """Large-bias limit ``2 - arccos(lambda0) / pi`` of the one-hidden-layer kernel.

    This is the limit of ``Theta^(1) / (beta^2 + 1)``; the normalised kernel
    at ``depth=1`` tends to half of it.
    """
    x, z = _pair(x, z)
    sq_x, sq_z = x @ x, z @ z
    if sq_x == 0 or sq_z == 0:
        raise DegenerateInputError("limit is undefined for zero-norm inputs")
    lam = _clamp_unit((x @ z) / math.sqrt(sq_x * sq_z))
    return float(2.0 - np.arccos(lam) / np.pi)


# ---------------------------------------------------------------------------
# Matern closed forms


def laplace_eval(x, z, p: MaternParams) -> float:
    """``exp(-|x - z| / l)``."""
    x, z = _pair(x, z)
    return float(np.exp(-np.linalg.norm(x - z) / p.length_scale))


def gaussian_eval(x, z, p: MaternParams) -> float:
    """``exp(-|x - z|^2 / (2 l^2))``."""
    x, z = _pair(x, z)
    r = np.linalg.norm(x - z)
    return float(np.exp(-r * r / (2.0 * p.length_scale**2)))


# ---------------------------------------------------------------------------
# kernel specifications used by the GP engine


@dataclass(frozen=True)
class Hyper:
    """One hyperparameter value with its optimisation bounds (natural units)."""

    value: float
    bounds: tuple = DEFAULT_BOUNDS
    fixed: bool = False

    def __post_init__(self):
        lo, hi = self.bounds
        if not self.fixed and not (0 < lo <= hi):
            raise ContractError(f"bounds must satisfy 0 < lower <= upper, got {self.bounds}")


def _hyper(v, fixed=False, bounds=DEFAULT_BOUNDS):
    return v if isinstance(v, Hyper) else Hyper(float(v), tuple(bounds), fixed)


@dataclass(frozen=True)
class KernelSpec:
    """``constant * k(x, z) [+ noise * delta(x, z)]`` for one kernel family.

    Free hyperparameters are ordered ``constant``, then ``bias`` (NTK) or
    ``length_scale`` (Matern), then ``noise``.  Gradients and optimisation
    work on their logarithms.
    """

    kind: str
    constant: Hyper = Hyper(1.0)
    bias: Optional[Hyper] = None
    length_scale: Optional[Hyper] = None
    noise: Optional[Hyper] = None
    depth: Optional[int] = None
    normalization: str = "diagonal"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown kernel kind {self.kind!r}")
        if self.kind == NTK:
            if self.depth is None or self.bias is None:
                raise ContractError("NTK spec needs depth and bias")
            NtkParams(self.depth, self.bias.value, self.constant.value, None, self.normalization)
        elif self.length_scale is None:
            raise ContractError("Matern spec needs a length_scale")

    @classmethod
    def ntk(cls, depth, bias=1.0, constant=1.0, noise=None, *, fix_bias=False,
            fix_constant=False, fix_noise=False, normalization="diagonal"):
        return cls(NTK, _hyper(constant, fix_constant), bias=_hyper(bias, fix_bias),
                   noise=None if noise is None else _hyper(noise, fix_noise),
                   depth=int(depth), normalization=normalization)

    @classmethod
    def laplace(cls, length_scale=1.0, constant=1.0, noise=None, *, fix_length_scale=False,
                fix_constant=False, fix_noise=False):
        return cls(LAPLACE, _hyper(constant, fix_constant),
                   length_scale=_hyper(length_scale, fix_length_scale),
                   noise=None if noise is None else _hyper(noise, fix_noise))

    @classmethod
    def gaussian(cls, length_scale=1.0, constant=1.0, noise=None, *, fix_length_scale=False,
                 fix_constant=False, fix_noise=False):
        return cls(GAUSSIAN, _hyper(constant, fix_constant),
                   length_scale=_hyper(length_scale, fix_length_scale),
                   noise=None if noise is None else _hyper(noise, fix_noise))

    @classmethod
    def matern(cls, kind, **kw):
        return {LAPLACE: cls.laplace, GAUSSIAN: cls.gaussian}[kind](**kw)

    # -- hyperparameter vector -------------------------------------------

    def hypers(self):
        """``(name, Hyper)`` pairs present on this kernel, in canonical order."""
        out = [("constant", self.constant)]
        if self.kind == NTK:
            out.append(("bias", self.bias))
        else:
            out.append(("length_scale", self.length_scale))
        if self.noise is not None:
            out.append(("noise", self.noise))
        return out

    def free_names(self):
        return [n for n, h in self.hypers() if not h.fixed]

    @property
    def theta(self):
        """Log values of the free hyperparameters."""
        return np.log([h.value for _, h in self.hypers() if not h.fixed])

    @property
    def log_bounds(self):
        return np.log([h.bounds for _, h in self.hypers() if not h.fixed]).reshape(-1, 2)

    def with_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        names = self.free_names()
        if theta.shape != (len(names),):
            raise ShapeError(f"expected {len(names)} log-hyperparameters, got {theta.shape}")
        changes = {n: replace(getattr(self, n), value=float(np.exp(t))) for n, t in zip(names, theta)}
        return replace(self, **changes)

    def with_values(self, **values):
        return replace(self, **{n: replace(getattr(self, n), value=float(v)) for n, v in values.items()})

    def fixed_all(self):
        """Copy with every hyperparameter fixed at its current value."""
        return replace(self, **{n: replace(h, fixed=True) for n, h in self.hypers()})

    def values(self):
        return {n: h.value for n, h in self.hypers()}

    def to_dict(self):
        d = {"kind": self.kind, "normalization": self.normalization}
        if self.depth is not None:
            d["depth"] = self.depth
        for n, h in self.hypers():
            d[n] = {"value": h.value, "bounds": list(h.bounds), "fixed": h.fixed}
        return d

    @classmethod
    def from_dict(cls, d):
        hs = {n: Hyper(v["value"], tuple(v["bounds"]), v["fixed"])
              for n, v in d.items() if n in ("constant", "bias", "length_scale", "noise")}
        return cls(d["kind"], depth=d.get("depth"), normalization=d.get("normalization", "diagonal"), **hs)

    def __str__(self):
        vals = ", ".join(f"{n}={h.value:.4g}" for n, h in self.hypers())
        extra = f"depth={self.depth}, " if self.kind == NTK else ""
        return f"{self.kind}({extra}{vals})"


# ---------------------------------------------------------------------------
# Gram matrices


def _as_matrix(A):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2:
        raise ShapeError(f"expected a 2-D input matrix, got shape {A.shape}")
    return A


def _base_and_grad(kernel: KernelSpec, A, B, same):
    """Unscaled kernel matrix and its derivative w.r.t. the log of bias/length-scale."""
    if kernel.kind == NTK:
        if same:
            prod = A @ A.T
            prod = 0.5 * (prod + prod.T)
            sq_a = np.diag(prod).copy()
            sq_b = sq_a
        else:
            prod = A @ B.T
            sq_a = np.einsum("ij,ij->i", A, A)
            sq_b = np.einsum("ij,ij->i", B, B)
        sq_a, sq_b = sq_a[:, None], sq_b[None, :]
        beta = kernel.bias.value
        theta, dtheta = _recursion(prod, sq_a, sq_b, kernel.depth, beta)
        k, dk = _normalize(theta, dtheta, sq_a, sq_b, kernel.depth, beta, kernel.normalization)
        return k, dk * beta
    ell = kernel.length_scale.value
    r = cdist(A, B) if not same else cdist(A, A)
    if kernel.kind == LAPLACE:
        k = np.exp(-r / ell)
        return k, k * r / ell
    k = np.exp(-0.5 * (r / ell) ** 2)
    return k, k * (r / ell) ** 2


def gram(kernel: KernelSpec, A, B=None):
    """Kernel matrix ``c * k(a_i, b_j)``.

    When ``B`` is omitted (or is ``A``) the noise variance, if present, is
    added to the diagonal.
    """
    A = _as_matrix(A)
    same = B is None or B is A
    Bm = A if same else _as_matrix(B)
    if A.shape[1] != Bm.shape[1]:
        raise ShapeError(f"column mismatch: {A.shape[1]} vs {Bm.shape[1]}")
    if A.shape[0] == 0 or Bm.shape[0] == 0:
        return np.zeros((A.shape[0], Bm.shape[0]))
    k, _ = _base_and_grad(kernel, A, Bm, same)
    K = kernel.constant.value * k
    if same and kernel.noise is not None:
        K[np.diag_indices_from(K)] += kernel.noise.value
    return K


def gram_with_grads(kernel: KernelSpec, A, names: Optional[Sequence[str]] = None):
    """Training Gram matrix and its derivatives w.r.t. log-hyperparameters."""
    A = _as_matrix(A)
    free = kernel.free_names()
    names = free if names is None else list(names)
    for n in names:
        if n not in free:
            raise ContractError(f"hyperparameter {n!r} is fixed or absent")
    k, dk_log = _base_and_grad(kernel, A, A, True)
    c = kernel.constant.value
    K = c * k
    grads = []
    for n in names:
        if n == "constant":
            grads.append(K.copy())
        elif n in ("bias", "length_scale"):
            grads.append(c * dk_log)
        else:
            grads.append(kernel.noise.value * np.eye(len(A)))
    if kernel.noise is not None:
        K[np.diag_indices_from(K)] += kernel.noise.value
    return K, grads


def hyper_grads(kernel: KernelSpec, A, names: Optional[Sequence[str]] = None):
    """One ``n x n`` matrix dK/dlog(theta) per free hyperparameter."""
    return gram_with_grads(kernel, A, names)[1]


def kernel_diag(kernel: KernelSpec, A):
    """Diagonal of the prior covariance ``c * k(a, a)`` (noise excluded)."""
    A = _as_matrix(A)
    if kernel.kind == NTK and kernel.normalization == "constant":
        sq = np.einsum("ij,ij->i", A, A)
        b2 = kernel.bias.value ** 2
        return kernel.constant.value * (sq + b2) / (1.0 + b2)
    return np.full(len(A), kernel.constant.value)
