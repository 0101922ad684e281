"""Target and base distributions.

A :class:`TargetModel` carries its parameters packed as
``(kind, A, B, c, s)`` so the compiled sampler loops can evaluate any
built-in family through one dispatch function, together with a matrix
``M`` dominating the entrywise absolute Hessian of ``-log q``.

=========  ================  ===========  =======  ========
kind       A                 B            c        s
=========  ================  ===========  =======  ========
gaussian   mean (1, d)       precision    unused   unused
mixture    means (K, d)      unused       unused   sigma^2
boltzmann  Q (d_b, d_r)      unused       biases   unused
=========  ================  ===========  =======  ========

Log-densities are unnormalized. Each constructor records the additive
constant it drops in ``TargetModel.log_constant``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)

GAUSSIAN = 0
MIXTURE = 1
BOLTZMANN = 2

_EMPTY2 = np.zeros((0, 0))
_EMPTY1 = np.zeros(0)

# Supplement Table 1: row k holds coordinate k of the five mixture means.
PAPER_MIXTURE_MEANS = np.array(
    [
        [2.66, 5.73, 2.02, 9.45, 6.29],
        [3.72, 9.08, 8.98, 6.61, 0.62],
    ]
).T


class ModelError(ValueError):
    pass


@njit(**_JIT)
def _logcosh(z):
    a = abs(z)
    return a + math.log1p(math.exp(-2.0 * a)) - math.log(2.0)


@njit(**_JIT)
def model_logq(p, x):
    kind, A, B, c, s = p
    if kind == GAUSSIAN:
        r = x - A[0]
        return -0.5 * (r @ (B @ r))
    if kind == MIXTURE:
        k = A.shape[0]
        e = np.empty(k)
        for i in range(k):
            r = x - A[i]
            e[i] = -0.5 * (r @ r) / s
        top = e.max()
        return top + math.log(np.sum(np.exp(e - top)))
    z = A @ x + c
    acc = -0.5 * (x @ x)
    for k in range(z.shape[0]):
        acc += _logcosh(z[k])
    return acc


@njit(**_JIT)
def model_grad(p, x):
    kind, A, B, c, s = p
    if kind == GAUSSIAN:
        return -(B @ (x - A[0]))
    if kind == MIXTURE:
        k = A.shape[0]
        e = np.empty(k)
        for i in range(k):
            r = x - A[i]
            e[i] = -0.5 * (r @ r) / s
        w = np.exp(e - e.max())
        w /= w.sum()
        return (w @ A - x) / s
    return np.tanh(A @ x + c) @ A - x


@njit(**_JIT)
def model_logq_rows(p, X):
    out = np.empty(X.shape[0])
    for k in range(X.shape[0]):
        out[k] = model_logq(p, X[k])
    return out


def pack(kind, A=_EMPTY2, B=_EMPTY2, c=_EMPTY1, s=0.0) -> tuple:
    return (
        np.int64(kind),
        np.ascontiguousarray(A, dtype=float),
        np.ascontiguousarray(B, dtype=float),
        np.ascontiguousarray(c, dtype=float),
        float(s),
    )


@dataclass(frozen=True, eq=False)
class TargetModel:
    dim: int
    params: tuple
    hessian_bound: np.ndarray
    exact_moments: tuple[np.ndarray, np.ndarray] | None = None
    name: str = "model"
    log_constant: str = "0"

    def log_density(self, x) -> float:
        return float(model_logq(self.params, np.asarray(x, dtype=float)))

    def gradient(self, x) -> np.ndarray:
        return model_grad(self.params, np.asarray(x, dtype=float))

    def log_density_rows(self, X) -> np.ndarray:
        """Log-density of every row of ``X``."""
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
        return model_logq_rows(self.params, X)

    @property
    def hessian_row_sums(self) -> np.ndarray:
        return self.hessian_bound.sum(axis=1)


# -- Gaussian -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (mu.size, mu.size):
            raise ModelError(f"covariance shape {sigma.shape} does not match mean length {mu.size}")
        if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12):
            raise ModelError("covariance must be symmetric")
        if np.linalg.eigvalsh(sigma).min() <= 0:
            raise ModelError("covariance must be positive definite (singular or indefinite given)")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)


def gaussian_model(spec: GaussianSpec) -> TargetModel:
    """Gaussian ``exp(-(x - mu)' Sigma^-1 (x - mu) / 2)`` with ``M = |Sigma^-1|``."""
    prec = np.linalg.inv(spec.sigma)
    prec = 0.5 * (prec + prec.T)
    d = spec.mu.size
    return TargetModel(
        dim=d,
        params=pack(GAUSSIAN, A=spec.mu[None, :], B=prec),
        hessian_bound=np.abs(prec),
        exact_moments=(spec.mu.copy(), np.diag(spec.sigma) + spec.mu**2),
        name="gaussian",
        log_constant="-0.5*log det(2*pi*Sigma)",
    )


# -- isotropic mixture ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    """Equal-weight mixture of isotropic Gaussians sharing variance ``sigma2``."""

    means: np.ndarray
    sigma2: float

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        if means.shape[0] < 1:
            raise ModelError("mixture needs at least one component")
        if not self.sigma2 > 0:
            raise ModelError("sigma2 must be positive")
        if not np.all(np.isfinite(means)):
            raise ModelError("mixture means must be finite")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "sigma2", float(self.sigma2))


def mixture_hessian_bound(means, sigma2) -> np.ndarray:
    """Entrywise bound from Popoviciu's variance inequality.

    Off the diagonal the Hessian is a covariance of component means, which
    Cauchy-Schwarz bounds by the product of the per-coordinate spreads.
    """
    spread = means.max(axis=0) - means.min(axis=0)
    M = 0.25 * np.outer(spread, spread) / sigma2**2
    M[np.diag_indices_from(M)] += 1.0 / sigma2
    return M


def mixture_model(spec: MixtureSpec) -> TargetModel:
    means, s2 = spec.means, spec.sigma2
    return TargetModel(
        dim=means.shape[1],
        params=pack(MIXTURE, A=means, s=s2),
        hessian_bound=mixture_hessian_bound(means, s2),
        exact_moments=(means.mean(axis=0), s2 + (means**2).mean(axis=0)),
        name="mixture",
        log_constant="0 (sum of unnormalized component kernels)",
    )


def paper_mixture_spec(sigma2: float = 0.2) -> MixtureSpec:
    return MixtureSpec(PAPER_MIXTURE_MEANS.copy(), sigma2)


# -- Boltzmann machine relaxation ---------------------------------------------


@dataclass(frozen=True, eq=False)
class BoltzmannSpec:
    W: np.ndarray
    b: np.ndarray
    D: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        b = np.asarray(self.b, dtype=float)
        D = np.asarray(self.D, dtype=float)
        Q = np.asarray(self.Q, dtype=float)
        n = W.shape[0]
        if W.shape != (n, n) or not np.allclose(W, W.T, rtol=0, atol=1e-12):
            raise ModelError("W must be a symmetric square matrix")
        if np.any(np.diag(W) != 0):
            raise ModelError("W must have a zero diagonal")
        if b.shape != (n,) or D.shape != (n, n) or Q.ndim != 2 or Q.shape[0] != n:
            raise ModelError("dimension mismatch between W, b, D and Q")
        if np.abs(Q @ Q.T - (W + D)).max() > 1e-10:
            raise ModelError("Q Q^T does not reproduce W + D")
        for name, val in dict(W=W, b=b, D=D, Q=Q).items():
            object.__setattr__(self, name, val)

    @property
    def d_b(self) -> int:
        return self.W.shape[0]

    @property
    def d_r(self) -> int:
        return self.Q.shape[1]


def build_Q(W, b, jitter: float = 0.1) -> BoltzmannSpec:
    """Shift ``W`` by ``(|lambda_min| + jitter) I`` and take its symmetric square root."""
    W = np.asarray(W, dtype=float)
    lam_min = np.linalg.eigvalsh(W).min()
    D = (abs(lam_min) + jitter) * np.eye(W.shape[0])
    lam, vecs = np.linalg.eigh(W + D)
    if lam.min() < -1e-10:
        raise ModelError("W + D is not positive semi-definite; factorization failed")
    Q = (vecs * np.sqrt(np.clip(lam, 0.0, None))) @ vecs.T
    return BoltzmannSpec(W, np.asarray(b, dtype=float), D, Q)


def random_boltzmann_machine(d_b: int, seed: int, scale: float = 1.0, bias_scale: float = 0.2):
    """Seeded ``(W, b)`` with i.i.d. normal couplings ``scale / sqrt(d_b)``."""
    rng = np.random.default_rng(seed)
    A = rng.normal(0.0, scale / math.sqrt(d_b), size=(d_b, d_b))
    W = np.triu(A, 1)
    W = W + W.T
    b = rng.normal(0.0, bias_scale, size=d_b)
    return W, b


def boltzmann_hessian_envelope(Q) -> tuple[np.ndarray, np.ndarray]:
    """``(M_plus, M_minus)`` with ``M_minus <= H(x) <= M_plus`` entrywise."""
    outer = np.einsum("ki,kj->kij", Q, Q)
    n = Q.shape[1]
    m_plus = np.eye(n) - np.minimum(outer, 0.0).sum(axis=0)
    m_minus = -np.maximum(outer, 0.0).sum(axis=0)
    return m_plus, m_minus


def boltzmann_relaxation_model(spec: BoltzmannSpec, with_moments: bool | None = None) -> TargetModel:
    m_plus, m_minus = boltzmann_hessian_envelope(spec.Q)
    if with_moments is None:
        with_moments = spec.d_b <= 16
    moments = None
    if with_moments:
        exact = boltzmann_exact_moments(spec.W, spec.b, spec.Q)
        moments = (exact.mean_x, np.diag(exact.second_x).copy())
    return TargetModel(
        dim=spec.d_r,
        params=pack(BOLTZMANN, A=spec.Q, c=spec.b),
        hessian_bound=np.maximum(np.abs(m_plus), np.abs(m_minus)),
        exact_moments=moments,
        name="boltzmann",
        log_constant="log(2^d_b / ((2 pi)^(d_r/2) Z_b exp(tr(D)/2))) + d_b log 2",
    )


@dataclass(frozen=True, eq=False)
class BoltzmannMoments:
    mean_s: np.ndarray
    second_s: np.ndarray
    mean_x: np.ndarray
    second_x: np.ndarray
    log_partition: float


MAX_ENUMERATION_DIM = 20


def boltzmann_exact_moments(W, b, Q=None) -> BoltzmannMoments:
    """Enumerate ``{-1, 1}^d_b`` and lift the spin moments to the relaxation.

    ``E[X] = Q' E[S]`` and ``E[X X'] = Q' E[S S'] Q + I`` since ``X | S`` is
    ``N(Q' S, I)``.
    """
    W = np.asarray(W, dtype=float)
    b = np.asarray(b, dtype=float)
    n = W.shape[0]
    if n > MAX_ENUMERATION_DIM:
        raise ModelError(f"d_b = {n} exceeds the enumeration limit {MAX_ENUMERATION_DIM}")
    S = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
    energy = 0.5 * np.einsum("si,ij,sj->s", S, W, S) + S @ b
    top = energy.max()
    p = np.exp(energy - top)
    z = p.sum()
    p /= z
    mean_s = p @ S
    second_s = (S * p[:, None]).T @ S
    if Q is None:
        Q = build_Q(W, b).Q
    Q = np.asarray(Q, dtype=float)
    mean_x = Q.T @ mean_s
    second_x = Q.T @ second_s @ Q + np.eye(Q.shape[1])
    return BoltzmannMoments(mean_s, second_s, mean_x, second_x, float(top + math.log(z)))


def boltzmann_base_spec(spec: BoltzmannSpec) -> GaussianSpec:
    """Independent-spin Gaussian approximation used as the tempering base.

    Treats spins as independent with ``E[S_k] = tanh(b_k)``; the relaxation
    then has mean ``Q' tanh(b)`` and covariance ``Q' diag(1 - tanh(b)^2) Q + I``.
    """
    m = np.tanh(spec.b)
    cov = spec.Q.T @ np.diag(1.0 - m**2) @ spec.Q + np.eye(spec.d_r)
    return GaussianSpec(spec.Q.T @ m, 0.5 * (cov + cov.T))
