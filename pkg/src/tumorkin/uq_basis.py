"""Orthonormal polynomial chaos bases for the uncertain growth parameters.

Each scalar parameter carries a distribution on a bounded interval (uniform or
beta), and the matching orthogonal family (Legendre, Jacobi) is built from the
monic three-term recurrence mapped affinely onto the support.  All bases are
orthonormal with respect to the probability density, so the zeroth coefficient
of any expansion is its mean.  Quadrature nodes and weights come from the
Golub-Welsch eigenproblem and the weights sum to one; multi-dimensional rules
and bases are full tensor products in lexicographic index order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import betainc, betaln


@dataclass(frozen=True)
class Uniform:
    """Uniform distribution on [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def var(self) -> float:
        return (self.hi - self.lo) ** 2 / 12.0

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, 1.0 / (self.hi - self.lo), 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(self.lo, self.hi, size)

    def recurrence(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        alpha, beta = _jacobi_recurrence(0.0, 0.0, n)
        return _affine_recurrence(alpha, beta, self.lo, self.hi)


@dataclass(frozen=True)
class BetaOn:
    """Beta(c1, c2) distribution rescaled to [lo, hi]."""

    c1: float
    c2: float
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self) -> None:
        if not (self.c1 > 0.0 and self.c2 > 0.0):
            raise ValueError(f"shape parameters must be positive, got ({self.c1}, {self.c2})")
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def mean(self) -> float:
        return self.lo + (self.hi - self.lo) * self.c1 / (self.c1 + self.c2)

    @property
    def var(self) -> float:
        s = self.c1 + self.c2
        return (self.hi - self.lo) ** 2 * self.c1 * self.c2 / (s * s * (s + 1.0))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        u = (x - self.lo) / (self.hi - self.lo)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            logp = (
                (self.c1 - 1.0) * np.log(u)
                + (self.c2 - 1.0) * np.log1p(-u)
                - betaln(self.c1, self.c2)
            )
            out = np.exp(logp) / (self.hi - self.lo)
        return np.where((u >= 0.0) & (u <= 1.0), out, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        u = np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        return betainc(self.c1, self.c2, u)

    def sample(self, rng: np.random.Generator, size=None):
        return self.lo + (self.hi - self.lo) * rng.beta(self.c1, self.c2, size)

    def recurrence(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        # beta weight u^(c1-1) (1-u)^(c2-1) maps to Jacobi (1-t)^a (1+t)^b
        # under u = (t+1)/2, so a = c2 - 1, b = c1 - 1
        alpha, beta = _jacobi_recurrence(self.c2 - 1.0, self.c1 - 1.0, n)
        return _affine_recurrence(alpha, beta, self.lo, self.hi)


Distribution = Union[Uniform, BetaOn]


def _jacobi_recurrence(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Monic Jacobi recurrence on [-1, 1] with beta[0] = 1 (probability weight)."""
    if n < 1:
        raise ValueError("need at least one recurrence coefficient")
    alpha = np.zeros(n)
    beta = np.ones(n)
    apb = a + b
    alpha[0] = (b - a) / (apb + 2.0)
    if n > 1:
        # k = 1 written out: the generic beta formula degenerates to 0/0
        # when a + b = -1, which beta shapes with c1 + c2 = 1 do reach
        alpha[1] = (b * b - a * a) / ((2.0 + apb) * (4.0 + apb))
        beta[1] = 4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + apb) ** 2 * (3.0 + apb))
    for k in range(2, n):
        t = 2.0 * k + apb
        alpha[k] = (b * b - a * a) / (t * (t + 2.0))
        beta[k] = 4.0 * k * (k + a) * (k + b) * (k + apb) / (t * t * (t + 1.0) * (t - 1.0))
    return alpha, beta


def _affine_recurrence(
    alpha: np.ndarray, beta: np.ndarray, lo: float, hi: float
) -> tuple[np.ndarray, np.ndarray]:
    """Map a recurrence from [-1, 1] onto [lo, hi]; beta[0] stays 1."""
    c = 0.5 * (lo + hi)
    s = 0.5 * (hi - lo)
    beta_out = beta * s * s
    beta_out[0] = beta[0]
    return c + s * alpha, beta_out


def orthonormal_eval(x, alpha: np.ndarray, beta: np.ndarray, degree: int) -> np.ndarray:
    """Evaluate the orthonormal polynomials of degree 0..degree at the points x.

    Args:
        x: evaluation points, any shape (flattened internally).
        alpha, beta: monic recurrence coefficients, at least degree + 1 each.
        degree: highest polynomial degree.

    Returns:
        Array of shape (x.size, degree + 1).
    """
    xv = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if len(alpha) < degree + 1 or len(beta) < degree + 1:
        raise ValueError("recurrence arrays too short for requested degree")
    out = np.empty((xv.size, degree + 1))
    out[:, 0] = 1.0 / np.sqrt(beta[0])
    if degree >= 1:
        out[:, 1] = (xv - alpha[0]) * out[:, 0] / np.sqrt(beta[1])
    for k in range(1, degree):
        out[:, k + 1] = (
            (xv - alpha[k]) * out[:, k] - np.sqrt(beta[k]) * out[:, k - 1]
        ) / np.sqrt(beta[k + 1])
    return out


def gauss_rule(dist: Distribution, n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss rule for dist; weights sum to one."""
    if n < 1:
        raise ValueError("need at least one quadrature node")
    alpha, beta = dist.recurrence(n)
    if n == 1:
        return np.array([alpha[0]]), np.array([1.0])
    nodes, vecs = eigh_tridiagonal(alpha, np.sqrt(beta[1:]))
    weights = beta[0] * vecs[0, :] ** 2
    return nodes, weights


def tensor_rule(
    rules: Sequence[tuple[np.ndarray, np.ndarray]],
) -> tuple[np.ndarray, np.ndarray]:
    """Tensor product of 1D rules: nodes (N, d) and weights (N,), C order."""
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.ones(1)
    for _, w in rules:
        weights = np.multiply.outer(weights, w).ravel()
    return nodes, weights


def multi_indices(dim: int, degree: int) -> np.ndarray:
    """Full-tensor multi-index set {0..degree}^dim, lexicographic, shape (K, dim)."""
    if dim < 1 or degree < 0:
        raise ValueError(f"invalid basis shape dim={dim}, degree={degree}")
    return np.array(list(np.ndindex(*([degree + 1] * dim))), dtype=np.intp)


class TensorBasis:
    """Orthonormal product basis Psi_k(z) = prod_j psi_{k_j}(z_j).

    The index set is the full tensor grid {0..degree}^dim in lexicographic
    order, so K = (degree + 1)^dim terms.  Intended for a handful of uncertain
    parameters; the term count grows geometrically with dim.
    """

    def __init__(self, dists: Sequence[Distribution], degree: int):
        if degree < 0:
            raise ValueError(f"degree must be nonnegative, got {degree}")
        if len(dists) == 0:
            raise ValueError("need at least one distribution")
        self.dists: tuple[Distribution, ...] = tuple(dists)
        self.degree = int(degree)
        self.indices = multi_indices(len(self.dists), self.degree)
        self._rec = tuple(d.recurrence(self.degree + 1) for d in self.dists)

    @property
    def dim(self) -> int:
        return len(self.dists)

    @property
    def n_terms(self) -> int:
        return self.indices.shape[0]

    def _points(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None] if self.dim == 1 else Z[None, :]
        if Z.ndim != 2 or Z.shape[1] != self.dim:
            raise ValueError(f"expected points of shape (n, {self.dim}), got {Z.shape}")
        return Z

    def eval(self, Z) -> np.ndarray:
        """Basis values at points Z of shape (n, dim), returned as (n, K)."""
        Z = self._points(Z)
        tables = [
            orthonormal_eval(Z[:, j], *self._rec[j], self.degree)
            for j in range(self.dim)
        ]
        out = tables[0][:, self.indices[:, 0]]
        for j in range(1, self.dim):
            out = out * tables[j][:, self.indices[:, j]]
        return out

    def quadrature(self, n_per_dim: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Tensor Gauss rule, default degree + 1 points per dimension."""
        n = self.degree + 1 if n_per_dim is None else n_per_dim
        return tensor_rule([gauss_rule(d, n) for d in self.dists])


def build_basis(dists, degree: int) -> TensorBasis:
    """Orthonormal chaos basis for one distribution or a sequence of them."""
    if isinstance(dists, (Uniform, BetaOn)):
        dists = (dists,)
    return TensorBasis(dists, degree)


def project_values(values, psi_table: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Chaos coefficients of node values: f_k = sum_q w_q f(z_q) Psi_k(z_q).

    values may carry trailing axes (for example per grid cell); the node axis
    must come first.  Returns an array with leading axis K.
    """
    return np.einsum("qk,q,q...->k...", psi_table, weights, np.asarray(values, dtype=float))


def project(fn, basis: TensorBasis, rule: tuple[np.ndarray, np.ndarray] | None = None):
    """Chaos coefficients of a function of z, f_k = int f Psi_k rho dz.

    fn is called once with the rule's nodes, shape (Q, dim), and must return
    values with leading axis Q (trailing axes pass through).  The default rule
    is the basis's own tensor Gauss quadrature, exact for fn in the span; pass
    a finer (nodes, weights) pair for functions well outside it.
    """
    if rule is None:
        rule = basis.quadrature()
    nodes, weights = rule
    psi = basis.eval(nodes)
    values = np.asarray(fn(nodes), dtype=float)
    if values.shape[0] != psi.shape[0]:
        raise ValueError(
            f"fn returned leading axis {values.shape[0]}, expected one value "
            f"per quadrature node ({psi.shape[0]})")
    return project_values(values, psi, weights)


@dataclass(frozen=True)
class RandomVector:
    """Named independent uncertain parameters with their distributions."""

    names: tuple[str, ...]
    dists: tuple[Distribution, ...]

    def __post_init__(self) -> None:
        if len(self.names) != len(self.dists):
            raise ValueError("names and dists must have the same length")
        if len(self.names) == 0:
            raise ValueError("need at least one uncertain parameter")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate parameter names in {self.names}")

    @property
    def dim(self) -> int:
        return len(self.names)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n independent draws, shape (n, dim)."""
        return np.column_stack([d.sample(rng, n) for d in self.dists])

    def basis(self, degree: int) -> TensorBasis:
        return TensorBasis(self.dists, degree)
