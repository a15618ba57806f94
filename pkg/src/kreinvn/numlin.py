"""Quadrature-weighted Hilbert-space arithmetic on grids.

Functions on a grid are plain one-dimensional numpy arrays of node values.
Operators are dense matrices acting on node values; the inner product is
``<u, v> = sum_k w_k conj(u_k) v_k`` with positive quadrature weights ``w``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackError, svds

from .errors import RankDeficiencyError, SpaceMismatchError

__all__ = [
    "GridSpace",
    "SubspaceBasis",
    "KernelOperator",
    "make_grid_space",
    "sum_spaces",
    "inner",
    "norm",
    "gram",
    "orthonormalize",
    "project",
    "hermitian_eig",
    "hermitian_eigvals",
    "singular_values",
    "schatten_norm",
    "op_norm",
    "nystrom",
    "identity_operator",
]

RULES = ("trapezoid", "simpson", "gregory")
_MIN_NODES = {"trapezoid": 2, "simpson": 3, "gregory": 6}
_GREGORY_END = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0])


@dataclass(frozen=True, eq=False)
class GridSpace:
    """A discretized L2 space on an interval, a truncated half-line, or a
    direct sum of such spaces.

    Attributes
    ----------
    nodes : ndarray
        Abscissae, strictly increasing within each block.
    weights : ndarray
        Positive quadrature weights, one per node.
    domain_tag : tuple
        ``("interval", a, b)``, ``("halfline", L)`` or ``("sum", tag, ...)``.
    rule : str
        Quadrature rule used to build the weights.
    blocks : tuple of GridSpace
        Component spaces of a direct sum; empty for a simple space.
    """

    nodes: np.ndarray
    weights: np.ndarray
    domain_tag: tuple
    rule: str = "trapezoid"
    blocks: tuple = field(default=())

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise ValueError("nodes and weights must be 1-D arrays of equal length")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if not self.blocks and np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def length(self) -> float:
        """Measure of the underlying domain."""
        kind = self.domain_tag[0]
        if kind == "interval":
            return float(self.domain_tag[2] - self.domain_tag[1])
        if kind == "halfline":
            return float(self.domain_tag[1])
        return float(sum(b.length for b in self.blocks))

    @property
    def spacing(self) -> float:
        """Uniform node spacing (largest over blocks for a direct sum)."""
        if self.blocks:
            return max(b.spacing for b in self.blocks)
        return float(self.nodes[1] - self.nodes[0])

    @property
    def block_slices(self) -> list[slice]:
        if not self.blocks:
            return [slice(0, self.n)]
        out, start = [], 0
        for b in self.blocks:
            out.append(slice(start, start + b.n))
            start += b.n
        return out

    def check(self, u: np.ndarray) -> np.ndarray:
        """Return ``u`` as an array after checking that it lives on this grid."""
        u = np.asarray(u)
        if u.shape[0] != self.n:
            raise SpaceMismatchError(
                f"grid function has {u.shape[0]} values, space has {self.n} nodes"
            )
        return u


def _rule_weights(n: int, h: float, rule: str) -> np.ndarray:
    if rule == "trapezoid":
        w = np.full(n, h)
        w[[0, -1]] = h / 2
    elif rule == "simpson":
        if n % 2 == 0:
            raise ValueError("Simpson's rule needs an odd node count")
        w = np.full(n, 2.0 * h / 3.0)
        w[1::2] = 4.0 * h / 3.0
        w[[0, -1]] = h / 3.0
    elif rule == "gregory":
        w = np.full(n, h)
        w[:3] = h * _GREGORY_END
        w[-3:] = h * _GREGORY_END[::-1]
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}; expected one of {RULES}")
    return w


def make_grid_space(domain, n: int, rule: str = "trapezoid") -> GridSpace:
    """Build a uniform grid with quadrature weights.

    Parameters
    ----------
    domain : pair of float or float
        Interval endpoints ``(a, b)``, or a truncation length ``L`` for the
        half-line ``(0, inf)`` cut at ``L``.
    n : int
        Number of nodes, endpoints included.
    rule : {"trapezoid", "simpson", "gregory"}
        ``"gregory"`` is the trapezoid rule with third-order end corrections;
        it is exact for cubics.

    Returns
    -------
    GridSpace

    Examples
    --------
    >>> make_grid_space((0.0, 1.0), 4).weights * 6
    array([1., 2., 2., 1.])
    """
    if rule not in RULES:
        raise ValueError(f"unknown quadrature rule {rule!r}; expected one of {RULES}")
    if np.ndim(domain) == 0:
        a, b = 0.0, float(domain)
        tag = ("halfline", b)
    else:
        a, b = (float(t) for t in domain)
        tag = ("interval", a, b)
    if not b > a:
        raise ValueError(f"domain length must be positive, got ({a}, {b})")
    n = int(n)
    if n < _MIN_NODES[rule]:
        raise ValueError(f"rule {rule!r} needs at least {_MIN_NODES[rule]} nodes, got {n}")
    nodes = np.linspace(a, b, n)
    h = (b - a) / (n - 1)
    return GridSpace(nodes, _rule_weights(n, h, rule), tag, rule)


def sum_spaces(spaces: Sequence[GridSpace]) -> GridSpace:
    """Orthogonal direct sum of grid spaces; node values are concatenated."""
    spaces = tuple(spaces)
    if len(spaces) < 2:
        raise ValueError("a direct sum needs at least two spaces")
    return GridSpace(
        np.concatenate([s.nodes for s in spaces]),
        np.concatenate([s.weights for s in spaces]),
        ("sum",) + tuple(s.domain_tag for s in spaces),
        spaces[0].rule,
        spaces,
    )


def inner(u, v, space: GridSpace) -> complex:
    """Weighted inner product, conjugate-linear in ``u``."""
    u, v = space.check(u), space.check(v)
    return complex(np.sum(space.weights * np.conj(u) * v))


def norm(u, space: GridSpace) -> float:
    u = space.check(u)
    return float(np.sqrt(np.sum(space.weights * np.abs(u) ** 2)))


def gram(U, V, space: GridSpace) -> np.ndarray:
    """Matrix of inner products ``<U[:, a], V[:, b]>``."""
    U, V = space.check(U), space.check(V)
    return np.conj(U).T @ (space.weights[:, None] * V)


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Weighted-orthonormal basis of a finite-dimensional subspace.

    Attributes
    ----------
    columns : ndarray, shape (n, k)
    space : GridSpace
    gram_tolerance : float
        Maximal allowed ``||Gram - I||``.
    """

    columns: np.ndarray
    space: GridSpace
    gram_tolerance: float = 1e-10

    def __post_init__(self):
        cols = np.atleast_2d(np.asarray(self.columns).T).T
        self.space.check(cols)
        object.__setattr__(self, "columns", cols)
        defect = np.linalg.norm(gram(cols, cols, self.space) - np.eye(cols.shape[1]), 2)
        if defect > self.gram_tolerance:
            raise ValueError(f"columns are not orthonormal (Gram defect {defect:.2e})")

    @property
    def dim(self) -> int:
        return self.columns.shape[1]

    def coords(self, u) -> np.ndarray:
        """Coefficients ``<q_a, u>`` of ``u`` (vector or column block)."""
        u = self.space.check(u)
        return np.conj(self.columns).T @ (self.space.weights[..., None] * u
                                          if u.ndim == 2 else self.space.weights * u)

    def expand(self, c) -> np.ndarray:
        return self.columns @ np.asarray(c)

    def projector(self) -> "KernelOperator":
        Q = self.columns
        return KernelOperator(Q @ (np.conj(Q).T * self.space.weights), self.space, True)


def orthonormalize(vectors, space: GridSpace, rank_tol: float = 1e-12) -> SubspaceBasis:
    """Orthonormalize grid functions with respect to the weighted inner product.

    Parameters
    ----------
    vectors : sequence of arrays or ndarray of shape (n, k)
        The functions to orthonormalize; a 2-D array is read column-wise.
    space : GridSpace
    rank_tol : float
        Relative singular-value threshold below which the set is declared
        rank deficient.

    Returns
    -------
    SubspaceBasis
        Columns spanning the same space, obtained by Gram-Schmidt (QR).

    Raises
    ------
    RankDeficiencyError
        If the vectors are numerically dependent or all zero.
    """
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        V = vectors
    else:
        V = np.column_stack([np.asarray(v) for v in vectors])
    V = space.check(V)
    sw = np.sqrt(space.weights)[:, None]
    A = sw * V
    s = sla.svdvals(A)
    if s.size == 0 or s[0] == 0.0 or s[-1] <= rank_tol * s[0]:
        raise RankDeficiencyError("vectors are rank deficient")
    Qa, R = np.linalg.qr(A)
    # fix column phases so an orthonormal input comes back unchanged
    d = np.diag(R)
    Qa = Qa * (d / np.abs(d))[None, :]
    return SubspaceBasis(Qa / sw, space)


def project(basis: SubspaceBasis, u) -> np.ndarray:
    """Orthogonal projection of ``u`` onto the span of ``basis``."""
    return basis.expand(basis.coords(u))


class KernelOperator:
    """Dense operator on grid functions.

    ``matrix @ u`` gives the node values of the image of ``u``; adjoints are
    taken with respect to the weighted inner product, ``W^-1 M^H W``.

    Parameters
    ----------
    matrix : ndarray, shape (n, n)
    space : GridSpace
    hermitian : bool
        Set by producers that know the operator is self-adjoint.
    """

    __array_priority__ = 100

    def __init__(self, matrix, space: GridSpace, hermitian: bool = False):
        # BLAS needs positive strides; reversed views fall back to a slow loop
        M = np.ascontiguousarray(matrix)
        if M.shape != (space.n, space.n):
            raise SpaceMismatchError(f"matrix shape {M.shape} does not match space of size {space.n}")
        self.matrix = M
        self.space = space
        self.hermitian = bool(hermitian)

    def __repr__(self):
        return f"KernelOperator(n={self.space.n}, hermitian={self.hermitian})"

    def adjoint(self) -> "KernelOperator":
        w = self.space.weights
        return KernelOperator(np.conj(self.matrix).T * w[None, :] / w[:, None], self.space,
                              self.hermitian)

    def sym(self) -> np.ndarray:
        """Unitarily equivalent matrix in the standard inner product,
        ``W^(1/2) M W^(-1/2)``."""
        sw = np.sqrt(self.space.weights)
        return sw[:, None] * self.matrix / sw[None, :]

    def hermitian_defect(self) -> float:
        """Relative size of ``K - K*`` in operator norm."""
        A = self.sym()
        scale = max(op_norm_matrix(A), np.finfo(float).tiny)
        return op_norm_matrix(A - np.conj(A).T) / scale

    def __call__(self, u):
        return self.matrix @ self.space.check(u)

    def _wrap(self, M, hermitian=False):
        return KernelOperator(M, self.space, hermitian)

    def __matmul__(self, other):
        if isinstance(other, KernelOperator):
            return self._wrap(self.matrix @ other.matrix)
        return self.matrix @ self.space.check(other)

    def __add__(self, other):
        if not isinstance(other, KernelOperator):
            return NotImplemented
        return self._wrap(self.matrix + other.matrix, self.hermitian and other.hermitian)

    def __sub__(self, other):
        if not isinstance(other, KernelOperator):
            return NotImplemented
        return self._wrap(self.matrix - other.matrix, self.hermitian and other.hermitian)

    def __neg__(self):
        return self._wrap(-self.matrix, self.hermitian)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return self._wrap(c * self.matrix, self.hermitian and np.imag(c) == 0)

    __rmul__ = __mul__


def identity_operator(space: GridSpace) -> KernelOperator:
    return KernelOperator(np.eye(space.n), space, True)


def nystrom(values, space: GridSpace, kink_jump: float | None = None,
            hermitian: bool = False) -> KernelOperator:
    """Nystrom discretization of an integral operator.

    Parameters
    ----------
    values : ndarray, shape (n, n)
        Kernel values ``k(x_i, x_j)``.
    space : GridSpace
    kink_jump : float, optional
        Jump of the kernel's first derivative across the diagonal. When
        given, the leading trapezoid error from the kink, ``h^2/12`` times the
        jump, is added to the diagonal at interior nodes. At an endpoint the
        kink sits on the edge of the integration range and needs no
        correction.
    hermitian : bool
        Passed to the resulting operator.
    """
    M = np.asarray(values) * space.weights[None, :]
    if kink_jump is not None:
        d = np.full(space.n, space.spacing ** 2 / 12.0 * kink_jump)
        for sl in space.block_slices:
            d[sl.start] = d[sl.stop - 1] = 0.0
        M = M + np.diag(d)
    return KernelOperator(M, space, hermitian)


def _require_hermitian(K: KernelOperator):
    if not K.hermitian:
        raise ValueError("operator is not flagged Hermitian")
    A = K.sym()
    return (A + np.conj(A).T) / 2


def hermitian_eig(K: KernelOperator) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a self-adjoint kernel operator.

    Returns
    -------
    values : ndarray
        Eigenvalues in ascending order.
    vectors : ndarray, shape (n, n)
        Eigenvectors as columns, orthonormal in the weighted inner product.
    """
    A = _require_hermitian(K)
    vals, vecs = sla.eigh(A)
    return vals, vecs / np.sqrt(K.space.weights)[:, None]


def hermitian_eigvals(K: KernelOperator) -> np.ndarray:
    """Ascending eigenvalues of a self-adjoint kernel operator."""
    return sla.eigvalsh(_require_hermitian(K))


def singular_values(K: KernelOperator) -> np.ndarray:
    """Singular values in the weighted inner product, descending."""
    if K.hermitian:
        return np.sort(np.abs(hermitian_eigvals(K)))[::-1]
    return sla.svdvals(K.sym())


def schatten_norm(K, p: float) -> float:
    """Schatten p-norm ``(sum s_k^p)^(1/p)``; ``p = inf`` is the operator norm.

    Singular values below ``1e-14`` times the largest are discarded, so
    quasi-norms with ``p < 1`` are not dominated by rounding noise.

    Parameters
    ----------
    K : KernelOperator or ndarray
        An ndarray is read as a list of singular values.
    p : float
    """
    if not p > 0:
        raise ValueError(f"Schatten exponent must be positive, got {p}")
    s = np.asarray(K) if isinstance(K, np.ndarray) else singular_values(K)
    s = np.sort(np.abs(s))[::-1]
    if s.size == 0 or s[0] == 0:
        return 0.0
    s = s[s >= 1e-14 * s[0]]
    if np.isinf(p):
        return float(s[0])
    # scale out the largest value and sum in a fixed order
    return float(s[0] * np.sum((s / s[0]) ** p) ** (1.0 / p))


def op_norm_matrix(A: np.ndarray) -> float:
    """Spectral norm of a plain matrix; iterative for large sizes."""
    n = A.shape[0]
    if n <= 256:
        return float(sla.svdvals(A)[0]) if A.size else 0.0
    if not np.any(A):
        return 0.0
    v0 = np.ones(min(A.shape))
    try:
        s = svds(A, k=1, v0=v0, tol=1e-10, return_singular_vectors=False)
    except ArpackError:
        # degenerate top singular value, e.g. multiples of unitaries
        return float(sla.norm(A, 2))
    return float(s[0])


def op_norm(K) -> float:
    """Operator norm in the weighted inner product."""
    if isinstance(K, KernelOperator):
        return op_norm_matrix(K.sym())
    return op_norm_matrix(np.asarray(K))
