"""Computable strictly positive symmetric operators with finite deficiency.

A model bundles a grid, the lower bound ``epsilon``, the deficiency index
``r``, the action of the maximal operator ``S*``, the Dirichlet-type
(Friedrichs) resolvent and the deficiency functions ``ker(S* - z)``.

Boundary data of a grid function ``u`` is the vector ``b(u)`` of length
``2r``: first the ``r`` Dirichlet traces, then the ``r`` Neumann traces
(plain derivatives, not outward normals). Every self-adjoint extension used
here is described by an ``r x 2r`` matrix ``A`` through ``A b(u) = 0``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import SpectrumError
from .numlin import (
    GridSpace,
    KernelOperator,
    SubspaceBasis,
    make_grid_space,
    nystrom,
    op_norm_matrix,
    orthonormalize,
    sum_spaces,
)

__all__ = [
    "ModelOperator",
    "IntervalLaplacian",
    "HalfLineSchroedinger",
    "DirectSumModel",
    "ConjugatedModel",
    "ShiftedModel",
    "interval_laplacian",
    "halfline_schroedinger",
    "direct_sum",
    "unitary_conjugate",
    "shifted",
    "apply_adjoint",
    "reflection_operator",
    "friedrichs_bc",
]

# one-sided sixth-order first derivative on 7 points
_D1 = np.array([-49 / 20, 6.0, -15 / 2, 20 / 3, -15 / 4, 6 / 5, -1 / 6])
# centered fourth-order second derivative
_D2 = np.array([-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12])

_CACHE_SIZE = 8


def boundary_matrix_condition(bc, T, Mz) -> float:
    """Condition of ``Mz = bc @ T`` measured against ``||bc|| ||T||``.

    A plain condition number misses the case ``Mz ~ 0`` (every deficiency
    function satisfies the conditions), so the smallest singular value is
    compared with the natural scale of the product.
    """
    s = np.linalg.svd(Mz, compute_uv=False)
    scale = np.linalg.norm(bc, 2) * np.linalg.norm(T, 2)
    if not np.all(np.isfinite(s)) or s[-1] == 0:
        return np.inf
    return float(max(s[0], scale) / s[-1])


def _key(z) -> tuple[float, float]:
    z = complex(z)
    return (z.real, z.imag)


def _scalar_type(z):
    return float if complex(z).imag == 0 else complex


def _one_minus_exp(t):
    """``1 - exp(-t)`` without cancellation."""
    return -np.expm1(-t)


class ModelOperator:
    """Base class for model operators.

    Subclasses implement ``_green``, ``_neumann_rows``, ``_deficiency``,
    ``_adjoint_stencil``, ``boundary_data`` and ``domain_sampler``.

    Attributes
    ----------
    space : GridSpace
    epsilon : float
        Lower bound ``S >= epsilon``.
    r : int
        Deficiency index.
    name : str
    """

    space: GridSpace
    epsilon: float
    r: int
    name: str = "model"

    def __init__(self):
        self._green_cache: dict = {}
        self._dirichlet_eigen = None
        self._n0 = None

    # -- quantities provided by subclasses -------------------------------
    def _green(self, z) -> KernelOperator:
        raise NotImplementedError

    def _neumann_rows(self, z) -> np.ndarray:
        raise NotImplementedError

    def _deficiency(self, z) -> np.ndarray:
        raise NotImplementedError

    def _adjoint_stencil(self, u) -> np.ndarray:
        raise NotImplementedError

    def boundary_data(self, U) -> np.ndarray:
        """Boundary data ``[Dirichlet; Neumann]`` of one function or of the
        columns of ``U``; shape ``(2r,)`` or ``(2r, k)``."""
        raise NotImplementedError

    def domain_sampler(self, rng: np.random.Generator, count: int, **kw):
        """Random elements ``v`` of the minimal domain together with ``S v``.

        Returns
        -------
        V, SV : ndarray, shape (n, count)
        """
        raise NotImplementedError

    @property
    def interior_mask(self) -> np.ndarray:
        raise NotImplementedError

    # -- shared machinery ------------------------------------------------
    @property
    def is_real(self) -> bool:
        return True

    def friedrichs_green(self, z=0.0) -> KernelOperator:
        """Friedrichs resolvent ``(S_F - z)^-1`` as a Nystrom operator."""
        if complex(z).imag == 0 and complex(z).real >= self.epsilon * (1 - 1e-12):
            self._check_friedrichs_point(z)
        k = _key(z)
        if k not in self._green_cache:
            if len(self._green_cache) >= _CACHE_SIZE:
                self._green_cache.pop(next(iter(self._green_cache)))
            self._green_cache[k] = self._green(z)
        return self._green_cache[k]

    def _check_friedrichs_point(self, z):
        pass

    def friedrichs_neumann(self, z=0.0) -> np.ndarray:
        """Rows ``F`` with ``Neumann(R_F(z) f) = F @ f``; shape ``(r, n)``."""
        return self._neumann_rows(z)

    def deficiency_functions(self, z) -> np.ndarray:
        """Basis of ``ker(S* - z)`` with Dirichlet data equal to the identity."""
        return self._deficiency(z)

    def deficiency_basis_at(self, z) -> SubspaceBasis:
        """Orthonormal basis of ``ker(S* - z)``."""
        return orthonormalize(self.deficiency_functions(z), self.space)

    @property
    def kernel_basis_N0(self) -> SubspaceBasis:
        """Orthonormal basis of ``ker(S*)``."""
        if self._n0 is None:
            self._n0 = self.deficiency_basis_at(0.0)
        return self._n0

    def adjoint_action(self, u) -> np.ndarray:
        """``S* u`` on interior nodes; zero on the boundary layer."""
        u = self.space.check(u)
        out = self._adjoint_stencil(u)
        out[~self.interior_mask] = 0
        return out

    def residual(self, u, z=0.0, f=None) -> float:
        """Interior norm of ``(S* - z)u - f``."""
        u = np.asarray(u)
        res = self.adjoint_action(u) - z * u
        if f is not None:
            res = res - f
        m = self.interior_mask
        return float(np.sqrt(np.sum(self.space.weights[m] * np.abs(res[m]) ** 2)))

    def bvp_parts(self, bc, z) -> tuple[np.ndarray, np.ndarray]:
        """Finite-rank correction of the Friedrichs resolvent for the
        boundary conditions ``bc``.

        Returns ``(Phi, C)`` with ``(S_bc - z)^-1 = R_F(z) + Phi @ C``.
        """
        bc = np.asarray(bc)
        r = self.r
        Phi = self.deficiency_functions(z)
        Mz = bc @ self.boundary_data(Phi)
        rhs = bc[:, r:] @ self.friedrichs_neumann(z)
        if not np.any(rhs):
            return Phi, np.zeros((r, self.space.n), dtype=np.result_type(Phi, bc))
        cond = boundary_matrix_condition(bc, self.boundary_data(Phi), Mz)
        if cond > 1e12:
            raise SpectrumError(f"z = {complex(z)} is an eigenvalue of the boundary problem "
                                f"(condition number {cond:.2e})")
        return Phi, -np.linalg.solve(Mz, rhs)

    def extension_bvp_solver(self, bc, z, f) -> np.ndarray:
        """Solve ``(S* - z)u = f`` with ``bc @ b(u) = 0``."""
        Phi, C = self.bvp_parts(bc, z)
        f = self.space.check(f)
        return self.friedrichs_green(z) @ f + Phi @ (C @ f)

    def dirichlet_eigen(self):
        """Eigenpairs of ``S_F`` from its inverse, ascending eigenvalues.

        Returns ``(lam, E)`` with weighted-orthonormal eigenvectors ``E``.
        """
        if self._dirichlet_eigen is None:
            from .numlin import hermitian_eig
            nu, E = hermitian_eig(self.friedrichs_green(0.0))
            order = np.argsort(-nu)
            nu, E = nu[order], E[:, order]
            lam = np.full(nu.shape, np.inf)
            pos = nu > 1e-14 * nu[0]
            lam[pos] = 1.0 / nu[pos]
            self._dirichlet_eigen = (lam, E)
        return self._dirichlet_eigen

    def describe(self) -> dict:
        return {"model": self.name, "n": self.space.n, "epsilon": self.epsilon, "r": self.r}


# --------------------------------------------------------------------------
# interval (0, 1), S = -d^2/dx^2 on H^2_0
# --------------------------------------------------------------------------

def _dirichlet_unit_interval(z, x):
    """``phi_0, phi_1`` solving ``-u'' = z u`` with ``phi_j(x_k) = delta_jk``."""
    z = complex(z)
    if z == 0:
        return np.column_stack([1.0 - x, x])
    k = np.sqrt(-z)
    if k.real < 0:
        k = -k
    if z.imag == 0 and z.real < 0:
        k = k.real
    den = _one_minus_exp(2 * k)
    phi0 = np.exp(-k * x) * _one_minus_exp(2 * k * (1 - x)) / den
    phi1 = np.exp(-k * (1 - x)) * _one_minus_exp(2 * k * x) / den
    return np.column_stack([phi0, phi1])


def _interval_green_values(z, x):
    z = complex(z)
    lo = np.minimum.outer(x, x)
    hi = np.maximum.outer(x, x)
    if z == 0:
        return lo * (1 - hi)
    k = np.sqrt(-z)
    if k.real < 0:
        k = -k
    if z.imag == 0 and z.real < 0:
        k = k.real
    return (np.exp(-k * (hi - lo)) * _one_minus_exp(2 * k * lo) * _one_minus_exp(2 * k * (1 - hi))
            / (2 * k * _one_minus_exp(2 * k)))


def _uniform_derivative_data(U, h, left=True, right=True):
    U = np.asarray(U)
    rows = []
    if left:
        rows.append(np.tensordot(_D1, U[:7], axes=(0, 0)) / h)
    if right:
        rows.append(-np.tensordot(_D1, U[::-1][:7], axes=(0, 0)) / h)
    return rows


def _stencil_second(u, h):
    out = np.zeros_like(u, dtype=np.result_type(u, float))
    out[2:-2] = (_D2[0] * u[:-4] + _D2[1] * u[1:-3] + _D2[2] * u[2:-2]
                 + _D2[3] * u[3:-1] + _D2[4] * u[4:]) / h ** 2
    return out


def _layer_mask(n, rule):
    layer = 4 if rule == "gregory" else 2
    m = np.ones(n, dtype=bool)
    m[:layer] = False
    m[-layer:] = False
    return m


def _flat(t):
    """``exp(-1/t)`` for ``t > 0`` and its first two derivatives."""
    pos = t > 0
    tt = np.where(pos, t, 1.0)
    e = np.where(pos, np.exp(-1.0 / tt), 0.0)
    return e, e / tt ** 2, e * (1.0 / tt ** 4 - 2.0 / tt ** 3)


def _ramp(t):
    """Infinitely flat step from 0 at ``t <= 0`` to 1 at ``t >= 1``, with
    two derivatives."""
    t = np.clip(t, 0.0, 1.0)
    a, da, d2a = _flat(t)
    b, db, d2b = _flat(1.0 - t)
    db, d2b = -db, d2b
    D = a + b
    N = da * b - a * db
    return a / D, N / D ** 2, (d2a * b - a * d2b) / D ** 2 - 2 * N * (da + db) / D ** 3


class IntervalLaplacian(ModelOperator):
    """``S = -d^2/dx^2`` with domain ``H^2_0(0, 1)``.

    ``epsilon = pi^2``, ``r = 2``; the Friedrichs extension carries Dirichlet
    conditions and ``ker(S*) = span{1, x}``.
    """

    name = "interval"

    def __init__(self, n: int, rule: str = "gregory", allow_coarse: bool = False):
        super().__init__()
        if n < 64 and not allow_coarse:
            raise ValueError(f"interval model needs n >= 64, got {n}")
        self.space = make_grid_space((0.0, 1.0), n, rule)
        self.epsilon = float(np.pi ** 2)
        self.r = 2
        self._mask = _layer_mask(n, rule)

    @property
    def interior_mask(self):
        return self._mask

    def _check_friedrichs_point(self, z):
        m = np.sqrt(complex(z).real) / np.pi
        if abs(m - round(m)) < 1e-9:
            raise SpectrumError(f"z = {z} is a Dirichlet eigenvalue")

    def _green(self, z):
        x = self.space.nodes
        return nystrom(_interval_green_values(z, x), self.space,
                       hermitian=complex(z).imag == 0)

    def _neumann_rows(self, z):
        phi = _dirichlet_unit_interval(z, self.space.nodes)
        return np.vstack([phi[:, 0], -phi[:, 1]]) * self.space.weights[None, :]

    def _deficiency(self, z):
        return _dirichlet_unit_interval(z, self.space.nodes)

    def _adjoint_stencil(self, u):
        return -_stencil_second(u, self.space.spacing)

    def boundary_data(self, U):
        U = self.space.check(U)
        d = [U[0], U[-1]]
        return np.array(d + _uniform_derivative_data(U, self.space.spacing))

    def domain_sampler(self, rng, count, width=(0.025, 0.5), modes=3):
        """Flat ramp envelopes of random width times random low-order
        trigonometric polynomials ``c_0 + sum_m c_m sin(m pi x)``.

        One coefficient is boosted per sample so that single modes are well
        represented among the trials.

        Parameters
        ----------
        width : (float, float)
            Range of ramp widths, sampled log-uniformly. Below about 0.025 the
            ramps are under-resolved at ``n = 2048``.
        modes : int
            Number of sine modes in the multiplier.
        """
        x = self.space.nodes
        V = np.empty((x.size, count))
        SV = np.empty((x.size, count))
        lo, hi = np.log(width[0]), np.log(width[1])
        m = np.arange(1, modes + 1)[:, None] * np.pi
        sines, cosines = np.sin(m * x), np.cos(m * x)
        for j in range(count):
            d = float(np.exp(rng.uniform(lo, hi)))
            c = 0.15 * rng.standard_normal(modes + 1) / np.arange(1, modes + 2)
            c[rng.integers(0, modes + 1)] += 1.0
            p = c[0] + c[1:] @ sines
            dp = (c[1:] * m[:, 0]) @ cosines
            d2p = -(c[1:] * m[:, 0] ** 2) @ sines
            s1, ds1, d2s1 = _ramp(x / d)
            s2, ds2, d2s2 = _ramp((1 - x) / d)
            env = s1 * s2
            denv = (ds1 * s2 - s1 * ds2) / d
            d2env = (d2s1 * s2 - 2 * ds1 * ds2 + s1 * d2s2) / d ** 2
            V[:, j] = env * p
            SV[:, j] = -(d2env * p + 2 * denv * dp + env * d2p)
        return V, SV


def interval_laplacian(n: int, rule: str = "gregory", allow_coarse: bool = False) -> IntervalLaplacian:
    """Minimal Laplacian on ``(0, 1)`` discretized on ``n`` nodes."""
    return IntervalLaplacian(n, rule, allow_coarse)


# --------------------------------------------------------------------------
# half-line (0, inf) truncated at L, S = -d^2/dx^2 + 1 on H^2_0
# --------------------------------------------------------------------------

def _kappa(z):
    k = np.sqrt(1 - complex(z))
    if k.real < 0:
        k = -k
    if complex(z).imag == 0 and complex(z).real < 1:
        k = k.real
    return k


class HalfLineSchroedinger(ModelOperator):
    """``S = -d^2/dx^2 + 1`` with domain ``H^2_0(0, inf)``, truncated at ``L``.

    ``epsilon = 1``, ``r = 1`` and ``ker(S*) = span{exp(-x)}``. The Nystrom
    Friedrichs resolvent carries the diagonal kink correction.
    """

    name = "halfline"

    def __init__(self, n: int, L: float = 30.0, rule: str = "gregory", allow_coarse: bool = False):
        super().__init__()
        if n < 512 and not allow_coarse:
            raise ValueError(f"half-line model needs n >= 512, got {n}")
        if L < 20 or np.exp(-L) > 1e-8:
            raise ValueError(f"truncation L = {L} too short: exp(-L) = {np.exp(-L):.1e} "
                             "exceeds the decay tolerance 1e-8 (need L >= 20)")
        self.L = float(L)
        self.space = make_grid_space(self.L, n, rule)
        self.epsilon = 1.0
        self.r = 1
        self._mask = _layer_mask(n, rule)

    @property
    def interior_mask(self):
        return self._mask

    def _check_friedrichs_point(self, z):
        raise SpectrumError(f"z = {z} lies in the continuous spectrum [1, inf)")

    def _green(self, z):
        x = self.space.nodes
        k = _kappa(z)
        lo = np.minimum.outer(x, x)
        hi = np.maximum.outer(x, x)
        vals = np.exp(-k * (hi - lo)) * _one_minus_exp(2 * k * lo) / (2 * k)
        return nystrom(vals, self.space, kink_jump=-1.0, hermitian=complex(z).imag == 0)

    def _neumann_rows(self, z):
        return (np.exp(-_kappa(z) * self.space.nodes) * self.space.weights)[None, :]

    def _deficiency(self, z):
        return np.exp(-_kappa(z) * self.space.nodes)[:, None]

    def _adjoint_stencil(self, u):
        return -_stencil_second(u, self.space.spacing) + np.where(self.interior_mask, u, 0)

    def boundary_data(self, U):
        U = self.space.check(U)
        return np.array([U[0]] + _uniform_derivative_data(U, self.space.spacing, right=False))

    def domain_sampler(self, rng, count, rate=(1.5, 3.0), degree=2):
        """``x^2 exp(-a x) p(x)`` with random rate ``a`` and polynomial ``p``."""
        x = self.space.nodes
        V = np.empty((x.size, count))
        SV = np.empty((x.size, count))
        for j in range(count):
            a = rng.uniform(*rate)
            c = rng.standard_normal(degree + 1) / np.arange(1, degree + 2)
            q = np.polynomial.Polynomial([0, 0, 1]) * np.polynomial.Polynomial(c)
            e = np.exp(-a * x)
            V[:, j] = q(x) * e
            d2 = (q.deriv(2)(x) - 2 * a * q.deriv(1)(x) + a * a * q(x)) * e
            SV[:, j] = -d2 + V[:, j]
        return V, SV


def halfline_schroedinger(n: int, L: float = 30.0, rule: str = "gregory",
                          allow_coarse: bool = False) -> HalfLineSchroedinger:
    """Minimal ``-d^2/dx^2 + 1`` on the half-line, truncated at ``L``."""
    return HalfLineSchroedinger(n, L, rule, allow_coarse)


# --------------------------------------------------------------------------
# composite models
# --------------------------------------------------------------------------

def _block_diag_ops(ops: Sequence[KernelOperator], space: GridSpace) -> KernelOperator:
    return KernelOperator(sla.block_diag(*[o.matrix for o in ops]), space,
                          all(o.hermitian for o in ops))


class DirectSumModel(ModelOperator):
    """Orthogonal direct sum of models acting blockwise.

    Boundary data orders all Dirichlet traces first (parts in order), then
    all Neumann traces.
    """

    name = "dsum"

    def __init__(self, parts: Sequence[ModelOperator]):
        super().__init__()
        parts = tuple(parts)
        if len(parts) < 2:
            raise ValueError("direct sum needs at least two parts")
        self.parts = parts
        self.space = sum_spaces([p.space for p in parts])
        self.epsilon = min(p.epsilon for p in parts)
        self.r = sum(p.r for p in parts)
        self._slices = self.space.block_slices

    @property
    def is_real(self):
        return all(p.is_real for p in self.parts)

    @property
    def interior_mask(self):
        return np.concatenate([p.interior_mask for p in self.parts])

    def _green(self, z):
        return _block_diag_ops([p.friedrichs_green(z) for p in self.parts], self.space)

    def _neumann_rows(self, z):
        return sla.block_diag(*[p.friedrichs_neumann(z) for p in self.parts])

    def _deficiency(self, z):
        return sla.block_diag(*[p.deficiency_functions(z) for p in self.parts])

    def _adjoint_stencil(self, u):
        return np.concatenate([p._adjoint_stencil(u[s]) for p, s in zip(self.parts, self._slices)])

    def boundary_data(self, U):
        U = self.space.check(U)
        data = [p.boundary_data(U[s]) for p, s in zip(self.parts, self._slices)]
        dir_rows = [d[: p.r] for p, d in zip(self.parts, data)]
        neu_rows = [d[p.r:] for p, d in zip(self.parts, data)]
        return np.concatenate(dir_rows + neu_rows, axis=0)

    def domain_sampler(self, rng, count, **kw):
        Vs, SVs = zip(*[p.domain_sampler(rng, count, **kw) for p in self.parts])
        return np.concatenate(Vs, axis=0), np.concatenate(SVs, axis=0)

    def describe(self):
        d = super().describe()
        d["parts"] = [p.describe() for p in self.parts]
        return d


def direct_sum(parts: Sequence[ModelOperator]) -> DirectSumModel:
    """Direct sum of at least two models."""
    if not parts:
        raise ValueError("direct sum of an empty list")
    return DirectSumModel(parts)


class ConjugatedModel(ModelOperator):
    """The model ``U S U^-1`` for a unitary ``U`` on the same grid."""

    def __init__(self, base: ModelOperator, U: KernelOperator):
        super().__init__()
        if U.space.n != base.space.n:
            raise ValueError("unitary acts on a different space")
        A = U.sym()
        defect = op_norm_matrix(np.conj(A).T @ A - np.eye(A.shape[0]))
        if defect > 1e-10:
            raise ValueError(f"operator is not unitary (defect {defect:.2e})")
        self.base = base
        self.U = U.matrix
        self.Uinv = U.adjoint().matrix
        self.space = base.space
        self.epsilon = base.epsilon
        self.r = base.r
        self.name = f"conj({base.name})"
        touched = np.abs(self.U) @ (~base.interior_mask).astype(float)
        self._mask = touched == 0

    @property
    def is_real(self):
        return self.base.is_real and np.isrealobj(self.U)

    @property
    def interior_mask(self):
        return self._mask

    def _green(self, z):
        G = self.base.friedrichs_green(z)
        return KernelOperator(self.U @ G.matrix @ self.Uinv, self.space, G.hermitian)

    def _neumann_rows(self, z):
        return self.base.friedrichs_neumann(z) @ self.Uinv

    def _deficiency(self, z):
        return self.U @ self.base.deficiency_functions(z)

    def _adjoint_stencil(self, u):
        return self.U @ self.base.adjoint_action(self.Uinv @ u)

    def boundary_data(self, U):
        return self.base.boundary_data(self.Uinv @ self.space.check(U))

    def domain_sampler(self, rng, count, **kw):
        V, SV = self.base.domain_sampler(rng, count, **kw)
        return self.U @ V, self.U @ SV


def unitary_conjugate(model: ModelOperator, U: KernelOperator) -> ConjugatedModel:
    """Conjugate every ingredient of ``model`` by the unitary ``U``."""
    return ConjugatedModel(model, U)


class ShiftedModel(ModelOperator):
    """The model ``S + c`` for a constant ``c >= 0``."""

    def __init__(self, base: ModelOperator, c: float):
        super().__init__()
        if c < 0:
            raise ValueError("shift must be nonnegative")
        self.base = base
        self.c = float(c)
        self.space = base.space
        self.epsilon = base.epsilon + self.c
        self.r = base.r
        self.name = f"{base.name}+{self.c:g}"

    @property
    def interior_mask(self):
        return self.base.interior_mask

    def _green(self, z):
        return self.base.friedrichs_green(z - self.c)

    def _neumann_rows(self, z):
        return self.base.friedrichs_neumann(z - self.c)

    def _deficiency(self, z):
        return self.base.deficiency_functions(z - self.c)

    def _adjoint_stencil(self, u):
        return self.base.adjoint_action(u) + self.c * u

    def boundary_data(self, U):
        return self.base.boundary_data(U)

    def domain_sampler(self, rng, count, **kw):
        V, SV = self.base.domain_sampler(rng, count, **kw)
        return V, SV + self.c * V


def shifted(model: ModelOperator, c: float) -> ShiftedModel:
    return ShiftedModel(model, c)


def apply_adjoint(model: ModelOperator, u) -> np.ndarray:
    """``S* u`` on interior nodes; boundary-layer nodes are set to zero and
    reported through ``model.interior_mask``."""
    return model.adjoint_action(u)


def reflection_operator(space: GridSpace) -> KernelOperator:
    """``(Ru)(x) = u(a + b - x)`` on a symmetric uniform interval grid."""
    n = space.n
    return KernelOperator(np.eye(n)[::-1], space, True)


def friedrichs_bc(r: int) -> np.ndarray:
    """Dirichlet conditions ``[I, 0]``."""
    return np.hstack([np.eye(r), np.zeros((r, r))])
