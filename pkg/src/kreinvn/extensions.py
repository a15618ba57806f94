"""Self-adjoint extensions of a model operator.

Every extension is realized by boundary conditions ``A b(u) = 0`` and its
resolvent by the boundary value problem ``R_F(z) + Phi_z C_z``. Nonnegative
extensions come from a pair ``(B, W)``: a subspace ``W`` of ``ker(S*)`` and a
nonnegative matrix ``B`` on it, with domain

    f + R_F(0)(B w + eta) + w,   f in dom(S), w in W, eta in ker(S*) minus W.

``W = ker(S*)``, ``B = 0`` gives the Krein-von Neumann extension and
``W = {0}`` the Friedrichs extension.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import NotRelativelyPrimeError, RankDeficiencyError, SpectrumError
from .models import ModelOperator, boundary_matrix_condition, friedrichs_bc, shifted
from .numlin import (
    KernelOperator,
    SubspaceBasis,
    gram,
    hermitian_eig,
    inner,
    norm,
    op_norm,
    orthonormalize,
)

__all__ = [
    "ExtensionSpec",
    "FormValue",
    "ExtensionRealization",
    "Friedrichs",
    "Krein",
    "Param",
    "Boundary",
    "kernel_projector",
    "krein_reduced_inverse",
    "krein_bc",
    "param_bc",
    "build_extension",
    "form_value",
    "order_check",
    "krein_sup_form",
    "shift_noncommute_check",
    "relatively_prime_check",
    "decompose_domain",
    "row_space_distance",
    "spec_to_string",
    "spec_from_string",
]

_NONNEG_KINDS = ("friedrichs", "krein", "param")


@dataclass(frozen=True, eq=False)
class ExtensionSpec:
    """Description of a self-adjoint extension.

    Attributes
    ----------
    kind : {"friedrichs", "krein", "param", "boundary"}
    B : ndarray or None
        Nonnegative Hermitian matrix on ``W`` (``param`` only).
    W : SubspaceBasis, sequence of int or None
        ``param`` only. Indices select columns of the model's orthonormal
        ``ker(S*)`` basis; ``None`` means all of ``ker(S*)``.
    bc : ndarray or None
        Boundary-condition matrix (``boundary`` only).
    label : str
    """

    kind: str
    B: np.ndarray | None = None
    W: object = None
    bc: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in _NONNEG_KINDS + ("boundary",):
            raise ValueError(f"unknown extension kind {self.kind!r}")
        if self.kind == "param":
            B = np.atleast_2d(np.asarray(self.B, dtype=complex if np.iscomplexobj(self.B) else float))
            if B.size == 0:
                B = np.zeros((0, 0))
            if B.shape[0] != B.shape[1]:
                raise ValueError("B must be square")
            if B.size:
                if np.linalg.norm(B - np.conj(B).T) > 1e-10 * max(1.0, np.linalg.norm(B)):
                    raise ValueError("B is not Hermitian")
                if np.linalg.eigvalsh((B + np.conj(B).T) / 2)[0] < -1e-10 * max(1.0, np.linalg.norm(B)):
                    raise ValueError("B is not positive semidefinite")
            object.__setattr__(self, "B", B)
        if self.kind == "boundary":
            if self.bc is None:
                raise ValueError("boundary kind needs a bc matrix")
            object.__setattr__(self, "bc", np.atleast_2d(np.asarray(self.bc)))

    @property
    def nonnegative(self) -> bool:
        return self.kind in _NONNEG_KINDS

    @property
    def tag(self) -> str:
        return self.label or self.kind


def Friedrichs() -> ExtensionSpec:
    return ExtensionSpec("friedrichs", label="friedrichs")


def Krein() -> ExtensionSpec:
    return ExtensionSpec("krein", label="krein")


def Param(B, W=None, label: str = "") -> ExtensionSpec:
    """``S_{B,W}``; ``W`` is a SubspaceBasis, column indices, or ``None``."""
    if W is not None and not isinstance(W, SubspaceBasis):
        W = tuple(int(i) for i in W)
    return ExtensionSpec("param", B=np.asarray(B), W=W, label=label or "param")


def Boundary(bc, label: str = "") -> ExtensionSpec:
    return ExtensionSpec("boundary", bc=np.asarray(bc), label=label or "boundary")


@dataclass(frozen=True)
class FormValue:
    """Quadratic-form value split into its Friedrichs and ``B`` parts."""

    value: float
    friedrichs_part: float
    b_part: float


# --------------------------------------------------------------------------
# boundary conditions
# --------------------------------------------------------------------------

def _left_null_rows(T: np.ndarray, r: int) -> np.ndarray:
    """``r`` orthonormal rows spanning ``{a : a @ T = 0}``."""
    s = sla.svdvals(T) if T.size else np.zeros(0)
    rank = int(np.sum(s > 1e-10 * s[0])) if s.size and s[0] > 0 else 0
    if rank != r:
        raise RankDeficiencyError(f"trace matrix has rank {rank}, expected {r}")
    N = sla.null_space(T.T, rcond=1e-10)
    return N.T


def krein_bc(model: ModelOperator) -> np.ndarray:
    """Boundary conditions of the Krein-von Neumann extension: the boundary
    data must lie in the trace space of ``ker(S*)``."""
    return _left_null_rows(model.boundary_data(model.deficiency_functions(0.0)), model.r)


def _w_basis(model: ModelOperator, W) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal columns of ``W`` and of ``ker(S*)`` minus ``W``."""
    Q0 = model.kernel_basis_N0.columns
    if W is None:
        Wc = Q0
    elif isinstance(W, SubspaceBasis):
        Wc = W.columns
        res = max((model.residual(Wc[:, j]) / max(norm(Wc[:, j], model.space), 1e-300)
                   for j in range(Wc.shape[1])), default=0.0)
        coords = gram(Q0, Wc, model.space)
        outside = norm(np.ravel(Wc - Q0 @ coords), model.space) if Wc.size else 0.0
        if res > 1e-6 or outside > 1e-6 * max(1, Wc.shape[1]):
            raise ValueError("W_basis is not contained in ker(S*)")
    else:
        idx = list(W)
        if any(i < 0 or i >= model.r for i in idx) or len(set(idx)) != len(idx):
            raise ValueError(f"W indices {idx} invalid for deficiency index {model.r}")
        Wc = Q0[:, idx]
    if Wc.shape[1] == 0:
        return Wc, Q0
    C = gram(Q0, Wc, model.space)
    comp = sla.null_space(np.conj(C).T)
    return Wc, Q0 @ comp


def param_bc(model: ModelOperator, B, W=None) -> np.ndarray:
    """Boundary conditions of ``S_{B,W}`` from the traces of a spanning set
    of its domain modulo ``dom(S)``."""
    B = np.atleast_2d(np.asarray(B))
    Wc, E = _w_basis(model, W)
    k = Wc.shape[1]
    if B.size == 0:
        B = np.zeros((0, 0))
    if B.shape != (k, k):
        raise ValueError(f"B has shape {B.shape}, W has dimension {k}")
    r = model.r
    F0 = model.friedrichs_neumann(0.0)

    def green_traces(V):
        # R_F(0) V has zero Dirichlet data; Neumann data from the exact rows
        return np.vstack([np.zeros((r, V.shape[1])), F0 @ V])

    cols = []
    if k:
        cols.append(green_traces(Wc @ B) + model.boundary_data(Wc))
    if E.shape[1]:
        cols.append(green_traces(E))
    T = np.hstack(cols)
    return _left_null_rows(T, r)


def row_space_distance(A1, A2) -> float:
    """Operator-norm distance of the orthogonal projectors onto the row
    spaces of two bc matrices."""
    def proj(A):
        Q = sla.orth(np.conj(np.asarray(A)).T)
        return Q @ np.conj(Q).T
    return float(np.linalg.norm(proj(A1) - proj(A2), 2))


# --------------------------------------------------------------------------
# realizations
# --------------------------------------------------------------------------

class ExtensionRealization:
    """A self-adjoint extension with resolvent, transport and kernel access.

    Parameters
    ----------
    model : ModelOperator
    spec : ExtensionSpec
    bc : ndarray, shape (r, 2r)
    """

    def __init__(self, model: ModelOperator, spec: ExtensionSpec, bc: np.ndarray):
        self.model = model
        self.spec = spec
        self.bc = np.asarray(bc)
        self.space = model.space
        self._parts: dict = {}
        self._eigen = None
        self._kernel = None

    def __repr__(self):
        return f"ExtensionRealization({self.spec.tag}, model={self.model.name}, n={self.space.n})"

    @property
    def model_ref(self) -> ModelOperator:
        return self.model

    @property
    def nonnegative(self) -> bool:
        return self.spec.nonnegative

    def check_point(self, z, margin: float = 1e-6):
        """Raise ``SpectrumError`` when ``z`` is within ``margin`` (relative)
        of the computed spectrum or is ``0`` with a nontrivial kernel."""
        z = complex(z)
        if z.imag != 0:
            return
        if self.nonnegative and z.real < 0:
            return
        if z == 0 and self.kernel_dim > 0:
            raise SpectrumError(f"z = 0 is an eigenvalue of {self.spec.tag}")
        lam = self.eigen()[0]
        lam = lam[np.isfinite(lam)]
        gap = np.min(np.abs(lam - z.real)) if lam.size else np.inf
        if gap <= margin * max(1.0, abs(z)):
            raise SpectrumError(f"z = {z} is within {gap:.1e} of the spectrum of {self.spec.tag}")

    def resolvent_parts(self, z) -> tuple[np.ndarray, np.ndarray]:
        """``(Phi, C)`` with ``(S~ - z)^-1 = R_F(z) + Phi @ C``."""
        key = (complex(z).real, complex(z).imag)
        if key not in self._parts:
            if len(self._parts) >= 16:
                self._parts.pop(next(iter(self._parts)))
            self._parts[key] = self.model.bvp_parts(self.bc, z)
        return self._parts[key]

    def resolvent_at(self, z) -> KernelOperator:
        """``(S~ - z)^-1`` as a dense kernel operator."""
        Phi, C = self.resolvent_parts(z)
        G = self.model.friedrichs_green(z)
        return KernelOperator(G.matrix + Phi @ C, self.space, complex(z).imag == 0 and self.model.is_real)

    def apply_resolvent(self, z, F) -> np.ndarray:
        Phi, C = self.resolvent_parts(z)
        return self.model.friedrichs_green(z) @ F + Phi @ (C @ F)

    def transport(self, z, z0, V) -> np.ndarray:
        """``U_{z,z0} V = (S~ - z0)(S~ - z)^-1 V`` for ``V`` in ``ker(S* - z0)``.

        Uses the exact deficiency functions at ``z``: the image is the unique
        element of ``ker(S* - z)`` whose difference with ``V`` satisfies the
        boundary conditions.
        """
        V = np.asarray(V)
        vec = V.ndim == 1
        V2 = V[:, None] if vec else V
        if complex(z) == complex(z0):
            return V.copy()
        Phi = self.model.deficiency_functions(z)
        T = self.model.boundary_data(Phi)
        Mz = self.bc @ T
        cond = boundary_matrix_condition(self.bc, T, Mz)
        if cond > 1e12:
            raise SpectrumError(f"z = {complex(z)} is an eigenvalue of {self.spec.tag}")
        out = Phi @ np.linalg.solve(Mz, self.bc @ self.model.boundary_data(V2))
        return out[:, 0] if vec else out

    def eigen(self):
        """Eigenvalues (ascending, ``inf`` for modes with vanishing resolvent)
        and weighted-orthonormal eigenvectors of the discretized extension."""
        if self._eigen is None:
            last = None
            for zr in (-1.0, -2.7, -6.1, 0.37):
                try:
                    R = self.resolvent_at(zr)
                    break
                except SpectrumError as exc:
                    last = exc
            else:
                raise last
            R = KernelOperator((R.matrix + R.adjoint().matrix) / 2, self.space, True)
            nu, E = hermitian_eig(R)
            tiny = 1e-13 * np.max(np.abs(nu))
            with np.errstate(divide="ignore"):
                lam = np.where(np.abs(nu) > tiny, zr + 1.0 / np.where(nu == 0, 1, nu), np.inf)
            order = np.argsort(lam)
            self._eigen = (lam[order], E[:, order])
        return self._eigen

    @property
    def kernel_basis(self) -> SubspaceBasis | None:
        """Orthonormal basis of ``ker(S~)``, or ``None`` if it is trivial."""
        if self._kernel is None:
            Phi0 = self.model.deficiency_functions(0.0)
            T = self.model.boundary_data(Phi0)
            K = self.bc @ T
            _, s, Vh = np.linalg.svd(K)
            tol = 1e-8 * np.linalg.norm(self.bc, 2) * np.linalg.norm(T, 2)
            null = np.conj(Vh[np.sum(s > tol):]).T
            self._kernel = orthonormalize(Phi0 @ null, self.space) if null.shape[1] else False
        return self._kernel or None

    @property
    def kernel_dim(self) -> int:
        kb = self.kernel_basis
        return 0 if kb is None else kb.dim

    @property
    def kernel_projector(self) -> KernelOperator:
        kb = self.kernel_basis
        if kb is None:
            return KernelOperator(np.zeros((self.space.n, self.space.n)), self.space, True)
        return kb.projector()


def build_extension(model: ModelOperator, spec: ExtensionSpec) -> ExtensionRealization:
    """Realize ``spec`` on ``model`` through boundary conditions.

    Raises
    ------
    RankDeficiencyError
        If the resulting boundary conditions do not have rank ``r``.
    ValueError
        If ``B`` is not nonnegative or ``W`` is not inside ``ker(S*)``.
    """
    r = model.r
    if spec.kind == "friedrichs":
        bc = friedrichs_bc(r)
    elif spec.kind == "krein":
        bc = krein_bc(model)
    elif spec.kind == "param":
        bc = param_bc(model, spec.B, spec.W)
    else:
        bc = np.asarray(spec.bc)
        if bc.shape != (r, 2 * r):
            raise ValueError(f"bc matrix must have shape ({r}, {2 * r}), got {bc.shape}")
        if np.linalg.matrix_rank(bc, tol=1e-10 * max(1.0, np.abs(bc).max())) != r:
            raise RankDeficiencyError("bc matrix is rank deficient")
    return ExtensionRealization(model, spec, bc)


def kernel_projector(model: ModelOperator) -> KernelOperator:
    """Orthogonal projector onto ``ker(S*)``, the kernel of ``S_K``."""
    return model.kernel_basis_N0.projector()


def krein_reduced_inverse(model: ModelOperator) -> KernelOperator:
    """``(I - P) R_F(0) (I - P)`` with ``P`` the projector onto ``ker(S*)``.

    On the orthogonal complement of ``ker(S*)`` this is the inverse of the
    reduced Krein-von Neumann operator.
    """
    P = kernel_projector(model).matrix
    G = model.friedrichs_green(0.0).matrix
    Q = np.eye(model.space.n) - P
    M = Q @ G @ Q
    K = KernelOperator(M, model.space, True)
    # remove rounding asymmetry so downstream eigensolvers see an exact adjoint pair
    return KernelOperator((K.matrix + K.adjoint().matrix) / 2, model.space, True)


# --------------------------------------------------------------------------
# forms and orderings
# --------------------------------------------------------------------------

def form_value(model: ModelOperator, spec: ExtensionSpec, g, u=None) -> FormValue:
    """Quadratic form of ``S_{B,W}`` at ``g + w(u)``.

    Parameters
    ----------
    g : ndarray
        Element of the Friedrichs form domain (vanishing Dirichlet traces).
    u : array_like, optional
        Coefficients of ``w`` over the (orthonormal) ``W`` basis.

    Notes
    -----
    The Friedrichs part is ``sum_j lambda_j |<e_j, g>|^2`` over the lower half
    of the discrete Dirichlet spectrum.
    """
    g = model.space.check(g)
    traces = model.boundary_data(g)[: model.r]
    if np.max(np.abs(traces)) > 1e-8 * max(1.0, np.max(np.abs(g))):
        raise ValueError("g has nonzero Dirichlet traces and is not in the form domain")
    lam, E = model.dirichlet_eigen()
    m = model.space.n // 2
    c = gram(E[:, :m], g[:, None], model.space)[:, 0]
    fpart = float(np.sum(lam[:m] * np.abs(c) ** 2))
    if spec.kind == "friedrichs" or u is None:
        bpart = 0.0
    elif spec.kind == "krein":
        bpart = 0.0
    elif spec.kind == "param":
        u = np.atleast_1d(np.asarray(u))
        if u.shape != (spec.B.shape[0],):
            raise ValueError(f"u needs {spec.B.shape[0]} coefficients")
        Bu = spec.B @ u
        bpart = float(np.real(np.conj(u) @ Bu))
    else:
        raise ValueError("form values are defined for nonnegative (B, W) extensions")
    return FormValue(fpart + bpart, fpart, bpart)


def _low_rank_difference_eigs(extA: ExtensionRealization, extB: ExtensionRealization, z) -> np.ndarray:
    PhiA, CA = extA.resolvent_parts(z)
    PhiB, CB = extB.resolvent_parts(z)
    X = np.hstack([PhiB, PhiA])
    Y = np.vstack([CB, -CA])
    ev = np.linalg.eigvals(Y @ X)
    return np.real(ev)


def order_check(extA: ExtensionRealization, extB: ExtensionRealization, a: float,
                tol: float = 1e-8) -> tuple[bool, float]:
    """Test ``extA >= extB`` through ``(extB + a)^-1 - (extA + a)^-1 >= 0``.

    Returns
    -------
    ok : bool
    min_eig : float
        Smallest eigenvalue of the resolvent difference. The difference has
        rank at most ``2r``; its remaining eigenvalues are zero.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    if extA.model is not extB.model:
        raise ValueError("extensions belong to different models")
    ev = _low_rank_difference_eigs(extA, extB, -a)
    scale = max(1.0, float(np.max(np.abs(ev))) if ev.size else 0.0)
    ev = np.where(np.abs(ev) <= 1e-13 * scale, 0.0, ev)
    min_eig = float(min(0.0, ev.min())) if extA.space.n > ev.size else float(ev.min())
    return bool(min_eig >= -tol), min_eig


def krein_sup_form(model: ModelOperator, u, trial_count: int, seed: int = 0,
                   chunk: int = 500, **sampler_kw) -> float:
    """Lower bound for the Krein form of ``u`` from trial elements ``v`` of
    ``dom(S)``: the maximum of ``|<u, S v>|^2 / <v, S v>``.

    ``0/0`` counts as ``0``.
    """
    if trial_count < 100:
        raise ValueError("trial_count must be at least 100")
    u = model.space.check(u)
    rng = np.random.default_rng(seed)
    w = model.space.weights
    best = 0.0
    done = 0
    while done < trial_count:
        k = min(chunk, trial_count - done)
        V, SV = model.domain_sampler(rng, k, **sampler_kw)
        num = np.abs(np.conj(u * w) @ SV) ** 2
        den = np.real(np.sum(np.conj(V) * SV * w[:, None], axis=0))
        ratio = np.where(den > 1e-300, num / np.where(den > 1e-300, den, 1.0), 0.0)
        best = max(best, float(ratio.max()))
        done += k
    return best


def shift_noncommute_check(model: ModelOperator, c: float, a: float = 1.0) -> tuple[float, float]:
    """Compare extensions of ``S + c`` with shifted extensions of ``S``.

    Returns
    -------
    friedrichs_residual : float
        ``||((S+c)_F + a)^-1 - (S_F + c + a)^-1||``
    krein_gap : float
        The same quantity for the Krein-von Neumann extensions.
    """
    if c < 0:
        raise ValueError("c must be nonnegative")
    mc = shifted(model, c)
    out = []
    for spec in (Friedrichs(), Krein()):
        lhs = build_extension(mc, spec).resolvent_at(-a)
        rhs = build_extension(model, spec).resolvent_at(-a - c)
        out.append(op_norm(lhs - rhs))
    return out[0], out[1]


def relatively_prime_check(extA: ExtensionRealization, extB: ExtensionRealization) -> bool:
    """True when the two domains intersect exactly in ``dom(S)``, i.e. the
    stacked boundary conditions have full rank ``2r``."""
    if extA.model is not extB.model:
        raise ValueError("extensions belong to different models")
    S = np.vstack([extA.bc, extB.bc])
    s = sla.svdvals(S)
    return bool(np.sum(s > 1e-9 * s[0]) == 2 * extA.model.r)


def decompose_domain(model: ModelOperator, u, which: str = "adjoint"):
    """Split ``u`` along ``dom(S) + R_F(0) ker(S*) + ker(S*)``.

    Returns ``(f, g, w)`` with ``g = R_F(0) eta`` and ``w`` in ``ker(S*)``;
    the pieces are recovered from the boundary data of ``u``. For
    ``which="krein"`` the middle piece is dropped and for
    ``which="friedrichs"`` the last one.

    Neumann data are read from node values with one-sided stencils, so ``u``
    should be resolved to that order near the boundary. Nystrom outputs carry
    a uniform ``O(h^2)`` offset that these stencils amplify to ``O(h)``.
    """
    u = model.space.check(u)
    r = model.r
    b = model.boundary_data(u)
    Phi0 = model.deficiency_functions(0.0)
    Q0 = model.kernel_basis_N0.columns
    w = Phi0 @ b[:r] if which != "friedrichs" else np.zeros_like(u)
    neu_rest = b[r:] - (model.boundary_data(w)[r:] if which != "friedrichs" else 0)
    if which == "krein":
        g = np.zeros_like(u)
    else:
        F0 = model.friedrichs_neumann(0.0)
        c = np.linalg.solve(F0 @ Q0, neu_rest)
        g = model.friedrichs_green(0.0) @ (Q0 @ c)
    return u - g - w, g, w


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def _fmt_complex_list(M) -> str:
    M = np.asarray(M, dtype=complex)
    return ",".join(f"{v.real:.17g},{v.imag:.17g}" for v in M.ravel())


def _parse_complex_matrix(text: str, shape=None) -> np.ndarray:
    vals = [float(t) for t in text.split(",") if t.strip()]
    if len(vals) % 2:
        raise ValueError("complex entries need re,im pairs")
    z = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
    if shape is None:
        k = int(round(np.sqrt(z.size)))
        if k * k != z.size:
            raise ValueError(f"{z.size} entries do not form a square matrix")
        shape = (k, k)
    M = z.reshape(shape)
    return M.real if not np.any(M.imag) else M


def spec_to_string(spec: ExtensionSpec) -> str:
    """Serialize to ``kind`` or ``kind: key=values; key=values``.

    Matrices are written row-major as ``re,im`` pairs; ``W`` as indices into
    the orthonormal ``ker(S*)`` basis.
    """
    if spec.kind in ("friedrichs", "krein"):
        return spec.kind
    if spec.kind == "param":
        if isinstance(spec.W, SubspaceBasis):
            raise ValueError("only index-selected W can be serialized")
        parts = [f"B={_fmt_complex_list(spec.B)}"]
        if spec.W is not None:
            parts.append("W=" + ",".join(str(i) for i in spec.W))
        return "param: " + "; ".join(parts)
    r = spec.bc.shape[0]
    return f"boundary: r={r}; A={_fmt_complex_list(spec.bc)}"


def spec_from_string(text: str) -> ExtensionSpec:
    """Inverse of :func:`spec_to_string`."""
    text = text.strip()
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind == "friedrichs":
        return Friedrichs()
    if kind == "krein":
        return Krein()
    fields = {}
    for item in rest.split(";"):
        if not item.strip():
            continue
        key, eq, val = item.partition("=")
        if not eq:
            raise ValueError(f"expected key=value in {item!r}")
        fields[key.strip()] = val.strip()
    if kind == "param":
        B = _parse_complex_matrix(fields["B"]) if fields.get("B") else np.zeros((0, 0))
        W = None
        if "W" in fields:
            W = tuple(int(t) for t in fields["W"].split(",") if t.strip())
        return Param(B, W)
    if kind == "boundary":
        r = int(fields["r"])
        return Boundary(_parse_complex_matrix(fields["A"], (r, 2 * r)))
    raise ValueError(f"unknown extension kind {kind!r}")
