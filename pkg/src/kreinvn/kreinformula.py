"""Resolvent formulas linking pairs of self-adjoint extensions.

For relatively prime extensions ``S1`` and ``S2``

    R2(z) = R1(z) + U1_{z,i} Q [tan(alpha_12) - M1(z)]^-1 Q^* U1_{z,-i}

with ``Q`` an orthonormal basis of ``N_+``. The outer factors act on
deficiency elements, so they are evaluated by exact transport:
``U1_{z,i} Q`` maps ``Q`` into ``ker(S* - z)`` and
``Q^* U1_{z,-i} = (U1_{conj z, i} Q)^*``. Only ``R1(z)`` carries Nystrom
error.
"""

from __future__ import annotations

import numpy as np

from .errors import NotRelativelyPrimeError, SingularBracketError
from .extensions import (
    ExtensionRealization,
    Friedrichs,
    Krein,
    build_extension,
    kernel_projector,
    krein_reduced_inverse,
    relatively_prime_check,
)
from .models import ModelOperator
from .moperator import alpha_of_pair, donoghue_m, n_plus_basis, p12
from .numlin import KernelOperator, gram, op_norm

__all__ = [
    "general_krein_rhs",
    "krein_fk_rhs",
    "reversed_krein_rhs",
    "laurent_limit_check",
    "small_z_series",
    "derivative_check",
    "resolvent_diff_ideal_check",
    "robin_bc",
    "relative_residual",
]

# M entries carry about 1e-10 relative quadrature error, so conditioning
# beyond 1e10 cannot be told apart from an exact singularity
BRACKET_COND_LIMIT = 1e10


def _extensions(model: ModelOperator):
    """Cached Friedrichs and Krein-von Neumann realizations of ``model``."""
    cache = getattr(model, "_fk_pair", None)
    if cache is None:
        cache = (build_extension(model, Friedrichs()), build_extension(model, Krein()))
        model._fk_pair = cache
    return cache


def _solve_bracket(bracket: np.ndarray, z, what: str, hint=None) -> np.ndarray:
    cond = float(np.linalg.cond(bracket))
    if not np.isfinite(cond) or cond > BRACKET_COND_LIMIT:
        extra = f"; {hint()}" if hint is not None else ""
        raise SingularBracketError(f"{what} is singular at z = {complex(z)} (cond {cond:.2e}){extra}")
    return np.linalg.inv(bracket)


def _formula(ext1: ExtensionRealization, middle: np.ndarray, z, base=None) -> KernelOperator:
    """``R1(z) + U1_{z,i} Q middle Q^* U1_{z,-i}``."""
    z = complex(z)
    Q = n_plus_basis(ext1.model).columns
    left = ext1.transport(z, 1j, Q)
    right = ext1.transport(np.conj(z), 1j, Q)
    w = ext1.space.weights
    R1 = ext1.resolvent_at(z).matrix if base is None else np.asarray(base)
    mat = R1 + (left @ middle) @ (np.conj(right).T * w[None, :])
    return KernelOperator(mat, ext1.space, z.imag == 0 and ext1.model.is_real)


def general_krein_rhs(ext1: ExtensionRealization, ext2: ExtensionRealization, z,
                      route: str = "alpha") -> KernelOperator:
    """Resolvent of ``ext2`` built from ``ext1`` and the pair's angle operator.

    Parameters
    ----------
    route : {"alpha", "p12"}
        ``"alpha"`` inverts ``tan(alpha_12) - M1(z)`` on ``N_+``. ``"p12"``
        sandwiches the operator ``P_12(z)`` obtained from the resolvent
        difference between ``U1_{z,i}`` and ``U1_{z,-i}``; it serves as a
        consistency check of the first route.

    Raises
    ------
    NotRelativelyPrimeError
        If the domains of the two extensions meet beyond ``dom(S)``.
    SingularBracketError
        If the bracket is not invertible at ``z``.
    """
    if not relatively_prime_check(ext1, ext2):
        raise NotRelativelyPrimeError(
            f"{ext1.spec.tag} and {ext2.spec.tag} are not relatively prime")
    for e in (ext1, ext2):
        e.check_point(z)
    z = complex(z)
    if route == "alpha":
        alpha = alpha_of_pair(ext1, ext2)
        bracket = alpha.tan() - donoghue_m(ext1, None, z).matrix
        return _formula(ext1, _solve_bracket(bracket, z, "tan(alpha) - M(z)"), z)
    if route == "p12":
        return _p12_route(ext1, ext2, z)
    raise ValueError(f"unknown route {route!r}")


def _p12_route(ext1, ext2, z) -> KernelOperator:
    # P_12(z) = Q A Q^* W; its compression A replaces the inverted bracket
    Q = n_plus_basis(ext1.model).columns
    A = gram(Q, p12(ext1, ext2, z).matrix @ Q, ext1.space)
    return _formula(ext1, A, z)


def _nearest_krein_eigenvalue(model, z):
    lam = _extensions(model)[1].eigen()[0]
    lam = lam[np.isfinite(lam)]
    k = int(np.argmin(np.abs(lam - complex(z))))
    return f"nearest Krein-von Neumann eigenvalue {lam[k]:.6g}"


def krein_fk_rhs(model: ModelOperator, z) -> KernelOperator:
    """Krein-von Neumann resolvent from Friedrichs data.

    ``R_K(z) = R_F(z) + U_{z,i} Q [M_F(0) - M_F(z)]^-1 Q^* U_{z,-i}``.
    """
    F, K = _extensions(model)
    F.check_point(z)
    M0 = donoghue_m(F, None, 0.0).matrix
    bracket = M0 - donoghue_m(F, None, z).matrix
    inv = _solve_bracket(bracket, z, "M_F(0) - M_F(z)",
                         hint=lambda: _nearest_krein_eigenvalue(model, z))
    return _formula(F, inv, z)


def reversed_krein_rhs(model: ModelOperator, z, krein_resolvent=None) -> KernelOperator:
    """Friedrichs resolvent from Krein-von Neumann data.

    ``R_F(z) = R_K(z) + U^K_{z,i} Q [-M_F(0) - M_K(z)]^-1 Q^* U^K_{z,-i}``.

    Parameters
    ----------
    krein_resolvent : KernelOperator or ndarray, optional
        Replacement for the boundary-value Krein resolvent, e.g. the output
        of :func:`krein_fk_rhs` for a round trip.
    """
    F, K = _extensions(model)
    K.check_point(z)
    M0 = donoghue_m(F, None, 0.0).matrix
    bracket = -M0 - donoghue_m(K, None, z).matrix
    inv = _solve_bracket(bracket, z, "-M_F(0) - M_K(z)")
    base = None
    if krein_resolvent is not None:
        base = getattr(krein_resolvent, "matrix", krein_resolvent)
    return _formula(K, inv, z, base=base)


def relative_residual(A, B) -> float:
    """``||A - B|| / ||B||`` in the weighted operator norm."""
    A = A if isinstance(A, KernelOperator) else KernelOperator(A, B.space)
    return op_norm(A - B) / op_norm(B)


# --------------------------------------------------------------------------
# behaviour near z = 0
# --------------------------------------------------------------------------

def laurent_limit_check(model: ModelOperator, z_values, ratio_window=(0.8, 1.2),
                        principal_tol: float = 1e-4) -> dict:
    """Check ``z U^K_{z,i} u -> i P u`` linearly in ``|z|`` for ``u`` in ``N_+``.

    The principal part of the Krein resolvent is recovered by Richardson
    extrapolation of ``z R_K(z)`` at the largest sample and compared with
    ``-P``.

    Raises
    ------
    ValueError
        For ``z = 0`` or samples outside ``|z| <= 0.1 epsilon``.
    """
    zs = [complex(z) for z in z_values]
    if not zs:
        raise ValueError("no z samples")
    if any(z == 0 for z in zs):
        raise ValueError("z = 0 is the limit point and cannot be evaluated")
    if any(abs(z) > 0.1 * model.epsilon for z in zs):
        raise ValueError(f"samples must satisfy |z| <= {0.1 * model.epsilon:g}")
    _, K = _extensions(model)
    Q = n_plus_basis(model).columns
    P = kernel_projector(model).matrix
    target = 1j * (P @ Q)
    w = model.space.weights
    defects = []
    for z in zs:
        D = z * K.transport(z, 1j, Q) - target
        defects.append(np.sqrt(np.real(np.sum(w[:, None] * np.abs(D) ** 2, axis=0))))
    defects = np.array(defects)
    ratios = []
    for k in range(len(zs) - 1):
        scale = abs(zs[k]) / abs(zs[k + 1])
        ratios.append((defects[k] / defects[k + 1] / scale).tolist())
    linear = all(ratio_window[0] <= x <= ratio_window[1] for row in ratios for x in row)
    zr = max(zs, key=abs)
    A1 = zr * K.resolvent_at(zr).matrix
    A2 = (zr / 2) * K.resolvent_at(zr / 2).matrix
    extrap = 2 * A2 - A1
    principal_defect = op_norm(KernelOperator(extrap + P, model.space))
    return {
        "z": zs,
        "defects": defects.tolist(),
        "normalized_ratios": ratios,
        "linear_decay": bool(linear),
        "richardson_z": zr,
        "principal_defect": float(principal_defect),
        "principal_ok": bool(principal_defect <= principal_tol),
    }


def _spectral(model: ModelOperator, f) -> np.ndarray:
    """``f(R_F(0))`` from the eigenpairs of the Friedrichs inverse; ``f(0)``
    is applied on the null modes."""
    lam, E = model.dirichlet_eigen()
    with np.errstate(divide="ignore"):
        g = np.where(np.isfinite(lam), 1.0 / lam, 0.0)
    w = model.space.weights
    return (E * f(g)[None, :]) @ (np.conj(E).T * w[None, :])


def small_z_series(model: ModelOperator, z, terms: int) -> KernelOperator:
    """``(S_K - z)^-1 (I - P)`` from the truncated expansion in powers of
    ``R_F(0)``.

    With ``G = R_F(0)`` and ``S_N = sum_{n<N} z^n G^{n+1}`` this is

        (I-P) S_N (I-P) + (I-P)(I - iG) S_N Q z^2 [M_F(0) - M_F(z)]^-1
        Q^* S_N (I + iG)(I-P).

    At ``z = 0`` the second term vanishes and the result is
    ``(I-P) G (I-P)``.

    Raises
    ------
    ValueError
        If ``|z| >= epsilon`` or ``terms < 1``.
    """
    z = complex(z)
    if abs(z) >= model.epsilon:
        raise ValueError(f"|z| must be below epsilon = {model.epsilon:g}")
    if terms < 1:
        raise ValueError("terms must be positive")
    if z == 0:
        return krein_reduced_inverse(model)
    n = model.space.n
    IP = np.eye(n) - kernel_projector(model).matrix

    def partial(g):
        return g * sum((z * g) ** k for k in range(terms))

    SN = _spectral(model, partial)
    first = IP @ SN @ IP
    F, _ = _extensions(model)
    Q = n_plus_basis(model).columns
    w = model.space.weights
    bracket = donoghue_m(F, None, 0.0).matrix - donoghue_m(F, None, z).matrix
    mid = z * z * _solve_bracket(bracket, z, "M_F(0) - M_F(z)")
    left = IP @ (_spectral(model, lambda g: (1 - 1j * g) * partial(g)) @ Q)
    rightop = _spectral(model, lambda g: partial(g) * (1 + 1j * g)) @ IP
    right = np.conj(Q).T @ (w[:, None] * rightop)
    return KernelOperator(first + left @ mid @ right, model.space, z.imag == 0)


def derivative_check(model: ModelOperator, delta: float = 1e-3) -> dict:
    """Central difference of ``M_F`` at ``0`` against ``I + Q^* G^2 Q``.

    ``G Q`` is evaluated exactly as ``(U_{0,i} Q - Q) / (0 - i)``.
    """
    F, _ = _extensions(model)
    Q = n_plus_basis(model).columns
    fd = (donoghue_m(F, None, delta).matrix - donoghue_m(F, None, -delta).matrix) / (2 * delta)
    GQ = (F.transport(0.0, 1j, Q) - Q) / (-1j)
    exact = np.eye(Q.shape[1]) + gram(GQ, GQ, model.space)
    herm = (fd + np.conj(fd).T) / 2
    return {
        "delta": delta,
        "defect": float(np.linalg.norm(fd - exact, 2)),
        "min_eig": float(np.linalg.eigvalsh(herm)[0]),
        "exact_min_eig": float(np.linalg.eigvalsh((exact + np.conj(exact).T) / 2)[0]),
    }


# --------------------------------------------------------------------------
# resolvent differences
# --------------------------------------------------------------------------

def robin_bc(a0: float = 1.0, a1: float = 1.0) -> np.ndarray:
    """Interval conditions ``u'(0) = a0 u(0)``, ``u'(1) = -a1 u(1)``."""
    return np.array([[-a0, 0.0, 1.0, 0.0], [0.0, a1, 0.0, 1.0]])


def _low_rank_svals(X, Y, space) -> np.ndarray:
    """Singular values of the weighted operator ``X @ Y``."""
    w = space.weights
    sw = np.sqrt(w)
    _, R = np.linalg.qr(sw[:, None] * X)
    return np.linalg.svd((R @ Y) / sw[None, :], compute_uv=False)


def _rank(s, rel: float = 1e-9, floor: float = 1e-12) -> int:
    if s.size == 0 or s[0] <= floor:
        return 0
    return int(np.sum(s > rel * s[0]))


def _schatten_from_svals(s, p) -> float:
    if s.size == 0 or s[0] == 0:
        return 0.0
    if np.isinf(p):
        return float(s[0])
    return float(np.sum(s ** p) ** (1.0 / p))


def resolvent_diff_ideal_check(ext0: ExtensionRealization, ext1: ExtensionRealization,
                               ext2: ExtensionRealization, z=1j,
                               ps=(1.0, 2.0, np.inf)) -> dict:
    """Rank and Schatten norms of ``D(z) = R2(z) - R1(z)`` and of
    ``E = exp(2i alpha_02) - exp(2i alpha_01)``, and the factorization of
    ``D(i)`` through ``E``.

    ``D(i) = -(i/2) Q exp(-2i alpha_02) E exp(-2i alpha_01) Q^* C_0`` with
    ``C_0`` the Cayley transform of ``ext0``; this follows from
    ``(tan a - i)^-1 = (i/2)(I + exp(-2ia))``. The report also carries the
    residual of ``2i Q (exp(2i alpha_02) + I)^-1 E (exp(2i alpha_01) + I)^-1
    Q^* C_0`` under ``literal_residual``.

    Raises
    ------
    NotRelativelyPrimeError
        If ``ext1`` or ``ext2`` is not relatively prime to ``ext0``.
    """
    for e in (ext1, ext2):
        if not relatively_prime_check(e, ext0):
            raise NotRelativelyPrimeError(f"{e.spec.tag} is not relatively prime to {ext0.spec.tag}")
    model = ext0.model
    space = model.space
    r = model.r
    Q = n_plus_basis(model).columns

    def difference(zz):
        Phi2, C2 = ext2.resolvent_parts(zz)
        Phi1, C1 = ext1.resolvent_parts(zz)
        return np.hstack([Phi2, Phi1]), np.vstack([C2, -C1])

    X, Y = difference(z)
    sD = _low_rank_svals(X, Y, space)
    a1 = alpha_of_pair(ext0, ext1)
    a2 = alpha_of_pair(ext0, ext2)
    E = a2.expi(2) - a1.expi(2)
    sE = np.linalg.svd(E, compute_uv=False)

    # factorization at z = i, compared as a low-rank operator difference
    Xi, Yi = difference(1j)
    cayley_adj = ext0.transport(-1j, 1j, Q)  # C_0^* Q
    corner = np.conj(cayley_adj).T * space.weights[None, :]
    I = np.eye(r)
    corrected = -0.5j * a2.expi(-2) @ E @ a1.expi(-2)
    literal = 2j * np.linalg.solve(a2.expi(2) + I, E) @ np.linalg.inv(a1.expi(2) + I)
    sDi = _low_rank_svals(Xi, Yi, space)
    scale = sDi[0] if sDi.size and sDi[0] > 0 else 1.0

    def residual(mid):
        s = _low_rank_svals(np.hstack([Xi, Q]), np.vstack([Yi, -mid @ corner]), space)
        return float(s[0]) if s.size else 0.0

    res_c = residual(corrected)
    res_l = residual(literal)
    rank_D, rank_E = _rank(sD), _rank(sE)
    return {
        "z": complex(z),
        "pair": [ext0.spec.tag, ext1.spec.tag, ext2.spec.tag],
        "rank_D": rank_D,
        "rank_E": rank_E,
        "sigma_D": sD[: 2 * r + 1].tolist(),
        "sigma_E": sE.tolist(),
        "sigma_ratio_D": float(sD[r] / sD[0]) if sD.size > r and sD[0] > 0 else 0.0,
        "schatten_D": {str(p): _schatten_from_svals(sD, p) for p in ps},
        "schatten_E": {str(p): _schatten_from_svals(sE, p) for p in ps},
        "rank_ok": bool(rank_D == rank_E <= r),
        "factorization_residual": res_c,
        "factorization_relative": res_c / scale,
        "literal_residual": res_l,
    }
