"""Transforms between deficiency spaces and Donoghue-type M-functions.

Conventions
-----------
``U_{z,z0} = I + (z - z0) R(z) = (S~ - z0)(S~ - z)^-1`` maps
``ker(S* - z0)`` onto ``ker(S* - z)``; the Cayley transform is
``C = U_{i,-i}``. For an orthonormal basis ``Q`` of a subspace ``N`` of
``N_+ = ker(S* - i)`` the M-function is

    M(z) = z I + (1 + z^2) Q^* R(z) Q.

For a pair of extensions, ``alpha`` is the self-adjoint matrix on ``N_+``
with ``C_2 C_1^-1 = -exp(-2i alpha)`` there.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import SingularBracketError, SpectrumError
from .extensions import ExtensionRealization
from .models import ModelOperator
from .numlin import KernelOperator, SubspaceBasis, gram

__all__ = [
    "MOperatorSample",
    "AlphaOperator",
    "SpectralMeasure",
    "n_plus_basis",
    "u_transform",
    "cayley",
    "p12",
    "p12_restricted",
    "alpha_of_pair",
    "donoghue_m",
    "herglotz_bound",
    "herglotz_margin",
    "lft_transform",
    "spectral_measure",
    "herglotz_rep_check",
    "boundary_behavior",
    "samples_to_csv",
]

BRANCH_NOTE = "eigenphases of -C2 C1^-1 in [-pi, pi); alpha = -phase/2 in (-pi/2, pi/2]"


@dataclass(frozen=True)
class MOperatorSample:
    """M-function value at ``z`` in a fixed orthonormal basis."""

    z: complex
    matrix: np.ndarray
    cond: float = 1.0


@dataclass(frozen=True)
class AlphaOperator:
    """Self-adjoint ``alpha`` stored through its eigen-decomposition.

    Attributes
    ----------
    matrix : ndarray
        ``Z diag(angles) Z^*``.
    angles : ndarray
        Eigenvalues of ``alpha`` in ``(-pi/2, pi/2]``.
    vectors : ndarray
        Unitary ``Z``.
    branch_note : str
    """

    matrix: np.ndarray
    angles: np.ndarray
    vectors: np.ndarray
    branch_note: str = BRANCH_NOTE

    def func(self, f) -> np.ndarray:
        Z = self.vectors
        return (Z * f(self.angles)[None, :]) @ np.conj(Z).T

    def cos(self):
        return self.func(np.cos)

    def sin(self):
        return self.func(np.sin)

    def expi(self, k: float = 1.0):
        """``exp(i k alpha)``."""
        return self.func(lambda a: np.exp(1j * k * a))

    def tan(self) -> np.ndarray:
        c = np.cos(self.angles)
        if np.min(np.abs(c)) < 1e-12:
            raise SingularBracketError("tan(alpha) is unbounded: the pair shares a boundary condition")
        return self.func(np.tan)


@dataclass(frozen=True)
class SpectralMeasure:
    """Discrete operator measure ``(1 + lam^2) Q^* E({lam}) Q``."""

    locations: np.ndarray
    jumps: np.ndarray  # shape (K, r, r)
    weights: np.ndarray  # shape (K, r, r), jumps / (1 + lam^2)
    infinite_mass: np.ndarray = field(default=None)


# --------------------------------------------------------------------------

def n_plus_basis(model: ModelOperator) -> SubspaceBasis:
    """The orthonormal basis of ``N_+`` used for all restricted matrices."""
    if getattr(model, "_n_plus", None) is None:
        model._n_plus = model.deficiency_basis_at(1j)
    return model._n_plus


def u_transform(ext: ExtensionRealization, z, z0, u) -> np.ndarray:
    """``U_{z,z0} u = u + (z - z0) (S~ - z)^-1 u``."""
    ext.check_point(z)
    ext.check_point(z0)
    u = ext.space.check(u)
    if complex(z) == complex(z0):
        return u.copy()
    return u + (z - z0) * ext.apply_resolvent(z, u)


def cayley(ext: ExtensionRealization, u) -> np.ndarray:
    """Cayley transform ``(S~ + i)(S~ - i)^-1 u``."""
    return u_transform(ext, 1j, -1j, u)


def _symmetric_factor(model: ModelOperator, z):
    """Matrix ``s`` with ``friedrichs_neumann(z) = s Phi_z^T W``, or ``None``."""
    Phi = model.deficiency_functions(z)
    F = model.friedrichs_neumann(z)
    PtW = Phi.T * model.space.weights[None, :]
    s = np.linalg.lstsq(PtW.T, F.T, rcond=None)[0].T
    if np.linalg.norm(F - s @ PtW) > 1e-12 * np.linalg.norm(F):
        return None
    return s


def _bc_gain(ext, z):
    """``K`` with ``C_z = K @ friedrichs_neumann(z)`` for the extension."""
    r = ext.model.r
    Phi = ext.model.deficiency_functions(z)
    Mz = ext.bc @ ext.model.boundary_data(Phi)
    if not np.any(ext.bc[:, r:]):
        return np.zeros((r, r))
    return -np.linalg.solve(Mz, ext.bc[:, r:])


def p12(ext1: ExtensionRealization, ext2: ExtensionRealization, z) -> KernelOperator:
    """``(S1-z)(S1-i)^-1 [R2(z) - R1(z)] (S1-z)(S1+i)^-1`` as a kernel operator.

    The resolvent difference is ``Phi_z (K2 - K1) F_z`` with the Friedrichs
    Neumann rows ``F_z``. For real models and boundary conditions the kernel
    is complex-symmetric, so both outer factors act on deficiency functions
    and are evaluated by exact transport.
    """
    if ext1.model is not ext2.model:
        raise ValueError("extensions belong to different models")
    for e in (ext1, ext2):
        e.check_point(z)
    model = ext1.model
    Phi = model.deficiency_functions(z)
    gain = _bc_gain(ext2, z) - _bc_gain(ext1, z)
    s = _symmetric_factor(model, z)
    real = model.is_real and np.isrealobj(ext1.bc) and np.isrealobj(ext2.bc)
    if s is not None and real:
        left = ext1.transport(1j, z, Phi)
        back = ext1.transport(-1j, z, Phi)
        mat = (left @ gain @ s) @ (back.T * model.space.weights[None, :])
        return KernelOperator(mat, ext1.space)
    F = model.friedrichs_neumann(z)
    left = ext1.transport(1j, z, Phi)
    Y = gain @ F
    R = ext1.resolvent_at(-1j).matrix
    right = Y + (-1j - z) * (Y @ R)
    return KernelOperator(left @ right, ext1.space)


def p12_restricted(ext1, ext2, z) -> np.ndarray:
    """Matrix of ``P_{1,2}(z)`` on ``N_+`` in the fixed basis."""
    Q = n_plus_basis(ext1.model).columns
    P = p12(ext1, ext2, z)
    return gram(Q, P.matrix @ Q, ext1.space)


def alpha_of_pair(ext1: ExtensionRealization, ext2: ExtensionRealization,
                  unitary_tol: float = 1e-8) -> AlphaOperator:
    """``alpha_{1,2}`` from ``C_2 C_1^-1 = -exp(-2i alpha)`` on ``N_+``.

    Raises
    ------
    ValueError
        If the restricted matrix is not unitary within ``unitary_tol``.
    """
    if ext1.model is not ext2.model:
        raise ValueError("extensions belong to different models")
    Qb = n_plus_basis(ext1.model)
    Q = Qb.columns
    minus = ext1.transport(-1j, 1j, Q)
    back = ext2.transport(1j, -1j, minus)
    Cmat = gram(Q, back, ext1.space)
    defect = np.linalg.norm(np.conj(Cmat).T @ Cmat - np.eye(Cmat.shape[0]), 2)
    if defect > unitary_tol:
        raise ValueError(f"C2 C1^-1 restricted to N_+ is not unitary (defect {defect:.2e})")
    T, Z = sla.schur(-Cmat, output="complex")
    phases = np.angle(np.diag(T))
    phases = np.where(phases > np.pi - 1e-10, -np.pi, phases)
    angles = -phases / 2
    A = (Z * angles[None, :]) @ np.conj(Z).T
    return AlphaOperator((A + np.conj(A).T) / 2, angles, Z)


def donoghue_m(ext: ExtensionRealization, N_basis: SubspaceBasis | None, z) -> MOperatorSample:
    """``M(z) = z I + (1 + z^2) Q^* (S~ - z)^-1 Q`` for ``Q`` spanning ``N``.

    ``(S~ - z)^-1 Q`` is evaluated exactly from the transport of ``Q`` to
    ``ker(S* - z)``, so no Nystrom error enters.
    """
    ext.check_point(z)
    z = complex(z)
    Qb = n_plus_basis(ext.model) if N_basis is None else N_basis
    Q = Qb.columns
    k = Q.shape[1]
    if z == 1j:
        return MOperatorSample(z, 1j * np.eye(k))
    RQ = (ext.transport(z, 1j, Q) - Q) / (z - 1j)
    M = z * np.eye(k) + (1 + z * z) * gram(Q, RQ, ext.space)
    return MOperatorSample(z, M)


def herglotz_bound(z) -> float:
    """Lower bound for ``Im M(z) / Im z``."""
    z = complex(z)
    a = abs(z) ** 2
    return 2.0 / ((a + 1) + np.sqrt((a - 1) ** 2 + 4 * z.real ** 2))


def herglotz_margin(sample: MOperatorSample) -> float:
    """Smallest eigenvalue of ``Im M / Im z`` minus the bound."""
    z = sample.z
    if z.imag == 0:
        raise ValueError("the bound needs a nonreal z")
    M = sample.matrix
    ImM = (M - np.conj(M).T) / (2j)
    return float(np.linalg.eigvalsh(ImM / z.imag)[0] - herglotz_bound(z))


def lft_transform(M1: MOperatorSample, alpha: AlphaOperator) -> MOperatorSample:
    """``exp(-i a)[cos a + sin a M1][sin a - cos a M1]^-1 exp(i a)``."""
    c, s = alpha.cos(), alpha.sin()
    M = M1.matrix
    den = s - c @ M
    cond = float(np.linalg.cond(den))
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularBracketError(f"bracket sin(a) - cos(a) M is singular at z = {M1.z}")
    num = c + s @ M
    out = alpha.expi(-1) @ num @ np.linalg.solve(den, alpha.expi(1))
    return MOperatorSample(M1.z, out, cond)


def spectral_measure(ext: ExtensionRealization, N_basis: SubspaceBasis | None = None) -> SpectralMeasure:
    """Jumps of ``(1 + lam^2) Q^* E(lam) Q`` from the discrete eigenpairs."""
    Q = (n_plus_basis(ext.model) if N_basis is None else N_basis).columns
    lam, E = ext.eigen()
    c = gram(E, Q, ext.space)  # (n, r): <e_k, q_a>
    fin = np.isfinite(lam)
    w = np.einsum("ka,kb->kab", np.conj(c[fin]), c[fin])
    jumps = (1 + lam[fin] ** 2)[:, None, None] * w
    inf_mass = np.einsum("ka,kb->ab", np.conj(c[~fin]), c[~fin])
    return SpectralMeasure(lam[fin], jumps, w, inf_mass)


def herglotz_rep_check(ext: ExtensionRealization, N_basis: SubspaceBasis | None,
                       z_samples, coarse: ExtensionRealization | None = None) -> dict:
    """Rebuild ``M`` from the discrete spectral measure and compare.

    Returns
    -------
    dict
        ``normalization_defect`` (``||sum jumps/(1+lam^2) - I||``),
        ``reconstruction_defect`` per sample, the same with the linear term
        carried by eigenmodes whose resolvent eigenvalue vanishes
        (``reconstruction_defect_with_infinity``), ``total_mass`` per basis
        vector and, when ``coarse`` is given, the mass growth ratio.
    """
    Qb = n_plus_basis(ext.model) if N_basis is None else N_basis
    mu = spectral_measure(ext, Qb)
    r = Qb.dim
    norm_sum = mu.weights.sum(axis=0)
    normalization_defect = float(np.linalg.norm(norm_sum - np.eye(r), 2))
    lam = mu.locations
    plain, with_inf = [], []
    for z in z_samples:
        z = complex(z)
        f = 1.0 / (lam - z) - lam / (1 + lam ** 2)
        rebuilt = np.einsum("k,kab->ab", f, mu.jumps)
        direct = donoghue_m(ext, Qb, z).matrix
        plain.append(float(np.linalg.norm(rebuilt - direct, 2)))
        with_inf.append(float(np.linalg.norm(rebuilt + z * (np.eye(r) - norm_sum) - direct, 2)))
    mass = np.real(np.einsum("kaa->a", mu.jumps))
    out = {
        "normalization_defect": normalization_defect,
        "infinite_mass": float(np.linalg.norm(mu.infinite_mass, 2)),
        "z": [complex(z) for z in z_samples],
        "reconstruction_defect": plain,
        "reconstruction_defect_with_infinity": with_inf,
        "total_mass": mass.tolist(),
    }
    if coarse is not None:
        cm = np.real(np.einsum("kaa->a", spectral_measure(coarse).jumps))
        out["coarse_total_mass"] = cm.tolist()
        out["mass_growth"] = (mass / cm).tolist()
    return out


FRIEDRICHS_LADDER = (-10.0, -1e2, -1e3, -1e4)
KREIN_LADDER = (-1e-1, -1e-2, -1e-3)
DIVERGENCE_THRESHOLD = 50.0


def boundary_behavior(ext: ExtensionRealization, N_basis: SubspaceBasis | None, mode: str,
                      threshold: float = DIVERGENCE_THRESHOLD) -> dict:
    """Finite-ladder diagnostic for the limits of ``(u, M(lam) u)``.

    ``friedrichs_test`` follows ``lam -> -inf`` and flags divergence when the
    values decrease strictly and end below ``-threshold``; ``krein_test``
    follows ``lam -> 0-`` and flags divergence for a strict increase ending
    above ``threshold``. Also reports partial sums of ``lam |<u, e_k>|^2``
    and ``lam^-1 |<u, e_k>|^2`` over growing spectral truncations.
    """
    if mode not in ("friedrichs_test", "krein_test"):
        raise ValueError(f"unknown mode {mode!r}")
    if not ext.nonnegative:
        raise ValueError("the ladders need a nonnegative extension")
    Qb = n_plus_basis(ext.model) if N_basis is None else N_basis
    ladder = FRIEDRICHS_LADDER if mode == "friedrichs_test" else KREIN_LADDER
    vals = np.array([np.real(np.diag(donoghue_m(ext, Qb, lam).matrix)) for lam in ladder])
    steps = np.diff(vals, axis=0)
    if mode == "friedrichs_test":
        monotone = bool(np.all(steps < 0))
        diverges = monotone and bool(np.all(vals[-1] < -threshold))
    else:
        monotone = bool(np.all(steps > 0))
        diverges = monotone and bool(np.all(vals[-1] > threshold))
    lam, E = ext.eigen()
    c2 = np.abs(gram(E, Qb.columns, ext.space)) ** 2
    n = ext.space.n
    sums = []
    for cut in (n // 8, n // 4, n // 2):
        sel = slice(0, cut)
        l = lam[sel]
        with np.errstate(divide="ignore"):
            inv = np.where(np.abs(l) > 1e-9, 1.0 / np.where(l == 0, 1, l), np.inf)
        sums.append({
            "modes": cut,
            "lam_weighted": (l[:, None] * c2[sel]).sum(axis=0).tolist(),
            "inverse_weighted": (inv[:, None] * c2[sel]).sum(axis=0).tolist(),
        })
    return {
        "mode": mode,
        "ladder": list(ladder),
        "values": vals.tolist(),
        "monotone": monotone,
        "diverges": diverges,
        "threshold": threshold,
        "partial_sums": sums,
    }


def samples_to_csv(samples, skipped=()) -> str:
    """CSV text with columns ``re_z, im_z, status`` and the matrix entries."""
    samples = list(samples)
    r = samples[0].matrix.shape[0] if samples else 0
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    head = ["re_z", "im_z", "status"]
    for a in range(r):
        for b in range(r):
            head += [f"m{a}{b}_re", f"m{a}{b}_im"]
    wr.writerow(head)
    for s in samples:
        row = [repr(s.z.real), repr(s.z.imag), "ok"]
        for v in s.matrix.ravel():
            row += [repr(float(v.real)), repr(float(v.imag))]
        wr.writerow(row)
    for z, reason in skipped:
        wr.writerow([repr(complex(z).real), repr(complex(z).imag), f"skipped: {reason}"]
                    + [""] * (2 * r * r))
    return buf.getvalue()
