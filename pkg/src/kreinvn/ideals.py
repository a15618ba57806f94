"""Spectral counting and Schatten-class comparisons of ``R_F(0)`` with the
inverse of the reduced Krein-von Neumann operator.

With ``G = R_F(0)`` and ``P`` the projector onto ``ker(S*)`` the reduced
inverse is ``(I - P) G (I - P)``; its eigenvalues are dominated by those of
``G`` (a compression), which gives the eigenvalue inequality and every
Schatten-norm comparison below.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .extensions import kernel_projector, krein_reduced_inverse
from .models import ModelOperator
from .numlin import KernelOperator, hermitian_eigvals, schatten_norm, singular_values

__all__ = [
    "SpectralCounts",
    "SchattenReport",
    "spectral_counts",
    "eigen_inequality_check",
    "schatten_equivalence_suite",
    "friedrichs_sqrt",
    "block_decompose",
    "compactness_transfer_check",
    "counts_to_csv",
    "report_to_json",
    "KREIN_INTERVAL_HS_SQUARED",
    "KREIN_INTERVAL_TRACE",
]

# closed forms for the interval, from the Krein eigenvalues (2 pi m)^2 and
# (2 x)^2 with tan x = x: sum x^-2 = 1/10, sum x^-4 = 1/350
KREIN_INTERVAL_TRACE = 1.0 / 24 + 1.0 / 40
KREIN_INTERVAL_HS_SQUARED = 1.0 / 1440 + 1.0 / 5600


@dataclass(frozen=True)
class SpectralCounts:
    """Min-max values ``mu_1 <= mu_2 <= ...`` of a self-adjoint operator."""

    values: np.ndarray
    source: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size > 1 and np.any(np.diff(v) < -1e-12 * np.max(np.abs(v))):
            raise ValueError("spectral counts must be nondecreasing")
        object.__setattr__(self, "values", v)


@dataclass
class SchattenReport:
    """Named Schatten norms for one exponent ``p``."""

    p: float
    quantities: dict = field(default_factory=dict)
    sizes: list = field(default_factory=list)
    extrapolated: dict = field(default_factory=dict)


def spectral_counts(K: KernelOperator, jmax: int, invert: bool = False, source: str = "") -> SpectralCounts:
    """First ``jmax`` min-max values of ``K``, or of ``K^-1`` on its range.

    Raises
    ------
    ValueError
        If ``jmax`` exceeds the number of available (nonzero) eigenvalues.
    """
    ev = hermitian_eigvals(K)
    if invert:
        if ev.size and ev[0] < -1e-10 * max(1.0, abs(ev[-1])):
            raise ValueError("inverted counts need a nonnegative operator")
        pos = ev[ev > 1e-12 * ev[-1]] if ev.size and ev[-1] > 0 else ev[:0]
        vals = 1.0 / pos[::-1]
    else:
        vals = ev
    if jmax > vals.size:
        raise ValueError(f"jmax = {jmax} exceeds the numerical rank {vals.size}")
    return SpectralCounts(vals[:jmax], source)


def _counts_pair(model: ModelOperator, jmax: int):
    F = spectral_counts(model.friedrichs_green(0.0), jmax, invert=True, source=f"friedrichs:{model.name}")
    K = spectral_counts(krein_reduced_inverse(model), jmax, invert=True, source=f"reduced-krein:{model.name}")
    return F, K


def eigen_inequality_check(model: ModelOperator, jmax: int = 10, rel_tol: float = 1e-4) -> dict:
    """Check ``epsilon <= mu_F,j <= mu_K,j`` for ``j <= jmax``."""
    if jmax > 20:
        raise ValueError("jmax must not exceed 20")
    F, K = _counts_pair(model, jmax)
    tol = rel_tol * F.values
    lower = F.values >= model.epsilon - tol
    upper = F.values <= K.values + tol
    return {
        "model": model.name,
        "n": model.space.n,
        "jmax": jmax,
        "epsilon": model.epsilon,
        "mu_F": F.values.tolist(),
        "mu_K": K.values.tolist(),
        "lower_ok": lower.tolist(),
        "upper_ok": upper.tolist(),
        "passed": bool(np.all(lower) and np.all(upper)),
    }


def friedrichs_sqrt(model: ModelOperator) -> KernelOperator:
    """Nonnegative square root of ``R_F(0)`` from its eigenpairs."""
    lam, E = model.dirichlet_eigen()
    with np.errstate(divide="ignore"):
        g = np.where(np.isfinite(lam), 1.0 / lam, 0.0)
    w = model.space.weights
    M = (E * np.sqrt(g)[None, :]) @ (np.conj(E).T * w[None, :])
    return KernelOperator(np.real_if_close(M), model.space, True)


def schatten_equivalence_suite(model: ModelOperator, p: float) -> SchattenReport:
    """Schatten norms of the reduced Krein inverse and its factorizations.

    Quantities: ``(i)`` reduced inverse in ``B_p``, ``(ii)`` the compression
    ``(I-P) G (I-P)`` in ``B_p``, ``(iii)`` ``(I-P) G^(1/2)`` and ``(iv)``
    ``G^(1/2) (I-P)`` in ``B_2p``. ``(i)`` and ``(ii)`` are the same
    operator; ``(iii)`` and ``(iv)`` are adjoint to each other and
    ``(iii)^2 = (ii)``.
    """
    if not p > 0:
        raise ValueError(f"p must be positive, got {p}")
    n = model.space.n
    IP = np.eye(n) - kernel_projector(model).matrix
    G = model.friedrichs_green(0.0)
    red = krein_reduced_inverse(model)
    comp = KernelOperator(red.matrix.copy(), model.space, True)
    root = friedrichs_sqrt(model).matrix
    left = KernelOperator(IP @ root, model.space)
    right = KernelOperator(root @ IP, model.space)
    s_left = singular_values(left)
    q = {
        "i": schatten_norm(red, p),
        "ii": schatten_norm(comp, p),
        "iii": schatten_norm(s_left, 2 * p),
        "iv": schatten_norm(right, 2 * p),
        "friedrichs": schatten_norm(G if G.hermitian else KernelOperator(G.matrix, G.space, True), p),
    }
    q["iii_squared_defect"] = abs(q["iii"] ** 2 - q["ii"]) / q["ii"]
    q["iii_iv_defect"] = abs(q["iii"] - q["iv"]) / q["iii"]
    q["i_ii_defect"] = abs(q["i"] - q["ii"]) / q["ii"]
    return SchattenReport(float(p), q, [n])


def block_decompose(model: ModelOperator, p: float = 2.0):
    """``G`` split by ``P`` and ``I - P`` into four blocks.

    Returns
    -------
    blocks : tuple of KernelOperator
        ``P G P``, ``P G (I-P)``, ``(I-P) G P``, ``(I-P) G (I-P)``.
    report : SchattenReport
        Schatten ``p``-norms of the blocks and the reconstruction defect.
    """
    n = model.space.n
    P = kernel_projector(model).matrix
    IP = np.eye(n) - P
    G = model.friedrichs_green(0.0).matrix
    sp = model.space
    blocks = (
        KernelOperator(P @ G @ P, sp, True),
        KernelOperator(P @ G @ IP, sp),
        KernelOperator(IP @ G @ P, sp),
        krein_reduced_inverse(model),
    )
    total = sum(b.matrix for b in blocks)
    rep = SchattenReport(float(p), {
        "reconstruction_defect": float(np.max(np.abs(total - G))) / float(np.max(np.abs(G))),
        "offdiag_adjoint_defect": float(np.max(np.abs(blocks[1].adjoint().matrix - blocks[2].matrix))),
    }, [n])
    for name, b in zip(("11", "12", "21", "22"), blocks):
        rep.quantities[f"block_{name}"] = schatten_norm(b, p)
    return blocks, rep


def compactness_transfer_check(model: ModelOperator, ps=(1.0, 2.0, np.inf), jmax: int | None = None,
                               rel_tol: float = 1e-10) -> dict:
    """Singular-value domination ``s_j(reduced inverse) <= s_j(G)`` and the
    resulting Schatten-norm comparisons."""
    sK = singular_values(krein_reduced_inverse(model))
    sF = singular_values(model.friedrichs_green(0.0))
    m = sK.size if jmax is None else jmax
    slack = rel_tol * sF[0]
    dom = sK[:m] <= sF[:m] + slack
    norms = {str(p): (schatten_norm(sK, p), schatten_norm(sF, p)) for p in ps}
    return {
        "checked": int(m),
        "domination": bool(np.all(dom)),
        "first_violation": int(np.argmin(dom)) + 1 if not np.all(dom) else None,
        "sigma_K": sK[:10].tolist(),
        "sigma_F": sF[:10].tolist(),
        "norms": norms,
        "norms_ok": bool(all(a <= b * (1 + 1e-12) for a, b in norms.values())),
    }


def counts_to_csv(F: SpectralCounts, K: SpectralCounts) -> str:
    """CSV with columns ``j, mu_F, mu_K, mu_K/mu_F``."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["j", "mu_F", "mu_K", "mu_K/mu_F"])
    for j, (a, b) in enumerate(zip(F.values, K.values), start=1):
        wr.writerow([j, repr(float(a)), repr(float(b)), repr(float(b / a))])
    return buf.getvalue()


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x


def report_to_json(report) -> str:
    """Stable JSON text for a report, dataclass or dict."""
    if isinstance(report, (SchattenReport, SpectralCounts)):
        report = asdict(report)
    return json.dumps(_plain(report), sort_keys=True, indent=2)
