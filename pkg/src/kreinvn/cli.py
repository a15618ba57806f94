"""Command-line runner: ``kreinvn verify | spectra | mfun | schatten``.

Runs are configured by an INI file (``--config``) with optional sections
``[run]``, ``[verify]``, ``[spectra]``, ``[mfun]``, ``[schatten]`` and
``[tolerances]``; command-line flags override ``[run]``. Exit codes: 0 all
checks pass, 1 a check failed, 2 usage or configuration error.

Example configuration::

    [run]
    model = interval
    n = 2048
    seed = 0

    [mfun]
    extension = krein
    re = -1
    t_min = 0.1
    t_max = 10
    count = 25
    points = 1j, 0.5

    [schatten]
    p = 1, 2
    sizes = 512, 1024, 2048

    [tolerances]
    m_at_i = 1e-10
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
from scipy.optimize import brentq

from . import __version__
from .errors import SpectrumError
from .extensions import (
    Boundary,
    Friedrichs,
    Krein,
    Param,
    build_extension,
    kernel_projector,
    krein_bc,
    order_check,
    param_bc,
    relatively_prime_check,
    row_space_distance,
    shift_noncommute_check,
    spec_from_string,
)
from .ideals import (
    KREIN_INTERVAL_HS_SQUARED,
    KREIN_INTERVAL_TRACE,
    block_decompose,
    compactness_transfer_check,
    counts_to_csv,
    eigen_inequality_check,
    schatten_equivalence_suite,
    spectral_counts,
)
from .kreinformula import (
    derivative_check,
    general_krein_rhs,
    krein_fk_rhs,
    laurent_limit_check,
    relative_residual,
    resolvent_diff_ideal_check,
    reversed_krein_rhs,
    robin_bc,
    small_z_series,
)
from .models import direct_sum, friedrichs_bc, halfline_schroedinger, interval_laplacian
from .moperator import (
    alpha_of_pair,
    boundary_behavior,
    cayley,
    donoghue_m,
    herglotz_margin,
    herglotz_rep_check,
    lft_transform,
    n_plus_basis,
    p12_restricted,
    samples_to_csv,
)
from .numlin import KernelOperator, norm, op_norm, schatten_norm

# grids below these sizes are known to under-resolve the checked identities
RESOLVED_N = {"interval": 512, "halfline": 1024, "dsum": 512}


class ConfigError(ValueError):
    """Malformed configuration; carries a field or line diagnostic."""


@dataclass
class RunConfig:
    model: str = "interval"
    n: int = 2048
    L: float = 30.0
    rule: str = "gregory"
    seed: int = 0
    z_samples: list = field(default_factory=lambda: [-1.0, -10.0, 1 + 2j])
    herglotz_samples: int = 20
    jmax: int = 10
    mfun_extension: str = "friedrichs"
    mfun_re: float = -1.0
    mfun_t: tuple = (0.1, 10.0, 25)
    mfun_points: list = field(default_factory=lambda: [1j])
    ps: list = field(default_factory=lambda: [1.0, 2.0])
    sizes: list = field(default_factory=lambda: [512, 1024, 2048])
    tolerances: dict = field(default_factory=dict)
    out: str = "."


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def _parse_complex(text: str) -> complex:
    return complex(text.strip().replace(" ", "").replace("i", "j"))


def _list(text: str, conv):
    return [conv(t) for t in text.split(",") if t.strip()]


def load_config(path: str | None, overrides: dict) -> RunConfig:
    """Read an INI file (if any) and apply command-line overrides.

    Raises
    ------
    ConfigError
        With the offending line or ``[section] key`` in the message.
    """
    cfg = RunConfig()
    cp = configparser.ConfigParser()
    cp.optionxform = str  # tolerance keys are case-sensitive record ids
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def get(section, key, conv, attr):
        if cp.has_option(section, key):
            raw = cp.get(section, key)
            try:
                setattr(cfg, attr, conv(raw))
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None

    get("run", "model", str.strip, "model")
    get("run", "n", int, "n")
    get("run", "L", float, "L")
    get("run", "rule", str.strip, "rule")
    get("run", "seed", int, "seed")
    get("verify", "z", lambda s: _list(s, _parse_complex), "z_samples")
    get("verify", "herglotz_samples", int, "herglotz_samples")
    get("spectra", "jmax", int, "jmax")
    get("mfun", "extension", str.strip, "mfun_extension")
    get("mfun", "re", float, "mfun_re")
    get("mfun", "points", lambda s: _list(s, _parse_complex), "mfun_points")
    if any(cp.has_option("mfun", k) for k in ("t_min", "t_max", "count")):
        t0, t1, c = cfg.mfun_t
        try:
            t0 = cp.getfloat("mfun", "t_min", fallback=t0)
            t1 = cp.getfloat("mfun", "t_max", fallback=t1)
            c = cp.getint("mfun", "count", fallback=c)
        except ValueError as exc:
            raise ConfigError(f"[mfun] contour: {exc}") from None
        cfg.mfun_t = (t0, t1, c)
    get("schatten", "p", lambda s: _list(s, float), "ps")
    get("schatten", "sizes", lambda s: _list(s, int), "sizes")
    if cp.has_section("tolerances"):
        for key, raw in cp.items("tolerances"):
            try:
                val = float(raw)
            except ValueError:
                raise ConfigError(f"[tolerances] {key} = {raw!r}: not a number") from None
            if not val > 0:
                raise ConfigError(f"[tolerances] {key} = {raw!r}: tolerances must be positive")
            cfg.tolerances[key] = val
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    if cfg.model not in ("interval", "halfline", "dsum"):
        raise ConfigError(f"[run] model = {cfg.model!r}: expected interval, halfline or dsum")
    if cfg.n < 8:
        raise ConfigError(f"[run] n = {cfg.n}: need at least 8 nodes")
    return cfg


# --------------------------------------------------------------------------
# models
# --------------------------------------------------------------------------

_MODEL_CACHE: dict = {}


def get_model(kind: str, n: int, L: float = 30.0, rule: str = "gregory"):
    """Build (and cache) a model; undersized grids are built anyway."""
    key = (kind, n, L, rule)
    if key not in _MODEL_CACHE:
        if kind == "interval":
            m = interval_laplacian(n, rule, allow_coarse=True)
        elif kind == "halfline":
            m = halfline_schroedinger(n, L, rule, allow_coarse=True)
        elif kind == "dsum":
            half = max(n // 2, 8)
            m = direct_sum([interval_laplacian(half, rule, allow_coarse=True),
                            interval_laplacian(half, rule, allow_coarse=True)])
        else:
            raise ConfigError(f"unknown model {kind!r}")
        _MODEL_CACHE[key] = m
    return _MODEL_CACHE[key]


def _coarse_note(cfg: RunConfig) -> str | None:
    need = RESOLVED_N[cfg.model]
    if cfg.n < need:
        return f"grid too coarse: n = {cfg.n} is below {need} for the {cfg.model} model"
    return None


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _environment(cfg: RunConfig) -> dict:
    return {
        "package": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "model": cfg.model,
        "n": cfg.n,
        "L": cfg.L if cfg.model == "halfline" else None,
        "rule": cfg.rule,
        "seed": cfg.seed,
    }


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------

class Recorder:
    """Collects check records; exceptions become failing records."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.records: list = []
        self.advisory = _coarse_note(cfg)

    def check(self, cid: str, anchor: str, tol: float, fn, relation: str = "le"):
        tol = self.cfg.tolerances.get(cid, tol)
        note = ""
        try:
            value = fn()
            if isinstance(value, (bool, np.bool_)):
                ok, value = bool(value), float(bool(value))
            elif relation == "le":
                ok = bool(np.isfinite(value) and value <= tol)
            elif relation == "ge":
                ok = bool(np.isfinite(value) and value >= tol)
            else:
                raise ValueError(f"unknown relation {relation}")
        except Exception as exc:  # a failing check must not end the run
            value, ok = None, False
            note = f"error: {type(exc).__name__}: {exc}"
        if not ok and self.advisory:
            note = f"{note}; {self.advisory}" if note else self.advisory
        self.records.append({
            "id": cid,
            "anchor": anchor,
            "status": "pass" if ok else "fail",
            "value": value,
            "tolerance": tol,
            "relation": relation,
            "note": note,
        })


def _interval_krein_eigenvalues(count: int) -> np.ndarray:
    """Positive roots ``k^2`` of ``k sin k = 2 (1 - cos k)``."""
    f = lambda k: k * np.sin(k) - 2 * (1 - np.cos(k))
    roots, k = [], 2.0
    while len(roots) < count:
        a, b = k, k + 0.05
        if f(a) == 0:
            roots.append(a)
        elif f(a) * f(b) < 0:
            roots.append(brentq(f, a, b, xtol=1e-14))
        k = b
    return np.array(roots) ** 2


def _generic_checks(rec: Recorder, model, cfg: RunConfig):
    F = build_extension(model, Friedrichs())
    K = build_extension(model, Krein())
    r = model.r
    rng = np.random.default_rng(cfg.seed)
    Q = n_plus_basis(model)

    rec.check("green_hermitian", "plumbing", 1e-10,
              lambda: model.friedrichs_green(-1.0).hermitian_defect())
    rec.check("deficiency_residual", "deficiency-subspace", 1e-6,
              lambda: max(model.residual(v, 1j) / norm(v, model.space)
                          for v in model.deficiency_functions(1j).T))
    rec.check("krein_kernel_dim", "krein-kernel-equals-adjoint-kernel", 0.5,
              lambda: abs(K.kernel_dim - r))
    rec.check("param_zero_is_krein", "nonnegative-extension-parametrization", 1e-6,
              lambda: row_space_distance(param_bc(model, np.zeros((r, r))), krein_bc(model)))
    rec.check("param_empty_is_friedrichs", "nonnegative-extension-parametrization", 1e-6,
              lambda: row_space_distance(param_bc(model, np.zeros((0, 0)), ()), friedrichs_bc(r)))
    mid = build_extension(model, Param(np.eye(r)))
    for a in (0.5, 1.0, 10.0):
        rec.check(f"sandwich_lower_a{a:g}", "krein-below-every-nonnegative-extension", -1e-8,
                  lambda a=a: order_check(mid, K, a)[1], "ge")
        rec.check(f"sandwich_upper_a{a:g}", "friedrichs-above-every-nonnegative-extension", -1e-8,
                  lambda a=a: order_check(F, mid, a)[1], "ge")
    dims = {"0": np.zeros((r, r)), "I": np.eye(r)}
    if r >= 2:
        dims["diag0_1"] = np.diag([0.0] + [1.0] * (r - 1))
    for name, B in dims.items():
        expect = r - np.linalg.matrix_rank(B)
        rec.check(f"kernel_dim_B_{name}", "extension-kernel-equals-kernel-of-B", 0.5,
                  lambda B=B, e=expect: abs(build_extension(model, Param(B)).kernel_dim - e))
    fr, kg = shift_noncommute_check(model, 1.0)
    rec.check("shift_friedrichs", "friedrichs-commutes-with-shift", 1e-8, lambda: fr)
    rec.check("shift_krein_gap", "krein-does-not-commute-with-shift", 1e-3, lambda: kg, "ge")
    rec.check("relatively_prime_FK", "friedrichs-krein-relatively-prime", True,
              lambda: relatively_prime_check(F, K))

    def resolvent_identity():
        z1, z2 = -1.0, -2.5
        R1, R2 = K.resolvent_at(z1), K.resolvent_at(z2)
        return relative_residual(R1 - R2, (R1 @ R2) * (z1 - z2))
    rec.check("krein_resolvent_identity", "first-resolvent-identity", 1e-7, resolvent_identity)

    # M-functions
    for ext, name in ((F, "F"), (K, "K")):
        rec.check(f"m_at_i_{name}", "m-function-equals-i-at-i", 1e-10,
                  lambda ext=ext: float(np.linalg.norm(donoghue_m(ext, Q, 1j).matrix - 1j * np.eye(r), 2)))

    def herglotz():
        worst = np.inf
        for _ in range(cfg.herglotz_samples):
            z = complex(rng.uniform(-5, 5), rng.choice([-1, 1]) * rng.uniform(0.1, 5))
            worst = min(worst, herglotz_margin(donoghue_m(F, Q, z)))
        return worst
    rec.check("herglotz_bound", "m-function-imaginary-part-bound", -1e-10, herglotz, "ge")

    def conj_sym():
        z = 0.7 + 1.3j
        return float(np.linalg.norm(donoghue_m(F, Q, np.conj(z)).matrix
                                    - np.conj(donoghue_m(F, Q, z).matrix).T, 2))
    rec.check("m_conjugate_symmetry", "m-function-reflection-symmetry", 1e-9, conj_sym)

    aFK = alpha_of_pair(F, K)
    M0 = donoghue_m(F, Q, 0.0).matrix
    rec.check("tan_alpha_FK", "angle-operator-equals-m-at-zero", 1e-8,
              lambda: float(np.linalg.norm(aFK.tan() - M0, 2)))
    rec.check("tan_alpha_KF", "reversed-angle-operator", 1e-8,
              lambda: float(np.linalg.norm(alpha_of_pair(K, F).tan() + M0, 2)))

    def lft():
        pred = lft_transform(donoghue_m(F, Q, -1.0), aFK).matrix
        return float(np.linalg.norm(pred - donoghue_m(K, Q, -1.0).matrix, 2))
    rec.check("lft_F_to_K", "linear-fractional-change-of-extension", 1e-6, lft)

    def cayley_norm():
        u = Q.columns[:, 0] + 0.3 * model.deficiency_basis_at(-1j).columns[:, 0]
        return abs(norm(cayley(K, u), model.space) - norm(u, model.space)) / norm(u, model.space)
    rec.check("cayley_isometry", "cayley-transform-unitary", 1e-8, cayley_norm)

    def p12_at_i():
        P = p12_restricted(F, K, 1j)
        return float(np.linalg.norm(P - 0.5j * (np.eye(r) + aFK.expi(-2)), 2))
    rec.check("p12_at_i", "angle-operator-bracket-at-i", 1e-8, p12_at_i)

    # resolvent formulas
    for z in cfg.z_samples:
        tag = f"{complex(z).real:g}{complex(z).imag:+g}i"
        rec.check(f"krein_formula_z{tag}", "krein-resolvent-formula", 1e-6,
                  lambda z=z: relative_residual(krein_fk_rhs(model, z), K.resolvent_at(z)))
        rec.check(f"reversed_formula_z{tag}", "reversed-krein-resolvent-formula", 1e-6,
                  lambda z=z: relative_residual(reversed_krein_rhs(model, z), F.resolvent_at(z)))
    rec.check("general_formula_KF", "general-krein-resolvent-formula", 1e-7,
              lambda: relative_residual(general_krein_rhs(K, F, -1.0), F.resolvent_at(-1.0)))
    rec.check("general_formula_routes", "general-krein-resolvent-formula", 1e-9,
              lambda: op_norm(general_krein_rhs(K, F, -1.0) - general_krein_rhs(K, F, -1.0, route="p12")))
    rec.check("formula_round_trip", "krein-formula-round-trip", 1e-7,
              lambda: relative_residual(reversed_krein_rhs(model, -1.0, krein_fk_rhs(model, -1.0)),
                                        F.resolvent_at(-1.0)))
    lz = {}

    def laurent(key):
        if not lz:
            eps = model.epsilon
            lz.update(laurent_limit_check(model, [1e-3 * eps, 1e-4 * eps]))
        return lz[key]
    rec.check("laurent_linear_decay", "krein-resolvent-laurent-expansion", True,
              lambda: laurent("linear_decay"))
    rec.check("laurent_principal_part", "krein-resolvent-laurent-expansion", 1e-4,
              lambda: laurent("principal_defect"))

    def series():
        z = -0.05 * model.epsilon
        IP = np.eye(model.space.n) - kernel_projector(model).matrix
        ref = KernelOperator(K.resolvent_at(z).matrix @ IP, model.space)
        return relative_residual(small_z_series(model, z, 30), ref)
    rec.check("small_z_series", "reduced-krein-resolvent-series", 1e-7, series)
    dc = {}

    def deriv(key):
        if not dc:
            dc.update(derivative_check(model))
        return dc[key]
    rec.check("m_derivative_at_zero", "m-function-derivative-at-zero", 1e-5, lambda: deriv("defect"))
    rec.check("m_derivative_lower_bound", "m-function-derivative-at-zero", 1 - 1e-6,
              lambda: deriv("min_eig"), "ge")

    # spectra and ideals
    eq = {}

    def ineq():
        if not eq:
            eq.update(eigen_inequality_check(model, min(cfg.jmax, 20)))
        return eq["passed"]
    rec.check("eigenvalue_inequality", "friedrichs-krein-eigenvalue-inequality", True, ineq)
    ct = {}

    def comp(key):
        if not ct:
            ct.update(compactness_transfer_check(model))
        return ct[key]
    rec.check("singular_value_domination", "compactness-transfer", True, lambda: comp("domination"))
    rec.check("schatten_norm_domination", "compactness-transfer", True, lambda: comp("norms_ok"))
    sr = {}

    def suite(key):
        if not sr:
            sr.update(schatten_equivalence_suite(model, 2.0).quantities)
        return sr[key]
    rec.check("schatten_i_equals_ii", "schatten-equivalence", 1e-12, lambda: suite("i_ii_defect"))
    rec.check("schatten_iii_squared", "schatten-equivalence", 1e-8, lambda: suite("iii_squared_defect"))
    rec.check("schatten_iii_iv", "schatten-equivalence", 1e-8, lambda: suite("iii_iv_defect"))
    rec.check("block_reconstruction", "plumbing", 1e-10,
              lambda: block_decompose(model)[1].quantities["reconstruction_defect"])


def _interval_checks(rec: Recorder, model, cfg: RunConfig):
    F = build_extension(model, Friedrichs())
    K = build_extension(model, Krein())
    Q = n_plus_basis(model)
    G = model.friedrichs_green(0.0)

    rec.check("green_trace", "friedrichs-inverse-trace-class", 1e-5,
              lambda: abs(schatten_norm(G, 1) - 1 / 6))
    rec.check("green_hilbert_schmidt", "friedrichs-inverse-hilbert-schmidt", 1e-5,
              lambda: abs(schatten_norm(G, 2) - 1 / math.sqrt(90)))

    def dirichlet():
        lam = model.dirichlet_eigen()[0][:10]
        ref = (np.pi * np.arange(1, 11)) ** 2
        return float(np.max(np.abs(lam - ref) / ref))
    rec.check("dirichlet_eigenvalues", "friedrichs-spectrum", 1e-4, dirichlet)

    def krein_roots():
        from .extensions import krein_reduced_inverse
        mu = spectral_counts(krein_reduced_inverse(model), 5, invert=True).values
        ref = _interval_krein_eigenvalues(5)
        return float(np.max(np.abs(mu - ref) / ref))
    rec.check("reduced_inverse_eigenvalues", "reduced-krein-inverse", 1e-4, krein_roots)

    def hs_reduced():
        val = schatten_equivalence_suite(model, 2.0).quantities["ii"]
        return abs(val - math.sqrt(KREIN_INTERVAL_HS_SQUARED))
    rec.check("reduced_inverse_hs", "schatten-equivalence", 1e-5, hs_reduced)

    robin = build_extension(model, Boundary(robin_bc()))
    rd = {}

    def ideal(key):
        if not rd:
            rd.update(resolvent_diff_ideal_check(robin, F, K))
        return rd[key]
    rec.check("resolvent_difference_rank", "resolvent-difference-finite-rank", True,
              lambda: ideal("rank_ok") and ideal("rank_D") == 2 and ideal("sigma_ratio_D") <= 1e-9)
    rec.check("resolvent_difference_factorization", "resolvent-difference-factorization", 1e-7,
              lambda: ideal("factorization_residual"))

    param_I = build_extension(model, Param(np.eye(model.r)))
    bb = {}

    def behavior(key):
        if not bb:
            bb["F"] = boundary_behavior(F, Q, "friedrichs_test")["diverges"]
            bb["K"] = boundary_behavior(K, Q, "krein_test")["diverges"]
            bb["P"] = not boundary_behavior(param_I, Q, "krein_test")["diverges"]
        return bb[key]
    rec.check("boundary_friedrichs", "boundary-behavior-classification", True, lambda: behavior("F"))
    rec.check("boundary_krein", "boundary-behavior-classification", True, lambda: behavior("K"))
    rec.check("boundary_param_bounded", "boundary-behavior-classification", True, lambda: behavior("P"))

    def herglotz_rep():
        rep = herglotz_rep_check(F, Q, [0.5 + 1j, -2 + 0.5j])
        return max(rep["reconstruction_defect_with_infinity"])
    rec.check("herglotz_representation", "m-function-measure-representation", 1e-6, herglotz_rep)


def cmd_verify(cfg: RunConfig) -> int:
    model = get_model(cfg.model, cfg.n, cfg.L, cfg.rule)
    rec = Recorder(cfg)
    _generic_checks(rec, model, cfg)
    if cfg.model == "interval":
        _interval_checks(rec, model, cfg)
    failed = [r for r in rec.records if r["status"] != "pass"]
    report = {
        "environment": _environment(cfg),
        "records": rec.records,
        "summary": {"total": len(rec.records), "failed": len(failed)},
    }
    _atomic_write(Path(cfg.out) / "verify.json", _dump_json(report))
    for r in rec.records:
        print(f"{r['status'].upper():4s} {r['id']:40s} {r['anchor']}")
    print(f"{len(rec.records) - len(failed)}/{len(rec.records)} checks passed")
    return 1 if failed else 0


# --------------------------------------------------------------------------
# spectra
# --------------------------------------------------------------------------

def cmd_spectra(cfg: RunConfig) -> int:
    from .extensions import krein_reduced_inverse
    model = get_model(cfg.model, cfg.n, cfg.L, cfg.rule)
    blocks = getattr(model, "parts", None) or [model]
    jmax = cfg.jmax * len(blocks)
    path = Path(cfg.out) / "spectra.csv"
    try:
        F = spectral_counts(model.friedrichs_green(0.0), jmax, invert=True)
        K = spectral_counts(krein_reduced_inverse(model), jmax, invert=True)
    except ValueError as exc:
        _atomic_write(path, "j,mu_F,mu_K,mu_K/mu_F\nerror,,," + f"\"{exc}\"\n")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = counts_to_csv(F, K)
    _atomic_write(path, text)
    sys.stdout.write(text)
    ok = bool(np.all(K.values >= F.values * (1 - 1e-6)))
    return 0 if ok else 1


# --------------------------------------------------------------------------
# mfun
# --------------------------------------------------------------------------

def cmd_mfun(cfg: RunConfig) -> int:
    model = get_model(cfg.model, cfg.n, cfg.L, cfg.rule)
    try:
        spec = spec_from_string(cfg.mfun_extension)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"[mfun] extension = {cfg.mfun_extension!r}: {exc}") from None
    ext = build_extension(model, spec)
    t0, t1, count = cfg.mfun_t
    zs = [complex(cfg.mfun_re, t) for t in np.linspace(t0, t1, count)] + list(cfg.mfun_points)
    samples, skipped = [], []
    for z in zs:
        try:
            samples.append(donoghue_m(ext, None, z))
        except (SpectrumError, ValueError) as exc:
            skipped.append((z, str(exc).replace(",", ";")))
    text = samples_to_csv(samples, skipped)
    _atomic_write(Path(cfg.out) / "mfun.csv", text)
    sys.stdout.write(text)
    return 0


# --------------------------------------------------------------------------
# schatten
# --------------------------------------------------------------------------

def _richardson(values):
    """Extrapolate a sequence on doubling grids; returns (value, order)."""
    if len(values) < 3:
        return values[-1], float("nan")
    a, b, c = values[-3:]
    d1, d2 = b - a, c - b
    if d2 == 0 or d1 == 0 or d1 / d2 <= 1:
        return c, float("nan")
    q = math.log2(d1 / d2)
    return c + d2 / (2 ** q - 1), q


def cmd_schatten(cfg: RunConfig) -> int:
    if not cfg.ps:
        raise ConfigError("[schatten] p: the exponent list is empty")
    if cfg.model != "interval":
        raise ConfigError("[run] model: the convergence study is defined for the interval model")
    sizes = sorted(cfg.sizes)
    names = ("i", "ii", "iii", "iv", "friedrichs")
    table = {p: {k: [] for k in names} for p in cfg.ps}
    for n in sizes:
        model = get_model("interval", n, rule=cfg.rule)
        for p in cfg.ps:
            q = schatten_equivalence_suite(model, p).quantities
            for k in names:
                table[p][k].append(q[k])
    reference = {1.0: {"ii": KREIN_INTERVAL_TRACE, "friedrichs": 1 / 6},
                 2.0: {"ii": math.sqrt(KREIN_INTERVAL_HS_SQUARED), "friedrichs": 1 / math.sqrt(90)}}
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["p", "quantity"] + [f"n{n}" for n in sizes] + ["richardson", "order", "reference", "defect"])
    status = 0
    for p in cfg.ps:
        for k in names:
            vals = table[p][k]
            ext, order = _richardson(vals)
            ref = reference.get(p, {}).get(k)
            defect = "" if ref is None else repr(abs(ext - ref))
            if ref is not None and abs(ext - ref) > 1e-4:
                status = 1
            wr.writerow([repr(p), k] + [repr(v) for v in vals]
                        + [repr(ext), repr(order), "" if ref is None else repr(ref), defect])
    text = buf.getvalue()
    _atomic_write(Path(cfg.out) / "schatten.csv", text)
    sys.stdout.write(text)
    return status


# --------------------------------------------------------------------------

COMMANDS = {"verify": cmd_verify, "spectra": cmd_spectra, "mfun": cmd_mfun, "schatten": cmd_schatten}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kreinvn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI configuration file")
        sp.add_argument("--out", default=None, help="output directory (default: current)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--n", type=int, default=None, help="grid size")
        sp.add_argument("--model", choices=("interval", "halfline", "dsum"), default=None)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = load_config(args.config, {"seed": args.seed, "n": args.n, "model": args.model,
                                        "out": args.out})
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
