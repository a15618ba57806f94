import numpy as np
import pytest

from kreinvn.errors import SpectrumError
from kreinvn.extensions import Krein, build_extension
from kreinvn.models import (
    apply_adjoint,
    direct_sum,
    halfline_schroedinger,
    interval_laplacian,
    reflection_operator,
    unitary_conjugate,
)
from kreinvn.numlin import KernelOperator, identity_operator, inner, norm, op_norm, orthonormalize, project

from oracles import dirichlet_green, halfline_green_apply


def interior_norm(model, v):
    m = model.interior_mask
    return float(np.sqrt(np.sum(model.space.weights[m] * np.abs(v[m]) ** 2)))


# -- construction ---------------------------------------------------------

def test_constructor_limits():
    with pytest.raises(ValueError):
        interval_laplacian(32)
    with pytest.raises(ValueError):
        halfline_schroedinger(256)
    with pytest.raises(ValueError):
        halfline_schroedinger(1024, L=10.0)
    with pytest.raises(ValueError):
        direct_sum([])
    with pytest.raises(ValueError):
        direct_sum([interval_laplacian(128)])


def test_interval_basic_data(interval):
    assert interval.r == 2
    assert interval.epsilon == pytest.approx(np.pi ** 2)
    lam, _ = interval.dirichlet_eigen()
    assert lam[0] == pytest.approx(np.pi ** 2, abs=1e-4)


def test_halfline_basic_data(halfline):
    assert halfline.r == 1
    assert halfline.epsilon == 1.0
    q = halfline.kernel_basis_N0.columns[:, 0]
    e = np.exp(-halfline.space.nodes)
    # the kernel is spanned by e^{-x}
    assert norm(project(halfline.kernel_basis_N0, e) - e, halfline.space) <= 1e-8


# -- adjoint action -------------------------------------------------------

def test_affine_functions_in_kernel(interval):
    x = interval.space.nodes
    for a, b in ((1, 0), (0, 1)):
        assert interior_norm(interval, apply_adjoint(interval, a + b * x)) <= 1e-8


def test_adjoint_action_on_sine(interval):
    x = interval.space.nodes
    u = np.sin(np.pi * x)
    diff = apply_adjoint(interval, u) - np.pi ** 2 * u
    assert interior_norm(interval, diff) <= 1e-4


def test_adjoint_boundary_layer_is_zeroed(interval):
    out = apply_adjoint(interval, np.sin(np.pi * interval.space.nodes))
    assert np.all(out[~interval.interior_mask] == 0)


def test_halfline_exponential_kernel(halfline):
    e = np.exp(-halfline.space.nodes)
    assert interior_norm(halfline, apply_adjoint(halfline, e)) <= 1e-7
    u = halfline.friedrichs_green(0.0) @ e
    assert halfline.residual(u, 0.0, e) <= 1e-6


# -- deficiency subspaces ------------------------------------------------

@pytest.mark.parametrize("z", [1j, -1j, -1.0, -10.0])
@pytest.mark.parametrize("which", ["interval", "halfline"])
def test_deficiency_residuals(request, which, z):
    model = request.getfixturevalue(which)
    B = model.deficiency_basis_at(z)
    assert B.dim == model.r
    for w in B.columns.T:
        assert model.residual(w, z) <= 1e-6 * norm(w, model.space)


def test_halfline_deficiency_is_decaying_exponential(halfline):
    x = halfline.space.nodes
    k = np.sqrt(1 - 1j)
    ref = np.exp(-k * x)
    w = halfline.deficiency_basis_at(1j).columns[:, 0]
    c = inner(ref, w, halfline.space) / inner(ref, ref, halfline.space)
    assert norm(w - c * ref, halfline.space) <= 1e-6


def test_interval_kernel_spans_affine(interval):
    x = interval.space.nodes
    B = interval.kernel_basis_N0
    for f in (np.ones_like(x), x):
        assert norm(project(B, f) - f, interval.space) <= 1e-10


# -- Friedrichs resolvent ------------------------------------------------

@pytest.mark.parametrize("z", [0.0, -1.0, 1j, 3 - 2j])
def test_interval_green_matches_closed_form(interval, z):
    x = interval.space.nodes
    G = interval.friedrichs_green(z)
    ref = dirichlet_green(z, x, x) * interval.space.weights[None, :]
    f = np.cos(3 * x) + x ** 2
    assert norm(G @ f - ref @ f, interval.space) <= 1e-6 * norm(f, interval.space)


def test_halfline_green_exact_solution(halfline):
    # (-d^2 + 1) u = x e^{-x}, u(0) = 0, decaying: u = (x^2 + x) e^{-x} / 4
    x = halfline.space.nodes
    u = halfline.friedrichs_green(0.0) @ (x * np.exp(-x))
    assert np.max(np.abs(u - (x ** 2 + x) * np.exp(-x) / 4)) <= 1e-6


@pytest.mark.parametrize("z", [-2.0, 1j, 0.5 - 3j])
def test_halfline_green_matches_adaptive_quadrature(halfline, z):
    x = halfline.space.nodes
    f = lambda y: y * np.exp(-y)
    u = halfline.friedrichs_green(z) @ f(x)
    for k in (5, 200, 700, 1500):
        x0 = x[k]
        ref = halfline_green_apply(z, x0, f, halfline.space.length)
        assert abs(u[k] - ref) <= 1e-6


@pytest.mark.parametrize("which", ["interval", "halfline"])
@pytest.mark.parametrize("z", [0.0, -1.0, 2j])
def test_friedrichs_resolvent_solves_problem(request, which, z, rng):
    model = request.getfixturevalue(which)
    x = model.space.nodes
    G = model.friedrichs_green(z)
    scale = 1.0 if which == "interval" else 0.2
    for _ in range(10):
        a, b, c = rng.normal(size=3)
        f = (a + b * np.cos(c + 3 * scale * x)) * np.exp(-0.1 * x * (which == "halfline"))
        u = G @ f
        assert model.residual(u, z, f) <= 1e-6 * norm(f, model.space)
        assert np.max(np.abs(model.boundary_data(u)[: model.r])) <= 1e-8


def test_friedrichs_point_in_spectrum_rejected(interval):
    with pytest.raises(SpectrumError):
        interval.friedrichs_green(np.pi ** 2)


# -- positivity ------------------------------------------------------------

@pytest.mark.parametrize("which", ["interval", "halfline"])
def test_strict_positivity_on_minimal_domain(request, which):
    model = request.getfixturevalue(which)
    V, SV = model.domain_sampler(np.random.default_rng(7), 50)
    w = model.space.weights
    num = np.real(np.sum(np.conj(V) * SV * w[:, None], axis=0))
    den = np.sum(np.abs(V) ** 2 * w[:, None], axis=0)
    assert np.all(num >= 0.99 * model.epsilon * den)
    r = model.r
    b = model.boundary_data(V)
    assert np.all(b[:r] == 0)
    # one-sided stencils only resolve the vanishing derivatives for wide ramps
    kw = {"width": (0.15, 0.5)} if which == "interval" else {}
    Vw, _ = model.domain_sampler(np.random.default_rng(8), 20, **kw)
    assert np.max(np.abs(model.boundary_data(Vw)[r:])) <= 1e-6 * np.max(np.abs(Vw))


# -- direct sums -----------------------------------------------------------

def test_direct_sum_of_intervals(interval_small):
    ds = direct_sum([interval_small, interval_laplacian(512)])
    assert ds.r == 4
    assert ds.epsilon == pytest.approx(np.pi ** 2)
    G = ds.friedrichs_green(-1.0).matrix
    n = 512
    assert np.max(np.abs(G[:n, n:])) <= 1e-12
    assert np.max(np.abs(G[n:, :n])) <= 1e-12
    assert ds.kernel_basis_N0.dim == 4
    K = build_extension(ds, Krein())
    assert K.kernel_dim == 4


# -- unitary conjugation --------------------------------------------------

def test_identity_conjugation_is_trivial(interval_small):
    I = identity_operator(interval_small.space)
    c = unitary_conjugate(interval_small, I)
    assert op_norm(c.friedrichs_green(-1.0) - interval_small.friedrichs_green(-1.0)) <= 1e-12
    assert c.r == interval_small.r and c.epsilon == interval_small.epsilon


def test_reflection_symmetry(interval):
    R = reflection_operator(interval.space)
    assert op_norm(R @ R - identity_operator(interval.space)) <= 1e-12
    c = unitary_conjugate(interval, R)
    for z in (0.0, -1.0, 1j):
        assert op_norm(c.friedrichs_green(z) - interval.friedrichs_green(z)) <= 1e-8
    x = interval.space.nodes
    Bc = c.kernel_basis_N0
    for f in (np.ones_like(x), x, 1 - x):
        assert norm(project(Bc, f) - f, interval.space) <= 1e-10


def test_reflection_commutes_with_krein_resolvent(interval_small):
    R = reflection_operator(interval_small.space)
    K = build_extension(interval_small, Krein()).resolvent_at(-1.0)
    assert op_norm(R @ K @ R - K) <= 1e-8
    Kc = build_extension(unitary_conjugate(interval_small, R), Krein()).resolvent_at(-1.0)
    assert op_norm(R @ K @ R - Kc) <= 1e-8


def test_nonunitary_conjugation_rejected(interval_small):
    sp = interval_small.space
    with pytest.raises(ValueError):
        unitary_conjugate(interval_small, KernelOperator(2 * np.eye(sp.n), sp))
