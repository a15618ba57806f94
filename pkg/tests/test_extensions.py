import numpy as np
import pytest

from kreinvn.errors import RankDeficiencyError
from kreinvn.extensions import (
    Boundary,
    Friedrichs,
    Krein,
    Param,
    build_extension,
    decompose_domain,
    form_value,
    kernel_projector,
    krein_bc,
    krein_reduced_inverse,
    krein_sup_form,
    order_check,
    relatively_prime_check,
    row_space_distance,
    shift_noncommute_check,
    spec_from_string,
    spec_to_string,
)
from kreinvn.models import direct_sum, interval_laplacian, reflection_operator, unitary_conjugate
from kreinvn.numlin import hermitian_eigvals, norm, op_norm, orthonormalize

from oracles import cheb_bvp, krein_interval_eigenvalues

DIRICHLET = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])
# u'(0) = u(1) - u(0) and u'(1) = u(1) - u(0), columns (u(0), u(1), u'(0), u'(1))
KREIN = np.array([[1.0, -1.0, 1.0, 0.0], [1.0, -1.0, 0.0, 1.0]])


def x_basis(model):
    return orthonormalize([model.space.nodes], model.space)


# -- kernel projector and reduced inverse ---------------------------------

def test_kernel_projector(interval):
    P = kernel_projector(interval)
    assert op_norm(P @ P - P) <= 1e-10
    assert op_norm(P - P.adjoint()) <= 1e-10
    one = np.ones(interval.space.n)
    assert norm(P @ one - one, interval.space) <= 1e-10
    ev = hermitian_eigvals(P)
    assert np.sum(np.abs(ev - 1) < 1e-8) == 2


def test_reduced_inverse_structure(interval):
    K = krein_reduced_inverse(interval)
    assert op_norm(K - K.adjoint()) <= 1e-10
    assert op_norm(kernel_projector(interval) @ K) <= 1e-9
    assert hermitian_eigvals(K).min() >= -1e-12


def test_reduced_inverse_first_krein_eigenvalue(interval):
    mu1 = 1.0 / hermitian_eigvals(krein_reduced_inverse(interval))[-1]
    ref = krein_interval_eigenvalues(1)[0]
    assert mu1 == pytest.approx(ref, rel=1e-4)
    # the oracle itself: the lowest root is (2 pi)^2
    assert ref == pytest.approx(4 * np.pi ** 2, rel=1e-12)


# -- construction -----------------------------------------------------------

def test_krein_conditions(interval):
    assert row_space_distance(krein_bc(interval), KREIN) <= 1e-6
    K = build_extension(interval, Param(np.zeros((2, 2))))
    assert row_space_distance(K.bc, KREIN) <= 1e-6


def test_param_with_trivial_w_is_dirichlet(interval_small):
    ext = build_extension(interval_small, Param(np.zeros((0, 0)), W=()))
    assert row_space_distance(ext.bc, DIRICHLET) <= 1e-6


def test_param_large_b_approaches_friedrichs(interval):
    F = build_extension(interval, Friedrichs()).resolvent_at(-1.0)
    P = build_extension(interval, Param(1e6 * np.eye(2))).resolvent_at(-1.0)
    assert op_norm(P - F) <= 1e-3


def test_construction_errors(interval_small):
    with pytest.raises(ValueError):
        build_extension(interval_small, Param(np.diag([1.0, -1.0])))
    with pytest.raises(ValueError):
        build_extension(interval_small, Param(np.eye(3)))
    with pytest.raises(RankDeficiencyError):
        build_extension(interval_small, Boundary(np.array([[1.0, 0, 0, 0], [2.0, 0, 0, 0]])))
    x = interval_small.space.nodes
    not_kernel = orthonormalize([np.sin(np.pi * x)], interval_small.space)
    with pytest.raises(ValueError):
        build_extension(interval_small, Param(np.eye(1), not_kernel))


@pytest.mark.parametrize("z", [-1.0, 2j])
def test_krein_resolvent_against_collocation(interval, z):
    K = build_extension(interval, Krein())
    x = interval.space.nodes
    f = lambda t: np.exp(t) * np.cos(2 * t)
    u = K.apply_resolvent(z, f(x))
    ref = cheb_bvp(z, f, KREIN)(x)
    assert norm(u - ref, interval.space) <= 1e-7 * norm(f(x), interval.space)


def test_param_resolvent_against_collocation(interval):
    ext = build_extension(interval, Param(np.diag([0.5, 2.0])))
    x = interval.space.nodes
    f = lambda t: 1 + t ** 3
    u = ext.apply_resolvent(-3.0, f(x))
    ref = cheb_bvp(-3.0, f, ext.bc)(x)
    assert norm(u - ref, interval.space) <= 1e-7


def identity_defect(ext, z1, z2):
    R1, R2 = ext.resolvent_at(z1), ext.resolvent_at(z2)
    return op_norm(R1 - R2 - (z1 - z2) * (R1 @ R2))


PARAM_DIAG = Param(np.diag([1.0, 3.0]))


@pytest.mark.parametrize("spec", [Friedrichs(), Krein(), PARAM_DIAG], ids=["F", "K", "param"])
def test_resolvent_identity_converges_second_order(interval_small, interval, spec):
    coarse = identity_defect(build_extension(interval_small, spec), -1.0, 0.5j)
    fine = identity_defect(build_extension(interval, spec), -1.0, 0.5j)
    # n grows by 4, the Nystrom defect of the product drops by about 16
    assert coarse / fine >= 12
    assert fine <= 1e-7


def test_resolvent_identity_friedrichs(interval):
    assert identity_defect(build_extension(interval, Friedrichs()), -1.0, 0.5j) <= 1e-8


@pytest.mark.xfail(strict=True, reason="plain Nystrom product error is 3e-8 to 1e-7 at n = 2048")
@pytest.mark.parametrize("spec", [Krein(), PARAM_DIAG], ids=["K", "param"])
def test_resolvent_identity_strict(interval, spec):
    assert identity_defect(build_extension(interval, spec), -1.0, 0.5j) <= 1e-8


@pytest.mark.parametrize("B,dim", [(np.zeros((2, 2)), 2), (np.diag([0.0, 1.0]), 1), (np.eye(2), 0)])
def test_kernel_dimension_matches_kernel_of_b(interval_small, B, dim):
    ext = build_extension(interval_small, Param(B))
    assert ext.kernel_dim == dim
    P = ext.kernel_projector
    assert op_norm(P @ P - P) <= 1e-10
    if dim:
        for w in ext.kernel_basis.columns.T:
            assert interval_small.residual(w) <= 1e-6


# -- forms ----------------------------------------------------------------

def test_form_values(interval):
    x = interval.space.nodes
    fv = form_value(interval, Friedrichs(), np.sin(np.pi * x))
    assert fv.value == pytest.approx(np.pi ** 2 / 2, abs=1e-4)
    assert fv.value == fv.friedrichs_part + fv.b_part
    zero = np.zeros_like(x)
    assert form_value(interval, Param(np.zeros((2, 2))), zero, [0.3, -1.2]).value == 0.0
    assert form_value(interval, Param(np.eye(2)), zero, [1.0, 0.0]).value == pytest.approx(1.0)
    with pytest.raises(ValueError):
        form_value(interval, Friedrichs(), np.ones_like(x))


def test_krein_sup_form(interval):
    x = interval.space.nodes
    assert krein_sup_form(interval, 2 - 3 * x, 500) <= 1e-10
    assert krein_sup_form(interval, np.zeros_like(x), 100) == 0.0
    s = np.sin(np.pi * x)
    lower = krein_sup_form(interval, s, 10_000)
    exact = form_value(interval, Friedrichs(), s).value
    assert 0.95 * exact <= lower <= exact * (1 + 1e-6)
    with pytest.raises(ValueError):
        krein_sup_form(interval, s, 50)


# -- ordering ---------------------------------------------------------------

def test_krein_below_friedrichs(fk_small):
    F, K = fk_small
    ok, m = order_check(F, K, 1.0)
    assert ok and m >= -1e-8
    ok, m = order_check(F, F, 1.0)
    assert ok and abs(m) <= 1e-10


def test_param_monotone_in_b(interval_small):
    one = build_extension(interval_small, Param(np.eye(2)))
    two = build_extension(interval_small, Param(2 * np.eye(2)))
    assert order_check(two, one, 1.0)[0]


@pytest.mark.parametrize("B", [np.zeros((2, 2)), np.diag([0.0, 1.0]), np.eye(2), np.array([[2.0, 1.0], [1.0, 1.0]])])
def test_sandwich(interval_small, fk_small, B):
    F, K = fk_small
    ext = build_extension(interval_small, Param(B))
    for a in (0.5, 1.0, 10.0):
        assert order_check(F, ext, a)[0]
        assert order_check(ext, K, a)[0]


def test_order_check_rejects_bad_input(fk_small, interval):
    F, K = fk_small
    with pytest.raises(ValueError):
        order_check(F, K, 0.0)
    with pytest.raises(ValueError):
        order_check(F, build_extension(interval, Friedrichs()), 1.0)


# -- shifts -------------------------------------------------------------------

def test_shift_noncommutation(interval_small):
    f_res, k_gap = shift_noncommute_check(interval_small, 1.0)
    assert f_res <= 1e-8
    assert k_gap >= 1e-3
    f0, k0 = shift_noncommute_check(interval_small, 0.0)
    assert f0 <= 1e-10 and k0 <= 1e-10


# -- relative primeness -------------------------------------------------------

def test_relative_primeness(interval_small, fk_small):
    F, K = fk_small
    assert relatively_prime_check(F, K)
    assert not relatively_prime_check(F, F)
    # W = span{x}: every domain element vanishes at 0, like the Dirichlet ones
    shares = build_extension(interval_small, Param(np.eye(1), x_basis(interval_small)))
    assert not relatively_prime_check(F, shares)
    other = build_extension(interval_laplacian(256), Friedrichs())
    with pytest.raises(ValueError):
        relatively_prime_check(F, other)


# -- domain decompositions ------------------------------------------------

def dirichlet_solution_affine(a, b, x):
    """Exact ``R_F(0)(a + b x)``: ``-g'' = a + b x`` with ``g(0) = g(1) = 0``."""
    return -(a * x ** 2 / 2 + b * x ** 3 / 6) + (a / 2 + b / 6) * x


@pytest.mark.parametrize("which", ["krein", "friedrichs", "adjoint"])
def test_domain_splits(interval, which):
    sp = interval.space
    x = sp.nodes
    V, _ = interval.domain_sampler(np.random.default_rng(3), 5, width=(0.15, 0.5))
    for j in range(5):
        f = V[:, j]
        w = (j + 1) - 2 * x if which != "friedrichs" else np.zeros_like(x)
        g = dirichlet_solution_affine(0.5, j, x) if which != "krein" else np.zeros_like(x)
        parts = decompose_domain(interval, f + g + w, which)
        for got, want in zip(parts, (f, g, w)):
            assert norm(got - want, sp) <= 1e-6


# -- transport of the construction -------------------------------------------

def test_direct_sum_of_krein_extensions():
    a, b = interval_laplacian(256), interval_laplacian(256)
    ds = direct_sum([a, b])
    Rs = build_extension(ds, Krein()).resolvent_at(-1.0).matrix
    Ra = build_extension(a, Krein()).resolvent_at(-1.0).matrix
    Rb = build_extension(b, Krein()).resolvent_at(-1.0).matrix
    assert np.max(np.abs(Rs[:256, :256] - Ra)) <= 1e-8
    assert np.max(np.abs(Rs[256:, 256:] - Rb)) <= 1e-8
    assert np.max(np.abs(Rs[:256, 256:])) <= 1e-8


def test_unitary_transport_of_krein(interval_small):
    U = reflection_operator(interval_small.space)
    K = build_extension(interval_small, Krein()).resolvent_at(1j)
    Kc = build_extension(unitary_conjugate(interval_small, U), Krein()).resolvent_at(1j)
    assert op_norm(U @ K @ U.adjoint() - Kc) <= 1e-8


# -- serialization ------------------------------------------------------------

@pytest.mark.parametrize("spec", [
    Friedrichs(),
    Krein(),
    Param(np.array([[2.0, 1.0j], [-1.0j, 1.0]])),
    Param(np.eye(1), W=(1,)),
    Boundary(np.array([[1.0, 0, 0, 0], [0, 0, 0, 1.0]])),
])
def test_spec_round_trip(spec):
    back = spec_from_string(spec_to_string(spec))
    assert back.kind == spec.kind
    for attr in ("B", "bc"):
        a, b = getattr(spec, attr), getattr(back, attr)
        if a is not None:
            np.testing.assert_array_equal(a, b)
    assert back.W == spec.W


def test_spec_parse_errors():
    with pytest.raises(ValueError):
        spec_from_string("robin: a=1")
    with pytest.raises(ValueError):
        spec_from_string("param: B=1,0,2")
