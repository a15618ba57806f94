import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kreinvn.cli import get_model
from kreinvn.extensions import krein_reduced_inverse
from kreinvn.ideals import (
    KREIN_INTERVAL_HS_SQUARED,
    KREIN_INTERVAL_TRACE,
    SchattenReport,
    SpectralCounts,
    block_decompose,
    compactness_transfer_check,
    counts_to_csv,
    eigen_inequality_check,
    friedrichs_sqrt,
    report_to_json,
    schatten_equivalence_suite,
    spectral_counts,
)
from kreinvn.numlin import KernelOperator, make_grid_space, op_norm, schatten_norm

from oracles import krein_interval_eigenvalues


@pytest.fixture(scope="module")
def suite2(interval_small):
    return schatten_equivalence_suite(interval_small, 2.0)


# -- closed forms used as references -------------------------------------------

def test_krein_closed_forms_against_root_sums():
    # both families (2 pi m)^2 and 4 x^2 with tan x = x are simple
    mu = krein_interval_eigenvalues(400)
    tail = 1.0 / (np.sqrt(mu[-1]) * np.pi)  # bound on the omitted part of sum 1/mu
    assert np.sum(1 / mu) == pytest.approx(KREIN_INTERVAL_TRACE, abs=2 * tail)
    assert np.sum(1 / mu ** 2) == pytest.approx(KREIN_INTERVAL_HS_SQUARED, rel=1e-6)


# -- spectral counts ----------------------------------------------------------------

def test_counts_of_diagonal():
    sp = make_grid_space((0.0, 1.0), 3)
    c = spectral_counts(KernelOperator(np.diag([1.0, 2.0, 3.0]), sp, True), 2)
    np.testing.assert_array_equal(c.values, [1.0, 2.0])


def test_counts_errors():
    sp = make_grid_space((0.0, 1.0), 3)
    K = KernelOperator(np.diag([1.0, 0.0, 0.0]), sp, True)
    with pytest.raises(ValueError):
        spectral_counts(K, 2, invert=True)
    with pytest.raises(ValueError):
        spectral_counts(KernelOperator(np.diag([-1.0, 1.0, 2.0]), sp, True), 1, invert=True)
    with pytest.raises(ValueError):
        SpectralCounts(np.array([2.0, 1.0]))


def test_dirichlet_counts(interval):
    c = spectral_counts(interval.friedrichs_green(0.0), 10, invert=True)
    np.testing.assert_allclose(c.values, (np.pi * np.arange(1, 11)) ** 2, rtol=1e-4)


def test_krein_counts(interval):
    c = spectral_counts(krein_reduced_inverse(interval), 10, invert=True)
    np.testing.assert_allclose(c.values, krein_interval_eigenvalues(10), rtol=1e-4)


# -- eigenvalue inequality ---------------------------------------------------------

def test_eigen_inequality_interval(interval):
    rep = eigen_inequality_check(interval, 10)
    assert rep["passed"]
    assert rep["mu_F"][0] >= np.pi ** 2 * (1 - 1e-4)
    assert rep["mu_K"][0] >= np.pi ** 2


def test_eigen_inequality_direct_sum():
    ds = get_model("dsum", 1024)
    rep = eigen_inequality_check(ds, 20)
    assert rep["passed"]
    # each part contributes the same eigenvalues, so counts come in pairs
    mu = np.array(rep["mu_F"])
    np.testing.assert_allclose(mu[0::2], mu[1::2], rtol=1e-8)


def test_eigen_inequality_jmax_limit(interval_small):
    with pytest.raises(ValueError):
        eigen_inequality_check(interval_small, 21)


# -- Schatten equivalences ---------------------------------------------------------

def test_items_i_and_ii_coincide(suite2):
    q = suite2.quantities
    assert abs(q["i"] - q["ii"]) <= 1e-12 * q["ii"]


def test_square_root_factorization(suite2):
    q = suite2.quantities
    assert q["iii_squared_defect"] <= 1e-8
    assert q["iii_iv_defect"] <= 1e-8


def test_square_root_is_root(interval_small):
    R = friedrichs_sqrt(interval_small)
    assert op_norm(R @ R - interval_small.friedrichs_green(0.0)) <= 1e-12
    assert op_norm(R - R.adjoint()) <= 1e-12


def test_trace_monotonicity(interval_small):
    rep = schatten_equivalence_suite(interval_small, 1.0)
    q = rep.quantities
    assert q["friedrichs"] == pytest.approx(1 / 6, abs=1e-5)
    assert q["ii"] <= q["friedrichs"]
    # reduced trace against the closed form, O(h^2) discretization
    assert q["ii"] == pytest.approx(KREIN_INTERVAL_TRACE, abs=1e-5)


def test_p_must_be_positive(interval_small):
    with pytest.raises(ValueError):
        schatten_equivalence_suite(interval_small, 0.0)


def test_truncations_converge():
    vals = []
    for n in (512, 1024, 2048):
        K = krein_reduced_inverse(get_model("interval", n))
        vals.append([schatten_norm(K, p) for p in (1.0, 2.0)])
    vals = np.array(vals)
    assert np.all(np.abs(vals[2] - vals[1]) <= 4 * np.abs(vals[1] - vals[0]))
    assert vals[2, 1] ** 2 == pytest.approx(KREIN_INTERVAL_HS_SQUARED, rel=1e-5)


@settings(max_examples=5, deadline=None)
@given(st.integers(1, 6), st.sampled_from([0.5, 1.0, 2.0, 3.0]), st.integers(0, 2 ** 31))
def test_finite_rank_square_identity(k, p, seed):
    r = np.random.default_rng(seed)
    sp = make_grid_space((0.0, 1.0), 64)
    T = KernelOperator(r.normal(size=(64, k)) @ r.normal(size=(k, 64)), sp)
    assert schatten_norm(T, 2 * p) ** 2 == pytest.approx(schatten_norm(T.adjoint() @ T, p), rel=1e-10)


# -- blocks ----------------------------------------------------------------------

def test_block_decomposition(interval_small):
    blocks, rep = block_decompose(interval_small)
    q = rep.quantities
    assert q["reconstruction_defect"] <= 1e-10
    assert q["offdiag_adjoint_defect"] <= 1e-10
    assert op_norm(blocks[3] - krein_reduced_inverse(interval_small)) <= 1e-12
    assert q["block_22"] <= schatten_norm(interval_small.friedrichs_green(0.0), 2)


# -- compactness transfer --------------------------------------------------------

@pytest.mark.parametrize("n", [512, 1024, 2048])
def test_singular_value_domination(n):
    rep = compactness_transfer_check(get_model("interval", n), jmax=10)
    assert rep["domination"] and rep["norms_ok"]


def test_transfer_bounds(interval):
    rep = compactness_transfer_check(interval, ps=(1.0, np.inf))
    assert rep["domination"]
    trace_K, trace_F = rep["norms"]["1.0"]
    assert trace_K <= 1 / 6
    assert rep["norms"]["inf"][0] <= 1 / np.pi ** 2


# -- serialization ------------------------------------------------------------------

def test_counts_csv():
    a = SpectralCounts(np.array([1.0, 4.0]))
    b = SpectralCounts(np.array([2.0, 4.0]))
    rows = counts_to_csv(a, b).strip().splitlines()
    assert rows[0] == "j,mu_F,mu_K,mu_K/mu_F"
    assert rows[1] == "1,1.0,2.0,2.0"


def test_report_json_is_stable():
    rep = SchattenReport(2.0, {"b": np.float64(1.5), "a": np.inf}, [512])
    text = report_to_json(rep)
    assert text == report_to_json(rep)
    data = json.loads(text)
    assert data["quantities"] == {"a": "inf", "b": 1.5}
    assert list(data) == sorted(data)
