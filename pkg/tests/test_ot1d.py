import numpy as np
import pytest
from hypothesis import given, strategies as st

from bosemeasure import ot1d
from bosemeasure.ot1d import DiscreteMeasure, LipschitzFunction
from oracles import random_measure, w_lp


def measures(max_atoms=8):
    atoms = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=max_atoms)

    @st.composite
    def build(draw):
        x = draw(atoms)
        w = draw(st.lists(st.floats(0.01, 1.0), min_size=len(x), max_size=len(x)))
        w = np.asarray(w) / np.sum(w)
        return DiscreteMeasure(x, w)

    return build()


def half_half(a, b):
    return DiscreteMeasure([a, b], [0.5, 0.5])


class TestDiscreteMeasure:
    def test_sorts_and_merges(self):
        m = DiscreteMeasure([2.0, 1.0, 1.0 + 1e-13], [0.5, 0.25, 0.25])
        np.testing.assert_array_equal(m.atoms, [1.0, 2.0])
        np.testing.assert_allclose(m.weights, [0.5, 0.5])

    def test_renormalizes_tiny_defect(self):
        m = DiscreteMeasure([0.0, 1.0], [0.5, 0.5 + 5e-10])
        assert m.weights.sum() == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("w", [[0.5, 0.6], [1.2, -0.2]])
    def test_rejects_bad_weights(self, w):
        with pytest.raises(ValueError):
            DiscreteMeasure([0.0, 1.0], w)

    def test_rejects_empty_and_mismatched(self):
        with pytest.raises(ValueError):
            DiscreteMeasure([], [])
        with pytest.raises(ValueError):
            DiscreteMeasure([0.0], [0.5, 0.5])

    def test_arrays_are_read_only(self):
        m = half_half(0, 1)
        with pytest.raises(ValueError):
            m.atoms[0] = 5.0

    def test_csv_round_trip_is_exact(self, rng):
        x, w = random_measure(rng)
        m = DiscreteMeasure(x, w)
        text = m.to_csv()
        assert text.splitlines()[0] == "atom,weight"
        assert DiscreteMeasure.from_csv(text) == m

    def test_from_csv_rejects_wrong_header(self):
        with pytest.raises(ValueError):
            DiscreteMeasure.from_csv("x,w\n0,1\n")

    def test_mean_and_expect(self):
        m = DiscreteMeasure([-1.0, 3.0], [0.75, 0.25])
        assert m.mean() == pytest.approx(0.0)
        assert m.expect(lambda t: t * t) == pytest.approx(3.0)


def test_empirical_from_samples():
    m = ot1d.empirical_from_samples([1.0, 0.0, 1.0, 1.0])
    np.testing.assert_array_equal(m.atoms, [0.0, 1.0])
    np.testing.assert_allclose(m.weights, [0.25, 0.75])
    with pytest.raises(ValueError, match="empty"):
        ot1d.empirical_from_samples([])


def test_cdf_is_right_continuous():
    m = half_half(0.0, 1.0)
    assert ot1d.cdf(m, -0.1) == 0.0
    assert ot1d.cdf(m, 0.0) == 0.5
    assert ot1d.cdf(m, 0.99) == 0.5
    assert ot1d.cdf(m, 1.0) == 1.0


def test_quantile_generalized_inverse():
    m = half_half(0.0, 1.0)
    assert ot1d.quantile(m, 0.3) == 0.0
    # sup{x : F(x) <= 1/2} picks the upper atom at the jump level
    assert ot1d.quantile(m, 0.5) == 1.0
    assert ot1d.quantile(m, 0.7) == 1.0
    for t in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            ot1d.quantile(m, t)


def test_worked_example_both_formulas():
    a, b = half_half(0, 1), half_half(0, 2)
    assert ot1d.wasserstein_1_cdf(a, b) == pytest.approx(0.5, abs=1e-15)
    assert ot1d.wasserstein_p(a, b, 1) == pytest.approx(0.5, abs=1e-15)


def test_dirac_distance_every_p():
    for p in (1.0, 1.5, 2.0, 3.0):
        assert ot1d.wasserstein_p(ot1d.dirac(-1.0), ot1d.dirac(2.5), p) == pytest.approx(3.5)


def test_p_below_one_rejected():
    with pytest.raises(ValueError):
        ot1d.wasserstein_p(ot1d.dirac(0), ot1d.dirac(1), 0.5)


@pytest.mark.parametrize("p", [1.0, 2.0])
def test_against_linear_program(rng, p):
    for _ in range(40):
        xa, wa = random_measure(rng, 7)
        xb, wb = random_measure(rng, 7)
        a, b = DiscreteMeasure(xa, wa), DiscreteMeasure(xb, wb)
        ref = w_lp(a.atoms, a.weights, b.atoms, b.weights, p)
        assert ot1d.wasserstein_p(a, b, p) ** p == pytest.approx(ref, abs=1e-10)


def test_frozen_value_small_pair():
    # frozen from the LP oracle: atoms {0, 1, 3} vs {0.5, 2}
    a = DiscreteMeasure([0.0, 1.0, 3.0], [0.2, 0.5, 0.3])
    b = DiscreteMeasure([0.5, 2.0], [0.6, 0.4])
    assert ot1d.wasserstein_1_cdf(a, b) == pytest.approx(0.7, abs=1e-14)
    assert ot1d.wasserstein_p(a, b, 2) == pytest.approx(np.sqrt(0.55), abs=1e-14)


@given(measures(), measures())
def test_formulas_agree_and_symmetric(a, b):
    w_cdf = ot1d.wasserstein_1_cdf(a, b)
    assert w_cdf == pytest.approx(ot1d.wasserstein_p(a, b, 1), abs=1e-10)
    assert w_cdf == pytest.approx(ot1d.wasserstein_1_cdf(b, a), abs=1e-12)
    assert w_cdf >= 0


@given(measures())
def test_identity_of_indiscernibles(a):
    assert ot1d.wasserstein_1_cdf(a, a) == 0.0
    assert ot1d.wasserstein_p(a, a, 2) == 0.0


@given(measures(), measures(), measures())
def test_triangle_inequality(a, b, c):
    for p in (1.0, 2.0):
        ab = ot1d.wasserstein_p(a, b, p)
        bc = ot1d.wasserstein_p(b, c, p)
        ac = ot1d.wasserstein_p(a, c, p)
        assert ac <= ab + bc + 1e-9


@given(measures(), measures(), st.floats(-5, 5), st.floats(0.1, 10))
def test_shift_and_scale(a, b, s, lam):
    base = ot1d.wasserstein_p(a, b, 2)
    assert ot1d.wasserstein_p(a.shifted(s), b.shifted(s), 2) == pytest.approx(base, abs=1e-8)
    assert ot1d.wasserstein_p(a.scaled(lam), b.scaled(lam), 2) == pytest.approx(lam * base, rel=1e-8, abs=1e-8)


@given(measures(), measures())
def test_monotone_in_p(a, b):
    assert ot1d.wasserstein_p(a, b, 1) <= ot1d.wasserstein_p(a, b, 2) + 1e-9


@given(measures(), measures())
def test_plan_marginals_and_cost(a, b):
    plan = ot1d.optimal_plan(a, b)
    assert plan.marginal_defect() <= 1e-12
    for p in (1.0, 2.0):
        assert plan.cost(p) == pytest.approx(ot1d.wasserstein_p(a, b, p) ** p, abs=1e-9)


def test_plan_of_measure_with_itself_is_diagonal(rng):
    x, w = random_measure(rng)
    a = DiscreteMeasure(x, w)
    pi = ot1d.optimal_plan(a, a).as_matrix()
    np.testing.assert_allclose(pi, np.diag(a.weights), atol=1e-15)


@given(measures(), measures())
def test_dual_bound_below_distance(a, b):
    fns = [LipschitzFunction(lambda t: t, 1.0), (np.sin, 1.0), (lambda t: abs(t - 1.0), 1.0), (lambda t: 3.0, 0.0)]
    assert ot1d.w1_dual_bound(a, b, fns) <= ot1d.wasserstein_1_cdf(a, b) + 1e-9


def test_dual_bound_tight_for_ordered_shift():
    a = half_half(0.0, 1.0)
    assert ot1d.w1_dual_bound(a, a.shifted(0.3), [(lambda t: t, 1.0)]) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        ot1d.w1_dual_bound(a, a, [(lambda t: t, -1.0)])


def test_backends_agree(backend, rng):
    xa, wa = random_measure(rng)
    xb, wb = random_measure(rng)
    a, b = DiscreteMeasure(xa, wa), DiscreteMeasure(xb, wb)
    ref = w_lp(a.atoms, a.weights, b.atoms, b.weights)
    assert ot1d.wasserstein_1_cdf(a, b) == pytest.approx(ref, abs=1e-10)
    assert ot1d.wasserstein_p(a, b, 1) == pytest.approx(ref, abs=1e-10)
