import numpy as np
import pytest

from markovfield import (
    FunctionalSubspace,
    cond_expect,
    cond_indep,
    conditional_resample,
    corpus,
    hitting,
    join,
    meet,
    realize,
    sample_batch,
    sigma_field,
    zero_subspace,
)
from markovfield.field import FieldMismatchError, project_functional

from conftest import random_recurrent_form, random_transient_form, random_vertex_subset


def test_exact_covariance_algebra(killed_field):
    e0 = np.eye(3)[0]
    assert killed_field.covariance(e0, e0) == 2.0
    rng = np.random.default_rng(3)
    for _ in range(50):
        f = rng.standard_normal(3)
        g = rng.standard_normal(3)
        cov = killed_field.covariance(f, g)
        en = killed_field.form.energy(f, g)
        assert abs(cov - en) <= 1e-12 * max(abs(en), 1.0)


def test_identity_form_field_is_standard_normal():
    from markovfield import validate_markovian

    form = validate_markovian(np.eye(4))
    fld = realize(form, seed=0)
    batch = fld.sample_batch(200_000, seed=1)
    np.testing.assert_allclose(batch.var(axis=0), 1.0, atol=0.02)
    # X indexed by a coordinate vector is that coordinate of the sample.
    np.testing.assert_allclose(fld.evaluate(batch, np.eye(4)[2]), batch[:, 2])


def test_recurrent_constant_variable_degenerate(recurrent_field):
    ones = np.ones(3)
    assert recurrent_field.covariance(ones, ones) == pytest.approx(0.0, abs=1e-15)
    batch = recurrent_field.sample_batch(100, seed=0)
    vals = recurrent_field.evaluate(batch, ones)
    np.testing.assert_allclose(vals, 0.0, atol=1e-12)


def test_sample_determinism(killed_field):
    a = killed_field.sample_batch(7, seed=42)
    b = killed_field.sample_batch(7, seed=42)
    np.testing.assert_array_equal(a, b)
    c = sample_batch(killed_field, 7, 43)
    assert not np.array_equal(a, c)


def test_empirical_variance_concentration(killed_field):
    N = 100_000
    batch = killed_field.sample_batch(N, seed=5)
    vals = killed_field.evaluate(batch, np.eye(3)[1])
    exact = 2.0
    assert abs(vals.var() - exact) <= 5.0 * exact * np.sqrt(2.0 / N)


def test_empirical_cross_covariance(killed_field):
    N = 100_000
    batch = killed_field.sample_batch(N, seed=6)
    rng = np.random.default_rng(7)
    for _ in range(5):
        f = rng.standard_normal(3)
        g = rng.standard_normal(3)
        xf = killed_field.evaluate(batch, f)
        xg = killed_field.evaluate(batch, g)
        emp = np.mean(xf * xg)
        exact = killed_field.covariance(f, g)
        sf = np.sqrt(killed_field.covariance(f, f))
        sg = np.sqrt(killed_field.covariance(g, g))
        assert abs(emp - exact) <= 5.0 * sf * sg / np.sqrt(N)


def test_sigma_field_transient_is_coordinate_span(killed_field):
    W = sigma_field(killed_field, {1})
    assert W.dim == 1
    assert W.contains_vector(np.eye(3)[1])


def test_sigma_field_recurrent_singleton_trivial(recurrent_field):
    assert sigma_field(recurrent_field, {1}).dim == 0
    assert sigma_field(recurrent_field, set()).dim == 0


def test_sigma_field_recurrent_difference_vectors(recurrent_field):
    W = sigma_field(recurrent_field, {0, 2})
    assert W.dim == 1
    v = np.array([1.0, 0.0, -1.0])
    assert W.contains_vector(v / np.linalg.norm(v))


def test_sigma_field_monotone_random():
    rng = np.random.default_rng(11)
    for _ in range(40):
        form = random_transient_form(rng) if rng.random() < 0.5 else random_recurrent_form(rng)
        fld = realize(form)
        A = random_vertex_subset(rng, form.n, allow_empty=True)
        extra = random_vertex_subset(rng, form.n, allow_empty=True, allow_full=True)
        B = A | extra
        WA = sigma_field(fld, A)
        WB = sigma_field(fld, B)
        assert WA.is_subspace_of(WB, 1e-10)


def test_subspace_rejects_out_of_range_vectors(recurrent_field):
    with pytest.raises(ValueError, match="range"):
        FunctionalSubspace.from_vectors(recurrent_field, np.eye(3)[:, :1])


def test_join_and_meet(killed_field):
    e = np.eye(3)
    W0 = FunctionalSubspace.from_vectors(killed_field, e[:, [0]])
    W1 = FunctionalSubspace.from_vectors(killed_field, e[:, [1]])
    assert join(W0, zero_subspace(killed_field)).dim == W0.dim
    j = join(W0, W1)
    assert j.dim == 2
    assert j.contains_vector(e[:, 0]) and j.contains_vector(e[:, 1])

    v1 = np.array([1.0, 1.0, 0.0])
    U1 = FunctionalSubspace.from_vectors(killed_field, np.column_stack([v1, e[:, 2]]))
    U2 = FunctionalSubspace.from_vectors(killed_field, np.column_stack([v1, e[:, 0]]))
    m = meet(U1, U2)
    assert m.dim == 1
    assert m.contains_vector(v1 / np.linalg.norm(v1))


def test_join_meet_field_mismatch(killed_field, recurrent_field):
    with pytest.raises(FieldMismatchError):
        join(sigma_field(killed_field, {0}), sigma_field(recurrent_field, {0, 1}))


def test_cond_expect_full_set_is_the_variable(killed_field):
    f = np.array([1.0, -2.0, 0.5])
    v = cond_expect(killed_field, f, {0, 1, 2})
    np.testing.assert_allclose(v, killed_field.functional_of(f), atol=1e-14)


def test_cond_expect_zero_data(killed_field):
    # Conditioning e_2 on sigma({0}): the extension carries the value at 0,
    # which is 0, so the conditional expectation vanishes.
    v = cond_expect(killed_field, np.eye(3)[2], {0})
    np.testing.assert_allclose(v, 0.0, atol=1e-14)
    # Cross-check by covariance: E(e_2, potential of a point at 0) = 0.
    from markovfield import potential

    u0 = potential(killed_field.form, np.eye(3)[0])
    assert killed_field.covariance(np.eye(3)[2], u0) == pytest.approx(0.0, abs=1e-14)


def test_cond_expect_matches_hand_solve(killed_field):
    MIN3 = np.array([[1.0, 1.0, 1.0], [1.0, 2.0, 2.0], [1.0, 2.0, 3.0]])
    v = cond_expect(killed_field, MIN3[:, 2], {0, 1})
    np.testing.assert_allclose(v, killed_field.functional_of(MIN3[:, 1]), atol=1e-12)


def test_cond_expect_is_projection_random():
    rng = np.random.default_rng(13)
    for _ in range(40):
        transient = rng.random() < 0.5
        form = random_transient_form(rng) if transient else random_recurrent_form(rng)
        fld = realize(form)
        A = random_vertex_subset(rng, form.n)
        f = rng.standard_normal(form.n)
        v = cond_expect(fld, f, A)
        qf = fld.functional_of(f)
        proj = project_functional(fld, qf, sigma_field(fld, A))
        assert np.linalg.norm(v - proj) <= 1e-10 * max(np.linalg.norm(qf), 1.0)


def test_cond_expect_monte_carlo_regression(killed_field):
    N = 100_000
    A = {0, 1}
    f = np.array([0.3, -1.2, 2.0])
    batch = killed_field.sample_batch(N, seed=9)
    y = killed_field.evaluate(batch, f)
    W = sigma_field(killed_field, A)
    X = batch @ W.basis
    design = np.hstack([np.ones((N, 1)), X])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = W.basis @ coef[1:]
    exact = cond_expect(killed_field, f, A)
    err = np.sqrt(killed_field.green.variance(fitted - exact))
    sd = np.sqrt(killed_field.covariance(f, f))
    assert err <= 4.0 * sd * np.sqrt(W.dim / N) + 1e-12


def test_cond_indep_trivial_when_conditioning_absorbs(killed_field):
    U = sigma_field(killed_field, {0})
    W = sigma_field(killed_field, {0, 1})
    V = sigma_field(killed_field, {2})
    res = cond_indep(killed_field, U, V, W)
    assert res.holds and res.max_violation <= 1e-12


def test_cond_indep_path_separation(killed_field):
    res = cond_indep(killed_field,
                     sigma_field(killed_field, {0}),
                     sigma_field(killed_field, {2}),
                     sigma_field(killed_field, {1}))
    assert res.holds


def test_cond_indep_jump_violation_value(jump_field):
    res = cond_indep(jump_field,
                     sigma_field(jump_field, {0}),
                     sigma_field(jump_field, {2}),
                     sigma_field(jump_field, {1}))
    assert not res.holds
    # Conditional covariance of the endpoint pair given the middle vertex:
    # precision block [[3,-1],[-1,2]] inverts to [[2,1],[1,3]]/5, so the
    # conditional correlation is 1/sqrt(6).
    assert res.max_violation == pytest.approx(1.0 / np.sqrt(6.0), rel=1e-10)
    assert res.witness is not None


def test_cond_indep_separating_cut_random():
    # A cut separating the supports in the form graph always yields
    # conditional independence (global Markov property of the precision).
    rng = np.random.default_rng(17)
    for _ in range(30):
        form = random_transient_form(rng, n_min=6)
        fld = realize(form)
        n = form.n
        labels = rng.integers(0, 3, size=n)
        U_set = frozenset(np.flatnonzero(labels == 0).tolist())
        V_set = frozenset(np.flatnonzero(labels == 1).tolist())
        W_set = frozenset(np.flatnonzero(labels == 2).tolist())
        (ei, ej, _), _ = form.decompose()
        crossing = any(
            (a in U_set and b in V_set) or (a in V_set and b in U_set)
            for a, b in zip(ei.tolist(), ej.tolist())
        )
        res = cond_indep(fld, sigma_field(fld, U_set), sigma_field(fld, V_set),
                         sigma_field(fld, W_set))
        if not crossing:
            assert res.holds, f"separated cut failed: {res.max_violation}"


def test_functional_scaling_linearity(killed_field):
    rng = np.random.default_rng(19)
    f = rng.standard_normal(3)
    c = 2.7
    np.testing.assert_allclose(killed_field.functional_of(c * f),
                               c * killed_field.functional_of(f), atol=1e-14)


def test_conditional_resample_fixes_conditioned_functionals(killed_field):
    rng = np.random.default_rng(23)
    base = killed_field.sample_batch(1, seed=3)[0]
    W = sigma_field(killed_field, {0, 1})
    draws = conditional_resample(killed_field, W, base, 50, seed=11)
    np.testing.assert_allclose(draws @ W.basis,
                               np.tile(base @ W.basis, (50, 1)), atol=1e-10)
    # The unconditioned coordinate really moves.
    assert draws[:, 2].std() > 0.1


def test_conditional_resample_distribution(killed_field):
    # Conditional law check: given h restricted to {0,1}, coordinate 2 is
    # Gaussian with mean equal to its harmonic extension value.
    base = killed_field.sample_batch(1, seed=4)[0]
    W = sigma_field(killed_field, {0, 1})
    draws = conditional_resample(killed_field, W, base, 40_000, seed=12)
    h = hitting(killed_field.form, {0, 1}, base)
    cond_mean = h[2]
    # Conditional variance of h_2 given the rest is 1/Q_22.
    cond_var = 1.0 / killed_field.form.dense_q()[2, 2]
    assert abs(draws[:, 2].mean() - cond_mean) <= 5.0 * np.sqrt(cond_var / 40_000)
    assert abs(draws[:, 2].var() - cond_var) <= 5.0 * cond_var * np.sqrt(2.0 / 40_000)
