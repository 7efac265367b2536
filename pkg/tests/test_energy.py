import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import special_ortho_group

from lavlab.energy import (
    INFEASIBLE,
    MaterialParams,
    check_coercivity,
    check_lower_bound,
    coercivity_constants,
    default_params,
    derive_gamma,
    energy_density,
    energy_density_sv,
    energy_gradient,
    lower_bound_constants,
    random_deformation_gradients,
    rank_one_convexity_probe,
    singular_values,
    sv_hessian,
)
from lavlab.errors import ParameterError, SingularInputError

P4 = MaterialParams(2, 4.0, 2.0)


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


# --- gamma and the density ------------------------------------------------------

@pytest.mark.parametrize("d,p,q,expected", [
    (2, 4, 2, 4.0),
    (2, 3, 2, 3 * math.sqrt(2) / 2),
    (3, 3.2, 2.2, 3.2 * 3**0.6 / 2.2),
])
def test_derive_gamma_hand_values(d, p, q, expected):
    assert derive_gamma(d, p, q) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("d,p,q", [(2, 2, 1), (3, 2.5, 1), (2, 3, 0), (2, 3, -1)])
def test_derive_gamma_rejects_bad_exponents(d, p, q):
    with pytest.raises(ParameterError):
        derive_gamma(d, p, q)


def test_density_examples():
    assert energy_density(np.eye(2), P4) == pytest.approx(8.0)
    assert energy_density(np.diag([2.0, 0.5]), P4) == pytest.approx(22.0625)
    assert energy_density(np.diag([1.0, -1.0]), P4) == INFEASIBLE
    assert energy_density(np.zeros((2, 2)), P4) == INFEASIBLE


def test_density_sv_examples():
    assert energy_density_sv([1, 1], P4) == pytest.approx(8.0)
    assert energy_density_sv([2, 1], P4) == pytest.approx(26.0)
    assert energy_density_sv([1, 0], P4) == INFEASIBLE
    with pytest.raises(SingularInputError):
        energy_density_sv([1, -1], P4)


def test_singular_values_examples():
    assert np.allclose(singular_values(np.eye(2)), [1, 1])
    assert np.allclose(singular_values(np.diag([3.0, 2.0])), [3, 2])
    for th in np.linspace(0, 2 * math.pi, 7):
        assert np.allclose(singular_values(rotation(th) @ np.diag([2.0, 1.0])), [2, 1])


def test_shape_mismatch_is_rejected():
    with pytest.raises(ParameterError):
        energy_density(np.eye(3), P4)


@pytest.mark.parametrize("d", [2, 3])
def test_identity_is_stress_free(d):
    params = default_params(d)
    assert np.max(np.abs(energy_gradient(np.eye(d), params))) < 1e-13


def test_wrong_gamma_breaks_stress_free_reference():
    bad = MaterialParams(2, 3.0, 2.0, gamma=3.0)
    assert np.max(np.abs(energy_gradient(np.eye(2), bad))) > 0.1


def test_gradient_finite_differences_example():
    F = np.diag([2.0, 1.0])
    G = energy_gradient(F, P4)
    h = 1e-5
    for i in range(2):
        for j in range(2):
            E = np.zeros((2, 2))
            E[i, j] = h
            fd = (energy_density(F + E, P4) - energy_density(F - E, P4)) / (2 * h)
            assert fd == pytest.approx(G[i, j], rel=1e-6, abs=1e-8)


def test_gradient_requires_positive_det():
    with pytest.raises(SingularInputError):
        energy_gradient(np.diag([1.0, -1.0]), P4)


def test_sv_hessian_example():
    H = sv_hessian([1.0, 1.0], P4)
    assert np.allclose(H, [[40, 24], [24, 40]])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.2, 5.0), min_size=2, max_size=3))
def test_sv_hessian_symmetric_and_matches_fd(lam):
    d = len(lam)
    params = default_params(d)
    lam = np.array(lam)
    H = sv_hessian(lam, params)
    assert np.allclose(H, H.T, rtol=1e-12, atol=0)
    h = 1e-4
    for i in range(d):
        for j in range(d):
            ei, ej = np.eye(d)[i] * h, np.eye(d)[j] * h
            fd = (energy_density_sv(lam + ei + ej, params) - energy_density_sv(lam + ei - ej, params)
                  - energy_density_sv(lam - ei + ej, params)
                  + energy_density_sv(lam - ei - ej, params)) / (4 * h * h)
            assert fd == pytest.approx(H[i, j], rel=1e-4, abs=1e-4 * np.max(np.abs(H)))


# --- properties on random gradients ---------------------------------------------

def _random_F(d, seed, n=1):
    return random_deformation_gradients(d, n, seed=seed)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_identity_is_global_minimum(seed, d):
    params = default_params(d)
    F = _random_F(d, seed, 50)
    assert np.all(energy_density(F, params) >= params.identity_energy * (1 - 1e-14))


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_frame_indifference_and_isotropy(seed, d):
    params = default_params(d)
    rng = np.random.default_rng(seed)
    F = _random_F(d, seed, 20)
    R = special_ortho_group.rvs(d, size=20, random_state=rng)
    Q = special_ortho_group.rvs(d, size=20, random_state=rng)
    W = energy_density(F, params)
    assert np.allclose(energy_density(R @ F, params), W, rtol=1e-12, atol=0)
    assert np.allclose(energy_density(F @ Q, params), W, rtol=1e-12, atol=0)
    lam = singular_values(F)
    assert np.allclose(energy_density_sv(lam, params), W, rtol=1e-12, atol=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_gradient_rotates_with_the_frame(seed, d):
    params = default_params(d)
    rng = np.random.default_rng(seed)
    F = _random_F(d, seed, 10)
    R = special_ortho_group.rvs(d, size=10, random_state=rng)
    G = energy_gradient(F, params)
    GR = energy_gradient(R @ F, params)
    scale = np.max(np.abs(G), axis=(1, 2), keepdims=True)
    assert np.all(np.abs(GR - R @ G) <= 1e-10 * scale)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_gradient_matches_central_differences(seed, d):
    params = default_params(d)
    F = _random_F(d, seed, 5)
    G = energy_gradient(F, params)
    h = 1e-6
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d))
            E[i, j] = h
            fd = (energy_density(F + E, params) - energy_density(F - E, params)) / (2 * h)
            assert np.all(np.abs(fd - G[:, i, j]) <= 1e-6 * (np.abs(G[:, i, j]) + 1.0))


def test_random_gradients_respect_determinant_range():
    F = random_deformation_gradients(3, 2000, seed=5, det_range=(0.1, 10))
    det = np.linalg.det(F)
    assert np.all((det > 0.1) & (det < 10))
    again = random_deformation_gradients(3, 2000, seed=5, det_range=(0.1, 10))
    assert np.array_equal(F, again)


# --- constants ------------------------------------------------------------------

@pytest.mark.parametrize("params", [P4, default_params(2), default_params(3),
                                    MaterialParams(3, 4.0, 1.5)])
def test_constant_chain(params):
    c = lower_bound_constants(params)
    d, q = params.d, params.q
    assert c.mu >= d ** (q * d / 2) * (1 - 1e-12)
    assert c.c_hat > 0
    assert c.c == min(c.c_hat, 0.5)


def _mu_oracle(d, q, n=400):
    # brute-force grid over the part of the unit sphere inside (0, 1]^d
    best = math.inf
    if d == 2:
        th = np.linspace(1e-4, math.pi / 2 - 1e-4, 20001)
        lam = np.stack([np.cos(th), np.sin(th)], axis=1)
    else:
        a, b = np.meshgrid(np.linspace(1e-3, math.pi / 2 - 1e-3, n),
                           np.linspace(1e-3, math.pi / 2 - 1e-3, n))
        lam = np.stack([np.sin(a) * np.cos(b), np.sin(a) * np.sin(b), np.cos(a)], -1).reshape(-1, 3)
    P = np.prod(lam, axis=1)
    for j in range(d):
        best = min(best, float(np.min(lam[:, j] ** -2 * P**-q)))
    return best


@pytest.mark.parametrize("d,q", [(2, 2.0), (3, 2.2)])
def test_mu_against_grid_oracle(d, q):
    params = MaterialParams(d, 4.0, q)
    mu = lower_bound_constants(params).mu
    oracle = _mu_oracle(d, q)
    assert mu <= oracle * (1 + 1e-9)
    assert mu == pytest.approx(oracle, rel=1e-4)


def test_c_hat_against_grid_oracle():
    params = P4
    consts = lower_bound_constants(params)
    p, q, g, d = params.p, params.q, params.gamma, params.d
    S = np.exp(np.linspace(-12, 12, 200001))
    ratio = (p * S ** (p - 2) + g * q * consts.mu * S ** (-q * d - 2)) / (p * (p - 1) * S ** (p - 2) + 2)
    assert consts.c_hat <= ratio.min() * (1 + 1e-9)
    assert consts.c_hat == pytest.approx(min(ratio.min(), 1 / (p - 1)), rel=1e-6)


@pytest.mark.parametrize("d", [2, 3])
def test_hessian_bounded_below_on_samples(d):
    params = default_params(d)
    rng = np.random.default_rng(3)
    lam = np.exp(rng.uniform(-1.5, 1.5, size=(1000, d)))
    eig = np.linalg.eigvalsh(sv_hessian(lam, params))
    assert np.all(eig > 0)


def test_lower_bound_examples():
    consts = lower_bound_constants(P4)
    holds, slack = check_lower_bound(np.eye(2), P4, consts)
    assert holds and abs(slack) < 1e-12
    holds, slack = check_lower_bound(np.diag([2.0, 1.0]), P4, consts)
    assert holds
    assert slack == pytest.approx(18.0 - 2 * consts.c)


@pytest.mark.parametrize("d", [2, 3])
def test_lower_bound_on_random_samples(d):
    params = default_params(d)
    consts = lower_bound_constants(params)
    F = random_deformation_gradients(d, 100_000, seed=11, det_range=(0.1, 10))
    holds, _ = check_lower_bound(F, params, consts)
    assert np.all(holds)


@pytest.mark.parametrize("d", [2, 3])
def test_coercivity_two_phase(d):
    params = default_params(d)
    c, b = coercivity_constants(params, n=20000, seed=1)
    assert c > 0
    holds, _ = check_coercivity(np.eye(d), params, c, 0.0)
    assert holds
    fresh = random_deformation_gradients(d, 100_000, seed=99)
    holds, slack = check_coercivity(fresh, params, c, b)
    assert np.all(holds)


def test_cofactor_norm_equals_norm_in_2d():
    from lavlab.energy import cofactor

    F = random_deformation_gradients(2, 100, seed=2)
    assert np.allclose(np.linalg.norm(cofactor(F), axis=(1, 2)), np.linalg.norm(F, axis=(1, 2)))


def test_rank_one_probe_examples():
    ok, _, d2 = rank_one_convexity_probe(np.eye(2), [1.0, 0.3], [0.2, 1.0], P4, half_width=0.1)
    assert ok
    ok, _, d2 = rank_one_convexity_probe(np.eye(2), [0.0, 0.0], [1.0, 1.0], P4)
    assert ok and np.allclose(d2, 0.0)


@pytest.mark.parametrize("d", [2, 3])
def test_rank_one_probe_random(d):
    params = default_params(d)
    rng = np.random.default_rng(4)
    F = random_deformation_gradients(d, 1000, seed=4, det_range=(0.1, 10))
    for k in range(1000):
        a, b = rng.normal(size=d), rng.normal(size=d)
        ok, _, _ = rank_one_convexity_probe(F[k], a, b, params, steps=32)
        assert ok
