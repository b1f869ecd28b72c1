import numpy as np
import pytest

from robustcbf.graph import hard_adjacency, smooth_adjacency
from robustcbf.robustness import bootstrap_percolate, is_strongly_r_robust_bruteforce
from robustcbf.sigmoid import sigmoid
from robustcbf.smooth import (SmoothParams, composed_cbf, extreme_columns, first_order_chain,
                              hessian_vector_product, hocbf_chain, robustness_margin,
                              robustness_margin_grad, smooth_percolation)
from robustcbf.state import SwarmState
from robustcbf.verification import (fd_composed_gradient, fd_margin_jacobian, informative_state,
                                    random_configuration, rel_error)

SOFT = SmoothParams(r=2, s=0.8, s_A=0.1, delta=3)


def cluster(rng, l=4, f=4, spread=1.5, r=2, leaders_first=True):
    p = rng.uniform(0, spread, (l + f, 2))
    v = rng.normal(size=(l + f, 2))
    return SwarmState(p, v, tuple(range(l)), 3.0)


def test_params_validation():
    with pytest.raises(ValueError):
        SmoothParams(q=1.0)
    with pytest.raises(ValueError):
        SmoothParams(s=0)
    with pytest.raises(ValueError):
        SmoothParams(r=0)
    with pytest.raises(ValueError):
        SmoothParams(r=3).check_network(l=3, f=4)
    with pytest.raises(ValueError):
        SmoothParams(delta=5).check_network(l=3, f=4)
    SmoothParams(r=2, delta=4).check_network(l=3, f=4)


def test_spec_defaults():
    p = SmoothParams()
    assert (p.s, p.s_A, p.q, p.q_A, p.delta, p.epsilon) == (5.0, 10.0, 0.5, 0.5, 4, 1e-4)


def test_depth_one_uses_leader_sum_only(rng):
    st = cluster(rng)
    ab = smooth_adjacency(st.positions, st.R, SOFT.s_A, SOFT.q_A)
    params = SmoothParams(r=2, s=0.8, s_A=0.1, delta=1)
    act = smooth_percolation(ab, 4, params)
    np.testing.assert_allclose(act.final, sigmoid(ab[4:, :4].sum(axis=1) - 2, 0.8, 0.5), rtol=1e-15)


def test_isolated_followers():
    p = np.array([[0, 0], [1, 0], [2, 0], [40, 0], [80, 0]], dtype=float)
    st = SwarmState(p, None, (0, 1, 2), 3.0)
    params = SmoothParams(r=2, delta=2)
    act = smooth_percolation(smooth_adjacency(p, 3.0, params.s_A, params.q_A), 3, params)
    for k in range(1, 3):
        np.testing.assert_allclose(act.iterations[k], sigmoid(-2.0, params.s, params.q))
    h = robustness_margin(st, params)
    np.testing.assert_allclose(h, sigmoid(-2.0, params.s, params.q) - params.epsilon)
    assert np.all(h < 0)


def test_activations_start_at_zero_and_stay_in_range(rng):
    for _ in range(50):
        state, params = random_configuration(rng)
        l = state.l
        order = state.order
        p = state.positions[order]
        act = smooth_percolation(smooth_adjacency(p, state.R, params.s_A, params.q_A), l, params)
        assert np.all(act.iterations[0] == 0)
        for a in act.iterations[1:]:
            assert np.all(a >= -params.q) and np.all(a <= 1.0)


def test_under_approximates_hard_percolation(rng):
    for _ in range(200):
        state, params = random_configuration(rng)
        l = state.l
        p = state.positions[state.order]
        soft = smooth_percolation(smooth_adjacency(p, state.R, params.s_A, params.q_A), l, params)
        hard = bootstrap_percolate(hard_adjacency(p, state.R), range(l), params.r).iterations
        for k in range(1, params.delta + 1):
            hk = hard[min(k, len(hard) - 1)][l:]
            assert np.all(soft.iterations[k] <= hk)
            # strict wherever sigma does not round to the step value
            strict = np.abs(soft.iterations[k] - hk) > 0
            assert np.all(strict | (hk == 1))


def test_margin_implies_robustness(rng):
    hits = 0
    for _ in range(300):
        state, params = random_configuration(rng)
        h = robustness_margin(state, params)
        if np.all(h >= 0):
            hits += 1
            assert is_strongly_r_robust_bruteforce(hard_adjacency(state.positions, 3.0), state.leaders, params.r)
    assert hits > 30


def test_converse_fails_near_range_boundary():
    # strongly 1-robust line graph whose only edge sits a hair inside R
    p = np.array([[0.0, 0.0], [3.0 - 1e-6, 0.0]])
    st = SwarmState(p, None, (0,), 3.0)
    params = SmoothParams(r=1, delta=1)
    assert is_strongly_r_robust_bruteforce(hard_adjacency(p, 3.0), (0,), 1)
    assert robustness_margin(st, params)[0] < 0


def test_leader_order_does_not_matter(rng):
    st = cluster(rng)
    perm = rng.permutation(st.n)
    inv = np.argsort(perm)
    moved = SwarmState(st.positions[perm], st.velocities[perm], tuple(int(inv[i]) for i in st.leaders), 3.0)
    np.testing.assert_allclose(robustness_margin(moved, SOFT), robustness_margin(st, SOFT), rtol=1e-12)


def test_jacobian_matches_finite_differences(rng):
    worst = 0.0
    for _ in range(100):
        state, params = informative_state(rng)
        worst = max(worst, rel_error(robustness_margin_grad(state, params), fd_margin_jacobian(state, params)))
    assert worst < 1e-5


def test_hessian_vector_product_matches_jacobian_differences(rng):
    worst = 0.0
    for _ in range(100):
        state, params = informative_state(rng)
        worst = max(worst, rel_error(hessian_vector_product(state, params),
                                     hessian_vector_product(state, params, method="fd")))
    assert worst < 1e-4


def test_hessian_vector_product_zero_velocity(rng):
    state, params = informative_state(rng)
    assert np.all(hessian_vector_product(state, params, v=np.zeros_like(state.positions)) == 0)


def test_quadratic_form_matches_second_difference(rng):
    state, params = informative_state(rng)
    v = state.velocities
    quad = hessian_vector_product(state, params) @ v.ravel()
    e = 1e-4
    h0 = robustness_margin(state, params)
    hp = robustness_margin(state.with_motion(state.positions + e * v, v), params)
    hm = robustness_margin(state.with_motion(state.positions - e * v, v), params)
    np.testing.assert_allclose(quad, (hp - 2 * h0 + hm) / e ** 2, rtol=1e-4, atol=1e-6)


def test_zero_columns_for_unconnected_agent(rng):
    st = cluster(rng)
    p = st.positions.copy()
    p[-1] = [60.0, 60.0]
    J = robustness_margin_grad(st.with_motion(p, st.velocities), SOFT).reshape(st.f, st.n, 2)
    assert np.all(J[:, -1, :] == 0)


def _activations(state, params):
    p = state.positions[state.order]
    return smooth_percolation(smooth_adjacency(p, state.R, params.s_A, params.q_A), state.l, params).iterations


def _one_signed(J, positions):
    for col in extreme_columns(positions):
        c = J[:, col]
        nz = c[np.abs(c) > 1e-14]
        if not (np.all(nz > 0) or np.all(nz < 0)):
            return False
    return True


def test_extreme_agent_columns_have_one_sign(rng):
    # holds when no intermediate activation is negative (the final one is, via h >= 0)
    checked = 0
    for _ in range(300):
        state, params = informative_state(rng)
        if not np.all(robustness_margin(state, params) >= 0):
            continue
        if min(a.min() for a in _activations(state, params)[1:]) < 0:
            continue
        assert _one_signed(robustness_margin_grad(state, params), state.positions)
        checked += 1
    assert checked > 50


def test_extreme_agent_sign_can_flip_with_negative_intermediate_activation(rng):
    # a negative intermediate activation multiplies an adjacency partial and flips its sign
    found = False
    for _ in range(3000):
        state, params = informative_state(rng)
        if np.all(robustness_margin(state, params) >= 0) and not _one_signed(
                robustness_margin_grad(state, params), state.positions):
            assert min(a.min() for a in _activations(state, params)[1:]) < 0
            found = True
            break
    assert found


def test_chain_with_zero_velocity(rng):
    state, params = informative_state(rng)
    st0 = state.with_motion(state.positions, np.zeros_like(state.velocities))
    ch = hocbf_chain(st0, params, 1.7, 0.6)
    np.testing.assert_allclose(ch.psi1, 1.7 * ch.psi0)


def test_chain_is_affine_in_u(rng):
    state, params = informative_state(rng)
    ch = hocbf_chain(state, params, 1.0, 2.0)
    u = rng.normal(size=state.M)
    np.testing.assert_array_equal(ch.psi2(u), ch.drift + ch.u_coef @ u)


def test_psi0_rate_along_trajectory(rng):
    state, params = informative_state(rng)
    J = robustness_margin_grad(state, params)
    v = state.velocities
    dt = 1e-6
    fwd = robustness_margin(state.with_motion(state.positions + dt * v, v), params)
    back = robustness_margin(state.with_motion(state.positions - dt * v, v), params)
    np.testing.assert_allclose((fwd - back) / (2 * dt), J @ v.ravel(), rtol=1e-4, atol=1e-9)


def test_first_order_chain(rng):
    state, params = informative_state(rng)
    ch = first_order_chain(state, params)
    np.testing.assert_array_equal(ch.psi1, robustness_margin(state, params))
    np.testing.assert_allclose(ch.u_coef, robustness_margin_grad(state, params))


def test_composed_value_near_one():
    class C:
        psi1 = np.array([50.0])
        psi1_dot_drift = np.array([0.0])
        u_coef = np.zeros((1, 4))
        psi1_grad_p = np.zeros((1, 4))
    assert composed_cbf(C, 10.0).value == pytest.approx(1.0)


def test_composed_nonnegative_implies_each_psi1_nonnegative(rng):
    for _ in range(1000):
        f = int(rng.integers(1, 8))
        class C:
            psi1 = rng.normal(size=f) * 3
            psi1_dot_drift = np.zeros(f)
            u_coef = np.zeros((f, 2))
            psi1_grad_p = np.zeros((f, 2))
        w = rng.uniform(0.1, 5, f)
        if composed_cbf(C, w).value >= 0:
            assert np.all(C.psi1 >= 0)


def test_composed_gradient_matches_finite_differences(rng):
    worst = 0.0
    for _ in range(30):
        state, params = informative_state(rng)
        comp = composed_cbf(hocbf_chain(state, params, 1.0, 1.0), 2.0)
        gp, gv = fd_composed_gradient(state, params, 2.0, 1.0, 1.0)
        worst = max(worst, rel_error(comp.grad_p, gp), rel_error(comp.grad_v, gv))
    assert worst < 1e-5


def test_composed_row_nonzero_in_safe_set(rng):
    seen = 0
    for _ in range(100):
        state, params = informative_state(rng)
        if np.all(robustness_margin(state, params) >= 0):
            comp = composed_cbf(hocbf_chain(state, params), 1.0)
            assert np.linalg.norm(comp.u_coef) > 0
            seen += 1
    assert seen > 5
