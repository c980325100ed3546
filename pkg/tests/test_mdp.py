import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from markov_ate.chain_core import group_inverse, row_l1_inf_norm, stationary_distribution
from markov_ate.environments import TwoStateParams, random_mdp, random_state_only_mdp, two_state
from markov_ate.errors import InvalidParams, RewardNotStateOnly
from markov_ate.mdp import (
    HALF,
    ExperimentPolicy,
    TwoActionMdp,
    dumps_mdp,
    exact_analytics,
    kth_order_dq_expected,
    load_mdp,
    loads_mdp,
    mixed_kernel,
    save_mdp,
    surrogate_objectives,
    taylor_expand_ate,
    value_function,
)

LAM, MU, P = 0.5, 0.5, 0.5


def closed_form_ate(d):
    return d * MU**2 * LAM / ((MU + LAM * (P + d)) * (MU + LAM * P))


def closed_form_naive(d):
    return d * LAM * MU / (MU + LAM * (P + d / 2))


def direct_dq(d):
    # rho_0 * lam * d * (1 - (V(0) - V(1))) on the randomized two-state chain
    a = LAM * (P + d / 2)
    return LAM * d * MU**2 / (MU + a) ** 2


def test_two_state_closed_forms():
    ex = exact_analytics(two_state())
    assert ex.ate == pytest.approx(closed_form_ate(0.1), abs=1e-12)
    assert ex.ate == pytest.approx(0.0208333333333, abs=1e-12)
    assert ex.naive_expected == pytest.approx(closed_form_naive(0.1), abs=1e-12)
    assert ex.naive_expected == pytest.approx(0.0322580645161, abs=1e-12)
    assert ex.dq_expected == pytest.approx(direct_dq(0.1), abs=1e-14)


@pytest.mark.parametrize("d", [0.01, 0.05, 0.1, 0.3])
def test_two_state_dq_by_hand(d):
    ex = exact_analytics(two_state(TwoStateParams(uplift=d)))
    assert ex.dq_expected == pytest.approx(direct_dq(d), rel=1e-12)


def test_mixed_kernel_examples():
    mdp = two_state()
    assert mixed_kernel(mdp)[0, 1] == pytest.approx(0.275)
    np.testing.assert_array_equal(mixed_kernel(mdp, ExperimentPolicy(1e-300)), mdp.p0)
    same = TwoActionMdp(mdp.p0, mdp.p0, mdp.r0, mdp.r0)
    np.testing.assert_array_equal(mixed_kernel(same), mdp.p0)


@given(st.integers(2, 7), st.integers(0, 5000), st.sampled_from([0.01, 0.05, 0.1]))
def test_exact_analytics_invariants(n, seed, tv):
    mdp = random_mdp(n, seed, tv)
    ex = exact_analytics(mdp)
    assert ex.ate == pytest.approx(ex.rho1 @ mdp.r1 - ex.rho0 @ mdp.r0, abs=1e-12)
    for a, P, r in ((0, mdp.p0, mdp.r0), (1, mdp.p1, mdp.r1)):
        np.testing.assert_allclose(ex.q_mix[:, a], r - ex.lambda_mix + P @ ex.v_mix, atol=1e-10)
    assert abs(ex.rho_mix @ ex.v_mix) < 1e-10
    residual = ex.r_mix - ex.lambda_mix + ex.p_mix @ ex.v_mix - ex.v_mix
    assert np.abs(residual).max() < 1e-9
    identity = ex.naive_expected + ex.rho_mix @ (mdp.p1 - mdp.p0) @ ex.group_inverse_mix @ ex.r_mix
    assert ex.dq_expected == pytest.approx(identity, abs=1e-10)
    G_norm = row_l1_inf_norm(ex.group_inverse_mix)
    assert abs(ex.ate - ex.dq_expected) <= 2 * (ex.delta_tv * G_norm) ** 2 * mdp.r_max + 1e-15


def test_zero_uplift_gives_zero_effects():
    ex = exact_analytics(two_state(TwoStateParams(uplift=0.0)))
    assert ex.ate == ex.naive_expected == ex.dq_expected == 0.0


def test_equal_kernels_reward_only_effect():
    mdp = random_mdp(5, 3, 0.0)
    ex = exact_analytics(mdp)
    assert ex.dq_expected == pytest.approx(ex.naive_expected, abs=1e-14)
    assert ex.dq_expected == pytest.approx(ex.ate, abs=1e-12)


def test_value_function_poisson_equation():
    mdp = random_mdp(4, 1)
    P = mixed_kernel(mdp)
    lam, V = value_function(P, mdp.r0)
    np.testing.assert_allclose(V, mdp.r0 - lam + P @ V, atol=1e-12)


def test_taylor_low_orders():
    mdp = two_state()
    ex = exact_analytics(mdp)
    tx = taylor_expand_ate(mdp, 1)
    assert tx.partial_sums[0] == pytest.approx(ex.naive_expected, abs=1e-12)
    assert tx.partial_sums[1] == pytest.approx(ex.dq_expected, abs=1e-10)
    assert taylor_expand_ate(mdp, 0).partial_sums == [pytest.approx(ex.naive_expected)]


def test_taylor_order_eight_converges():
    mdp = two_state(TwoStateParams(uplift=0.05))
    ate = exact_analytics(mdp).ate
    tx = taylor_expand_ate(mdp, 8)
    errors = [abs(ate - s) for s in tx.partial_sums]
    assert errors[-1] <= tx.remainder_bound
    assert all(b <= a for a, b in zip(errors, errors[1:]))


@given(st.integers(2, 6), st.integers(0, 5000))
def test_taylor_remainder_bound_random(n, seed):
    mdp = random_mdp(n, seed, 0.05)
    ate = exact_analytics(mdp).ate
    for K in range(0, 9):
        tx = taylor_expand_ate(mdp, K)
        assert abs(ate - tx.partial_sums[K]) <= tx.remainder_bound + 1e-13


def test_taylor_converges_to_ate():
    mdp = random_mdp(4, 2, 0.02)
    ex = exact_analytics(mdp)
    assert ex.delta_tv * row_l1_inf_norm(ex.group_inverse_mix) < 1
    assert taylor_expand_ate(mdp, 40).partial_sums[-1] == pytest.approx(ex.ate, abs=1e-14)


def test_taylor_zero_delta():
    mdp = random_mdp(3, 0, 0.0)
    tx = taylor_expand_ate(mdp, 3)
    assert tx.remainder_bound == 0.0
    assert tx.terms[1:] == [0.0, 0.0, 0.0]


def test_taylor_rejects_negative_order():
    with pytest.raises(InvalidParams):
        taylor_expand_ate(two_state(), -1)


def test_kth_order_first_equals_dq():
    mdp = random_state_only_mdp(4, 11, 0.1)
    assert kth_order_dq_expected(mdp, 1) == pytest.approx(exact_analytics(mdp).dq_expected, abs=1e-12)


def test_kth_order_zero_delta():
    mdp = random_state_only_mdp(4, 2, 0.0)
    assert all(kth_order_dq_expected(mdp, K) == 0.0 for K in (1, 2, 3))


def test_kth_order_error_shrinks():
    mdp = random_state_only_mdp(4, 7, 0.1)
    ex = exact_analytics(mdp)
    scale = row_l1_inf_norm(ex.group_inverse_mix) * ex.delta_tv
    errors = []
    for K in (1, 3, 5):
        err = abs(ex.ate - kth_order_dq_expected(mdp, K))
        assert err <= 2 * scale ** (K + 1) * mdp.r_max
        errors.append(err)
    assert errors[0] > errors[1] > errors[2]


def test_kth_order_rejects_action_rewards():
    with pytest.raises(RewardNotStateOnly):
        kth_order_dq_expected(two_state(), 2)
    with pytest.raises(InvalidParams):
        kth_order_dq_expected(random_state_only_mdp(3, 0), 0)


def test_surrogates_coincide_at_behavior():
    mdp = random_mdp(4, 5)
    out = surrogate_objectives(mdp, HALF, 0.5)
    assert out["lambda_tr"] == pytest.approx(out["lambda_true"], abs=1e-13)
    assert out["lambda_dq"] == pytest.approx(out["lambda_true"], abs=1e-13)


def test_surrogate_differences_cancel():
    mdp = random_mdp(5, 9, 0.1)
    s1 = surrogate_objectives(mdp, HALF, 1.0)
    s0 = surrogate_objectives(mdp, HALF, 0.0)
    tr = s1["lambda_tr"] - s0["lambda_tr"]
    dq = s1["lambda_dq"] - s0["lambda_dq"]
    assert tr == pytest.approx(dq, abs=1e-12)
    assert dq == pytest.approx(exact_analytics(mdp).dq_expected, abs=1e-12)


def test_surrogate_gaps_two_state():
    out = surrogate_objectives(two_state(), HALF, 1.0)
    d = 0.1
    assert abs(out["lambda_tr"] - out["lambda_true"]) < 10 * d**2
    assert abs(out["lambda_dq"] - out["lambda_true"]) < 10 * d**2


def test_surrogate_bias_orders():
    deltas = [0.16, 0.08, 0.04, 0.02]
    gaps_tr, gaps_dq = [], []
    for d in deltas:
        out = surrogate_objectives(two_state(TwoStateParams(uplift=d)), HALF, 1.0)
        gaps_tr.append(abs(out["lambda_tr"] - out["lambda_true"]))
        gaps_dq.append(abs(out["lambda_dq"] - out["lambda_true"]))
    x = np.log(deltas)
    slope_tr = np.polyfit(x, np.log(gaps_tr), 1)[0]
    slope_dq = np.polyfit(x, np.log(gaps_dq), 1)[0]
    assert slope_dq >= slope_tr - 0.2


def test_policy_validation():
    with pytest.raises(InvalidParams):
        ExperimentPolicy(0.0)
    with pytest.raises(InvalidParams):
        ExperimentPolicy(1.0)


def test_mdp_validation():
    P = np.full((2, 2), 0.5)
    with pytest.raises(InvalidParams):
        TwoActionMdp(P, np.full((3, 3), 1 / 3), [0, 0], [0, 0])
    with pytest.raises(InvalidParams):
        TwoActionMdp(np.ones((1, 1)), np.ones((1, 1)), [0], [0])
    with pytest.raises(InvalidParams):
        TwoActionMdp(P, P, [0, 0, 0], [0, 0])
    with pytest.raises(InvalidParams):
        TwoActionMdp(P, P, [1, 0], [0, 0], transition_rewards=np.zeros((2, 2, 2)))


def test_reward_tensor_broadcast():
    mdp = random_mdp(3, 0)
    R = mdp.reward_tensor
    np.testing.assert_array_equal(R[1, 2], np.full(3, mdp.r1[2]))


def test_text_round_trip(tmp_path):
    mdp = random_mdp(4, 8)
    back = loads_mdp(dumps_mdp(mdp))
    for a, b in zip((mdp.p0, mdp.p1, mdp.r0, mdp.r1), (back.p0, back.p1, back.r0, back.r1)):
        np.testing.assert_array_equal(a, b)
    path = tmp_path / "inst.txt"
    save_mdp(mdp, path)
    loaded = load_mdp(path)
    assert loaded.name == "inst"
    np.testing.assert_array_equal(loaded.p1, mdp.p1)


def test_text_format_errors():
    with pytest.raises(InvalidParams):
        loads_mdp("")
    with pytest.raises(InvalidParams):
        loads_mdp("2\n1 0\n0 1\n")
    with pytest.raises(InvalidParams):
        loads_mdp("2\n0.5 x\n")
    text = "# comment\n2\n0.5 0.5\n0.5 0.5  # row\n0.5 0.5\n0.5 0.5\n1 0\n0 1\n"
    assert loads_mdp(text).r1[1] == 1.0
