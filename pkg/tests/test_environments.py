import numpy as np
import pytest

from markov_ate.chain_core import stationary_distribution
from markov_ate.environments import (
    BirthDeathParams,
    RentalParams,
    TwoStateParams,
    birth_death_family,
    build_environment,
    default_boundary_index,
    random_mdp,
    random_state_only_mdp,
    rental_jump_chain,
    two_state,
)
from markov_ate.errors import InvalidConstruction, InvalidParams
from markov_ate.mdp import exact_analytics, mixed_kernel


def test_two_state_rows():
    mdp = two_state()
    np.testing.assert_allclose(mdp.p0[0], [0.75, 0.25])
    np.testing.assert_allclose(mdp.p1[0], [0.7, 0.3])
    np.testing.assert_allclose(mdp.r1, [0.3, 0.0])
    assert mdp.n == 2


def test_two_state_degenerate_and_boundary():
    same = two_state(TwoStateParams(uplift=0.0))
    np.testing.assert_array_equal(same.p0, same.p1)
    assert exact_analytics(same).ate == 0.0
    edge = two_state(TwoStateParams(rent_prob=0.5, uplift=0.5))
    np.testing.assert_allclose(edge.p1[0], [0.5, 0.5])


@pytest.mark.parametrize(
    "kwargs",
    [dict(arrival=0.6, service=0.5), dict(arrival=0.0, service=1.0), dict(rent_prob=0.9, uplift=0.2), dict(uplift=-0.1)],
)
def test_two_state_invalid(kwargs):
    with pytest.raises(InvalidParams):
        TwoStateParams(**kwargs)


def test_rental_structure():
    mdp = rental_jump_chain(RentalParams(capacity=20))
    assert mdp.n == 21
    for a, P in enumerate(mdp.kernels):
        # only -1, 0, +1 moves
        off = np.abs(np.subtract.outer(np.arange(21), np.arange(21))) > 1
        assert np.all(P[off] == 0)
        np.testing.assert_allclose((P * mdp.transition_rewards[a]).sum(axis=1), mdp.rewards[a])
    # no rental possible with zero inventory, no return with full inventory
    assert mdp.r0[0] == 0.0 and mdp.p0[20, 20] + mdp.p0[20, 19] == pytest.approx(1.0)
    assert np.all(mdp.r1[1:] > mdp.r0[1:])


def test_rental_default_effect_is_positive_and_small():
    ex = exact_analytics(rental_jump_chain())
    assert 0.0 < ex.ate < 0.05
    assert ex.naive_expected > ex.ate


@pytest.mark.parametrize("kwargs", [dict(capacity=0), dict(arrival_rate=0), dict(util_treat=-1)])
def test_rental_invalid(kwargs):
    with pytest.raises(InvalidParams):
        RentalParams(**kwargs)


def test_birth_death_geometric_stationary_law():
    mdp = birth_death_family(BirthDeathParams(n_states=6, drift=0.1))
    P = mixed_kernel(mdp)
    rho = stationary_distribution(P)
    np.testing.assert_allclose(rho[1:] / rho[:-1], 0.6, rtol=1e-9)
    assert P[0, 0] == pytest.approx(0.85)
    assert P[5, 5] == pytest.approx(0.75)


def test_birth_death_randomized_chain_is_base_chain():
    for k in (0, 1, 3, 5):
        mdp = birth_death_family(BirthDeathParams(n_states=8, drift=0.1, boundary_index=k))
        base = birth_death_family(BirthDeathParams(n_states=8, drift=0.1, boundary_index=7))
        np.testing.assert_allclose(mixed_kernel(mdp), base.p0, atol=1e-15)
        for s in range(max(k, 1), 7):
            np.testing.assert_allclose(mdp.p1[s, s - 1 : s + 2], [0.25, 0.5, 0.25])
        for s in range(1, min(k, 7)):
            np.testing.assert_array_equal(mdp.p1[s], base.p1[s])


def test_birth_death_rewards_center_treated_gain():
    mdp = birth_death_family(BirthDeathParams(n_states=10))
    assert mdp.state_only_rewards
    assert exact_analytics(mdp).lambda1 == pytest.approx(0.0, abs=1e-15)
    assert np.argmax(mdp.r1) == 9


def test_birth_death_small_drift_is_nearly_symmetric():
    mdp = birth_death_family(BirthDeathParams(n_states=6, drift=1e-9, boundary_index=2))
    np.testing.assert_allclose(mdp.p0, mdp.p1, atol=1e-8)


def test_birth_death_invalid_construction():
    with pytest.raises(InvalidConstruction):
        birth_death_family(BirthDeathParams(n_states=6, drift=0.2, boundary_index=2))


@pytest.mark.parametrize("kwargs", [dict(n_states=1), dict(drift=0.3), dict(drift=0.0), dict(boundary_index=10)])
def test_birth_death_invalid_params(kwargs):
    with pytest.raises(InvalidParams):
        BirthDeathParams(**kwargs)


def test_default_boundary_index():
    # no tail is light enough on small chains
    assert default_boundary_index(10, 0.1) == 1
    k = default_boundary_index(40, 0.1)
    rho = stationary_distribution(birth_death_family(BirthDeathParams(n_states=40, boundary_index=39)).p0)
    assert 1 < k <= 38
    assert rho[k:].sum() <= 0.1 * 0.1 / 40**2
    assert rho[k - 1 :].sum() > 0.1 * 0.1 / 40**2


def test_birth_death_ratio_grows_from_6_to_10():
    from markov_ate.bounds import cramer_rao, dq_asymptotic_variance

    def ratio(n):
        mdp = birth_death_family(BirthDeathParams(n_states=n, drift=0.1))
        return cramer_rao(mdp) / dq_asymptotic_variance(mdp)

    assert ratio(10) > ratio(6)


def test_random_mdp_deterministic():
    a, b = random_mdp(5, 7, 0.05), random_mdp(5, 7, 0.05)
    for x, y in zip((a.p0, a.p1, a.r0, a.r1), (b.p0, b.p1, b.r0, b.r1)):
        np.testing.assert_array_equal(x, y)
    assert a.delta_tv() <= 0.05 + 1e-12
    assert a.meta["delta_tv"] == a.delta_tv()


def test_random_mdp_zero_scale():
    mdp = random_mdp(4, 3, 0.0)
    np.testing.assert_array_equal(mdp.p0, mdp.p1)


def test_random_state_only():
    mdp = random_state_only_mdp(4, 3)
    assert mdp.state_only_rewards


def test_random_mdp_invalid():
    with pytest.raises(InvalidParams):
        random_mdp(1, 0)
    with pytest.raises(InvalidParams):
        random_mdp(3, 0, 2.0)


def test_build_environment():
    assert build_environment("two_state", uplift=0.2).p1[0, 1] == pytest.approx(0.35)
    assert build_environment("rental", capacity=5).n == 6
    assert build_environment("birth_death", n_states=7).n == 7
    assert build_environment("random", n=3, seed=1, state_only=True).state_only_rewards
    with pytest.raises(InvalidParams):
        build_environment("nope")
