import numpy as np
import pytest

from bruteforce import (
    expm_state_distribution,
    moment_from_distribution,
    stationary_null_space,
)
from sepsim.core import Configuration, ModelParams
from sepsim.dual import (
    MAX_DIRECT_PAIR_SIZE,
    DualResult,
    estimate_absorption,
    one_particle_success,
    pair_absorption_exact,
    simulate_dual,
    transient_dual_moment,
)
from sepsim.errors import ResourceError, ValidationError


def test_one_particle_success_is_ruin_probability():
    p = ModelParams(size=9)
    assert one_particle_success(p, 1) == 0.1
    assert one_particle_success(p, 9) == 0.9
    # boundary positions carry their absorbed values
    assert one_particle_success(p, 0) == 0.0
    assert one_particle_success(p, 10) == 1.0
    with pytest.raises(ValidationError):
        one_particle_success(p, 11)
    with pytest.raises(ValidationError):
        one_particle_success(p, -1)


def test_simulate_dual_terminates_and_classifies():
    p = ModelParams(size=3, seed=21)
    died = stuck = 0
    for rep in range(200):
        out = simulate_dual(p, (1, 3), p.stream(rep).generator())
        assert out.total_jumps > 0
        if out.result is DualResult.DIED:
            died += 1
            assert out.final.dead
        else:
            assert out.result is DualResult.ALL_STUCK
            stuck += 1
            assert out.final.stuck_count == 2
            assert out.final.free == ()
    assert died > 0 and stuck > 0


def test_simulate_dual_single_particle_frequency():
    # From x the freeze probability is x/(S+1); check with a crude count.
    p = ModelParams(size=4, seed=33)
    wins = 0
    n = 3000
    for rep in range(n):
        out = simulate_dual(p, (2,), p.stream(rep).generator())
        wins += out.result is DualResult.ALL_STUCK
    est = wins / n
    se = np.sqrt(est * (1 - est) / n)
    assert abs(est - 0.4) < 3.5 * se


def test_simulate_dual_counts_pair_meetings():
    p = ModelParams(size=4, seed=5)
    out = simulate_dual(p, (2, 3), p.stream(0).generator())
    assert out.meeting_count >= 1  # started at distance 1


def test_estimate_absorption_pair_hand_value():
    p = ModelParams(size=2, seed=1)
    est, se = estimate_absorption(p, (1, 2), 100_000, p.stream(0))
    assert abs(est - 1 / 6) < 3.5 * se


def test_estimate_absorption_single_particle():
    p = ModelParams(size=7, seed=2)
    est, se = estimate_absorption(p, (3,), 50_000, p.stream(0))
    assert abs(est - 3 / 8) < 3.5 * se


def test_estimate_absorption_matches_stationary_moment():
    """Duality: the freeze-all probability equals the stationary moment."""
    from sepsim.exact import build_generator, exact_moment, stationary_distribution

    p = ModelParams(size=5, seed=7)
    pi = stationary_distribution(build_generator(p))
    want = exact_moment(pi, (2, 3, 5))
    est, se = estimate_absorption(p, (2, 3, 5), 80_000, p.stream(0))
    assert abs(est - want) < 3.5 * se


def test_pair_absorption_boundary_rows():
    p = ModelParams(size=6)
    pa = pair_absorption_exact(p)
    for y in range(2, 8):
        assert pa.value(0, y) == 0.0
    for x in range(1, 7):
        assert pa.value(x, 7) == x / 7


def test_pair_absorption_hand_value():
    pa = pair_absorption_exact(ModelParams(size=3))
    assert abs(pa.value(1, 3) - 1 / 6) < 1e-12


def test_pair_absorption_methods_agree():
    p = ModelParams(size=9)
    dense = pair_absorption_exact(p, method="dense")
    gs = pair_absorption_exact(p, method="gauss_seidel", tol=1e-13)
    for x, y, v in dense.pairs():
        assert abs(v - gs.value(x, y)) < 1e-9


@pytest.mark.parametrize("size", [2, 3, 4, 6])
def test_pair_absorption_matches_stationary_oracle(size):
    pi = stationary_null_space(size)
    pa = pair_absorption_exact(ModelParams(size=size))
    for x in range(1, size):
        for y in range(x + 1, size + 1):
            want = moment_from_distribution(pi, (x, y), size)
            assert abs(pa.value(x, y) - want) < 1e-10


def test_pair_absorption_harmonic_interior():
    # Away from diagonals and boundaries the value is the mean of its four
    # independent-move neighbors.
    pa = pair_absorption_exact(ModelParams(size=8))
    for x in range(2, 5):
        for y in range(x + 2, 8):
            around = (
                pa.value(x - 1, y)
                + pa.value(x + 1, y)
                + pa.value(x, y - 1)
                + pa.value(x, y + 1)
            )
            assert abs(pa.value(x, y) - around / 4) < 1e-11


def test_pair_absorption_validation_and_caps():
    with pytest.raises(ValidationError):
        pair_absorption_exact(ModelParams(size=1))
    with pytest.raises(ValidationError):
        pair_absorption_exact(ModelParams(size=4), method="cholesky")
    with pytest.raises(ResourceError):
        pair_absorption_exact(ModelParams(size=MAX_DIRECT_PAIR_SIZE + 1))
    pa = pair_absorption_exact(ModelParams(size=4))
    with pytest.raises(ValidationError):
        pa.value(3, 3)
    with pytest.raises(ValidationError):
        pa.value(-1, 2)


def test_transient_dual_moment_time_zero():
    p = ModelParams(size=4, seed=1)
    env = Configuration.from_interior_string("1010")
    est, se = transient_dual_moment(p, (1, 3), env, 0.0, 10, p.stream(0))
    assert est == 1.0 and se == 0.0
    est, se = transient_dual_moment(p, (1, 2), env, 0.0, 10, p.stream(0))
    assert est == 0.0 and se == 0.0


@pytest.mark.parametrize("t,points", [(0.8, (2, 4)), (2.0, (1, 5))])
def test_transient_dual_matches_forward_oracle(t, points):
    # Duality: the dual-walk estimate must match the forward-process moment
    # computed exactly by the dense matrix exponential.
    p = ModelParams(size=5, seed=17)
    env = Configuration.from_interior_string("11100")
    dist = expm_state_distribution(5, env.interior(), t)
    want = moment_from_distribution(dist, points, 5)
    est, se = transient_dual_moment(p, points, env, t, 60_000, p.stream(1))
    assert abs(est - want) < max(3.5 * se, 1e-3)


def test_transient_dual_long_horizon_reaches_absorption():
    # For large t the transient value approaches the absorption probability
    # when the environment is the step profile with full right half.
    p = ModelParams(size=3, seed=3)
    env = Configuration.from_interior_string("111")
    est, se = transient_dual_moment(p, (1, 3), env, 200.0, 40_000, p.stream(0))
    pa = pair_absorption_exact(p)
    # env is all ones, so the product is 1 unless the family died
    assert abs(est - pa.value(1, 3)) < 3.5 * se
