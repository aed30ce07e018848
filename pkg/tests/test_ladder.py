import numpy as np
import pytest

from bruteforce import mc_first_meeting, mc_repeat_meetings
from sepsim.core import ModelParams
from sepsim.errors import ValidationError
from sepsim.ladder import (
    first_meeting_kernel,
    gamma_closed_form,
    ladder_tables,
    p0_independent,
    simulate_aux_walk,
    simulate_hybrid_pair,
)


def test_p0_independent_values():
    p = ModelParams(size=9)
    assert p0_independent(p, 3, 7) == 21 / 100
    assert p0_independent(p, 0, 5) == 0.0
    assert p0_independent(p, 4, 10) == 0.4
    with pytest.raises(ValidationError):
        p0_independent(p, -1, 5)
    with pytest.raises(ValidationError):
        p0_independent(p, 2, 11)


def test_gamma_closed_form_values():
    assert gamma_closed_form(10, 1) == 0.9
    assert abs(gamma_closed_form(10, 2) - 0.81) < 1e-15
    assert gamma_closed_form(2, 3) == 0.125
    assert gamma_closed_form(5, 0) == 1.0
    with pytest.raises(ValidationError):
        gamma_closed_form(1, 2)
    with pytest.raises(ValidationError):
        gamma_closed_form(10, -1)


def test_kernel_hand_values_s3():
    """From (1,3) at S=3: meet at 1 w.p. 1/4, at 2 w.p. 1/4, at 3 w.p. 1/12."""
    k = first_meeting_kernel(ModelParams(size=3), 1, 3)
    assert np.allclose(k.mass[1:], [0.25, 0.25, 1 / 12], rtol=0, atol=1e-12)
    assert abs(k.no_meet_mass - 5 / 12) < 1e-12
    assert k.start == (1, 3)


@pytest.mark.parametrize("size,x,y", [(4, 1, 3), (5, 2, 5), (7, 3, 6), (9, 1, 9)])
def test_kernel_mass_is_a_distribution(size, x, y):
    k = first_meeting_kernel(ModelParams(size=size), x, y)
    assert (k.mass[1:] >= 0).all()
    assert k.no_meet_mass >= 0
    assert abs(k.mass[1:].sum() + k.no_meet_mass - 1.0) < 1e-10


@pytest.mark.parametrize("size,x,y", [(4, 1, 3), (6, 2, 5), (8, 3, 7)])
def test_kernel_total_probability_identity(size, x, y):
    # Conditioning the independent pair on its first meeting position gives
    # back the product formula: sum_n mass(n) * p0(n, n+1) = p0(x, y).
    p = ModelParams(size=size)
    k = first_meeting_kernel(p, x, y)
    total = sum(
        k.mass[n] * p0_independent(p, n, n + 1) for n in range(1, size + 1)
    )
    assert abs(total - p0_independent(p, x, y)) < 1e-10


def test_kernel_matches_mc_oracle():
    size, x, y = 5, 1, 4
    k = first_meeting_kernel(ModelParams(size=size), x, y)
    rng = np.random.default_rng(20240811)
    n = 40_000
    mass_mc, no_meet_mc = mc_first_meeting(size, x, y, rng, n)
    for pos in range(1, size + 1):
        se = np.sqrt(max(k.mass[pos] * (1 - k.mass[pos]), 1e-12) / n)
        assert abs(mass_mc[pos] - k.mass[pos]) < max(3.5 * se, 1e-3)
    se = np.sqrt(k.no_meet_mass * (1 - k.no_meet_mass) / n)
    assert abs(no_meet_mc - k.no_meet_mass) < 3.5 * se


def test_kernel_validation():
    p = ModelParams(size=6)
    with pytest.raises(ValidationError):
        first_meeting_kernel(p, 3, 4)  # gap must be at least 2
    with pytest.raises(ValidationError):
        first_meeting_kernel(p, 0, 3)
    with pytest.raises(ValidationError):
        first_meeting_kernel(p, 2, 7)
    with pytest.raises(ValidationError):
        first_meeting_kernel(ModelParams(size=2), 1, 3)


def test_ladder_hand_values_s3():
    """From (1,3) at S=3: C = (1/2, 1/8, 1/32, ...), P1 = 11/64."""
    t = ladder_tables(ModelParams(size=3), 1, 3, k_max=4)
    assert abs(t.c_start[1] - 0.5) < 1e-12
    assert abs(t.c_start[2] - 0.125) < 1e-12
    assert abs(t.c_start[3] - 1 / 32) < 1e-12
    assert abs(t.c_start[4] - 1 / 128) < 1e-12
    assert abs(t.p[0] - 0.1875) < 1e-15
    assert abs(t.p[1] - 11 / 64) < 1e-12
    assert abs(t.p_inf - 1 / 6) < 1e-10


def test_ladder_geometric_tail_s3():
    # At S=3 every interior meeting sits at n=1 or n=2, and the restart
    # masses repeat exactly, so C shrinks by 1/4 per rung.
    t = ladder_tables(ModelParams(size=3), 1, 3, k_max=8)
    ratios = t.c_start[2:9] / t.c_start[1:8]
    assert np.allclose(ratios, 0.25, rtol=0, atol=1e-10)


@pytest.mark.parametrize("size,x,y", [(5, 1, 3), (8, 2, 6), (12, 4, 9)])
def test_ladder_structure(size, x, y):
    t = ladder_tables(ModelParams(size=size), x, y, k_max=12)
    c = t.c_start[1:]
    gammas = np.array([gamma_closed_form(size, k) for k in range(1, t.k_max + 1)])
    assert ((c > 0) & (c < 1)).all()
    assert (c <= gammas + 1e-15).all()
    assert (np.diff(t.p) <= 1e-15).all()
    # telescoping identity between the rungs and the costs
    cost = 1 / (2 * (size + 1) ** 2)
    assert abs(t.p[0] - t.p[-1] - c.sum() * cost) < 1e-12
    # the ladder approaches the exclusion-pair value from above
    assert t.p[-1] >= t.p_inf - 1e-12
    assert abs(t.p[-1] - t.p_inf) <= t.tail_bound() + 1e-15


def test_ladder_c_matches_mc_oracle():
    size, x, y = 5, 1, 3
    t = ladder_tables(ModelParams(size=size), x, y, k_max=3)
    rng = np.random.default_rng(991)
    n = 30_000
    for k in (1, 2):
        est = mc_repeat_meetings(size, x, y, k, rng, n)
        se = np.sqrt(t.c_start[k] * (1 - t.c_start[k]) / n)
        assert abs(est - t.c_start[k]) < 3.5 * se


def test_ladder_early_stop():
    t = ladder_tables(ModelParams(size=4), 1, 3, k_max=1000)
    assert t.k_max < 1000
    assert gamma_closed_form(4, t.k_max) < 1e-12
    assert t.p.shape == (t.k_max + 1,)


def test_ladder_validation():
    p = ModelParams(size=8)
    with pytest.raises(ValidationError):
        ladder_tables(p, 4, 5, k_max=3)
    with pytest.raises(ValidationError):
        ladder_tables(p, 2, 6, k_max=0)
    with pytest.raises(ValidationError):
        ladder_tables(ModelParams(size=2), 1, 2, k_max=3)


def test_final_bound_holds_on_grid():
    for size in (6, 10):
        p = ModelParams(size=size)
        bound = 1 / (2 * (size + 1)) - 1 / (size + 1) ** 2
        from sepsim.dual import pair_absorption_exact

        pa = pair_absorption_exact(p)
        for x in range(1, size - 1):
            for y in range(x + 2, size + 1):
                gap = p0_independent(p, x, y) - pa.value(x, y)
                assert gap >= -1e-12
                assert gap <= bound


@pytest.mark.parametrize("k", [0, 1, 2])
def test_hybrid_pair_matches_ladder(k):
    p = ModelParams(size=4, seed=14)
    t = ladder_tables(p, 1, 3, k_max=max(k, 1))
    est, se = simulate_hybrid_pair(p, 1, 3, k, 150_000, p.stream(40 + k))
    assert abs(est - t.p[k]) < 3.5 * se


def test_hybrid_pair_large_k_approaches_exclusion_value():
    # With many required meetings the switch almost never happens, so the
    # estimate approaches the pure exclusion-pair probability.
    p = ModelParams(size=3, seed=6)
    est, se = simulate_hybrid_pair(p, 1, 3, 40, 60_000, p.stream(0))
    assert abs(est - 1 / 6) < 3.5 * se


def test_hybrid_pair_validation():
    p = ModelParams(size=5, seed=1)
    with pytest.raises(ValidationError):
        simulate_hybrid_pair(p, 2, 3, 1, 10, p.stream(0))
    with pytest.raises(ValidationError):
        simulate_hybrid_pair(p, 1, 4, -1, 10, p.stream(0))
    with pytest.raises(ValidationError):
        simulate_hybrid_pair(p, 1, 4, 1, 0, p.stream(0))


def test_aux_walk_matches_closed_form():
    r = simulate_aux_walk(10, 3, 120_000, ModelParams(size=10, seed=19).stream(0))
    for k in (1, 2, 3):
        assert abs(r.gamma_mc[k] - r.gamma[k]) < 3.5 * r.gamma_stderr[k]
    # tails are nested by construction
    assert (np.diff(r.gamma_mc) <= 0).all()


def test_aux_walk_small_size():
    # S=2: the walk from 1 hits 0 or 2 in one step, so gamma_1 = 1/2 and
    # every return resets the same coin.
    r = simulate_aux_walk(2, 2, 50_000, ModelParams(size=2, seed=8).stream(0))
    assert abs(r.gamma_mc[1] - 0.5) < 3.5 * r.gamma_stderr[1]
    assert abs(r.gamma_mc[2] - 0.25) < 3.5 * r.gamma_stderr[2]


def test_aux_walk_validation():
    stream = ModelParams(size=4, seed=1).stream(0)
    with pytest.raises(ValidationError):
        simulate_aux_walk(1, 2, 10, stream)
    with pytest.raises(ValidationError):
        simulate_aux_walk(5, 0, 10, stream)
