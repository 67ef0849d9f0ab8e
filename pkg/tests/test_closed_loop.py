import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatstab.closed_loop import Schedule, decay_envelope, simulate, verify_decay
from heatstab.exceptions import DivergenceError, DomainError
from heatstab.feedback import zero_law
from heatstab.spectral import inject, mode, observe
from heatstab.verification import random_unit_states


def test_schedule():
    s = Schedule(1.0)
    assert s.sample_time(2) == 4.75
    assert s.window(2) == (5.0, 5.5)
    assert s.window_index(5.2) == 2
    assert s.window_index(5.5) is None and s.window_index(4.9) is None


def test_open_loop_is_exact(model):
    traj = simulate(model, zero_law(model, 0.5, 1.0), mode(model, 1), 3)
    lam1 = model.eigenvalues[0]
    np.testing.assert_allclose(traj.norms, np.exp(-lam1 * traj.times), rtol=1e-12)


def test_zero_initial_state_stays_zero(model, law):
    traj = simulate(model, law, np.zeros(model.n), 4)
    assert np.all(traj.norms == 0)
    assert verify_decay(traj, law).passed


def test_one_period_by_hand(model, law):
    # sample at 3T/4, free flow to T, constant control on [T, 3T/2], free flow to 2T
    T = 1.0
    a0 = mode(model, 1) + 0.3 * mode(model, 2)
    lam = model.eigenvalues
    a = np.exp(-lam * 0.75) * a0
    u = law(observe(model, "omega1", a))
    a = np.exp(-lam * 0.25) * a
    a = np.exp(-lam * 0.5) * a + (-np.expm1(-lam * 0.5) / lam) * inject(model, "omega", u)
    a = np.exp(-lam * 0.5) * a
    traj = simulate(model, law, a0, 1)
    # the feedback term is O(1) and cancels down to O(1e-3): compare on that scale
    np.testing.assert_allclose(traj.states[-1], a, rtol=1e-10, atol=1e-11)
    np.testing.assert_allclose(traj.controls[0], u, rtol=1e-12)
    assert traj.times[-1] == 2 * T


def test_control_held_constant_on_window(model, law):
    traj = simulate(model, law, mode(model, 1), 2)
    assert np.array_equal(traj.control_at(1.1), traj.control_at(1.4))
    assert np.all(traj.control_at(0.5) == 0) and np.all(traj.control_at(1.6) == 0)


def test_output_grid_independent_of_dt(model, law):
    a = simulate(model, law, mode(model, 1), 3, output_dt=0.25)
    b = simulate(model, law, mode(model, 1), 3, output_dt=0.1)
    np.testing.assert_allclose(a.period_norms, b.period_norms, rtol=1e-10, atol=1e-11)


def test_decay_from_unstable_mode(model, law):
    traj = simulate(model, law, mode(model, 1), 10)
    rep = verify_decay(traj, law)
    assert rep.passed
    assert rep.worst_two_period_ratio < math.exp(-1.0)
    assert rep.to_json()["pass"] is True


def test_decay_from_random_states(model, law, rng):
    for y0 in random_unit_states(model, 10, rng):
        assert verify_decay(simulate(model, law, y0, 10), law).passed


@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-6, 1e6))
@settings(max_examples=15, deadline=None)
def test_decay_is_scale_invariant(model, law, seed, scale):
    y0 = random_unit_states(model, 1, np.random.default_rng(seed))[0] * scale
    traj = simulate(model, law, y0, 4)
    assert verify_decay(traj, law).passed


def test_sample_time_disturbance_is_seen(model, law):
    # a jump at the sample instant enters the control of that period
    d = {0.75: 0.1 * mode(model, 2)}
    with_d = simulate(model, law, mode(model, 1), 1, disturbances=d)
    base = simulate(model, law, mode(model, 1), 1)
    lam = model.eigenvalues
    expect = observe(model, "omega1", np.exp(-lam * 0.75) * mode(model, 1) + 0.1 * mode(model, 2))
    np.testing.assert_allclose(with_d.samples[0], expect, rtol=1e-12)
    assert not np.allclose(with_d.controls[0], base.controls[0])


def test_window_disturbance_does_not_change_held_control(model, law):
    # the control is computed from the earlier sample, a later jump only shifts the state
    d = {1.2: 0.1 * mode(model, 3)}
    a = simulate(model, law, mode(model, 1), 1, disturbances=d)
    b = simulate(model, law, mode(model, 1), 1)
    np.testing.assert_array_equal(a.controls, b.controls)
    delta = a.states[-1] - b.states[-1]
    np.testing.assert_allclose(delta, np.exp(-model.eigenvalues * 0.8) * 0.1 * mode(model, 3),
                               atol=1e-12)


def test_envelope_shape(law):
    e = decay_envelope(law, 0.5, 1.0, np.array([0.0, 2.0]))
    assert e[1] / e[0] == pytest.approx(math.exp(-1.0))
    assert e[0] == pytest.approx((1 + 0.5 * law.op_norm) * math.exp(5.5))


def test_verify_decay_reports_failure(model):
    z = zero_law(model, 0.5, 1.0)
    rep = verify_decay(simulate(model, z, mode(model, 1), 3), z)
    assert not rep.contraction_ok
    assert rep.failures and rep.failures[0]["check"] == "two_period"


def test_divergence_guard(model):
    z = zero_law(model, 0.5, 8.0)
    with pytest.raises(DivergenceError) as info:
        simulate(model, z, mode(model, 1), 2)
    assert info.value.time > 0


def test_invalid_arguments(model, law):
    with pytest.raises(DomainError):
        simulate(model, law, mode(model, 1), 0)
    with pytest.raises(DomainError):
        simulate(model, law, mode(model, 1), 1, output_dt=0.0)


def test_baseline_growth(model):
    traj = simulate(model, zero_law(model, 0.5, 1.0), mode(model, 1), 10)
    ratios = traj.period_norms[1:] / traj.period_norms[:-1]
    np.testing.assert_allclose(ratios, math.e**2, rtol=0.01)
