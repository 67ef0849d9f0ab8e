import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatstab.exceptions import DomainError, PreconditionError
from heatstab.minnorm import (InpProblem, SnpProblem, alpha_coefficients, inp_bounds,
                              inp_terminal, minimize_norm_regularized, snp_bounds, snp_terminal,
                              solve_inp, solve_snp)
from heatstab.spectral import mode
from heatstab.verification import random_unit_states
from oracles import multiplier_bisection

EPS = 1e-3


def snp_oracle(model, p, mask="omega"):
    # control f on the mask; terminal P_M y = beta + K x with x = sqrt(h) f, |x| = |f|_mask
    K = np.sqrt(model.h) * model.eigenvectors[model.mask(mask), :p.M].T
    K = K * alpha_coefficients(model, p.T1, p.T2, p.M)[:, None]
    beta = np.exp(-model.eigenvalues[:p.M] * p.duration) * p.zeta[:p.M]
    return multiplier_bisection(K, beta, p.eps * np.linalg.norm(p.zeta))


def inp_oracle(model, p, mask="omega1"):
    E = np.exp(-model.eigenvalues[:p.M] * (p.T2 - p.tau))
    K = (np.sqrt(model.h) * model.eigenvectors[model.mask(mask), :p.M].T) * E[:, None]
    beta = np.exp(-model.eigenvalues[:p.M] * p.duration) * p.zeta[:p.M]
    return multiplier_bisection(K, beta, p.eps * np.linalg.norm(p.zeta))


def aligned(p, sol, term):
    """Relative distance of P_M y(T2) from -eps |zeta| Phi / |Phi|, Phi = sum b_j xi_j."""
    Phi = sol.minimizer
    target = -p.eps * np.linalg.norm(p.zeta) * Phi / np.linalg.norm(Phi)
    return np.linalg.norm(term[:p.M] - target) / np.linalg.norm(target)


def test_snp_reference_value(model):
    p = SnpProblem(0.0, 0.5, 5, EPS, mode(model, 1))
    sol = solve_snp(model, p)
    assert sol.control_norm == pytest.approx(645.3563139436, rel=1e-9)
    assert sol.control_norm == pytest.approx(snp_oracle(model, p)[1], rel=1e-10)


def test_inp_reference_value(model):
    p = InpProblem(0.0, 0.5, 5, EPS, mode(model, 1), tau=0.25)
    sol = solve_inp(model, p)
    assert sol.control_norm == pytest.approx(821.71873787, rel=1e-9)
    assert sol.control_norm == pytest.approx(inp_oracle(model, p)[1], rel=1e-10)


def test_random_zeta_against_oracle(model, rng):
    for zeta in random_unit_states(model, 20, rng):
        p = SnpProblem(0.0, 0.5, 5, EPS, zeta)
        q = InpProblem(0.0, 0.5, 5, EPS, zeta, tau=0.25)
        s, i = solve_snp(model, p), solve_inp(model, q)
        assert s.kkt_residual <= 1e-8 * s.kkt_scale
        assert i.kkt_residual <= 1e-8 * i.kkt_scale
        assert s.control_norm == pytest.approx(snp_oracle(model, p)[1], rel=1e-6)
        assert i.control_norm == pytest.approx(inp_oracle(model, q)[1], rel=1e-6)
        assert aligned(p, s, snp_terminal(model, p, s.control)) <= 1e-6
        assert aligned(q, i, inp_terminal(model, q, i.control)) <= 1e-6


def test_control_norm_equals_mask_norm(model):
    p = SnpProblem(0.0, 0.5, 4, EPS, mode(model, 2))
    sol = solve_snp(model, p)
    assert sol.control_norm == pytest.approx(np.sqrt(model.h) * np.linalg.norm(sol.control),
                                             rel=1e-12)


def test_minimality_against_feasible_perturbations(model, rng):
    # any other admissible control is at least as large
    p = SnpProblem(0.0, 0.5, 4, EPS, mode(model, 1))
    sol = solve_snp(model, p)
    r = EPS
    for _ in range(50):
        g = sol.control + 1e-3 * np.linalg.norm(sol.control) * rng.standard_normal(sol.control.size)
        t = snp_terminal(model, p, g)
        if np.linalg.norm(t[:4]) <= r:
            assert np.sqrt(model.h) * np.linalg.norm(g) >= sol.control_norm * (1 - 1e-12)


def test_zero_control_iff_free_terminal_in_ball(model):
    z = mode(model, 3)
    lam3 = model.eigenvalues[2]
    free = np.exp(-lam3 * 0.5)
    # exactly at the boundary the zero control is admissible
    p = SnpProblem(0.0, 0.5, 4, free, z)
    assert solve_snp(model, p).is_zero
    assert solve_inp(model, InpProblem(0.0, 0.5, 4, free, z, tau=0.25)).is_zero
    p = SnpProblem(0.0, 0.5, 4, free * (1 - 1e-12), z)
    sol = solve_snp(model, p)
    assert not sol.is_zero and sol.control_norm > 0


def test_mode_outside_projection_needs_no_control(model):
    sol = solve_snp(model, SnpProblem(0.0, 0.5, 3, EPS, mode(model, 7)))
    assert sol.is_zero and sol.control_norm == 0.0


@given(eps=st.floats(1e-6, 0.5), T2=st.floats(0.1, 2.0), M=st.integers(1, 6),
       seed=st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_snp_terminal_constraint_property(model, eps, T2, M, seed):
    zeta = random_unit_states(model, 1, np.random.default_rng(seed))[0]
    p = SnpProblem(0.0, T2, M, eps, zeta)
    sol = solve_snp(model, p)
    term = snp_terminal(model, p, sol.control)
    assert np.linalg.norm(term[:M]) <= eps * (1 + 1e-6)
    if not sol.is_zero:
        assert np.linalg.norm(term[:M]) == pytest.approx(eps, rel=1e-6)


def test_regularized_minimizer_small_problem():
    # 1-D: min 0.5 F^2 b^2 + beta b + r |b| has b = -(|beta| - r) sign(beta) / F^2
    F = np.array([[2.0]])
    b, Fb, kkt, _ = minimize_norm_regularized(F, np.array([3.0]), 1.0)
    assert b[0] == pytest.approx(-0.5, abs=1e-14)
    assert kkt < 1e-12


def test_lower_bounds_hold(model, rng):
    for zeta in random_unit_states(model, 25, rng):
        p = SnpProblem(0.0, 0.5, 5, EPS, zeta)
        q = InpProblem(0.0, 0.5, 5, EPS, zeta, tau=0.25)
        assert solve_snp(model, p).control_norm > snp_bounds(model, p).lower
        assert solve_inp(model, q).control_norm > inp_bounds(model, q).lower


def test_lower_bound_reference(model):
    p = SnpProblem(0.0, 0.5, 5, EPS, mode(model, 1))
    lam1 = model.eigenvalues[0]
    expected = (np.exp(-lam1 * 0.5) - EPS) * lam1 / -np.expm1(-lam1 * 0.5)
    assert snp_bounds(model, p).lower == pytest.approx(expected, rel=1e-12)


def test_upper_bound_is_advisory(model, calibration):
    p = SnpProblem(0.0, 0.5, 5, EPS, mode(model, 1))
    b = snp_bounds(model, p, C0=calibration.C0)
    assert b.upper_advisory > solve_snp(model, p).control_norm


def test_bound_hypotheses_checked(model):
    with pytest.raises(PreconditionError, match="eps"):
        snp_bounds(model, SnpProblem(0.0, 0.5, 2, 0.9, mode(model, 2)))
    with pytest.raises(PreconditionError, match="lambda_M"):
        inp_bounds(model, InpProblem(0.0, 0.5, 1, EPS, mode(model, 1), tau=0.2))


@pytest.mark.parametrize("kwargs", [dict(T1=0.5, T2=0.5), dict(M=0), dict(eps=0.0)])
def test_problem_validation(model, kwargs):
    base = dict(T1=0.0, T2=0.5, M=3, eps=EPS, zeta=mode(model, 1))
    with pytest.raises(DomainError):
        SnpProblem(**{**base, **kwargs})


def test_impulse_time_validated(model):
    with pytest.raises(DomainError):
        InpProblem(0.0, 0.5, 3, EPS, mode(model, 1), tau=0.5)


def test_unreachable_constraint_still_solved(model):
    # eps far below rounding of the free terminal: oracle cannot bracket, solver copes
    p = SnpProblem(0.0, 8.0, 3, 1e-29, mode(model, 1))
    sol = solve_snp(model, p)
    assert np.isfinite(sol.control_norm) and sol.kkt_residual <= 1e-8 * sol.kkt_scale
