"""Self-check battery run by the ``verify`` subcommand.

Each check returns a :class:`CheckResult`; the battery passes only when
every check does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .closed_loop import simulate, verify_decay
from .feedback import (bound_curves, h1_lower_bound, operator_norm_power, synthesize,
                       trend_report, zero_law)
from .gram import (CalibratedConstant, calibrate_C0, check_interpolation_averages,
                   gram_inverse_form, gram_spectrum, theta_sequence)
from .minnorm import (InpProblem, SnpProblem, inp_bounds, inp_terminal, snp_bounds,
                      snp_terminal, solve_inp, solve_snp)
from .spectral import SpectralModel, mode


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "pass": bool(self.passed), "details": self.details}


def random_unit_states(model: SpectralModel, count: int, rng, modes: int = 12) -> np.ndarray:
    """Unit-norm coefficient vectors supported on the lowest ``modes`` eigenvectors."""
    out = np.zeros((count, model.n))
    out[:, :modes] = rng.standard_normal((count, modes))
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def check_spectrum(model: SpectralModel, K: int = 10) -> CheckResult:
    X = model.eigenvectors
    ortho = float(np.abs(model.h * X.T @ X - np.eye(model.n)).max())
    details = {"orthonormality_residual": ortho,
               "eigenvalues": [float(x) for x in model.eigenvalues[:K]],
               "gamma0": model.gamma0, "m": model.m}
    ok = ortho <= 1e-10
    V = model.potential
    if np.ptp(V) == 0:
        L = model.config.domain_length
        j = np.arange(1, K + 1)
        ref = (j * math.pi / L) ** 2 + V[0]
        rel = np.abs(model.eigenvalues[:K] - ref) / np.maximum(np.abs(ref), 1.0)
        details["max_rel_error_vs_continuum"] = float(rel.max())
        ok &= bool(rel.max() <= 0.01)
    return CheckResult("spectrum", bool(ok), details)


def check_gram(model: SpectralModel, cal: CalibratedConstant, Ms=range(1, 13), trials=100,
               rng=None) -> CheckResult:
    rng = np.random.default_rng(rng)
    ok, worst_top, worst_bound = True, 0.0, 0.0
    for name in ("omega", "omega1"):
        for M in Ms:
            s = gram_spectrum(model, name, M)
            worst_top = max(worst_top, float(s[-1]))
            ok &= bool(s[0] > 0 and s[-1] <= 1 + 1e-10)
            if model.eigenvalues[M - 1] < 0:
                continue
            cap = cal.bound(model, M)
            for a in rng.standard_normal((trials, M)):
                r = gram_inverse_form(model, name, M, a) / (cap * float(a @ a))
                worst_bound = max(worst_bound, r)
    ok &= worst_bound <= 1.0
    return CheckResult("gram", bool(ok), {"max_eigenvalue": worst_top,
                                          "worst_bound_ratio": worst_bound, "C0": cal.C0})


def check_theta(model: SpectralModel, K: int = 12, mask="omega") -> CheckResult:
    th, gap = theta_sequence(model, mask, K, check=False)
    ok = bool(np.all(th >= 0) and np.all(gap >= 1e-10))
    return CheckResult("theta", ok, {"mask": mask, "one_minus_theta": [float(g) for g in gap]})


def check_interpolation(model: SpectralModel, rng=None) -> CheckResult:
    rep = check_interpolation_averages(model, 0.0, 0.5, 5, trials=200, rng=rng)
    return CheckResult("interpolation", rep.passed, {"tau": rep.tau, "max_ratio": rep.max_ratio})


def check_solvers(model: SpectralModel, count: int = 20, rng=None, M: int = 5,
                  eps: float = 1e-3) -> CheckResult:
    rng = np.random.default_rng(rng)
    worst_kkt, worst_align, ok = 0.0, 0.0, True
    for zeta in random_unit_states(model, count, rng):
        for kind in ("snp", "inp"):
            if kind == "snp":
                p = SnpProblem(0.0, 0.5, M, eps, zeta)
                sol = solve_snp(model, p)
                term = snp_terminal(model, p, sol.control)
            else:
                p = InpProblem(0.0, 0.5, M, eps, zeta, tau=0.25)
                sol = solve_inp(model, p)
                term = inp_terminal(model, p, sol.control)
            worst_kkt = max(worst_kkt, sol.kkt_residual / sol.kkt_scale)
            if sol.is_zero:
                continue
            # the terminal projection points along -Phi and has length eps |zeta|
            r = eps * np.linalg.norm(zeta)
            err = abs(np.linalg.norm(term[:M]) - r) / r
            worst_align = max(worst_align, err)
    ok = worst_kkt <= 1e-8 and worst_align <= 1e-6
    return CheckResult("solvers", bool(ok), {"worst_kkt_relative": worst_kkt,
                                             "worst_terminal_error": worst_align})


def check_lower_bounds(model: SpectralModel, count: int = 100, rng=None, M: int = 5,
                       eps: float = 1e-3) -> CheckResult:
    rng = np.random.default_rng(rng)
    margin = math.inf
    ok = True
    for zeta in random_unit_states(model, count, rng):
        p = SnpProblem(0.0, 0.5, M, eps, zeta)
        q = InpProblem(0.0, 0.5, M, eps, zeta, tau=0.25)
        for sol, bnd in ((solve_snp(model, p), snp_bounds(model, p)),
                         (solve_inp(model, q), inp_bounds(model, q))):
            margin = min(margin, sol.control_norm - bnd.lower)
            ok &= sol.control_norm > bnd.lower
    return CheckResult("lower_bounds", bool(ok), {"min_margin": margin})


def check_synthesis(model: SpectralModel, law) -> CheckResult:
    power = operator_norm_power(law)
    hn = law.h_norms()
    fn = law.f_norms()
    bound = h1_lower_bound(law.params.gamma0, law.params.T)
    rel = abs(power - law.op_norm) / law.op_norm
    ok = bool(np.all(hn > 0) and np.all(fn > 0) and hn[0] >= bound and rel <= 1e-8)
    return CheckResult("synthesis", ok, {"N": law.params.N, "M": law.params.M,
                                         "eps0": law.params.eps0, "c_hat_p": law.params.c_hat_p,
                                         "op_norm": law.op_norm, "op_norm_power": power,
                                         "h1_norm": float(hn[0]), "h1_lower_bound": bound})


def check_decay(model: SpectralModel, law, periods: int = 10, count: int = 20,
                rng=None) -> CheckResult:
    rng = np.random.default_rng(rng)
    starts = np.vstack([random_unit_states(model, count, rng), mode(model, 1)])
    worst, ok, failures = 0.0, True, []
    for k, y0 in enumerate(starts):
        rep = verify_decay(simulate(model, law, y0, periods), law)
        worst = max(worst, rep.worst_two_period_ratio)
        if not rep.passed:
            ok = False
            failures.append({"start": k, "failures": list(rep.failures)[:3]})
    return CheckResult("decay", ok, {"worst_two_period_ratio": worst,
                                     "target": math.exp(-2 * law.params.gamma * law.params.T),
                                     "failures": failures})


def check_sweep(model: SpectralModel, gamma: float, T_grid, cal: CalibratedConstant):
    laws = [synthesize(model, gamma, T, cal.C0, cal.safety_factor) for T in T_grid]
    rows = bound_curves(model, laws, gamma, cal.C0)
    rep = trend_report(rows)
    # the trend markers depend on the grid, only the lower bound is asserted
    return CheckResult("sweep", rep.above_m1, rep.to_json()), rows


def check_baseline(model: SpectralModel, gamma: float, T: float, periods: int = 10):
    traj = simulate(model, zero_law(model, gamma, T), mode(model, 1), periods)
    ratios = traj.period_norms[1:] / traj.period_norms[:-1]
    expected = math.exp(-2.0 * model.eigenvalues[0] * T)
    rel = float(np.abs(ratios / expected - 1.0).max())
    return CheckResult("baseline", rel <= 1e-9, {"growth_per_period": float(ratios.mean()),
                                                 "expected": expected, "max_rel_error": rel})


def run_battery(model: SpectralModel, gamma: float, T: float, T_grid, cal: CalibratedConstant,
                seed: int = 0, periods: int = 10) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = [check_spectrum(model), check_gram(model, cal, rng=rng), check_theta(model),
               check_interpolation(model, rng=rng), check_solvers(model, rng=rng),
               check_lower_bounds(model, rng=rng)]
    law = synthesize(model, gamma, T, cal.C0, cal.safety_factor)
    results += [check_synthesis(model, law), check_decay(model, law, periods, rng=rng)]
    results.append(check_sweep(model, gamma, T_grid, cal)[0])
    results.append(check_baseline(model, gamma, T, periods))
    return results


def default_calibration(model: SpectralModel, M_range=(2, 12), safety_factor=1.1):
    lo, hi = M_range
    return calibrate_C0(model, range(lo, hi + 1), safety_factor=safety_factor)
