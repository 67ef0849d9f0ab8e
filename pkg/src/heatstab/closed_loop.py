"""Exact simulation of the sampled-data closed loop in the eigenbasis.

Period i covers [2iT, (2i+2)T): the state is sampled on omega1 at
(2i + 3/4)T, and the resulting control is held on [(2i+1)T, (2i+3/2)T).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DivergenceError, DomainError
from .feedback import FeedbackLaw
from .spectral import SpectralModel, decay_integral, inject, observe

DIVERGENCE_FACTOR = 1e12


@dataclass(frozen=True)
class Schedule:
    T: float

    def period_start(self, i: int) -> float:
        return 2 * i * self.T

    def sample_time(self, i: int) -> float:
        return (2 * i + 0.75) * self.T

    def window(self, i: int) -> tuple[float, float]:
        return (2 * i + 1) * self.T, (2 * i + 1.5) * self.T

    def breakpoints(self, i: int) -> list[float]:
        a, b = self.window(i)
        return [self.period_start(i), self.sample_time(i), a, b, self.period_start(i + 1)]

    def window_index(self, t: float):
        """Index of the actuation window containing ``t``, or None."""
        i = math.floor(t / (2 * self.T))
        a, b = self.window(i)
        return i if a <= t < b else None


@dataclass
class Trajectory:
    T: float
    times: np.ndarray
    states: np.ndarray
    period_norms: np.ndarray
    controls: np.ndarray
    sample_times: np.ndarray
    samples: np.ndarray = field(repr=False, default=None)

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    def control_at(self, t: float) -> np.ndarray:
        """Control applied at time ``t`` (zero outside the actuation windows)."""
        i = Schedule(self.T).window_index(t)
        if i is None or i >= len(self.controls):
            return np.zeros(self.controls.shape[1])
        return self.controls[i]


def _time_grid(schedule: Schedule, n_periods: int, output_dt: float, extra):
    end = schedule.period_start(n_periods)
    marks = [bp for i in range(n_periods) for bp in schedule.breakpoints(i)]
    marks.extend(t for t in extra if 0 <= t <= end)
    marks = sorted(set(marks))
    out = list(np.arange(int(np.floor(end / output_dt + 1e-9)) + 1) * output_dt)
    tol = 1e-12 * max(1.0, end)
    grid = sorted(marks + [t for t in out if min(abs(t - m) for m in marks) > tol and t <= end])
    return np.array(grid)


def simulate(model: SpectralModel, law: FeedbackLaw, y0: np.ndarray, n_periods: int,
             output_dt: float | None = None, disturbances: dict | None = None) -> Trajectory:
    """Run the closed loop for ``n_periods`` periods of length 2T.

    ``y0`` holds eigen-coefficients. ``disturbances`` maps times to
    coefficient vectors added to the state at that instant (after which the
    state is recorded and, at a sample instant, sampled).
    """
    if n_periods < 1:
        raise DomainError(f"n_periods must be >= 1, got {n_periods}")
    T = law.params.T
    if output_dt is None:
        output_dt = T / 4
    if not output_dt > 0:
        raise DomainError(f"output_dt must be positive, got {output_dt}")
    disturbances = dict(disturbances or {})
    schedule = Schedule(T)
    times = _time_grid(schedule, n_periods, output_dt, disturbances)
    lam = model.eigenvalues

    a = np.array(y0, dtype=float)
    norm0 = np.linalg.norm(a)
    limit = DIVERGENCE_FACTOR * norm0
    states = np.empty((times.size, model.n))
    controls = np.zeros((n_periods, model.omega.size))
    samples = np.zeros((n_periods, model.omega1.size))
    period_norms = np.empty(n_periods + 1)
    sample_times = np.array([schedule.sample_time(i) for i in range(n_periods)])
    window_forcing = np.zeros((n_periods, model.n))

    def jump(t, state):
        for td, dy in disturbances.items():
            if abs(td - t) <= 1e-12 * max(1.0, t):
                state = state + np.asarray(dy, dtype=float)
        return state

    a = jump(0.0, a)
    states[0] = a
    period_norms[0] = np.linalg.norm(a)
    for k in range(1, times.size):
        t0, t1 = times[k - 1], times[k]
        dt = t1 - t0
        i = schedule.window_index(t0)
        a = np.exp(-lam * dt) * a
        if i is not None and i < n_periods:
            a = a + decay_integral(lam, dt) * window_forcing[i]
        a = jump(t1, a)
        if not np.all(np.isfinite(a)) or (norm0 > 0 and np.linalg.norm(a) > limit):
            raise DivergenceError(f"state diverged at t = {t1:.6g}", time=float(t1))
        states[k] = a
        p = int(round(t1 / (2 * T)))
        if abs(t1 - schedule.period_start(p)) <= 1e-12 * max(1.0, t1) and 1 <= p <= n_periods:
            period_norms[p] = np.linalg.norm(a)
        q = int(round((t1 / T - 0.75) / 2))
        if 0 <= q < n_periods and abs(t1 - schedule.sample_time(q)) <= 1e-12 * max(1.0, t1):
            samples[q] = observe(model, "omega1", a)
            if law.N:
                controls[q] = law.apply(samples[q])
                window_forcing[q] = inject(model, "omega", controls[q])
    return Trajectory(T=T, times=times, states=states, period_norms=period_norms,
                      controls=controls, sample_times=sample_times, samples=samples)


@dataclass(frozen=True)
class DecayReport:
    worst_two_period_ratio: float
    two_period_ratios: np.ndarray
    worst_bound_ratio: float
    contraction_ok: bool
    bound_ok: bool
    failures: tuple = ()

    @property
    def bound_margin(self) -> float:
        return 1.0 - self.worst_bound_ratio

    @property
    def passed(self) -> bool:
        return self.contraction_ok and self.bound_ok

    def to_json(self) -> dict:
        return {
            "worst_two_period_ratio": self.worst_two_period_ratio,
            "bound_margin": self.bound_margin,
            "pass": self.passed,
            "failures": list(self.failures),
        }


def decay_envelope(law: FeedbackLaw, gamma: float, T: float, t) -> np.ndarray:
    """``(1 + T/2 ||F_T||) e^{(2 gamma0 + 3 gamma) T} e^{-gamma t}`` per unit initial norm."""
    g0 = law.params.gamma0
    return ((1.0 + 0.5 * T * law.op_norm) * np.exp((2.0 * g0 + 3.0 * gamma) * T)
            * np.exp(-gamma * np.asarray(t)))


def verify_decay(traj: Trajectory, law: FeedbackLaw, gamma: float | None = None,
                 T: float | None = None) -> DecayReport:
    """Check the two-period contraction and the pointwise exponential envelope."""
    gamma = law.params.gamma if gamma is None else gamma
    T = law.params.T if T is None else T
    pn = traj.period_norms
    norm0 = pn[0]
    target = math.exp(-2.0 * gamma * T)
    failures = []
    ratios = np.zeros(len(pn) - 1)
    contraction_ok = True
    for n in range(len(pn) - 1):
        ratios[n] = pn[n + 1] / pn[n] if pn[n] > 0 else 0.0
        if pn[n + 1] > target * pn[n] + 1e-9 * norm0:
            contraction_ok = False
            failures.append({"check": "two_period", "n": n, "t": 2 * (n + 1) * T,
                             "ratio": float(ratios[n])})
    if norm0 > 0:
        bound = decay_envelope(law, gamma, T, traj.times) * norm0
        rel = traj.norms / bound
        worst = float(rel.max())
        bad = np.flatnonzero(traj.norms > bound + 1e-9 * norm0)
        for k in bad[:10]:
            failures.append({"check": "envelope", "t": float(traj.times[k]), "ratio": float(rel[k])})
        bound_ok = bad.size == 0
    else:
        worst, bound_ok = 0.0, True
    return DecayReport(worst_two_period_ratio=float(ratios.max()) if ratios.size else 0.0,
                       two_period_ratios=ratios, worst_bound_ratio=worst,
                       contraction_ok=contraction_ok, bound_ok=bound_ok,
                       failures=tuple(failures))
