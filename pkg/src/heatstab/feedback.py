"""Parameter selection, synthesis and norm of the sampled-data feedback law.

The law maps an observation ``v`` on omega1 to a control on omega,

    F_T(v) = - sum_{j<=N} <v, h_j>_{omega1} f_j,

where f_j and h_j are the minimal-norm distributed and impulse controls
steering the j-th eigenvector.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import eigh

from .exceptions import ConfigurationError, HeatStabError, ResolutionError
from .minnorm import InpProblem, SnpProblem, alpha_coefficients, solve_inp, solve_snp
from .spectral import SpectralModel, mode


@dataclass(frozen=True)
class FeedbackParameters:
    gamma: float
    T: float
    gamma0: float
    c_hat_p: float
    N: int
    M: int
    eps0: float
    C_gamma_T: float
    C0: float
    safety_factor: float | None = None

    @property
    def C1_tilde(self) -> float:
        return self.C0 / 2.0

    def to_json(self) -> dict:
        return asdict(self)


def select_parameters(model: SpectralModel, gamma: float, T: float, C0: float,
                      safety_factor: float | None = None) -> FeedbackParameters:
    """Choose N, M, eps0 and c_hat_p for decay rate ``gamma`` and half-period ``T``."""
    if not (gamma > 0 and T > 0):
        raise ConfigurationError(f"gamma and T must be positive, got gamma={gamma}, T={T}")
    if C0 < 0:
        raise ConfigurationError(f"C0 must be non-negative, got {C0}")
    lam = model.eigenvalues
    g0 = model.gamma0
    if model.m >= model.n:
        raise ResolutionError("no positive eigenvalue on this grid")
    c_hat_p = max(0.0, float(lam[model.m]) - 3.0 * g0)

    N = int(np.count_nonzero(lam < 2.0 * gamma + math.log(9.0) / T))
    if N == 0:
        raise ConfigurationError("no eigenvalue lies below 2*gamma + ln(9)/T")

    C1 = C0 / 2.0
    disc = (C1**2 + 2.0 * T * (math.log(9.0 * math.sqrt(N)) + C1 * (1.0 + g0 ** (2.0 / 3.0)))
            + (4.0 * gamma + 3.0 * g0) * T**2)
    C_gamma_T = ((C1 + math.sqrt(disc)) / T) ** 2 + c_hat_p
    M = int(np.count_nonzero(lam < C_gamma_T))
    trusted = model.resolved_modes()
    if M >= model.n or M > trusted:
        raise ResolutionError(
            f"M = {M} modes are required but the grid resolves only {trusted} to 1%; "
            "increase n_grid")

    eps0 = math.exp(-(2.0 * gamma + 1.5 * g0 + c_hat_p) * T) / (9.0 * math.sqrt(N))
    params = FeedbackParameters(gamma=float(gamma), T=float(T), gamma0=g0, c_hat_p=c_hat_p, N=N,
                                M=M, eps0=eps0, C_gamma_T=C_gamma_T, C0=float(C0),
                                safety_factor=safety_factor)
    problems = []
    if not lam[M - 1] > 0:
        problems.append(f"lambda_M = {lam[M - 1]:.6g} is not positive")
    if M < N:
        problems.append(f"M = {M} < N = {N}")
    if M < model.m + 1:
        problems.append(f"M = {M} < m + 1 = {model.m + 1}")
    if not 0 < eps0 < 1:
        problems.append(f"eps0 = {eps0} outside (0, 1)")
    if problems:
        raise ConfigurationError("; ".join(problems))
    return params


@dataclass
class FeedbackLaw:
    """Rank-N map from omega1 observations to omega controls.

    ``f_list`` rows are grid values on omega, ``h_list`` rows grid values on
    omega1; ``h`` is the grid spacing used for the mask pairings.
    """

    params: FeedbackParameters
    f_list: np.ndarray
    h_list: np.ndarray
    h: float
    op_norm: float = float("nan")
    model_hash: str = ""

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v)

    def apply(self, v: np.ndarray) -> np.ndarray:
        coeffs = self.h * (self.h_list @ np.asarray(v, dtype=float))
        return -(coeffs @ self.f_list)

    def adjoint(self, w: np.ndarray) -> np.ndarray:
        coeffs = self.h * (self.f_list @ np.asarray(w, dtype=float))
        return -(coeffs @ self.h_list)

    @property
    def N(self) -> int:
        return self.f_list.shape[0]

    def f_norms(self) -> np.ndarray:
        return np.sqrt(self.h) * np.linalg.norm(self.f_list, axis=1)

    def h_norms(self) -> np.ndarray:
        return np.sqrt(self.h) * np.linalg.norm(self.h_list, axis=1)

    def to_json(self) -> dict:
        return {
            "params": self.params.to_json(),
            "h": self.h,
            "f_list": [[float(x) for x in row] for row in self.f_list],
            "h_list": [[float(x) for x in row] for row in self.h_list],
            "op_norm": self.op_norm,
            "model_hash": self.model_hash,
        }

    @classmethod
    def from_json(cls, data: dict) -> "FeedbackLaw":
        return cls(params=FeedbackParameters(**data["params"]),
                   f_list=np.array(data["f_list"], dtype=float),
                   h_list=np.array(data["h_list"], dtype=float),
                   h=float(data["h"]), op_norm=float(data["op_norm"]),
                   model_hash=data.get("model_hash", ""))


def synthesize(model: SpectralModel, gamma: float, T: float, C0: float,
               safety_factor: float | None = None) -> FeedbackLaw:
    """Build F_T from N distributed (SNP) and N impulse (INP) minimal-norm controls."""
    params = select_parameters(model, gamma, T, C0, safety_factor)
    f_rows, h_rows = [], []
    for j in range(1, params.N + 1):
        xi = mode(model, j)
        try:
            f = solve_snp(model, SnpProblem(T1=0.0, T2=T / 2, M=params.M, eps=params.eps0, zeta=xi))
            h = solve_inp(model, InpProblem(T1=0.0, T2=T / 2, M=params.M, eps=params.eps0,
                                            zeta=xi, tau=T / 4))
        except HeatStabError as exc:
            raise type(exc)(f"sub-solve for mode j={j} failed: {exc}") from exc
        if f.is_zero or h.is_zero:
            raise ConfigurationError(f"control for mode j={j} vanished (eps0 too large)")
        f_rows.append(f.control)
        h_rows.append(h.control)
    law = FeedbackLaw(params=params, f_list=np.array(f_rows), h_list=np.array(h_rows),
                      h=model.h, model_hash=model.digest)
    law.op_norm = operator_norm(law)
    return law


def zero_law(model: SpectralModel, gamma: float, T: float) -> FeedbackLaw:
    """The null feedback on the same schedule, for open-loop baselines."""
    params = FeedbackParameters(gamma=gamma, T=T, gamma0=model.gamma0, c_hat_p=0.0, N=0, M=0,
                                eps0=0.0, C_gamma_T=0.0, C0=0.0)
    return FeedbackLaw(params=params, f_list=np.zeros((0, model.omega.size)),
                       h_list=np.zeros((0, model.omega1.size)), h=model.h, op_norm=0.0,
                       model_hash=model.digest)


def _psd_sqrt(G):
    w, Q = eigh(G)
    return (Q * np.sqrt(np.clip(w, 0.0, None))) @ Q.T


def operator_norm(law: FeedbackLaw) -> float:
    """Largest singular value of F_T from the N x N Gram matrices of {h_j} and {f_j}."""
    if law.N == 0:
        return 0.0
    Gh = law.h * law.h_list @ law.h_list.T
    Gf = law.h * law.f_list @ law.f_list.T
    S = _psd_sqrt(Gh)
    top = eigh(S @ Gf @ S, eigvals_only=True)[-1]
    return float(np.sqrt(max(top, 0.0)))


def operator_norm_power(law: FeedbackLaw, tol: float = 1e-14, max_iter: int = 10_000,
                        rng=0) -> float:
    """Same quantity by power iteration on ``F_T^* F_T`` over grid functions on omega1."""
    if law.N == 0:
        return 0.0
    rng = np.random.default_rng(rng)
    v = rng.standard_normal(law.h_list.shape[1])
    v /= np.sqrt(law.h) * np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = law.adjoint(law.apply(v))
        nw = np.sqrt(law.h) * np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new = np.sqrt(nw)
        v = w / nw
        if abs(new - est) <= tol * new:
            return float(new)
        est = new
    return float(est)


def m1_bound(gamma0: float, gamma: float, T: float) -> float:
    """Constant-free lower bound on ||F_T||."""
    return float(16.0 * gamma0 / (81.0 * math.expm1(gamma0 * T / 2.0))
                 * math.exp(-(gamma0 / 4.0 + gamma) * T))


def m2_bound(model: SpectralModel, gamma: float, T: float, N: int, C10: float) -> float:
    """Large-T lower bound on ||F_T||; ``C10`` is an uncomputable constant (placeholder)."""
    lam1 = float(model.eigenvalues[0])
    if lam1 == 0.0:
        return float("nan")
    alpha1 = float(alpha_coefficients(model, 0.0, T / 2, 1)[0])
    return float(-lam1 * math.exp(-lam1 * T / 4.0)
                 + lam1 / (-math.expm1(lam1 * T / 2.0)) * math.exp(-(2 * gamma - lam1 / 4.0) * T)
                 - math.sqrt(N) / (9.0 * alpha1)
                 * math.exp(-2 * gamma * T + C10 * (1.0 + 1.0 / T) * (1.0 + gamma)))


def h1_lower_bound(gamma0: float, T: float) -> float:
    """``(8/9) exp(-gamma0 T / 4)``, the lower bound on the first impulse control."""
    return 8.0 / 9.0 * math.exp(-gamma0 * T / 4.0)


@dataclass(frozen=True)
class BoundRow:
    T: float
    op_norm: float
    m1: float
    m2_advisory: float
    N: int
    M: int


def bound_curves(model: SpectralModel, laws, gamma: float, C10: float) -> list[BoundRow]:
    """Per-T table of ||F_T|| against the lower bounds m1 and m2 (advisory)."""
    rows = []
    for law in sorted(laws, key=lambda l: l.params.T):
        T = law.params.T
        rows.append(BoundRow(T=T, op_norm=law.op_norm, m1=m1_bound(model.gamma0, gamma, T),
                             m2_advisory=m2_bound(model, gamma, T, law.N, C10),
                             N=law.params.N, M=law.params.M))
    return rows


@dataclass(frozen=True)
class TrendReport:
    above_m1: bool
    endpoints_above_min: bool
    m1T_ratio: float
    m1T_within_factor2: bool

    @property
    def passed(self) -> bool:
        return self.above_m1 and self.endpoints_above_min and self.m1T_within_factor2

    def to_json(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def trend_report(rows: list[BoundRow]) -> TrendReport:
    """Check ||F_T|| >= m1, blow-up at both sweep ends, and m1(T) ~ 1/T at small T."""
    op = np.array([r.op_norm for r in rows])
    lo = op.min()
    endpoints = bool(len(rows) >= 3 and op[0] > lo and op[-1] > lo)
    ratio = float("nan")
    if len(rows) >= 2:
        a = rows[0].m1 * rows[0].T
        b = rows[1].m1 * rows[1].T
        ratio = max(a, b) / min(a, b)
    return TrendReport(above_m1=bool(all(r.op_norm >= r.m1 for r in rows)),
                       endpoints_above_min=endpoints, m1T_ratio=ratio,
                       m1T_within_factor2=bool(ratio <= 2.0))
