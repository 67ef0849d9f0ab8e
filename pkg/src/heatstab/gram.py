"""Observation Gram matrices, angles between restricted modes, and C0 calibration.

All quantities are computed from the restricted basis factor
``W = sqrt(h) * xi[mask, :M]`` (so that ``B_M = W^T W``) instead of the
product ``B_M`` itself: the smallest eigenvalues of ``B_M`` fall below
1e-16 for a dozen modes on a narrow mask, which only the factor resolves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr, svd

from .exceptions import ConfigurationError, DegeneracyError, DomainError, ResolutionError
from .spectral import SpectralModel, decay_integral

SINGULAR_TOL = 1e-14
DEGENERACY_TOL = 1e-10


def restricted_factor(model: SpectralModel, mask, M: int) -> np.ndarray:
    """Columns ``sqrt(h) * 1*_mask xi_j`` for ``j = 1..M``."""
    if not (1 <= M <= model.n):
        raise DomainError(f"M must lie in [1, {model.n}], got {M}")
    idx = model.mask(mask)
    return np.sqrt(model.h) * model.eigenvectors[idx, :M]


def gram_spectrum(model: SpectralModel, mask, M: int) -> np.ndarray:
    """Eigenvalues of ``B_M`` in ascending order, as squared singular values of the factor."""
    s = svd(restricted_factor(model, mask, M), compute_uv=False)
    return np.sort(s**2)


def gram_matrix(model: SpectralModel, mask, M: int) -> np.ndarray:
    """Return ``B_M`` with entries ``<1*xi_i, 1*xi_j>_mask``.

    Raises ResolutionError when the smallest eigenvalue drops below 1e-14.
    """
    W = restricted_factor(model, mask, M)
    lo = gram_spectrum(model, mask, M)[0]
    if lo < SINGULAR_TOL:
        raise ResolutionError(
            f"B_{M} is numerically singular (smallest eigenvalue {lo:.3e}); "
            "increase n_grid or reduce M")
    B = W.T @ W
    return 0.5 * (B + B.T)


def gram_inverse_form(model: SpectralModel, mask, M: int, alpha: np.ndarray) -> float:
    """``alpha^T B_M^{-1} alpha`` evaluated through the SVD of the factor."""
    _, s, Vt = svd(restricted_factor(model, mask, M), full_matrices=False)
    c = Vt @ np.asarray(alpha, dtype=float)
    return float(np.sum((c / s) ** 2))


def _angle_table(model: SpectralModel, mask, K: int):
    """theta_k and 1 - theta_k for k = 1..K from one QR of the factor.

    Column k of R splits the (k+1)-th restricted mode into its component
    in the span of the first k modes and the orthogonal residual.
    """
    W = restricted_factor(model, mask, K + 1)
    R = qr(W, mode="r")[0]
    theta = np.empty(K)
    gap = np.empty(K)
    for k in range(1, K + 1):
        proj = np.linalg.norm(R[:k, k])
        res = abs(R[k, k])
        total = np.hypot(proj, res)
        theta[k - 1] = proj / total
        gap[k - 1] = (res / total) ** 2 / (1.0 + theta[k - 1])
    return theta, gap


def theta_sequence(model: SpectralModel, mask, K: int, check: bool = True):
    """Return ``(theta, one_minus_theta)`` arrays for ``k = 1..K``."""
    if K < 1:
        return np.empty(0), np.empty(0)
    if K > model.n - 1:
        raise DomainError(f"k must lie in [1, {model.n - 1}], got {K}")
    theta, gap = _angle_table(model, mask, K)
    if check:
        bad = np.flatnonzero(gap < DEGENERACY_TOL)
        if bad.size:
            k = int(bad[0]) + 1
            raise DegeneracyError(
                f"theta_{k} = 1 - {gap[bad[0]]:.2e}: restricted eigenvectors are nearly "
                "dependent on the mask; refine the grid")
    return theta, gap


def theta(model: SpectralModel, mask, k: int) -> float:
    """Cosine of the angle between ``1*xi_{k+1}`` and ``span{1*xi_i : i <= k}``."""
    th, _ = theta_sequence(model, mask, k)
    return float(th[-1])


def tau(model: SpectralModel, mask, M: int) -> float:
    """Amplification factor ``sqrt(M / prod_{k<M} (1 - theta_k))``; equals 1 for M = 1."""
    if M < 1:
        raise DomainError(f"M must be positive, got {M}")
    if M == 1:
        return 1.0
    _, gap = theta_sequence(model, mask, M - 1)
    return float(np.sqrt(M / np.prod(gap)))


@dataclass(frozen=True)
class GramData:
    B: np.ndarray
    theta: np.ndarray
    one_minus_theta: np.ndarray
    tau: float
    spectrum: np.ndarray


def gram_data(model: SpectralModel, mask, M: int) -> GramData:
    W = restricted_factor(model, mask, M)
    th, gap = theta_sequence(model, mask, M - 1)
    t = 1.0 if M == 1 else float(np.sqrt(M / np.prod(gap)))
    return GramData(B=W.T @ W, theta=th, one_minus_theta=gap, tau=t,
                    spectrum=gram_spectrum(model, mask, M))


def growth_exponent(model: SpectralModel, M: int) -> float:
    """``1 + gamma0^{2/3} + sqrt(lambda_M)``, the growth exponent per unit of C0."""
    lam = model.eigenvalues[M - 1]
    return 1.0 + model.gamma0 ** (2.0 / 3.0) + np.sqrt(max(lam, 0.0))


@dataclass(frozen=True)
class CalibratedConstant:
    """Observability constant fitted so that ``max eig(B_M^{-1}) <= exp(C0 * exponent(M))``."""

    C0: float
    safety_factor: float
    raw_C0: float
    per_M_ratios: list = field(default_factory=list)
    model_hash: str = ""

    @property
    def C1_tilde(self) -> float:
        return self.C0 / 2.0

    def bound(self, model: SpectralModel, M: int) -> float:
        return float(np.exp(self.C0 * growth_exponent(model, M)))

    def to_json(self) -> dict:
        return {
            "C0": self.C0,
            "safety_factor": self.safety_factor,
            "raw_C0": self.raw_C0,
            "per_M_ratios": self.per_M_ratios,
            "model_hash": self.model_hash,
        }

    @classmethod
    def from_json(cls, data: dict) -> "CalibratedConstant":
        return cls(C0=float(data["C0"]), safety_factor=float(data["safety_factor"]),
                   raw_C0=float(data.get("raw_C0", data["C0"] / data["safety_factor"])),
                   per_M_ratios=list(data.get("per_M_ratios", [])),
                   model_hash=data.get("model_hash", ""))


def calibrate_C0(model: SpectralModel, M_range, masks=("omega", "omega1"),
                 safety_factor: float = 1.1) -> CalibratedConstant:
    """Fit C0 as ``max ln(1/lambda_min(B_M)) / exponent(M)`` over admissible M and masks.

    Only M with ``lambda_M >= 0`` are admissible; the fitted value is
    multiplied by ``safety_factor``.
    """
    if safety_factor < 1.0:
        raise ConfigurationError(f"safety_factor must be >= 1, got {safety_factor}")
    Ms = [int(M) for M in M_range if 1 <= int(M) <= model.n and model.eigenvalues[int(M) - 1] >= 0]
    if not Ms:
        raise ConfigurationError("no M in the calibration range has lambda_M >= 0")
    records = []
    raw = 0.0
    for name in masks:
        for M in Ms:
            lo = float(gram_spectrum(model, name, M)[0])
            ratio = float(np.log(1.0 / lo) / growth_exponent(model, M))
            records.append({"mask": name if isinstance(name, str) else "custom",
                            "M": M, "lambda_min": lo, "ratio": ratio})
            raw = max(raw, ratio)
    return CalibratedConstant(C0=raw * safety_factor, safety_factor=float(safety_factor),
                              raw_C0=raw, per_M_ratios=records, model_hash=model.digest)


@dataclass(frozen=True)
class InterpolationReport:
    M: int
    tau: float
    max_ratio: float
    ratios: np.ndarray
    passed: bool


def masked_averages(model: SpectralModel, mask, T1: float, T2: float, a: np.ndarray):
    """Norms of the masked half-interval and full-interval averages of the adjoint flow.

    The adjoint flow ending at ``Phi = sum a_j xi_j`` is
    ``phi(t) = sum e^{-lambda_j (T2 - t)} a_j xi_j``.
    """
    a = np.asarray(a, dtype=float)
    M = a.size
    lam = model.eigenvalues[:M]
    dT = T2 - T1
    full = decay_integral(lam, dT)
    half = np.exp(-lam * dT / 2.0) * decay_integral(lam, dT / 2.0)
    W = restricted_factor(model, mask, M)
    scale = 1.0 / np.sqrt(dT)
    return (scale * np.linalg.norm(W @ (half * a)),
            scale * np.linalg.norm(W @ (full * a)))


def check_interpolation_averages(model: SpectralModel, T1: float, T2: float, M: int,
                                 trials: int = 200, rng=None, mask="omega",
                                 phis=None) -> InterpolationReport:
    """Compare the half-interval masked average against tau_M times the full one.

    ``phis`` (rows of M coefficients) overrides the random draws.
    """
    if not (0 <= T1 < T2):
        raise DomainError(f"need 0 <= T1 < T2, got T1={T1}, T2={T2}")
    t = tau(model, mask, M)
    if phis is None:
        rng = np.random.default_rng(rng)
        phis = rng.standard_normal((trials, M))
    phis = np.atleast_2d(phis)
    ratios = np.empty(len(phis))
    ok = True
    for i, a in enumerate(phis):
        half, full = masked_averages(model, mask, T1, T2, a)
        ratios[i] = half / full
        ok &= half <= t * full + 1e-10 * max(1.0, full)
    return InterpolationReport(M=M, tau=t, max_ratio=float(ratios.max()), ratios=ratios,
                               passed=bool(ok))
