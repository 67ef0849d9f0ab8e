"""Semi-discrete model of A = Δ - V on an interval with Dirichlet conditions.

States are carried as coefficient vectors ``a_j = <y, xi_j>`` in the discrete
eigenbasis, so free evolution and constant-input evolution are exact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .exceptions import ConfigurationError, DomainError, InputError

SERIES_CUTOFF = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    """Grid size, potential and the two subintervals of the model.

    ``potential`` is either a scalar (constant potential) or an array of
    values at the ``n_grid`` interior points.
    """

    n_grid: int = 400
    potential: float | np.ndarray = 0.0
    omega: tuple[float, float] = (0.2 * np.pi, 0.5 * np.pi)
    omega1: tuple[float, float] = (0.55 * np.pi, 0.85 * np.pi)
    domain_length: float = np.pi

    def __post_init__(self):
        if int(self.n_grid) != self.n_grid or self.n_grid < 3:
            raise ConfigurationError(f"n_grid must be an integer >= 3, got {self.n_grid!r}")
        if not (np.isfinite(self.domain_length) and self.domain_length > 0):
            raise ConfigurationError(f"domain_length must be positive, got {self.domain_length!r}")
        for name in ("omega", "omega1"):
            a, b = getattr(self, name)
            if not (0.0 <= a < b <= self.domain_length):
                raise ConfigurationError(
                    f"{name} = ({a}, {b}) must satisfy 0 <= a < b <= {self.domain_length}")

    def potential_values(self) -> np.ndarray:
        v = np.asarray(self.potential, dtype=float)
        if v.ndim == 0:
            v = np.full(self.n_grid, float(v))
        if v.shape != (self.n_grid,):
            raise ConfigurationError(
                f"potential must be a scalar or have {self.n_grid} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InputError("potential contains non-finite entries")
        return v

    def to_dict(self) -> dict:
        v = np.asarray(self.potential, dtype=float)
        return {
            "domain_length": float(self.domain_length),
            "n_grid": int(self.n_grid),
            "potential": float(v) if v.ndim == 0 else [float(x) for x in v],
            "omega": [float(x) for x in self.omega],
            "omega1": [float(x) for x in self.omega1],
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class SpectralModel:
    """Eigen-decomposition of the finite-difference operator ``-A_h``.

    ``eigenvectors[:, j]`` holds the grid values of ``xi_{j+1}``, normalized
    in the discrete inner product ``<u, v> = h * sum(u * v)``.
    """

    config: ModelConfig
    grid: np.ndarray
    h: float
    potential: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    gamma0: float
    m: int
    omega: np.ndarray
    omega1: np.ndarray
    _digest: str = field(default="", repr=False)

    @property
    def n(self) -> int:
        return self.grid.size

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, self.h)

    @property
    def digest(self) -> str:
        return self._digest

    def mask(self, name) -> np.ndarray:
        """Index set for ``"omega"``/``"omega1"``; index arrays pass through."""
        if isinstance(name, str):
            if name not in ("omega", "omega1"):
                raise ConfigurationError(f"unknown mask {name!r}")
            return getattr(self, name)
        return np.asarray(name, dtype=int)

    def to_grid(self, a: np.ndarray) -> np.ndarray:
        return self.eigenvectors @ np.asarray(a, dtype=float)

    def to_coefficients(self, y: np.ndarray) -> np.ndarray:
        return self.h * (self.eigenvectors.T @ np.asarray(y, dtype=float))

    def inner(self, u, v) -> float:
        """Discrete L2 pairing of two grid functions."""
        return float(self.h * np.dot(u, v))

    def resolved_modes(self, rel_tol: float = 0.01) -> int:
        """Number of leading modes whose Laplacian part is resolved to ``rel_tol``.

        Compares the finite-difference symbol ``(4/h^2) sin^2(j pi h / 2L)``
        with the continuous Dirichlet eigenvalue ``(j pi / L)^2``.
        """
        L = self.config.domain_length
        j = np.arange(1, self.n + 1)
        exact = (j * np.pi / L) ** 2
        fd = 4.0 / self.h**2 * np.sin(j * np.pi * self.h / (2 * L)) ** 2
        ok = np.abs(fd - exact) <= rel_tol * exact
        return int(np.argmin(ok)) if not ok.all() else self.n


def _orient(vectors: np.ndarray) -> np.ndarray:
    # first entry above 1e-3 of the column max is made positive
    out = vectors.copy()
    big = np.abs(out) > 1e-3 * np.abs(out).max(axis=0)
    first = np.argmax(big, axis=0)
    signs = np.sign(out[first, np.arange(out.shape[1])])
    signs[signs == 0] = 1.0
    return out * signs


def _interval_mask(grid: np.ndarray, interval, name: str) -> np.ndarray:
    a, b = interval
    idx = np.flatnonzero((grid > a) & (grid < b))
    if idx.size == 0:
        raise ConfigurationError(f"{name} = ({a}, {b}) contains no grid point")
    idx.setflags(write=False)
    return idx


def build_model(cfg: ModelConfig) -> SpectralModel:
    """Assemble and diagonalize ``-A_h = (1/h^2) tridiag(-1, 2, -1) + diag(V)``."""
    n = int(cfg.n_grid)
    V = cfg.potential_values()
    h = cfg.domain_length / (n + 1)
    grid = h * np.arange(1, n + 1)

    diag = 2.0 / h**2 + V
    off = np.full(n - 1, -1.0 / h**2)
    lam, U = eigh_tridiagonal(diag, off)
    xi = _orient(U) / np.sqrt(h)

    for arr in (grid, V, lam, xi):
        arr.setflags(write=False)
    return SpectralModel(
        config=cfg,
        grid=grid,
        h=h,
        potential=V,
        eigenvalues=lam,
        eigenvectors=xi,
        gamma0=float(np.max(np.abs(V))),
        m=int(np.count_nonzero(lam <= 0.0)),
        omega=_interval_mask(grid, cfg.omega, "omega"),
        omega1=_interval_mask(grid, cfg.omega1, "omega1"),
        _digest=cfg.digest(),
    )


def decay_integral(lam, t):
    """Return ``int_0^t exp(-lam s) ds`` elementwise, i.e. ``(1 - e^{-lam t}) / lam``.

    A four-term Taylor series is used when ``|lam t| < 1e-6``.
    """
    lam = np.asarray(lam, dtype=float)
    x = lam * t
    small = np.abs(x) < SERIES_CUTOFF
    safe = np.where(small, 1.0, lam)
    series = t * (1.0 - x / 2.0 + x**2 / 6.0 - x**3 / 24.0)
    with np.errstate(over="ignore"):
        closed = -np.expm1(-x) / safe
    out = np.where(small, series, closed)
    return out if out.ndim else float(out)


def _check_time(t):
    if not t >= 0:
        raise DomainError(f"time must be non-negative, got {t!r}")


def semigroup_apply(model: SpectralModel, t: float, a: np.ndarray) -> np.ndarray:
    """Free evolution ``e^{tA}``: coefficient j is multiplied by ``e^{-lambda_j t}``."""
    _check_time(t)
    return np.exp(-model.eigenvalues * t) * np.asarray(a, dtype=float)


def duhamel_const(model: SpectralModel, t: float, u: np.ndarray, mask="omega") -> np.ndarray:
    """Coefficients of ``int_0^t e^{A(t-s)} 1_mask u ds`` for a constant control ``u``."""
    _check_time(t)
    return decay_integral(model.eigenvalues, t) * inject(model, mask, u)


def project(model: SpectralModel, M: int, a: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto the span of the first ``M`` eigenvectors."""
    if not (1 <= M <= model.n):
        raise DomainError(f"M must lie in [1, {model.n}], got {M}")
    out = np.array(a, dtype=float)
    out[M:] = 0.0
    return out


def observe(model: SpectralModel, mask, a: np.ndarray) -> np.ndarray:
    """Restriction ``1*_mask y`` of the state to the mask grid points."""
    idx = model.mask(mask)
    return model.eigenvectors[idx] @ np.asarray(a, dtype=float)


def inject(model: SpectralModel, mask, values: np.ndarray) -> np.ndarray:
    """Coefficients of the zero extension ``1_mask u`` of mask values ``u``."""
    idx = model.mask(mask)
    values = np.asarray(values, dtype=float)
    if values.shape != idx.shape:
        raise DomainError(f"expected {idx.size} mask values, got shape {values.shape}")
    return model.h * (model.eigenvectors[idx].T @ values)


def mask_inner(model: SpectralModel, u, v) -> float:
    """Pairing ``<u, v>_mask`` of two functions given by their mask values."""
    return float(model.h * np.dot(u, v))


def mask_norm(model: SpectralModel, u) -> float:
    return float(np.sqrt(model.h) * np.linalg.norm(u))


def state_norm(a) -> float:
    """Discrete L2 norm of a state given by its (orthonormal) coefficients."""
    return float(np.linalg.norm(a))


def mode(model: SpectralModel, j: int) -> np.ndarray:
    """Coefficient vector of the eigenvector ``xi_j`` (1-based)."""
    if not (1 <= j <= model.n):
        raise DomainError(f"mode index must lie in [1, {model.n}], got {j}")
    e = np.zeros(model.n)
    e[j - 1] = 1.0
    return e
