"""Time grids, the seeded Brownian driver, and an exact-covariance
fractional Brownian oracle.

Everything downstream is a linear functional of one standard Brownian
motion simulated as independent per-cell increments on a two-window
grid: a truncated past window [s - L, s] and a future window [s, T].
The oracle samples a fractional Brownian vector directly from its
covariance factorization and is used only to validate the kernel-based
machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "HurstParams",
    "TimeGrid",
    "BrownianDriver",
    "make_hurst_params",
    "make_grid",
    "sample_driver",
    "fbm_covariance",
    "simulate_fbm_exact",
]

# Stream tags keep the independent RNG streams derived from one user
# seed from colliding.
_DRIVER_STREAM = 0x00D21FE2
_ORACLE_STREAM = 0x0FBAC1E5


@dataclass(frozen=True)
class HurstParams:
    """Hurst exponent H in the open interval (1/2, 1) together with the
    normalization constant of the moving-average kernel representation,

        c_H = sqrt( 2H * G(3/2 - H) / (G(1/2 + H) * G(2 - 2H)) ),

    where G is the gamma function. With this constant the simulated
    process has Var B_H(1) = 1.
    """

    H: float
    c_H: float = field(init=False)

    def __post_init__(self) -> None:
        H = float(self.H)
        if not (0.5 < H < 1.0):
            raise ValueError(f"Hurst exponent must lie in (1/2, 1), got {H}")
        c = math.sqrt(
            2.0 * H * math.gamma(1.5 - H)
            / (math.gamma(0.5 + H) * math.gamma(2.0 - 2.0 * H))
        )
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "c_H", c)

    @property
    def a(self) -> float:
        """Kernel exponent H - 1/2, in (0, 1/2)."""
        return self.H - 0.5


def make_hurst_params(H: float) -> HurstParams:
    """Validate H and compute the kernel normalization constant."""
    return HurstParams(H)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform discretization of the past window [s - L, s] (n_past cells)
    and the future window [s, T] (n_future cells).
    """

    s: float
    T: float
    L: float
    n_past: int
    n_future: int

    def __post_init__(self) -> None:
        if not self.T > self.s:
            raise ValueError(f"horizon T={self.T} must exceed the origin s={self.s}")
        if not self.L > 0.0:
            raise ValueError(f"past depth L must be positive, got {self.L}")
        if self.n_past < 1:
            raise ValueError(f"n_past must be >= 1, got {self.n_past}")
        if self.n_future < 2:
            raise ValueError(f"n_future must be >= 2, got {self.n_future}")

    @property
    def dt_past(self) -> float:
        return self.L / self.n_past

    @property
    def dt_future(self) -> float:
        return (self.T - self.s) / self.n_future

    @cached_property
    def past_nodes(self) -> np.ndarray:
        """n_past + 1 nodes from s - L up to s inclusive."""
        nodes = np.linspace(self.s - self.L, self.s, self.n_past + 1)
        nodes.flags.writeable = False
        return nodes

    @cached_property
    def future_nodes(self) -> np.ndarray:
        """n_future + 1 nodes from s up to T inclusive."""
        nodes = np.linspace(self.s, self.T, self.n_future + 1)
        nodes.flags.writeable = False
        return nodes

    @property
    def n_cells(self) -> int:
        return self.n_past + self.n_future


def make_grid(s: float, T: float, L: float, n_past: int, n_future: int) -> TimeGrid:
    """Build the two-window grid, validating every precondition."""
    return TimeGrid(float(s), float(T), float(L), int(n_past), int(n_future))


@dataclass(frozen=True, eq=False)
class BrownianDriver:
    """Per-cell Gaussian increments of the driving Brownian motion.

    increments[j] ~ N(0, cell width), past cells first (oldest to
    newest), then future cells. Identical (grid, seed) reproduce
    bit-identical increments.
    """

    grid: TimeGrid
    seed: int
    increments: np.ndarray

    def __post_init__(self) -> None:
        if self.increments.shape != (self.grid.n_cells,):
            raise ValueError(
                f"driver needs {self.grid.n_cells} increments, "
                f"got {self.increments.shape}"
            )

    @property
    def past_increments(self) -> np.ndarray:
        return self.increments[: self.grid.n_past]

    @property
    def future_increments(self) -> np.ndarray:
        return self.increments[self.grid.n_past:]


def sample_driver(grid: TimeGrid, seed: int) -> BrownianDriver:
    """Draw independent mean-zero Gaussian increments with variance equal
    to the cell width for every cell of both windows.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _DRIVER_STREAM]))
    z = rng.standard_normal(grid.n_cells)
    z[: grid.n_past] *= math.sqrt(grid.dt_past)
    z[grid.n_past:] *= math.sqrt(grid.dt_future)
    z.flags.writeable = False
    return BrownianDriver(grid=grid, seed=int(seed), increments=z)


def fbm_covariance(t1: float, t2: float, params: HurstParams) -> float:
    """Covariance of the normalized process at nonnegative times:
    (|t1|^2H + |t2|^2H - |t1 - t2|^2H) / 2.
    """
    if np.any(np.asarray(t1) < 0.0) or np.any(np.asarray(t2) < 0.0):
        raise ValueError("covariance oracle is defined for nonnegative times")
    twoH = 2.0 * params.H
    return 0.5 * (
        np.abs(t1) ** twoH + np.abs(t2) ** twoH - np.abs(np.subtract(t1, t2)) ** twoH
    )


def simulate_fbm_exact(
    times: np.ndarray, params: HurstParams, seed: int
) -> np.ndarray:
    """One Gaussian sample whose covariance on `times` is exactly
    fbm_covariance, by dense Cholesky factorization of the covariance
    matrix (with a single diagonal-jitter retry of 1e-12 * max diagonal).

    Intended as a distributional oracle for small node sets, not a fast
    path generator.
    """
    t = np.asarray(times, dtype=float)
    if t.size == 0:
        return np.empty(0)
    if np.any(t < 0.0):
        raise ValueError("times must be nonnegative")
    if t.size > 1 and not np.all(np.diff(t) > 0.0):
        raise ValueError("times must be strictly increasing")
    cov = fbm_covariance(t[:, None], t[None, :], params)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * float(np.max(np.diag(cov)))
        try:
            chol = np.linalg.cholesky(cov + jitter * np.eye(t.size))
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                "covariance factorization failed; times are likely "
                "duplicated or nearly duplicated"
            ) from exc
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _ORACLE_STREAM]))
    return chol @ rng.standard_normal(t.size)
