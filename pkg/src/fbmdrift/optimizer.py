"""Mean-variance selection of a preselected strategy.

Conditioned on the driver's past, terminal wealth from a per-cell
position gamma has mean x0 + (gamma, mu + sigma*DR_H) and variance
(gamma, Gamma gamma), so the penalized program

    maximize (gamma, rhs) - lambda (gamma, Gamma gamma) - k |gamma|^2,
    rhs = mu + sigma * DR_H,

is solved in closed operator form by

    gamma_hat = (1 / (2 lambda)) * (Gamma + k I)^(-1) rhs,

applied pathwise: one past realization gives one rhs and one strategy.
All inner products carry the cell-width weights of the future window.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .decomposition import DecompositionPath
from .fracops import GammaOperator, StrategyVector, quadratic_form

__all__ = [
    "MarketParams",
    "OptimizationResult",
    "SolverError",
    "drift_rhs",
    "solve_optimal",
    "objective",
    "wealth_stats",
]

_RESIDUAL_RTOL = 1.0e-8
_DIRECT_LIMIT = 1024


class SolverError(RuntimeError):
    """Linear solve could not reach the residual tolerance."""


@dataclass(frozen=True)
class MarketParams:
    """Arithmetic price model S(t) = s0 + mu*t + sigma*B_H(t) with a zero
    short rate, risk aversion lam > 0 and investment penalty k > 0.
    """

    mu: float
    sigma: float
    lam: float
    k: float
    s0: float = 1.0
    x0: float = 0.0
    r: float = 0.0

    def __post_init__(self) -> None:
        if not self.lam > 0.0:
            raise ValueError(f"risk aversion lam must be positive, got {self.lam}")
        if not self.k > 0.0:
            raise ValueError(f"investment penalty k must be positive, got {self.k}")
        if self.r != 0.0:
            raise ValueError("only a zero short rate is supported")


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    gamma_hat: StrategyVector
    objective_value: float
    residual_norm: float        # weighted norm of 2*lam*(Gamma+kI)gamma - rhs
    rhs_norm: float
    conditional_mean: float     # E0 X(T), includes x0
    conditional_variance: float
    penalty: float              # k * int gamma^2 dt


def drift_rhs(dr_path: DecompositionPath, market: MarketParams) -> np.ndarray:
    """Per-cell drift rate mu + sigma * DR_H at the cell evaluation times."""
    return market.mu + market.sigma * dr_path.dr_cells


def _check_rhs(op: GammaOperator, rhs: np.ndarray) -> np.ndarray:
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (op.grid.n_future,):
        raise ValueError(
            f"rhs needs {op.grid.n_future} cell values, got shape {rhs.shape}"
        )
    return rhs


def solve_optimal(
    op: GammaOperator,
    rhs: np.ndarray,
    market: MarketParams,
    direct_limit: int = _DIRECT_LIMIT,
) -> OptimizationResult:
    """Solve 2*lam*(Gamma + k I) gamma = rhs on the weighted cell basis.

    Direct symmetric factorization up to `direct_limit` unknowns,
    conjugate gradient with a diagonal preconditioner beyond. Raises
    SolverError if the weighted residual exceeds 1e-8 relative.
    """
    rhs = _check_rhs(op, rhs)
    grid = op.grid
    dt = grid.dt_future
    n = grid.n_future
    A = op.matrix / dt + market.k * np.eye(n)
    if n <= direct_limit:
        base = scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), rhs)
    else:
        diag = np.diag(A)
        base, info = scipy.sparse.linalg.cg(
            A, rhs, rtol=1e-12, atol=0.0, maxiter=20 * n,
            M=scipy.sparse.linalg.LinearOperator(A.shape, lambda x: x / diag),
        )
        if info != 0:
            raise SolverError(f"conjugate gradient did not converge (info={info})")
    gamma = base / (2.0 * market.lam)

    resid = 2.0 * market.lam * (A @ gamma) - rhs
    rhs_norm = sqrt(dt) * float(np.linalg.norm(rhs))
    residual_norm = sqrt(dt) * float(np.linalg.norm(resid))
    if rhs_norm > 0.0 and residual_norm > _RESIDUAL_RTOL * rhs_norm:
        raise SolverError(
            f"residual {residual_norm:.3e} exceeds {_RESIDUAL_RTOL:.0e} * "
            f"|rhs| = {_RESIDUAL_RTOL * rhs_norm:.3e}; grid too ill-conditioned "
            f"or penalty k too small"
        )

    gamma_sv = StrategyVector(grid, gamma)
    qf = quadratic_form(op, gamma_sv)
    obj = objective(gamma_sv, rhs, op, market)
    e0 = market.x0 + dt * float(gamma @ rhs)
    penalty = market.k * dt * float(gamma @ gamma)
    return OptimizationResult(
        gamma_hat=gamma_sv,
        objective_value=obj,
        residual_norm=residual_norm,
        rhs_norm=rhs_norm,
        conditional_mean=e0,
        conditional_variance=qf,
        penalty=penalty,
    )


def objective(
    gamma: StrategyVector,
    rhs: np.ndarray,
    op: GammaOperator,
    market: MarketParams,
) -> float:
    """(gamma, rhs) - lam * (gamma, Gamma gamma) - k * |gamma|^2 with the
    cell-width weights."""
    rhs = _check_rhs(op, rhs)
    if gamma.grid != op.grid:
        raise ValueError("strategy and operator grids do not match")
    dt = op.grid.dt_future
    vals = gamma.values
    return (
        dt * float(vals @ rhs)
        - market.lam * quadratic_form(op, gamma)
        - market.k * dt * float(vals @ vals)
    )


def wealth_stats(
    gamma: StrategyVector,
    dr_path: DecompositionPath,
    op: GammaOperator,
    market: MarketParams,
) -> tuple[float, float]:
    """Conditional mean and variance of terminal wealth given the past:
    E0 X(T) = x0 + int gamma * (mu + sigma*DR_H) dt and
    Var0 X(T) = (gamma, Gamma gamma).
    """
    if gamma.grid != op.grid or dr_path.grid != op.grid:
        raise ValueError("strategy, path and operator grids do not match")
    rhs = drift_rhs(dr_path, market)
    dt = op.grid.dt_future
    e0 = market.x0 + dt * float(gamma.values @ rhs)
    return e0, quadratic_form(op, gamma)
