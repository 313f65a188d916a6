"""Continuation in the utility weight: the whole family of optimal solutions
is traced by integrating an ODE in the scalar weight ``zeta``.

Average reward: the relative value function solves ``dh/dzeta = V(h)``, where
``V(h)`` is the basepoint-normalized Poisson solution for the chain obtained
by tilting the nominal rule with ``h``.  The optimal average reward ``eta``
rides along with derivative ``pi(U)``.  Finite horizon: the stacked value
functions solve a block ODE whose right-hand side is a truncated
fundamental-matrix sum, evaluated with matrix-vector products only.

Both routes ship with classical fixed-point oracles (relative value
iteration, backward dynamic programming) so every result is independently
checkable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain_solvers import poisson_solve, recurrent_class
from .errors import ConvergenceError, ResidualToleranceError
from .kl_calculus import _tilt_values
from .state_space import (
    FactoredKernel,
    StochasticMatrix,
    ValueFunction,
    induced_transition,
    induced_transition_values,
)


@dataclass(frozen=True)
class OdeConfig:
    """Integration grid and post-hoc verification tolerance.

    ``max_move`` caps the sup-norm change of the value vector per internal
    integrator substep.  Grid intervals where the vector field is large (the
    family has a steep start when the nominal chain mixes slowly) are
    subdivided accordingly; the reporting grid itself stays fixed-step.
    """

    zeta_max: float
    step: float = 0.01
    checkpoints: tuple[float, ...] | None = None
    residual_tol: float = 1e-6
    max_move: float = 0.05

    def __post_init__(self):
        if self.zeta_max < 0:
            raise ValueError("zeta_max must be >= 0")
        if self.step <= 0:
            raise ValueError("step must be > 0")
        if self.max_move <= 0:
            raise ValueError("max_move must be > 0")
        if self.checkpoints is not None:
            cps = tuple(sorted(float(c) for c in self.checkpoints))
            for c in cps:
                if c < 0 or c > self.zeta_max + 1e-12:
                    raise ValueError(f"checkpoint {c} outside [0, {self.zeta_max}]")
            object.__setattr__(self, "checkpoints", cps)


@dataclass(frozen=True)
class PathCheckpoint:
    """Full solution snapshot at one value of the weight."""

    zeta: float
    h: ValueFunction
    eta: float
    tilted_rule: StochasticMatrix
    controlled_P: StochasticMatrix
    aroe_residual_sup: float


@dataclass(frozen=True)
class ZetaSolutionPath:
    """Checkpoints plus the average-reward trace over the full integration grid."""

    checkpoints: list[PathCheckpoint]
    grid: np.ndarray
    eta_trace: np.ndarray
    residual_trace: np.ndarray
    snapped: list[tuple[float, float]] = field(default_factory=list)


@dataclass(frozen=True)
class FhCheckpoint:
    """Stacked finite-horizon values (rows 0..T) and the stage policies."""

    zeta: float
    W: np.ndarray
    policies: list[StochasticMatrix]


@dataclass(frozen=True)
class FiniteHorizonPath:
    horizon: int
    checkpoints: list[FhCheckpoint]
    snapped: list[tuple[float, float]] = field(default_factory=list)


def _zeta_grid(cfg: OdeConfig) -> np.ndarray:
    n = int(np.floor(cfg.zeta_max / cfg.step + 1e-9))
    nodes = cfg.step * np.arange(n + 1)
    if cfg.zeta_max - nodes[-1] > 1e-12:
        nodes = np.append(nodes, cfg.zeta_max)
    return nodes


def _snap_checkpoints(cfg: OdeConfig, grid: np.ndarray) -> tuple[dict[int, float], list[tuple[float, float]]]:
    requested = cfg.checkpoints if cfg.checkpoints is not None else (float(grid[-1]),)
    by_node: dict[int, float] = {}
    snapped = []
    for c in requested:
        i = int(np.argmin(np.abs(grid - c)))
        if abs(grid[i] - c) > 1e-12:
            snapped.append((c, float(grid[i])))
        by_node[i] = float(grid[i])
    return by_node, snapped


def ar_vector_field(h: ValueFunction, model: FactoredKernel, utility: np.ndarray) -> ValueFunction:
    """Poisson solution for the chain tilted by ``h``, pinned at the basepoint of ``h``."""
    rule, _ = _tilt_values(h.values, model)
    P_h = StochasticMatrix(induced_transition_values(rule, model.Q0.entries))
    return poisson_solve(P_h, utility, h.basepoint).poisson_solution


def solve_average_reward(
    model: FactoredKernel,
    utility: np.ndarray,
    cfg: OdeConfig,
    basepoint: int = 0,
) -> ZetaSolutionPath:
    """Integrate the average-reward continuation ODE from the nominal solution.

    Classical RK4 on the joint state ``(h, eta)`` with ``dh/dzeta`` the
    Poisson solution of the tilted chain and ``deta/dzeta`` the invariant mean
    of the utility.  The optimality-equation residual
    ``sup_x |zeta U + Lambda_h - h - eta|`` is recorded at every grid node and
    enforced at checkpoints.
    """
    U = np.asarray(utility, dtype=float)
    d = model.space.d
    if U.size != d:
        raise ValueError(f"utility has length {U.size}, expected {d}")

    # The tilt never changes the support pattern, so structure is checked once.
    P0 = induced_transition(model)
    members = recurrent_class(P0)
    if basepoint not in members:
        raise ValueError(f"basepoint {basepoint} is transient; it must be in the recurrent class")

    grid = _zeta_grid(cfg)
    cp_nodes, snapped = _snap_checkpoints(cfg, grid)

    def rhs(h_arr: np.ndarray) -> tuple[np.ndarray, float]:
        rule, _ = _tilt_values(h_arr, model)
        P_h = StochasticMatrix(induced_transition_values(rule, model.Q0.entries))
        analysis = poisson_solve(P_h, U, basepoint, check_structure=False)
        return analysis.poisson_solution.values, analysis.mean_reward

    def residual(zeta: float, h_arr: np.ndarray, eta: float) -> float:
        _, lam = _tilt_values(h_arr, model)
        return float(np.max(np.abs(zeta * U + lam - h_arr - eta)))

    h = np.zeros(d)
    eta = 0.0
    eta_trace = np.zeros(grid.size)
    residual_trace = np.zeros(grid.size)
    checkpoints: list[PathCheckpoint] = []

    def emit(i: int) -> None:
        zeta = float(grid[i])
        res = residual_trace[i]
        if res > cfg.residual_tol:
            raise ResidualToleranceError(
                f"optimality-equation residual {res:.3e} at zeta={zeta:g} exceeds "
                f"{cfg.residual_tol:g}; reduce the integration step"
            )
        rule, _ = _tilt_values(h, model)
        checkpoints.append(
            PathCheckpoint(
                zeta=zeta,
                h=ValueFunction(h.copy(), basepoint),
                eta=eta,
                tilted_rule=StochasticMatrix(rule),
                controlled_P=StochasticMatrix(induced_transition_values(rule, model.Q0.entries)),
                aroe_residual_sup=res,
            )
        )

    residual_trace[0] = residual(0.0, h, eta)
    if 0 in cp_nodes:
        emit(0)
    for i in range(grid.size - 1):
        z, z_end = float(grid[i]), float(grid[i + 1])
        while z < z_end - 1e-15:
            k1, e1 = rhs(h)
            speed = float(np.max(np.abs(k1)))
            dz = min(z_end - z, cfg.step, cfg.max_move / max(speed, 1e-30))
            k2, e2 = rhs(h + 0.5 * dz * k1)
            k3, e3 = rhs(h + 0.5 * dz * k2)
            k4, e4 = rhs(h + dz * k3)
            h = h + (dz / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            h -= h[basepoint]
            eta += (dz / 6.0) * (e1 + 2.0 * e2 + 2.0 * e3 + e4)
            z += dz
        eta_trace[i + 1] = eta
        residual_trace[i + 1] = residual(float(grid[i + 1]), h, eta)
        if i + 1 in cp_nodes:
            emit(i + 1)

    return ZetaSolutionPath(
        checkpoints=checkpoints,
        grid=grid,
        eta_trace=eta_trace,
        residual_trace=residual_trace,
        snapped=snapped,
    )


def aroe_fixed_point_oracle(
    model: FactoredKernel,
    utility: np.ndarray,
    zeta: float,
    basepoint: int = 0,
    tol: float = 1e-10,
    max_iter: int = 1_000_000,
    damping: float = 1.0,
) -> tuple[ValueFunction, float]:
    """Solve the average-reward optimality equation at a fixed weight directly.

    Relative value iteration on ``h <- zeta U + Lambda_h``, re-pinned at the
    basepoint each sweep; independent of the ODE path.  Returns ``(h, eta)``.
    """
    U = np.asarray(utility, dtype=float)
    h = np.zeros(model.space.d)
    eta = 0.0
    for _ in range(max_iter):
        _, lam = _tilt_values(h, model)
        t = zeta * U + lam
        eta = t[basepoint]
        h_new = (1.0 - damping) * h + damping * (t - eta)
        change = np.max(np.abs(h_new - h))
        h = h_new
        if change <= tol:
            return ValueFunction(h, basepoint), float(eta)
    raise ConvergenceError(f"relative value iteration did not converge in {max_iter} sweeps")


def fh_backward_oracle(
    model: FactoredKernel,
    utility: np.ndarray,
    zeta: float,
    T: int,
) -> np.ndarray:
    """Exact backward dynamic programming at a fixed weight.

    Returns the ``(T+1, d)`` array with row 0 the one-step value ``zeta U``
    and row ``tau`` equal to ``zeta U + Lambda`` of the previous row.
    """
    if T < 0:
        raise ValueError("horizon must be >= 0")
    U = np.asarray(utility, dtype=float)
    W = np.zeros((T + 1, model.space.d))
    W[0] = zeta * U
    for tau in range(1, T + 1):
        _, lam = _tilt_values(W[tau - 1], model)
        W[tau] = zeta * U + lam
    return W


def _controlled_matvec(rule: np.ndarray, model: FactoredKernel, v: np.ndarray) -> np.ndarray:
    # (P v)(x) = sum_{x_u'} R(x, x_u') * sum_{x_n'} Q0(x, x_n') v(x_u', x_n')
    space = model.space
    cond = model.Q0.entries @ v.reshape(space.d_u, space.d_n).T
    return (rule * cond).sum(axis=1)


def solve_finite_horizon(
    model: FactoredKernel,
    utility: np.ndarray,
    T: int,
    cfg: OdeConfig,
) -> FiniteHorizonPath:
    """Integrate the finite-horizon block ODE over the weight grid.

    The block-``k`` derivative is the truncated fundamental-matrix sum applied
    to the utility, computed by the recursion ``V_0 = U``,
    ``V_k = U + P_{k-1} V_{k-1}`` with the stage-``i`` controlled matrix
    refreshed from block ``i`` at every integrator stage.
    """
    if T < 0:
        raise ValueError("horizon must be >= 0")
    U = np.asarray(utility, dtype=float)
    d = model.space.d

    def rhs(W: np.ndarray) -> np.ndarray:
        V = np.zeros_like(W)
        V[0] = U
        for k in range(1, T + 1):
            rule, _ = _tilt_values(W[k - 1], model)
            V[k] = U + _controlled_matvec(rule, model, V[k - 1])
        return V

    grid = _zeta_grid(cfg)
    cp_nodes, snapped = _snap_checkpoints(cfg, grid)
    W = np.zeros((T + 1, d))
    checkpoints: list[FhCheckpoint] = []

    def emit(i: int) -> None:
        policies = [StochasticMatrix(_tilt_values(W[k], model)[0]) for k in range(T)]
        checkpoints.append(FhCheckpoint(zeta=float(grid[i]), W=W.copy(), policies=policies))

    if 0 in cp_nodes:
        emit(0)
    for i in range(grid.size - 1):
        dz = float(grid[i + 1] - grid[i])
        k1 = rhs(W)
        k2 = rhs(W + 0.5 * dz * k1)
        k3 = rhs(W + 0.5 * dz * k2)
        k4 = rhs(W + dz * k3)
        W = W + (dz / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if i + 1 in cp_nodes:
            emit(i + 1)

    return FiniteHorizonPath(horizon=T, checkpoints=checkpoints, snapped=snapped)
