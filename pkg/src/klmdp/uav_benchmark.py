"""UAV-in-wind benchmark scenario.

A vehicle moves on a rectangular grid of locations; a cyclic finite-state
wind process shifts it each step, and the nominal policy is a discrete
Gaussian over next locations centered at the wind-shifted position.  The
target cell is absorbing, the utility is minus the off-target indicator, and
the negative relative value function is the expected accumulated cost until
the target is hit.

Locations are 0-based pairs ``(i, j)`` flattened row-major; the full state
``(location, wind)`` uses the product-space layout with the wind index as the
fast axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kl_calculus import kl_step_cost
from .state_space import FactoredKernel, ProductStateSpace, StochasticMatrix


@dataclass(frozen=True)
class WindField:
    """Lattice displacement per (location, wind state), components in {-1, 0, 1}."""

    table: np.ndarray  # shape (d_L, d_N, 2), integer

    def __post_init__(self):
        t = np.asarray(self.table, dtype=int)
        if t.ndim != 3 or t.shape[2] != 2:
            raise ValueError(f"wind table must have shape (d_L, d_N, 2), got {t.shape}")
        if np.any(np.abs(t) > 1):
            raise ValueError("wind displacements must lie in {-1, 0, 1} per component")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)


def generate_wind_field(d_a: int, d_o: int, d_N: int, seed: int) -> WindField:
    """Quantize a smooth low-frequency random field to lattice displacements.

    Per wind state and component, two random spatial harmonics are summed on
    the unit square and the grid samples are rounded into {-1, 0, 1}.
    Deterministic in the seed.
    """
    rng = np.random.default_rng(seed)
    ii, jj = np.meshgrid(np.arange(d_a) / max(d_a - 1, 1), np.arange(d_o) / max(d_o - 1, 1), indexing="ij")
    table = np.zeros((d_a * d_o, d_N, 2), dtype=int)
    for n in range(d_N):
        for comp in range(2):
            smooth = np.zeros((d_a, d_o))
            for _ in range(2):
                amp = rng.uniform(0.3, 0.8)
                fi, fj = rng.uniform(0.3, 1.2, size=2)
                phase = rng.uniform(0.0, 2.0 * np.pi)
                smooth += amp * np.sin(2.0 * np.pi * (fi * ii + fj * jj) + phase)
            table[:, n, comp] = np.clip(np.rint(smooth), -1, 1).astype(int).ravel()
    return WindField(table)


@dataclass(frozen=True)
class UavScenario:
    """Grid dimensions, wind model, and nominal-kernel parameters."""

    d_a: int
    d_o: int
    d_N: int
    wind: WindField
    delta_n: float = 0.05
    sigma_u2: float = 0.5
    target: tuple[int, int] | None = None

    def __post_init__(self):
        if self.d_a < 2 or self.d_o < 2:
            raise ValueError("grid dimensions must be >= 2")
        if not 0.0 < self.delta_n < 1.0:
            raise ValueError("delta_n must lie in (0, 1)")
        if self.sigma_u2 <= 0:
            raise ValueError("sigma_u2 must be positive")
        if self.target is None:
            object.__setattr__(self, "target", (self.d_a - 1, self.d_o - 1))
        ti, tj = self.target
        if not (0 <= ti < self.d_a and 0 <= tj < self.d_o):
            raise ValueError(f"target {self.target} outside the {self.d_a} x {self.d_o} grid")
        if self.wind.table.shape[:2] != (self.d_a * self.d_o, self.d_N):
            raise ValueError("wind table dimensions do not match the scenario")

    @property
    def d_L(self) -> int:
        return self.d_a * self.d_o

    @property
    def target_index(self) -> int:
        return self.target[0] * self.d_o + self.target[1]

    @property
    def basepoint(self) -> int:
        # full state (target location, first wind state)
        return self.target_index * self.d_N

    def location_coords(self) -> np.ndarray:
        """(d_L, 2) array of (i, j) coordinates in flat location order."""
        ii, jj = np.meshgrid(np.arange(self.d_a), np.arange(self.d_o), indexing="ij")
        return np.stack([ii.ravel(), jj.ravel()], axis=1)


def build_wind_chain(d_N: int, delta_n: float) -> StochasticMatrix:
    """Symmetric nearest-neighbor walk on {0..d_N-1} with cyclic wraparound."""
    if d_N < 2:
        raise ValueError("need at least 2 wind states")
    if not 0.0 < delta_n < 1.0:
        raise ValueError("delta_n must lie in (0, 1)")
    Q = np.zeros((d_N, d_N))
    for n in range(d_N):
        Q[n, n] += 1.0 - delta_n
        Q[n, (n + 1) % d_N] += delta_n / 2.0
        Q[n, (n - 1) % d_N] += delta_n / 2.0
    return StochasticMatrix(Q)


def build_nominal_rule(scenario: UavScenario) -> StochasticMatrix:
    """Nominal decision rule over next locations, rows indexed by full state.

    Non-target rows are discrete Gaussians centered at the wind-shifted
    position (clamped to the grid), truncated to the grid and renormalized;
    target rows are a point mass at the target (absorbing).
    """
    coords = scenario.location_coords()
    d_L, d_N = scenario.d_L, scenario.d_N
    R = np.zeros((d_L * d_N, d_L))
    inv_two_sigma2 = 1.0 / (2.0 * scenario.sigma_u2)
    for l in range(d_L):
        for n in range(d_N):
            x = l * d_N + n
            if l == scenario.target_index:
                R[x, scenario.target_index] = 1.0
                continue
            ci = np.clip(coords[l, 0] + scenario.wind.table[l, n, 0], 0, scenario.d_a - 1)
            cj = np.clip(coords[l, 1] + scenario.wind.table[l, n, 1], 0, scenario.d_o - 1)
            dist2 = (coords[:, 0] - ci) ** 2 + (coords[:, 1] - cj) ** 2
            row = np.exp(-inv_two_sigma2 * dist2)
            R[x] = row / row.sum()
    return StochasticMatrix(R)


def build_scenario_model(scenario: UavScenario) -> tuple[FactoredKernel, np.ndarray]:
    """Factored kernel and utility (minus the off-target indicator)."""
    space = ProductStateSpace(scenario.d_L, scenario.d_N)
    R = build_nominal_rule(scenario)
    Qw = build_wind_chain(scenario.d_N, scenario.delta_n).entries
    Q0 = np.tile(Qw, (scenario.d_L, 1))
    utility = np.where(np.arange(space.d) // scenario.d_N == scenario.target_index, 0.0, -1.0)
    return FactoredKernel(space, R, StochasticMatrix(Q0)), utility


def cost_to_go(checkpoint) -> np.ndarray:
    """Expected accumulated cost until hitting the target: the negative of ``h``."""
    return -checkpoint.h.values


def velocity_field(rule: StochasticMatrix, scenario: UavScenario) -> np.ndarray:
    """Mean one-step displacement per (location, wind state), shape (d_L, d_N, 2)."""
    coords = scenario.location_coords().astype(float)
    d_L, d_N = scenario.d_L, scenario.d_N
    v = np.zeros((d_L, d_N, 2))
    for l in range(d_L):
        for n in range(d_N):
            x = l * d_N + n
            v[l, n] = rule.entries[x] @ coords - coords[l]
    return v


def controlled_spectrum(P: StochasticMatrix) -> np.ndarray:
    """All eigenvalues of the controlled chain, sorted by modulus descending."""
    eig = np.linalg.eigvals(P.entries)
    order = np.lexsort((-eig.imag, -eig.real, -np.abs(eig)))
    return eig[order]


@dataclass(frozen=True)
class RolloutResult:
    mean: float
    half_width_95: float
    censored: int
    trials: int

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.trials


def rollout_oracle(
    model: FactoredKernel,
    tilted_rule: StochasticMatrix,
    scenario: UavScenario,
    zeta: float,
    start: int,
    trials: int,
    horizon_cap: int,
    seed: int,
) -> RolloutResult:
    """Monte Carlo estimate of the accumulated cost to the target.

    Simulates the controlled chain from ``start``, accumulating the weighted
    state cost plus the per-state KL cost of the rule until the location hits
    the target (or the cap, in which case the path is censored).  Each trial
    draws from its own generator keyed by (seed, trial), so results do not
    depend on execution order.
    """
    d_N = scenario.d_N
    target = scenario.target_index
    Qw = build_wind_chain(d_N, scenario.delta_n).entries
    kl = kl_step_cost(tilted_rule, model.R)
    state_cost = zeta * np.where(np.arange(model.space.d) // d_N == target, 0.0, 1.0) + kl
    rule_cdf = np.cumsum(tilted_rule.entries, axis=1)
    wind_cdf = np.cumsum(Qw, axis=1)

    costs = np.zeros(trials)
    censored = 0
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        l, n = divmod(start, d_N)
        total = 0.0
        steps = 0
        while l != target:
            if steps >= horizon_cap:
                censored += 1
                break
            x = l * d_N + n
            total += state_cost[x]
            u = rng.random(2)
            l = min(int(np.searchsorted(rule_cdf[x], u[0], side="right")), scenario.d_L - 1)
            n = min(int(np.searchsorted(wind_cdf[n], u[1], side="right")), d_N - 1)
            steps += 1
        costs[t] = total

    mean = float(costs.mean())
    half_width = float(1.96 * costs.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return RolloutResult(mean=mean, half_width_95=half_width, censored=censored, trials=trials)
