"""Linear-algebraic solvers for finite Markov chains.

Invariant pmf, fundamental matrix, and the Poisson equation solver that the
continuation ODE uses as its vector field, plus the Perron-Frobenius baseline
for the unconstrained (exogenous-free) model.

Admissibility is unichain aperiodic: one recurrent class, possibly with
transient states.  The fundamental-matrix machinery stays valid in that
generality, and every solve is certified by an explicit residual check.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import ConvergenceError, NotAperiodicError, NotUnichainError
from .state_space import StochasticMatrix, ValueFunction

INVARIANT_TOL = 1e-9
POISSON_TOL = 1e-8


@dataclass(frozen=True)
class ChainAnalysis:
    """Invariant pmf, basepoint-normalized Poisson solution, and mean reward."""

    pi: np.ndarray
    poisson_solution: ValueFunction
    mean_reward: float


@dataclass(frozen=True)
class PerronFrobeniusPair:
    """Principal eigenvalue and positive eigenvector, normalized at the basepoint."""

    lam: float
    v: np.ndarray


def recurrent_class(P: StochasticMatrix | np.ndarray) -> np.ndarray:
    """Indices of the unique recurrent class of a unichain aperiodic matrix.

    Raises :class:`NotUnichainError` if the support graph has more than one
    closed communicating class, and :class:`NotAperiodicError` if the single
    class is periodic.
    """
    A = P.entries if isinstance(P, StochasticMatrix) else np.asarray(P)
    support = sp.csr_matrix(A > 0)
    n_comp, labels = connected_components(support, directed=True, connection="strong")
    src, dst = support.nonzero()
    leaving = np.zeros(n_comp, dtype=bool)
    cross = labels[src] != labels[dst]
    leaving[labels[src[cross]]] = True
    closed = np.flatnonzero(~leaving)
    if closed.size != 1:
        raise NotUnichainError(f"found {closed.size} recurrent classes, expected exactly 1")
    members = np.flatnonzero(labels == closed[0])
    if not _is_aperiodic(A, members):
        raise NotAperiodicError("the recurrent class is periodic")
    return members


def _is_aperiodic(A: np.ndarray, members: np.ndarray) -> bool:
    # A self-loop inside a single communicating class settles it immediately.
    if np.any(A[members, members] > 0):
        return True
    sub = sp.csr_matrix(A[np.ix_(members, members)] > 0)
    order, pred = breadth_first_order(sub, 0, directed=True, return_predecessors=True)
    level = np.full(members.size, -1)
    level[0] = 0
    for node in order[1:]:
        level[node] = level[pred[node]] + 1
    # gcd of (level(u) + 1 - level(v)) over edges equals the chain period
    src, dst = sub.nonzero()
    g = 0
    for u, v in zip(src, dst):
        g = gcd(g, level[u] + 1 - level[v])
        if g == 1:
            return True
    return abs(g) == 1


def invariant_pmf(P: StochasticMatrix, check_structure: bool = True) -> np.ndarray:
    """Unique invariant pmf of a unichain aperiodic transition matrix.

    Solves the balance equations directly (one equation replaced by the
    normalization), rather than iterating.
    """
    A = P.entries
    d = A.shape[0]
    if check_structure:
        recurrent_class(P)
    M = A.T - np.eye(d)
    M[-1, :] = 1.0
    b = np.zeros(d)
    b[-1] = 1.0
    pi = np.linalg.solve(M, b)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = np.linalg.norm(pi @ A - pi, 1)
    if residual > INVARIANT_TOL:
        raise ConvergenceError(f"invariant pmf residual {residual:.3e} exceeds {INVARIANT_TOL}")
    return pi


def fundamental_matrix(P: StochasticMatrix, pi: np.ndarray) -> np.ndarray:
    """Inverse ``Z = [I - P + 1 (x) pi]^{-1}``; satisfies ``Z 1 = 1`` and ``pi Z = pi``."""
    A = P.entries
    d = A.shape[0]
    M = np.eye(d) - A + np.outer(np.ones(d), pi)
    try:
        Z = np.linalg.inv(M)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"I - P + 1(x)pi is singular: {exc}") from exc
    if np.max(np.abs(Z.sum(axis=1) - 1.0)) > INVARIANT_TOL or np.linalg.norm(pi @ Z - pi, 1) > INVARIANT_TOL:
        raise ConvergenceError("fundamental matrix failed its row-sum / invariance identities")
    return Z


def poisson_solve(
    P: StochasticMatrix,
    utility: np.ndarray,
    x0: int,
    check_structure: bool = True,
) -> ChainAnalysis:
    """Solve Poisson's equation ``P H = H - U + pi(U) 1`` with ``H(x0) = 0``.

    Solves ``[I - P + 1 (x) pi] y = U`` and pins ``y`` at the basepoint; the
    fundamental matrix is never formed.  ``x0`` must lie in the recurrent
    class.
    """
    A = P.entries
    d = A.shape[0]
    U = np.asarray(utility, dtype=float)
    if U.size != d:
        raise ValueError(f"utility has length {U.size}, expected {d}")
    if check_structure:
        members = recurrent_class(P)
        if x0 not in members:
            raise ValueError(f"basepoint {x0} is transient; it must be in the recurrent class")
    pi = invariant_pmf(P, check_structure=False)
    mean = float(pi @ U)
    M = np.eye(d) - A + np.outer(np.ones(d), pi)
    y = np.linalg.solve(M, U)
    H = ValueFunction(y, x0)
    residual = np.max(np.abs(A @ H.values - H.values + U - mean))
    if residual > POISSON_TOL:
        raise ConvergenceError(f"Poisson residual {residual:.3e} exceeds {POISSON_TOL}")
    return ChainAnalysis(pi=pi, poisson_solution=H, mean_reward=mean)


def perron_frobenius_baseline(
    P0: StochasticMatrix,
    utility: np.ndarray,
    zeta: float,
    x0: int,
    max_iter: int = 100_000,
    tol: float = 1e-12,
) -> tuple[PerronFrobeniusPair, StochasticMatrix]:
    """Principal eigenpair of ``exp(zeta U(x)) P0(x, x')`` and its twisted matrix.

    Power iteration with the eigenvector normalized to 1 at the basepoint;
    the twisted matrix ``(1/lam) v(x')/v(x) W(x, x')`` is the optimally
    controlled chain of the unconstrained model.
    """
    U = np.asarray(utility, dtype=float)
    W = np.exp(zeta * U)[:, None] * P0.entries
    v = np.ones(W.shape[0])
    lam = 1.0
    for _ in range(max_iter):
        w = W @ v
        lam = w[x0]
        if lam <= 0:
            raise ConvergenceError("power iteration hit a nonpositive normalization")
        v_new = w / lam
        if np.max(np.abs(W @ v_new - lam * v_new)) <= tol * lam * np.max(np.abs(v_new)):
            v = v_new
            break
        v = v_new
    else:
        raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")
    twisted = W * v[None, :] / (lam * v[:, None])
    twisted /= twisted.sum(axis=1, keepdims=True)
    return PerronFrobeniusPair(lam=float(lam), v=v), StochasticMatrix(twisted)
