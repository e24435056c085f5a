"""Solvers for the discrete obstacle problem and the obstacle-free equation.

The discrete obstacle problem is the convex minimization

    min { J(v) = (1/2) h v.(A v) - h f.v  :  v >= psi componentwise },

equivalently the linear complementarity problem

    u >= psi,   A u - f >= 0,   (A u - f) . (u - psi) = 0.

Because A is an M-matrix the LCP has a unique solution, and every solver
here computes that same vector: projected SOR sweeps, projected gradient
descent, a primal active-set iteration, a penalty scheme, and a brute-force
enumeration oracle for small n.  Solvers are single-threaded and
deterministic given (spec, params); distinct solves on shared immutable
operators may run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .operator import FracLapOperator

__all__ = [
    "ProblemSpec",
    "SolverParams",
    "PenaltyParams",
    "Solution",
    "PenaltyResult",
    "ZeroForcingReduction",
    "SolverError",
    "IterationLimitError",
    "OracleAmbiguityError",
    "kkt_violation",
    "make_solution",
    "solve_linear",
    "reduce_to_zero_forcing",
    "solve_psor",
    "solve_projected_gradient",
    "solve_active_set",
    "solve_penalty",
    "brute_force_oracle",
]

# Linear systems up to this size are solved by dense factorization.
DENSE_LIMIT = 512
# Brute-force enumeration is restricted to 2^n candidate active sets.
ORACLE_MAX_N = 14


class SolverError(RuntimeError):
    """A solver could not produce a solution meeting its contract."""


class IterationLimitError(SolverError):
    """Solver hit its iteration budget; carries the best iterate found."""

    def __init__(self, message: str, best=None, violation: float | None = None):
        super().__init__(message)
        self.best = best
        self.violation = violation


class OracleAmbiguityError(RuntimeError):
    """Zero or multiple KKT points within tolerance: degenerate instance."""


@dataclass(frozen=True)
class ProblemSpec:
    """Obstacle psi and forcing f sampled on the operator's grid.

    The feasible set K = {v : v >= psi componentwise} is never empty:
    psi^+ is always feasible.
    """

    op: FracLapOperator
    psi: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "psi", self.op.grid.check_vector(self.psi))
        object.__setattr__(self, "f", self.op.grid.check_vector(self.f))
        if not np.isfinite(self.psi).all():
            raise ValueError("obstacle values must be finite")
        if not np.isfinite(self.f).all():
            raise ValueError("forcing values must be finite")

    @property
    def n(self) -> int:
        return self.op.grid.n

    def feasible(self, v, slack: float = 0.0) -> bool:
        """Membership predicate for K, with optional nonnegative slack."""
        v = self.op.grid.check_vector(v)
        return bool(np.all(v >= self.psi - slack))

    def default_start(self) -> np.ndarray:
        """psi^+, the canonical feasible point."""
        return np.maximum(self.psi, 0.0)


@dataclass(frozen=True)
class SolverParams:
    tol: float = 1e-10
    max_iter: int = 200_000
    relaxation: float = 1.5
    active_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.relaxation < 2.0:
            raise ValueError("relaxation must lie in (0, 2)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if not self.active_tol > 0:
            raise ValueError("active_tol must be positive")


def _smoothstep_profile(epsilon: float) -> Callable[[np.ndarray], np.ndarray]:
    """Cubic cutoff: 1 for t <= 0, 0 for t >= eps, C^1 monotone between."""

    def theta(t):
        w = np.clip(np.asarray(t, float) / epsilon, 0.0, 1.0)
        return 1.0 - 3.0 * w**2 + 2.0 * w**3

    return theta


@dataclass(frozen=True)
class PenaltyParams:
    """Penalty width eps and cutoff profile theta_eps.

    theta is any callable with theta(t) = 1 for t <= 0, theta(t) = 0 for
    t >= epsilon, smooth and nonincreasing in between, 0 <= theta <= 1.
    Defaults to the cubic smoothstep.
    """

    epsilon: float = 1e-2
    theta: Callable[[np.ndarray], np.ndarray] | None = None
    picard_damping: float = 1.0
    max_outer: int = 500_000

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.picard_damping <= 1.0:
            raise ValueError("picard_damping must lie in (0, 1]")
        if self.max_outer < 1:
            raise ValueError("max_outer must be positive")
        if self.theta is None:
            object.__setattr__(self, "theta", _smoothstep_profile(self.epsilon))
        t = np.linspace(-self.epsilon, 2.0 * self.epsilon, 513)
        vals = np.asarray(self.theta(t), dtype=float)
        if vals.min() < -1e-12 or vals.max() > 1.0 + 1e-12:
            raise ValueError("theta must take values in [0, 1]")
        if np.any(np.diff(vals) > 1e-12):
            raise ValueError("theta must be nonincreasing")

    def lipschitz_bound(self) -> float:
        """Upper bound on |theta'|, estimated on a fine sample."""
        t = np.linspace(0.0, self.epsilon, 4097)
        vals = np.asarray(self.theta(t), dtype=float)
        return float(np.abs(np.diff(vals)).max() / (t[1] - t[0]))


@dataclass(frozen=True)
class Solution:
    """Computed minimizer with KKT residual and active-set classification.

    Invariants at convergence (tol from the producing solver's params):
    u_i >= psi_i - tol, r_i >= -tol, and r_i (u_i - psi_i) <= tol (1 + |r_i|).
    """

    u: np.ndarray
    residual: np.ndarray
    active_set: np.ndarray
    iterations: int
    solver_id: str
    converged: bool
    energy_trace: np.ndarray | None = field(default=None, repr=False)


class PenaltyResult(NamedTuple):
    solution: Solution
    u_eps: np.ndarray
    outer_iterations: int
    epsilon: float
    damping_used: float


class ZeroForcingReduction(NamedTuple):
    psi_reduced: np.ndarray
    shift: np.ndarray


def kkt_violation(spec: ProblemSpec, u: np.ndarray, residual: np.ndarray | None = None):
    """Worst componentwise KKT violation and the node where it occurs.

    The three parts are primal feasibility psi - u, dual feasibility -r,
    and relative complementarity r (u - psi) / (1 + |r|); the returned value
    is their overall max (negative values mean margin).
    """
    if residual is None:
        residual = spec.op.apply(u) - spec.f
    gap = u - spec.psi
    parts = np.stack([-gap, -residual, residual * gap / (1.0 + np.abs(residual))])
    flat = int(np.argmax(parts))
    return float(parts.flat[flat]), flat % spec.n


def make_solution(spec: ProblemSpec, u, iterations: int, solver_id: str,
                  converged: bool, params: SolverParams,
                  energy_trace: np.ndarray | None = None) -> Solution:
    u = spec.op.grid.check_vector(u).copy()
    residual = spec.op.apply(u) - spec.f
    active = np.flatnonzero(u - spec.psi <= params.active_tol)
    return Solution(u=u, residual=residual, active_set=active,
                    iterations=iterations, solver_id=solver_id,
                    converged=converged, energy_trace=energy_trace)


def solve_linear(op: FracLapOperator, f, tol: float = 1e-12,
                 max_iter: int = 20_000) -> np.ndarray:
    """Solve A w = f (the obstacle-free problem) to relative residual tol.

    Dense Cholesky for n <= DENSE_LIMIT, conjugate gradients above.  Since
    A^{-1} is entrywise positive, f >= 0 implies w >= 0 (discrete weak
    maximum principle).
    """
    f = op.grid.check_vector(f)
    if not np.isfinite(f).all():
        raise ValueError("right-hand side must be finite")
    if op.grid.n <= DENSE_LIMIT:
        c, low = scipy.linalg.cho_factor(op.dense())
        return scipy.linalg.cho_solve((c, low), f)
    lin = scipy.sparse.linalg.LinearOperator(
        shape=(op.grid.n, op.grid.n), matvec=op.apply, dtype=float)
    w, info = scipy.sparse.linalg.cg(lin, f, rtol=tol, atol=0.0, maxiter=max_iter)
    if info > 0:
        raise IterationLimitError(
            f"conjugate gradients did not reach relative residual {tol:g} "
            f"within {max_iter} iterations", best=w)
    return w


def reduce_to_zero_forcing(spec: ProblemSpec, tol: float = 1e-12) -> ZeroForcingReduction:
    """Split off the obstacle-free part: u solves (psi, f) iff u - w solves
    (psi - w, 0), where A w = f.  Returns (psi - w, w)."""
    shift = solve_linear(spec.op, spec.f, tol=tol)
    return ZeroForcingReduction(psi_reduced=spec.psi - shift, shift=shift)


def solve_psor(spec: ProblemSpec, params: SolverParams | None = None) -> Solution:
    """Projected SOR sweeps.

    Componentwise update with relaxation omega, projected onto {v >= psi}:

        u_i <- max(psi_i, (1 - omega) u_i + (omega / D)(f_i + sum_{j != i} W_|i-j| u_j)).

    The off-diagonal sum is carried via z = A u, updated one column per
    changed component and refreshed at each sweep; this is algebraically the
    displayed formula.  Deterministic given the start (default psi^+).
    """
    params = params or SolverParams()
    op, psi, f = spec.op, spec.psi, spec.f
    n, D, omega = spec.n, op.diag, params.relaxation
    u = spec.default_start()
    cols = op.dense().T if n <= 4 * DENSE_LIMIT else None
    for sweep in range(1, params.max_iter + 1):
        z = op.apply(u)
        for i in range(n):
            target = u[i] + omega * (f[i] - z[i]) / D
            new = psi[i] if target < psi[i] else target
            delta = new - u[i]
            if delta != 0.0:
                u[i] = new
                if cols is not None:
                    z += delta * cols[i]
                else:
                    z += delta * _toeplitz_column(op, i)
        viol, _ = kkt_violation(spec, u)
        if viol <= params.tol:
            return make_solution(spec, u, sweep, "psor", True, params)
    best = make_solution(spec, u, params.max_iter, "psor", False, params)
    viol, _ = kkt_violation(spec, u)
    raise IterationLimitError(
        f"PSOR did not reach tol {params.tol:g} in {params.max_iter} sweeps "
        f"(violation {viol:.3e})", best=best, violation=viol)


def _toeplitz_column(op: FracLapOperator, i: int) -> np.ndarray:
    n = op.grid.n
    col = np.empty(n)
    col[i] = op.diag
    if i > 0:
        col[:i] = -op.weights[i - 1 :: -1]
    if i < n - 1:
        col[i + 1 :] = -op.weights[: n - 1 - i]
    return col


def solve_projected_gradient(spec: ProblemSpec, params: SolverParams | None = None) -> Solution:
    """Projected gradient descent with the certified step 1 / (2D).

    u <- max(psi, u - eta (A u - f)) with eta = 1/lambda_max_bound, which
    guarantees monotone energy descent J(u_{k+1}) <= J(u_k).  Stopping rule
    as for PSOR.  The energy at every iterate is recorded in energy_trace.
    """
    params = params or SolverParams()
    op, psi, f = spec.op, spec.psi, spec.f
    h = op.grid.h
    eta = 1.0 / op.lambda_max_bound()
    u = spec.default_start()
    energies = []
    for it in range(params.max_iter + 1):
        au = op.apply(u)
        r = au - f
        energies.append(h * (0.5 * np.dot(u, au) - np.dot(f, u)))
        viol, _ = kkt_violation(spec, u, residual=r)
        if viol <= params.tol:
            return make_solution(spec, u, it, "projected_gradient", True, params,
                                 energy_trace=np.asarray(energies))
        u = np.maximum(psi, u - eta * r)
    best = make_solution(spec, u, params.max_iter, "projected_gradient", False,
                         params, energy_trace=np.asarray(energies))
    viol, _ = kkt_violation(spec, u)
    raise IterationLimitError(
        f"projected gradient did not reach tol {params.tol:g} in "
        f"{params.max_iter} iterations (violation {viol:.3e})",
        best=best, violation=viol)


def solve_active_set(spec: ProblemSpec, params: SolverParams | None = None) -> Solution:
    """Primal active-set iteration with exact complementarity at the end.

    Guess the active set S, pin u = psi on S, solve the free block exactly,
    then move primal-infeasible free nodes into S and dual-infeasible active
    nodes out.  For M-matrices this terminates in a few passes; on cycle
    detection the PSOR result is returned instead (solver_id records the
    fallback).
    """
    params = params or SolverParams()
    op, psi, f = spec.op, spec.psi, spec.f
    n = spec.n
    if n > DENSE_LIMIT:
        raise ValueError(f"active-set solver requires n <= {DENSE_LIMIT}, got {n}")
    A = op.dense()
    active = np.zeros(n, dtype=bool)
    seen = set()
    # Classification slop at machine scale of the block solves.
    eps = 1e-12 * (1.0 + float(np.abs(psi).max()) + float(np.abs(f).max()))
    for it in range(1, max(64, 2 * n) + 1):
        key = active.tobytes()
        if key in seen:
            fallback = solve_psor(spec, params)
            return replace(fallback, solver_id="active_set(psor_fallback)")
        seen.add(key)
        u = psi.copy()
        free = ~active
        if free.any():
            rhs = f[free] - A[np.ix_(free, active)] @ psi[active]
            u[free] = scipy.linalg.solve(
                A[np.ix_(free, free)], rhs, assume_a="pos")
        r = A @ u - f
        primal_bad = free & (u < psi - eps)
        dual_bad = active & (r < -eps)
        if not primal_bad.any() and not dual_bad.any():
            return make_solution(spec, u, it, "active_set", True, params)
        active = (active | primal_bad) & ~dual_bad
    fallback = solve_psor(spec, params)
    return replace(fallback, solver_id="active_set(psor_fallback)")


def _spectral_radius_estimate(solve: Callable[[np.ndarray], np.ndarray],
                              scale: np.ndarray, n: int, iters: int = 60) -> float:
    """Power iteration on v -> A^{-1}(scale * v); scale >= 0."""
    if scale.max() <= 0.0:
        return 0.0
    v = np.ones(n) / np.sqrt(n)
    rho = 0.0
    for _ in range(iters):
        w = solve(scale * v)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        rho, v = norm, w / norm
    return rho


def solve_penalty(spec: ProblemSpec, penalty_params: PenaltyParams | None = None,
                  params: SolverParams | None = None) -> PenaltyResult:
    """Penalty approximation of the obstacle problem (zero forcing only).

    Replaces the constraint by the semilinear equation

        A u_eps = theta_eps(u_eps - psi^+) * (A psi^+)^+,

    solved by damped Picard iteration

        u^{k+1} = (1 - d) u^k + d * A^{-1}[theta_eps(u^k - psi^+) (A psi^+)^+],

    warm-started at the PSOR solution u of the obstacle problem.  The exact
    penalty solution brackets u from above: u <= u_eps <= u + eps, and that
    sandwich is asserted (with slack 10*tol) before returning.

    Requires f = 0; reduce general forcing with reduce_to_zero_forcing first.
    The initial damping is capped at 1.8 / (1 + rho*L), the local-contraction
    threshold (rho = spectral radius of A^{-1} diag((A psi^+)^+), L = Lipschitz
    bound of theta); stagnation halves it, up to four times.
    """
    penalty_params = penalty_params or PenaltyParams()
    params = params or SolverParams()
    op = spec.op
    n = spec.n
    if np.any(spec.f != 0.0):
        raise ValueError("solve_penalty requires zero forcing; "
                         "apply reduce_to_zero_forcing first")
    if n > DENSE_LIMIT:
        raise ValueError(f"penalty solver requires n <= {DENSE_LIMIT}, got {n}")

    psi_plus = np.maximum(spec.psi, 0.0)
    reduced = ProblemSpec(op=op, psi=psi_plus, f=np.zeros(n))
    exact = solve_psor(reduced, params)

    cho = scipy.linalg.cho_factor(op.dense())

    def solve(b):
        return scipy.linalg.cho_solve(cho, b)

    q = np.maximum(op.apply(psi_plus), 0.0)
    theta = penalty_params.theta
    eps = penalty_params.epsilon

    ainv_norm = float(solve(np.ones(n)).max())  # ||A^{-1}||_inf, A^{-1} > 0
    rho = _spectral_radius_estimate(solve, q, n)
    lip = penalty_params.lipschitz_bound()
    d = min(penalty_params.picard_damping, 1.8 / (1.0 + rho * lip))

    # ||u - u*||_inf <= ||A^{-1}||_inf ||F(u)||_inf: the residual equals
    # (A + Xi) e with Xi >= 0 diagonal, and M-matrix comparison applies.
    stop = params.tol / max(ainv_norm, 1e-300)

    u_eps = exact.u.copy()
    halvings = 0
    best_res = np.inf
    best_iterate = u_eps.copy()
    stall = 0
    stall_window = 2000
    it = 0
    while True:
        rhs = theta(u_eps - psi_plus) * q
        res = float(np.abs(op.apply(u_eps) - rhs).max())
        if res <= stop:
            break
        if res < best_res * (1.0 - 1e-6):
            best_res, best_iterate, stall = res, u_eps.copy(), 0
        else:
            stall += 1
            if stall > stall_window:
                if halvings >= 4:
                    raise IterationLimitError(
                        f"penalty Picard stagnated at residual {best_res:.3e} "
                        f"after {halvings} dampings", best=best_iterate,
                        violation=best_res)
                halvings += 1
                d *= 0.5
                u_eps = best_iterate.copy()
                stall = 0
                continue
        if it >= penalty_params.max_outer:
            raise IterationLimitError(
                f"penalty Picard exceeded max_outer={penalty_params.max_outer} "
                f"(residual {res:.3e})", best=best_iterate, violation=res)
        u_eps = (1.0 - d) * u_eps + d * solve(rhs)
        it += 1

    slack = 10.0 * params.tol
    gap = u_eps - exact.u
    if gap.min() < -slack or gap.max() > eps + slack:
        raise SolverError(
            "penalty sandwich violated: "
            f"min gap {gap.min():.3e}, max gap {gap.max():.3e}, eps {eps:g}")
    return PenaltyResult(solution=exact, u_eps=u_eps, outer_iterations=it,
                         epsilon=eps, damping_used=d)


def brute_force_oracle(spec: ProblemSpec, params: SolverParams | None = None,
                       feas_tol: float = 1e-10) -> Solution:
    """Ground truth by enumeration of all 2^n candidate active sets.

    For each subset S solve the constrained linear system (u = psi on S,
    A u = f off S) and keep the candidates satisfying u >= psi and
    A u - f >= 0 within feas_tol.  All surviving candidates must agree on u
    (subsets differing only in degenerate biactive nodes produce the same
    vector); zero survivors or several distinct ones raise
    OracleAmbiguityError so callers can regenerate the instance.
    """
    params = params or SolverParams()
    n = spec.n
    if n > ORACLE_MAX_N:
        raise ValueError(f"oracle enumeration requires n <= {ORACLE_MAX_N}, got {n}")
    A = spec.op.dense()
    psi, f = spec.psi, spec.f
    candidates = []
    for mask in range(1 << n):
        active = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        u = psi.copy()
        free = ~active
        if free.any():
            rhs = f[free] - A[np.ix_(free, active)] @ psi[active]
            try:
                u[free] = np.linalg.solve(A[np.ix_(free, free)], rhs)
            except np.linalg.LinAlgError:
                continue
        r = A @ u - f
        if np.all(u >= psi - feas_tol) and np.all(r >= -feas_tol):
            candidates.append(u)
    if not candidates:
        raise OracleAmbiguityError("no candidate active set satisfies the KKT system")
    distinct = [candidates[0]]
    for u in candidates[1:]:
        if all(np.abs(u - v).max() > 1e-8 for v in distinct):
            distinct.append(u)
    if len(distinct) > 1:
        raise OracleAmbiguityError(
            f"{len(distinct)} distinct KKT points within tolerance "
            "(degenerate instance)")
    return make_solution(spec, distinct[0], 1 << n, "oracle", True, params)
