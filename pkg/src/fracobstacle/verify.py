"""Executable checkers for the structural theorems of the discrete problem.

Each checker turns one theorem about the obstacle problem into a pass/fail
Report over computed solutions: KKT conditions, the two-sided
Lewy-Stampacchia residual bound, the Minty variational characterization,
the smallest-supersolution property, comparison principles in the forcing
and in the obstacle, sup-norm continuous dependence, sharp zero-forcing
bounds, and the truncation inequalities of the underlying bilinear form.
These are exact discrete theorems for the M-matrix discretization, so the
checkers assert them at tight tolerances; failures indicate solver or
assembly bugs, not discretization error.

Checkers are pure given (inputs, seed): identical inputs give bit-identical
worst violations.  Sampling loops are sequential for reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .operator import FracLapOperator
from .solvers import (
    DENSE_LIMIT,
    ProblemSpec,
    Solution,
    SolverParams,
    kkt_violation,
    solve_active_set,
    solve_linear,
    solve_psor,
)

__all__ = [
    "Report",
    "ConvergenceReport",
    "check_kkt",
    "check_lewy_stampacchia",
    "check_minty",
    "check_smallest_supersolution",
    "check_comparison_in_f",
    "check_linfty_dependence",
    "check_bounds_cinfty",
    "check_truncation_identities",
    "run_obstacle_convergence",
]


@dataclass(frozen=True)
class Report:
    """Outcome of one checker: passed iff worst_violation <= tol.

    worst_violation is signed; negative values measure the margin by which
    the inequality held.  inconclusive flags checks whose sampling produced
    no usable draws (flagged, not failed).
    """

    check_id: str
    passed: bool
    worst_violation: float
    worst_index_or_sample: int
    samples: int
    seed: int
    tol: float
    inconclusive: bool = False
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "check_id": self.check_id,
            "passed": self.passed,
            "worst_violation": self.worst_violation,
            "worst_index_or_sample": self.worst_index_or_sample,
            "samples": self.samples,
            "seed": self.seed,
            "tol": self.tol,
            "inconclusive": self.inconclusive,
            "note": self.note,
        }


@dataclass(frozen=True)
class ConvergenceReport:
    """Errors of solutions under a shrinking obstacle perturbation."""

    deltas: tuple
    sup_errors: tuple
    energy_errors: tuple
    sup_bounds: tuple
    monotone_flag: bool
    sup_bounds_ok: bool
    energy_threshold: float
    passed: bool

    def __post_init__(self):
        k = len(self.deltas)
        if k < 3 or any(len(seq) != k for seq in
                        (self.sup_errors, self.energy_errors, self.sup_bounds)):
            raise ValueError("convergence report needs >= 3 equal-length sequences")

    def as_dict(self) -> dict:
        return {
            "deltas": list(self.deltas),
            "sup_errors": list(self.sup_errors),
            "energy_errors": list(self.energy_errors),
            "sup_bounds": list(self.sup_bounds),
            "monotone_flag": self.monotone_flag,
            "sup_bounds_ok": self.sup_bounds_ok,
            "energy_threshold": self.energy_threshold,
            "passed": self.passed,
        }


def _solve(spec: ProblemSpec, params: SolverParams | None) -> Solution:
    params = params or SolverParams()
    if spec.n <= DENSE_LIMIT:
        return solve_active_set(spec, params)
    return solve_psor(spec, params)


def check_kkt(spec: ProblemSpec, u, tol: float = 1e-8) -> Report:
    """Feasibility, dual feasibility, and complementarity of an iterate."""
    u = spec.op.grid.check_vector(u)
    worst, idx = kkt_violation(spec, u)
    return Report(check_id="kkt", passed=worst <= tol, worst_violation=worst,
                  worst_index_or_sample=idx, samples=spec.n, seed=0, tol=tol)


def check_lewy_stampacchia(spec: ProblemSpec, u, tol: float = 1e-8) -> Report:
    """Two-sided residual bound 0 <= A u - f <= (A (psi - w_f)^+)^+.

    w_f is the obstacle-free solution A w_f = f; the upper bound equals
    (A (psi v w_f) - f)^+, the classical bound with the obstacle lifted to
    psi v w_f, which leaves the solution unchanged.
    """
    u = spec.op.grid.check_vector(u)
    shift = solve_linear(spec.op, spec.f)
    bound = np.maximum(spec.op.apply(np.maximum(spec.psi - shift, 0.0)), 0.0)
    r = spec.op.apply(u) - spec.f
    viol = np.maximum(-r, r - bound)
    idx = int(np.argmax(viol))
    worst = float(viol[idx])
    return Report(check_id="lewy_stampacchia", passed=worst <= tol,
                  worst_violation=worst, worst_index_or_sample=idx,
                  samples=spec.n, seed=0, tol=tol)


def check_minty(spec: ProblemSpec, u, samples: int = 200, tol: float = 1e-8,
                seed: int = 0) -> Report:
    """<A v - f, v - u> >= -tol (1 + ||v||) over random feasible v.

    Feasible points are psi + |gaussian| * scale with scale = 1 + ||psi||_inf,
    which lie in K by construction.  Norms are h-weighted.
    """
    u = spec.op.grid.check_vector(u)
    rng = np.random.default_rng(seed)
    scale = 1.0 + float(np.abs(spec.psi).max())
    h = spec.op.grid.h
    worst, worst_k = -np.inf, 0
    for k in range(samples):
        v = spec.psi + np.abs(rng.normal(size=spec.n)) * scale
        pairing = h * np.dot(spec.op.apply(v) - spec.f, v - u)
        vnorm = np.sqrt(h * np.dot(v, v))
        value = -pairing - tol * vnorm
        if value > worst:
            worst, worst_k = value, k
    return Report(check_id="minty", passed=worst <= tol, worst_violation=worst,
                  worst_index_or_sample=worst_k, samples=samples, seed=seed, tol=tol)


def check_smallest_supersolution(spec: ProblemSpec, u, samples: int = 200,
                                 seed: int = 0, tol: float = 1e-8) -> Report:
    """Every feasible supersolution dominates the solution.

    Supersolutions are built as U = A^{-1}(f + q) with random q >= 0; draws
    with U >= psi are required to satisfy U >= u - tol, the rest are skipped.
    If no draw is feasible the report is inconclusive, not failed.
    """
    u = spec.op.grid.check_vector(u)
    rng = np.random.default_rng(seed)
    scale = 1.0 + float(np.abs(spec.f).max())
    used = 0
    worst, worst_k = -np.inf, 0
    for k in range(samples):
        q = np.abs(rng.normal(size=spec.n)) * scale
        U = solve_linear(spec.op, spec.f + q)
        if not np.all(U >= spec.psi):
            continue
        used += 1
        value = float((u - U).max())
        if value > worst:
            worst, worst_k = value, k
    if used == 0:
        return Report(check_id="smallest_supersolution", passed=True,
                      worst_violation=0.0, worst_index_or_sample=-1,
                      samples=samples, seed=seed, tol=tol, inconclusive=True,
                      note="no feasible supersolution draws")
    return Report(check_id="smallest_supersolution", passed=worst <= tol,
                  worst_violation=worst, worst_index_or_sample=worst_k,
                  samples=samples, seed=seed, tol=tol,
                  note=f"feasible draws: {used}/{samples}")


def check_comparison_in_f(op: FracLapOperator, psi, f1, f2, tol: float = 1e-8,
                          params: SolverParams | None = None) -> Report:
    """f1 >= f2 implies u1 >= u2 componentwise."""
    psi = op.grid.check_vector(psi)
    f1 = op.grid.check_vector(f1)
    f2 = op.grid.check_vector(f2)
    if np.any(f1 < f2):
        raise ValueError("comparison check requires f1 >= f2 componentwise")
    u1 = _solve(ProblemSpec(op, psi, f1), params).u
    u2 = _solve(ProblemSpec(op, psi, f2), params).u
    viol = u2 - u1
    idx = int(np.argmax(viol))
    worst = float(viol[idx])
    return Report(check_id="comparison_in_f", passed=worst <= tol,
                  worst_violation=worst, worst_index_or_sample=idx,
                  samples=op.grid.n, seed=0, tol=tol)


def check_linfty_dependence(op: FracLapOperator, f, psi1, psi2,
                            tol: float = 1e-8,
                            params: SolverParams | None = None) -> Report:
    """||(u1 - u2)^+||_inf <= ||(psi1 - psi2)^+||_inf, and mirrored for
    the negative parts."""
    f = op.grid.check_vector(f)
    psi1 = op.grid.check_vector(psi1)
    psi2 = op.grid.check_vector(psi2)
    u1 = _solve(ProblemSpec(op, psi1, f), params).u
    u2 = _solve(ProblemSpec(op, psi2, f), params).u
    du, dpsi = u1 - u2, psi1 - psi2
    plus = float(np.maximum(du, 0.0).max() - np.maximum(dpsi, 0.0).max())
    minus = float(np.maximum(-du, 0.0).max() - np.maximum(-dpsi, 0.0).max())
    worst = max(plus, minus)
    return Report(check_id="linfty_dependence", passed=worst <= tol,
                  worst_violation=worst,
                  worst_index_or_sample=int(np.argmax(np.abs(du))),
                  samples=op.grid.n, seed=0, tol=tol)


def check_bounds_cinfty(spec: ProblemSpec, u, tol: float = 1e-8) -> Report:
    """Lower bound psi v w_f <= u always; upper bound u <= max psi^+ when
    f = 0.  For f != 0 the constant in the general upper bound is not
    explicit, so it is measured and logged, never asserted."""
    u = spec.op.grid.check_vector(u)
    shift = solve_linear(spec.op, spec.f)
    lower = np.maximum(spec.psi, shift) - u
    worst = float(lower.max())
    idx = int(np.argmax(lower))
    note = ""
    if np.all(spec.f == 0.0):
        upper = float(u.max() - np.maximum(spec.psi, 0.0).max())
        if upper > worst:
            worst, idx = upper, int(np.argmax(u))
    else:
        fplus = float(np.maximum(spec.f, 0.0).max())
        excess = max(float(u.max()) - float(np.maximum(spec.psi, 0.0).max()), 0.0)
        ratio = excess / fplus if fplus > 0 else 0.0
        note = f"measured upper-bound constant (sup norm): {ratio:.6g}"
    return Report(check_id="bounds_cinfty", passed=worst <= tol,
                  worst_violation=worst, worst_index_or_sample=idx,
                  samples=spec.n, seed=0, tol=tol, note=note)


def check_truncation_identities(op: FracLapOperator, samples: int = 500,
                                seed: int = 0, tol: float = 1e-10) -> Report:
    """Sign and level truncation inequalities of the bilinear form.

    For random v (and v^- = (-v)^+, so v = v^+ - v^-):
        <A v^+, v^->                  <= 0, strict when both parts are nonzero,
        <A v, v^-> + <A v^-, v^->     <= 0,
        <A v, v^+> - <A v^+, v^+>     >= 0,
    and for random m > 0 the level truncation v ^ m = v - (v - m)^+ loses
    energy: <A(v^m), v^m> <= <A v, v> - <A(v-m)^+, (v-m)^+>.

    The strictness margin (smallest observed -<A v^+, v^-> over sign-changing
    draws) is reported in the note and must be positive.
    """
    rng = np.random.default_rng(seed)
    n, h = op.grid.n, op.grid.h

    def pair(x, y):
        return h * float(np.dot(op.apply(x), y))

    worst, worst_k = -np.inf, 0
    strict_margin = np.inf
    strict_cases = 0
    for k in range(samples):
        v = rng.normal(size=n)
        vp, vm = np.maximum(v, 0.0), np.maximum(-v, 0.0)
        t1 = pair(vp, vm)
        t2 = pair(v, vm) + pair(vm, vm)
        t3 = -(pair(v, vp) - pair(vp, vp))
        m = float(np.abs(rng.normal())) + 0.1
        vlm = np.minimum(v, m)
        vmm = np.maximum(v - m, 0.0)
        t4 = pair(vlm, vlm) - pair(v, v) + pair(vmm, vmm)
        value = max(t1, t2, t3, t4)
        if value > worst:
            worst, worst_k = value, k
        if vp.any() and vm.any():
            strict_cases += 1
            strict_margin = min(strict_margin, -t1)
    strict_ok = strict_cases == 0 or strict_margin > 0.0
    note = (f"strict cases: {strict_cases}, min margin: "
            f"{strict_margin if strict_cases else 0.0:.6g}")
    return Report(check_id="truncation_identities",
                  passed=worst <= tol and strict_ok, worst_violation=worst,
                  worst_index_or_sample=worst_k, samples=samples, seed=seed,
                  tol=tol, note=note)


def run_obstacle_convergence(op: FracLapOperator, f, psi,
                             deltas: Sequence[float], perturbation,
                             tol: float = 1e-8,
                             energy_threshold: float = 1e-6,
                             params: SolverParams | None = None) -> ConvergenceReport:
    """Solve the problems with obstacles psi + delta_k * perturbation.

    Records sup-norm errors against the unperturbed solution (each must obey
    the continuous-dependence bound delta_k * ||perturbation||_inf + tol) and
    h-weighted energy-norm errors, which must be nonincreasing and end below
    energy_threshold.
    """
    deltas = [float(d) for d in deltas]
    if len(deltas) < 3:
        raise ValueError("perturbation schedule needs at least 3 entries")
    if any(d2 >= d1 for d1, d2 in zip(deltas, deltas[1:])) or deltas[-1] <= 0:
        raise ValueError("perturbation schedule must be strictly decreasing and positive")
    f = op.grid.check_vector(f)
    psi = op.grid.check_vector(psi)
    pert = op.grid.check_vector(perturbation)
    pert_inf = float(np.abs(pert).max())
    base = _solve(ProblemSpec(op, psi, f), params).u
    sup_errors, energy_errors, sup_bounds = [], [], []
    for d in deltas:
        uk = _solve(ProblemSpec(op, psi + d * pert, f), params).u
        e = uk - base
        sup_errors.append(float(np.abs(e).max()))
        energy_errors.append(op.energy_norm(e))
        sup_bounds.append(d * pert_inf + tol)
    sup_ok = all(e <= b for e, b in zip(sup_errors, sup_bounds))
    monotone = all(e2 <= e1 + tol for e1, e2 in zip(energy_errors, energy_errors[1:]))
    passed = sup_ok and monotone and energy_errors[-1] < energy_threshold
    return ConvergenceReport(deltas=tuple(deltas), sup_errors=tuple(sup_errors),
                             energy_errors=tuple(energy_errors),
                             sup_bounds=tuple(sup_bounds),
                             monotone_flag=monotone, sup_bounds_ok=sup_ok,
                             energy_threshold=energy_threshold, passed=passed)
