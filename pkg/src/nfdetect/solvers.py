"""Randomly permuted coordinate descent with exact and inexact 1-D steps.

The exact step eigendecomposes the r x r subproblem kernel, assembles the
1-D objective as log p_den(d) + p_num(d)/p_den(d) in coefficient form and
picks the best candidate among the real roots of the degree-(2r+1)
stationarity polynomial and the interval endpoints.  The inexact step
minimizes a quartic Taylor surrogate plus a quadratic regularizer mu/2 d^2,
whose cubic derivative is solved directly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .mle import FullState, NumericalFailure, StepKernel

__all__ = ["DivergenceSignal", "SolveOptions", "StepResult", "SweepStats",
           "SolveResult", "SubproblemKernel", "build_subproblem",
           "build_polynomials", "exact_step", "inexact_step", "sweep", "solve"]

# Roots with |Im| below this (relative) tolerance are treated as real.
REAL_ROOT_TOL = 1e-9
# p_den values below this magnitude make the candidate unusable.
DEN_UNDERFLOW = 1e-300


class DivergenceSignal(RuntimeError):
    """The solver left the convergent regime (objective blow-up or dead roots)."""

    def __init__(self, message, coordinate=None, sweep=None):
        super().__init__(message)
        self.coordinate = coordinate
        self.sweep = sweep


@dataclass(frozen=True)
class SolveOptions:
    solver: str = "inexact"              # exact | inexact
    mu: float = 10.0
    epsilon: float = 1e-3
    max_sweeps: int = 50
    exact_rank_limit: int | None = None  # route larger ranks to the inexact step
    divergence_threshold: float = 1.0    # absolute objective rise within a sweep

    def __post_init__(self):
        if self.solver not in ("exact", "inexact"):
            raise ValueError(f"unknown solver {self.solver!r}")


@dataclass(frozen=True)
class StepResult:
    d: float
    new_objective_estimate: float  # estimated f(a + d e_j) - f(a)
    solver_kind: str


@dataclass
class SweepStats:
    objective: float
    vnorm: float | None = None
    steps: np.ndarray | None = None


@dataclass
class SolveResult:
    a: np.ndarray
    trace: list
    converged: bool
    diverged: bool
    termination: str
    sweeps: int
    final_vnorm: float | None = None

    def trace_rows(self):
        """Rows (sweep, objective, vnorm, elapsed_s) for CSV export."""
        return [(i, t["objective"], t["vnorm"], t["elapsed_s"])
                for i, t in enumerate(self.trace)]


@dataclass
class SubproblemKernel:
    """Eigen-rotated form of a coordinate kernel for the exact step."""

    eigvals: np.ndarray          # clamped at zero
    resid_rot: np.ndarray        # V^H u
    mean_rot: np.ndarray         # V^H t
    mean_lin: float
    mean_quad: float
    box: tuple[float, float]


def build_subproblem(kernel: StepKernel) -> SubproblemKernel:
    lam, v = np.linalg.eigh(kernel.gram)
    lam = np.maximum(lam, 0.0)
    return SubproblemKernel(
        eigvals=lam,
        resid_rot=v.conj().T @ kernel.resid_proj,
        mean_rot=v.conj().T @ kernel.mean_proj,
        mean_lin=kernel.mean_lin,
        mean_quad=kernel.mean_quad,
        box=kernel.box,
    )


def _leave_one_out(weights: np.ndarray, lin_factors: list[np.ndarray]) -> np.ndarray:
    """sum_i w_i prod_{k != i} (1 + lam_k d) in coefficient form."""
    r = len(weights)
    pref = [np.array([1.0 + 0j])]
    for f in lin_factors[:-1]:
        pref.append(P.polymul(pref[-1], f))
    suff = [np.array([1.0 + 0j])]
    for f in reversed(lin_factors[1:]):
        suff.append(P.polymul(suff[-1], f))
    suff.reverse()
    out = np.zeros(max(r, 1), dtype=complex)
    for i in range(r):
        term = weights[i] * P.polymul(pref[i], suff[i])
        out[:len(term)] += term
    return out


def build_polynomials(sub: SubproblemKernel) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients (low order first) of p_den and p_num for one coordinate.

    p_den(d) = prod_i (1 + lam_i d); p_num has degree r + 2 and collects the
    quadratic mean terms and the three resolvent fractions brought over the
    common denominator.
    """
    lam = sub.eigvals
    factors = [np.array([1.0, l]) for l in lam]
    p_den = np.array([1.0])
    for f in factors:
        p_den = P.polymul(p_den, f)
    num_uu = _leave_one_out(np.abs(sub.resid_rot) ** 2, factors)
    num_ut = _leave_one_out(sub.resid_rot.conj() * sub.mean_rot, factors)
    num_tt = _leave_one_out(np.abs(sub.mean_rot) ** 2, factors)
    quad = np.array([0.0, -2.0 * sub.mean_lin, sub.mean_quad])
    p_num = P.polyadd(P.polymul(quad, p_den),
                      P.polymul([0.0, -1.0], num_uu.real))
    p_num = P.polyadd(p_num, P.polymul([0.0, 0.0, 2.0], num_ut.real))
    p_num = P.polyadd(p_num, P.polymul([0.0, 0.0, 0.0, -1.0], num_tt.real))
    return p_den.real, np.asarray(p_num).real


def _real_roots_in(coeffs: np.ndarray, lo: float, hi: float) -> list[float]:
    coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if not np.all(np.isfinite(coeffs)):
        raise DivergenceSignal("polynomial assembly overflowed")
    if len(coeffs) <= 1:
        return []
    try:
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            roots = P.polyroots(coeffs)
    except np.linalg.LinAlgError:
        raise DivergenceSignal("root finding failed on overflowed "
                               "companion matrix") from None
    if not np.all(np.isfinite(roots)):
        raise DivergenceSignal("root finding produced non-finite values")
    out = []
    for z in roots:
        if abs(z.imag) <= REAL_ROOT_TOL * (1.0 + abs(z.real)):
            d = float(z.real)
            if lo <= d <= hi:
                out.append(d)
    return out


def _cubic_roots_in(coeffs, lo: float, hi: float) -> list[float]:
    """Real roots of c0 + c1 d + c2 d^2 + c3 d^3 in [lo, hi], closed form."""
    c0, c1, c2, c3 = (float(c) for c in coeffs)
    scale = max(abs(c0), abs(c1), abs(c2), abs(c3), 1.0)
    if abs(c3) <= 1e-14 * scale:
        if abs(c2) <= 1e-14 * scale:
            if abs(c1) <= 1e-14 * scale:
                return []
            roots = [-c0 / c1]
        else:
            disc = c1 * c1 - 4.0 * c2 * c0
            if disc < 0.0:
                return []
            sq = np.sqrt(disc)
            roots = [(-c1 + sq) / (2.0 * c2), (-c1 - sq) / (2.0 * c2)]
    else:
        d0 = c2 * c2 - 3.0 * c3 * c1
        d1 = 2.0 * c2 ** 3 - 9.0 * c3 * c2 * c1 + 27.0 * c3 * c3 * c0
        inner = np.sqrt(complex(d1 * d1 - 4.0 * d0 ** 3))
        # pick the branch with the larger magnitude to avoid cancellation
        big = d1 + inner if abs(d1 + inner) >= abs(d1 - inner) else d1 - inner
        cc = (big / 2.0) ** (1.0 / 3.0)
        if cc == 0:
            roots = [-c2 / (3.0 * c3)]
        else:
            xi = np.exp(2j * np.pi / 3.0)
            roots = []
            for k in range(3):
                w = cc * xi ** k
                z = -(c2 + w + d0 / w) / (3.0 * c3)
                if abs(z.imag) <= REAL_ROOT_TOL * (1.0 + abs(z.real)):
                    roots.append(z.real)
    return [float(d) for d in roots if lo <= d <= hi]


def exact_step(kernel: StepKernel) -> StepResult:
    """Minimize the 1-D objective exactly via polynomial root-finding.

    Candidate values are compared through Horner evaluation of the
    assembled polynomials; this is faithful to the published procedure,
    including its loss of accuracy for large kernel ranks.
    """
    sub = build_subproblem(kernel)
    p_den, p_num = build_polynomials(sub)
    deriv = P.polyadd(P.polymul(p_den, P.polyder(p_den)),
                      P.polymul(p_den, P.polyder(p_num)))
    deriv = P.polysub(deriv, P.polymul(P.polyder(p_den), p_num))
    lo, hi = sub.box
    candidates = _real_roots_in(deriv, lo, hi) + [lo, hi]
    best_d, best_val = None, np.inf
    for d in candidates:
        den = P.polyval(d, p_den)
        if not np.isfinite(den) or den < DEN_UNDERFLOW:
            continue
        val = np.log(den) + P.polyval(d, p_num) / den
        if np.isfinite(val) and val < best_val:
            best_d, best_val = d, val
    if best_d is None:
        raise DivergenceSignal("no usable candidate step")
    return StepResult(d=float(np.clip(best_d, lo, hi)),
                      new_objective_estimate=float(best_val),
                      solver_kind="exact")


def inexact_step(kernel: StepKernel, mu: float) -> StepResult:
    """Minimize the quartic surrogate plus (mu/2) d^2 over the box."""
    g, u, t = kernel.gram, kernel.resid_proj, kernel.mean_proj
    gu, gt = g @ u, g @ t
    c1 = kernel.gradient()
    c2 = (kernel.mean_quad + float(np.real(u.conj() @ gu))
          + 2.0 * float(np.real(u.conj() @ t)))
    c3 = -2.0 * float(np.real(u.conj() @ gt)) - float(np.real(t.conj() @ t))
    c4 = float(np.real(t.conj() @ gt))
    lo, hi = kernel.box
    # derivative of c1 d + (c2 + mu/2) d^2 + c3 d^3 + c4 d^4
    candidates = _cubic_roots_in((c1, 2.0 * c2 + mu, 3.0 * c3, 4.0 * c4),
                                 lo, hi) + [lo, hi]
    c2m = c2 + 0.5 * mu
    vals = [d * (c1 + d * (c2m + d * (c3 + d * c4))) for d in candidates]
    best = int(np.argmin(vals))
    return StepResult(d=float(np.clip(candidates[best], lo, hi)),
                      new_objective_estimate=float(vals[best]),
                      solver_kind="inexact")


def _route_exact(options: SolveOptions, rank: int) -> bool:
    if options.solver != "exact":
        return False
    return options.exact_rank_limit is None or rank <= options.exact_rank_limit


def sweep(state, options: SolveOptions, rng: np.random.Generator,
          sweep_index: int = 0, monitor=None) -> SweepStats:
    """Visit every coordinate once in a fresh uniform random permutation.

    ``monitor``, if given, is called with (coordinate, d, true_delta) after
    each accepted update; the true delta is evaluated from the kernel
    before the state is modified.
    """
    n = state.n_coordinates
    perm = rng.permutation(n)
    f_start = state.objective()
    f_run = f_start
    steps = np.zeros(n)
    for j in perm:
        kernel = state.kernel(int(j))
        if _route_exact(options, state.rank_of(int(j))):
            try:
                result = exact_step(kernel)
            except DivergenceSignal as sig:
                raise DivergenceSignal(str(sig), coordinate=int(j),
                                       sweep=sweep_index) from None
        else:
            result = inexact_step(kernel, options.mu)
        d = result.d
        steps[j] = d
        if d != 0.0:
            delta = kernel.objective_delta(d)
            state.apply_update(int(j), d)
            f_run += delta
            if monitor is not None:
                monitor(int(j), d, delta)
            if not np.isfinite(f_run) or \
                    f_run > f_start + options.divergence_threshold:
                raise DivergenceSignal("objective increased beyond threshold",
                                       coordinate=int(j), sweep=sweep_index)
    return SweepStats(objective=state.objective(), steps=steps)


def solve(pop, y, options: SolveOptions | None = None,
          rng: np.random.Generator | int | None = None,
          state=None, monitor=None) -> SolveResult:
    """Run permuted coordinate descent until ||V(a)|| <= epsilon or the cap.

    ``state`` may carry a pre-built solver state (e.g. the block-diagonal
    accelerated form, or a warm start); by default a dense state at a = 0
    is used.
    """
    options = options or SolveOptions()
    rng = np.random.default_rng(rng)
    if state is None:
        state = FullState(pop, y)
    trace = []
    t0 = time.perf_counter()
    vnorm = None
    diverged = False
    termination = "sweep_cap"
    n_sweeps = 0
    try:
        for i in range(options.max_sweeps):
            stats = sweep(state, options, rng, sweep_index=i, monitor=monitor)
            n_sweeps = i + 1
            _, vnorm = state.optimality()
            trace.append({"sweep": i, "objective": stats.objective,
                          "vnorm": vnorm,
                          "elapsed_s": time.perf_counter() - t0})
            if vnorm <= options.epsilon:
                termination = "converged"
                break
    except (DivergenceSignal, NumericalFailure) as sig:
        diverged = True
        termination = f"diverged: {sig}"
    return SolveResult(a=state.a.copy(), trace=trace,
                       converged=(termination == "converged"),
                       diverged=diverged, termination=termination,
                       sweeps=n_sweeps, final_vnorm=vnorm)
