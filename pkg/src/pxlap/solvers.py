"""Variational solvers: torsion, descent endpoint, mountain pass, λ-sweep.

All iterations run on free nodal coordinates. Dual norms of E'(u) are
measured with the Dirichlet Laplacian K as Riesz map,
``‖r‖_* = sqrt(rᵀ K⁻¹ r)``, for every exponent.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse.linalg as spla
from scipy.optimize import brentq, minimize_scalar

from .errors import CollapsedPath, NoConvergence, NoDescent
from .fem import EnergyFunctional, FeFunction, Mesh, mass_matrix, p_laplacian_action, stiffness_matrix
from .semipositone import Nonlinearity, TruncatedProblem
from .varexp import ExponentField, l1_norm, sobolev_norm

log = logging.getLogger(__name__)

__all__ = [
    "SolveReport", "MountainPassState", "MountainPassOptions", "SweepResult", "SweepRow",
    "TorsionLoad", "eigenfunction_surrogate", "solve_torsion", "find_descent_endpoint",
    "mountain_pass", "palais_smale_monitor", "ps_norm_bound", "verify_comparison", "lambda_sweep",
    "boundary_slope_check", "damped_newton",
]


class TorsionLoad:
    """Constant right-hand side -λ: minimizing ∫|∇v|^p/p + λ∫v."""

    def __init__(self, lam: float):
        self.lam = float(lam)

    def f_lambda(self, t):
        return np.full(np.shape(t), -self.lam)

    def F_lambda(self, t):
        return -self.lam * np.asarray(t, dtype=float)

    def df_lambda(self, t):
        return np.zeros(np.shape(t))


class _Riesz:
    """Factorized Dirichlet Laplacian used as preconditioner and dual-norm map."""

    def __init__(self, mesh: Mesh):
        self.K = stiffness_matrix(mesh)
        self._lu = spla.splu(self.K.tocsc())

    def solve(self, r):
        return self._lu.solve(np.asarray(r, dtype=float))

    def dual(self, r):
        return float(np.sqrt(max(r @ self.solve(r), 0.0)))

    def norm(self, x):
        return float(np.sqrt(max(x @ (self.K @ x), 0.0)))


@dataclass
class SolveReport:
    u: FeFunction
    energy: float
    residual_dual_norm: float
    residual_max: float
    min_u: float
    max_u: float
    negative_measure: float
    iterations: int
    converged: bool
    extras: dict = field(default_factory=dict)


def _report(fn: EnergyFunctional, riesz: _Riesz, x, iterations, converged, **extras) -> SolveReport:
    mesh = fn.mesh
    r = fn.gradient(x)
    u = FeFunction.from_free(mesh, x)
    uq = u.at_quadrature()
    return SolveReport(
        u=u,
        energy=fn.energy(x),
        residual_dual_norm=riesz.dual(r),
        residual_max=float(np.max(np.abs(r))) if r.size else 0.0,
        min_u=float(x.min()) if x.size else 0.0,
        max_u=float(x.max()) if x.size else 0.0,
        negative_measure=float(np.sum(mesh.qweights[uq <= 0.0])),
        iterations=int(iterations),
        converged=bool(converged),
        extras=dict(extras),
    )


def damped_newton(fn: EnergyFunctional, x0, riesz: _Riesz, tol=1e-8, maxiter=200, eps=1e-10,
                  merit="residual", c=1e-4, trials=40, history=None):
    """Newton on E'(u) = 0 with the eps-regularized Hessian.

    ``merit="energy"`` backtracks on E (for convex problems) and falls back to
    the residual merit ½‖r‖²_* once energy decreases drop below rounding.
    Convergence requires both ‖r‖_* <= tol and max|r_i| <= tol.

    Returns ``(x, iterations, converged)``.
    """
    x = np.array(x0, dtype=float)
    r = fn.gradient(x)
    for it in range(maxiter + 1):
        z = riesz.solve(r)
        dual = float(np.sqrt(max(r @ z, 0.0)))
        rmax = float(np.max(np.abs(r))) if r.size else 0.0
        if history is not None:
            history.append(("newton", it, fn.energy(x), dual, x.copy()))
        if dual <= tol and rmax <= tol:
            return x, it, True
        if it == maxiter:
            break
        H = fn.hessian(x, eps)
        dx = spla.spsolve(H.tocsc(), -r)
        if not np.all(np.isfinite(dx)):
            break
        accepted = False
        if merit == "energy":
            e0 = fn.energy(x)
            slope = float(r @ dx)
            if slope < 0:
                s = 1.0
                for _ in range(trials):
                    xn = x + s * dx
                    if fn.energy(xn) <= e0 + c * s * slope:
                        accepted = True
                        break
                    s *= 0.5
        if not accepted:
            m0 = 0.5 * dual * dual
            s = 1.0
            for _ in range(trials):
                xn = x + s * dx
                rn = fn.gradient(xn)
                if 0.5 * (rn @ riesz.solve(rn)) <= (1.0 - 2.0 * c * s) * m0:
                    accepted = True
                    break
                s *= 0.5
        if not accepted:
            break
        x = xn
        r = fn.gradient(x)
    return x, it, False


def solve_torsion(p: ExponentField, lam: float, mesh: Optional[Mesh] = None, tol: float = 1e-8,
                  maxiter: int = 200) -> SolveReport:
    """Zero-trace minimizer of ∫|∇v|^{p(x)}/p(x) + λ∫v, i.e. -Δ_{p(x)} v = -λ.

    Damped Newton started from the p ≡ 2 solution; the result is
    nonpositive for λ >= 0.
    """
    if lam < 0:
        raise ValueError("torsion needs λ >= 0")
    mesh = p.mesh if mesh is None else mesh
    fn = EnergyFunctional(mesh, p, TorsionLoad(lam))
    riesz = _Riesz(mesh)
    load = mass_matrix(mesh) @ np.ones(mesh.num_free)
    x0 = riesz.solve(-float(lam) * load)
    if p.p_minus > 2.0:
        # 1D scaling of the exact solution: amplitude ~ λ^{1/(p-1)}
        x0 *= float(lam) ** (1.0 / (p.p_minus - 1.0) - 1.0) if lam > 0 else 1.0
    x, it, ok = damped_newton(fn, x0, riesz, tol=tol, maxiter=maxiter, merit="energy")
    if not ok:
        raise NoConvergence(f"torsion Newton did not reach {tol:g} in {maxiter} steps",
                            iterations=it, residual=riesz.dual(fn.gradient(x)))
    return _report(fn, riesz, x, it, True, lam=float(lam))


def eigenfunction_surrogate(mesh: Mesh) -> FeFunction:
    """Positive interior bump sin(πx) (times sin(πy) in 2D)."""
    if mesh.dim == 1:
        u = FeFunction.interpolate(mesh, lambda x: np.sin(np.pi * x))
    else:
        u = FeFunction.interpolate(mesh, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    u.nodal[mesh.boundary_nodes] = 0.0
    return u


def find_descent_endpoint(p: ExponentField, prob, phi: Optional[FeFunction] = None,
                          t_limit: float = 2.0 ** 60):
    """Smallest t = 2^k >= 1 with E_λ(tφ) < 0, for φ normalized to ‖φ‖_{1,p} = 1.

    Returns ``(t1, t1 * phi)``.
    """
    mesh = p.mesh
    if phi is None:
        phi = eigenfunction_surrogate(mesh)
    phi = phi / sobolev_norm(phi, p)
    fn = EnergyFunctional(mesh, p, prob)
    x = phi.free
    t = 1.0
    while t <= t_limit:
        if fn.energy(t * x) < 0.0:
            return t, phi * t
        t *= 2.0
    raise NoDescent(f"E(tφ) >= 0 for all t = 2^k up to {t_limit:g}")


@dataclass
class MountainPassOptions:
    path_points: int = 41
    tol: float = 1e-8
    tol_path: float = 1e-3
    max_path_iter: int = 5000
    armijo_c: float = 1e-4
    armijo_trials: int = 40
    newton_maxiter: int = 60
    eps: float = 1e-10
    trace: bool = False


@dataclass
class MountainPassState:
    path: list
    energies: np.ndarray
    max_index: int
    grad_dual_norm: float
    iterations: int
    lambda2_path: float = np.nan
    lambda2_bound: float = np.nan
    t1: float = np.nan
    handoff: str = ""
    history: list = field(default_factory=list)
    trace: list = field(default_factory=list)


def _ray_path(fn, riesz, w, T, P):
    """Uniform P-point path on the ray {t ŵ : 0 <= t <= T}, ŵ = w/‖w‖_K.

    T is doubled until the endpoint has negative energy. The grid maximizer
    is replaced by the exact maximizer of E along the ray, so the max
    vertex is the peak of the ray. Returns (path, energies, m, T, t_peak).
    """
    nw = riesz.norm(w)
    if not nw > 0.0:
        raise CollapsedPath("ray direction vanished")
    w = w / nw
    for _ in range(64):
        ts = np.linspace(0.0, T, P)
        energies = np.array([fn.energy(t * w) for t in ts])
        if energies[-1] < 0.0:
            break
        T *= 2.0
    else:
        raise CollapsedPath("no negative-energy point on the ray")
    m = int(np.argmax(energies))
    if m == 0:
        raise CollapsedPath("ray maximum is at the origin")
    res = minimize_scalar(lambda t: -fn.energy(t * w), bounds=(ts[m - 1], ts[m + 1]),
                          method="bounded", options={"xatol": 1e-12 * T})
    if -res.fun > energies[m]:
        ts[m], energies[m] = res.x, -res.fun
    path = [t * w for t in ts]
    return path, energies, m, T, float(ts[m])


def mountain_pass(p: ExponentField, prob, mesh: Optional[Mesh] = None,
                  opts: Optional[MountainPassOptions] = None,
                  phi: Optional[FeFunction] = None):
    """Mountain-pass critical point of E_λ followed by Newton refinement.

    The path starts as the segment from 0 to the descent endpoint t₁φ,
    discretized with `opts.path_points` points. The path is kept radial:
    each iteration takes the maximizer u* of E on the path, moves it along
    the K-preconditioned steepest descent direction with its radial
    component removed, and replaces the path by the ray through the new
    point (extended until its energy is negative). The step is accepted by
    Armijo backtracking on the ray maximum, so the max-vertex energy never
    increases. Once ‖E'(u*)‖_* <= `tol_path`, Newton solves E'(u) = 0 from
    u*; if Newton fails or leaves the pass level (0, Λ₂], deformation
    resumes with a tighter `tol_path`.

    Returns ``(SolveReport, MountainPassState)``.
    """
    opts = MountainPassOptions() if opts is None else opts
    if opts.path_points < 3:
        raise ValueError("path needs at least 3 points")
    mesh = p.mesh if mesh is None else mesh
    fn = EnergyFunctional(mesh, p, prob)
    riesz = _Riesz(mesh)
    P = opts.path_points

    t1, v1 = find_descent_endpoint(p, prob, phi)
    T = riesz.norm(v1.free)
    path, energies, m, T, t_peak = _ray_path(fn, riesz, v1.free, T, P)
    lambda2_path = float(energies[m])
    lam = float(getattr(prob, "lam", 0.0))
    lambda2_bound = t1 ** p.p_plus / p.p_minus + t1 * lam * l1_norm(v1 / t1)
    state = MountainPassState(path, energies, m, np.nan, 0, lambda2_path, lambda2_bound, t1)

    tol_path = opts.tol_path
    step = 1.0
    it = 0
    attempts = []
    while True:
        reason = "max_iter"
        while it < opts.max_path_iter:
            x = path[m]
            r = fn.gradient(x)
            z = riesz.solve(r)
            dual = float(np.sqrt(max(r @ z, 0.0)))
            state.history.append(("path", it, float(energies[m]), dual, x.copy()))
            if opts.trace:
                for k, e in enumerate(energies):
                    state.trace.append((it, k, float(e), dual if k == m else np.nan))
            if energies[m] < 0.0:
                raise CollapsedPath(f"path maximum energy {energies[m]:.3e} < 0 at iteration {it}")
            if dual <= tol_path:
                reason = "tol_path"
                break
            xhat = x / riesz.norm(x)
            d = -z + (z @ (riesz.K @ xhat)) * xhat
            slope = float(r @ d)
            if not slope < 0.0:
                reason = "stationary"
                break
            s = min(1.0, 2.0 * step)
            accepted = None
            for _ in range(opts.armijo_trials):
                try:
                    trial = _ray_path(fn, riesz, x + s * d, max(T, 2.0 * t_peak), P)
                except CollapsedPath:
                    trial = None
                if trial is not None and trial[1][trial[2]] <= energies[m] + opts.armijo_c * s * slope:
                    accepted = trial
                    break
                s *= 0.5
            it += 1
            if accepted is None:
                reason = "line_search"
                break
            step = s
            path, energies, m, T, t_peak = accepted
            T = min(T, 4.0 * t_peak) if fn.energy(path[-1] * (4.0 * t_peak / T)) < 0.0 else T

        x_start, dual_start = path[m], riesz.dual(fn.gradient(path[m]))
        x, nit, ok = damped_newton(fn, x_start, riesz, tol=opts.tol, maxiter=opts.newton_maxiter,
                                   eps=opts.eps, merit="residual", history=state.history)
        e_sol = fn.energy(x)
        at_pass_level = 0.0 < e_sol <= lambda2_path * (1.0 + 1e-12)
        attempts.append((reason, dual_start, nit, ok, e_sol))
        if ok and at_pass_level:
            break
        if reason == "tol_path" and it < opts.max_path_iter and tol_path > 1e-9:
            log.debug("Newton from dual %.2e gave E=%.4g (ok=%s); tightening", dual_start, e_sol, ok)
            tol_path = dual_start / 10.0
            continue
        break

    state.path, state.energies, state.max_index = path, energies, m
    state.grad_dual_norm = float(dual_start)
    state.iterations = it
    state.handoff = reason
    newton_total = sum(a[2] for a in attempts)
    report = _report(fn, riesz, x, it + newton_total, ok and at_pass_level,
                     lambda2_path=lambda2_path, lambda2_bound=lambda2_bound, t1=t1,
                     handoff=reason, handoff_dual=float(dual_start), path_iterations=it,
                     newton_iterations=newton_total, newton_attempts=len(attempts),
                     pass_level_positive=bool(e_sol > 0.0))
    if not ok:
        raise NoConvergence(
            f"Newton refinement stalled at residual {report.residual_dual_norm:.3e}",
            iterations=report.iterations, residual=report.residual_dual_norm)
    if not at_pass_level:
        raise NoConvergence(
            f"Newton converged to a critical point with E = {e_sol:.6g} outside (0, {lambda2_path:.6g}]",
            iterations=report.iterations, residual=report.residual_dual_norm)
    return report, state


@dataclass
class PalaisSmaleReport:
    energies: np.ndarray
    dual_norms: np.ndarray
    sobolev_norms: np.ndarray
    bound: float
    last_dual: float
    energies_in_bracket: bool
    lambda2: float


def palais_smale_monitor(state: MountainPassState, p: ExponentField, tol: Optional[float] = None
                         ) -> PalaisSmaleReport:
    """Sequence (E(u_k), ‖E'(u_k)‖_*, ‖u_k‖_{1,p}) over the run's iterates."""
    if len(state.history) < 2:
        raise ValueError("need at least two recorded iterates")
    mesh = p.mesh
    E = np.array([h[2] for h in state.history])
    D = np.array([h[3] for h in state.history])
    N = np.array([sobolev_norm(FeFunction.from_free(mesh, h[4]), p) for h in state.history])
    lam2 = state.lambda2_path
    in_bracket = bool(np.all((E >= 0.0) & (E <= lam2 * (1 + 1e-12) + 1e-12)))
    return PalaisSmaleReport(E, D, N, float(N.max()), float(D[-1]), in_bracket, float(lam2))


def ps_norm_bound(c1: float, M: float, theta: float, p_minus: float, p_plus: float,
                  area: float = 1.0) -> float:
    """A priori bound on ‖u_n‖_{1,p} for a Palais-Smale sequence with E(u_n) ≤ c1.

    Largest s ≥ 1 with (1/p⁺ - 1/θ) s^{p⁻} - s/θ ≤ c1 + M|Ω|/θ.  The
    right-hand side carries a plus sign: it follows from adding the
    Ambrosetti-Rabinowitz slack M|Ω|/θ to the energy bound.  Returns 1.0
    when the inequality already fails at s = 1.
    """
    a = 1.0 / p_plus - 1.0 / theta
    if not (a > 0 and p_minus > 1):
        raise ValueError("need θ > p⁺ and p⁻ > 1")
    rhs = c1 + M * area / theta
    g = lambda s: a * s ** p_minus - s / theta - rhs
    if g(1.0) > 0:
        return 1.0
    hi = 2.0
    while g(hi) <= 0:
        hi *= 2.0
    return float(brentq(g, 1.0, hi, xtol=1e-14, rtol=1e-14))


@dataclass
class ComparisonReport:
    hypothesis_margin: float   # max_i a(lower; φ_i) - a(upper; φ_i)
    hypothesis_holds: bool
    worst_violation: float     # max(lower - upper) over nodes
    conclusion_holds: bool


def verify_comparison(lower: FeFunction, upper: FeFunction, p: ExponentField,
                      mesh: Optional[Mesh] = None, tol: float = 1e-10,
                      hypothesis_tol: float = 1e-8) -> ComparisonReport:
    """Check -Δ_p lower <= -Δ_p upper against every nodal hat function, and lower <= upper.

    Nonnegative P1 test functions are nonnegative combinations of hats, so
    testing hats covers the whole discrete cone.
    """
    mesh = lower.mesh if mesh is None else mesh
    if upper.mesh is not mesh or lower.mesh is not mesh:
        raise ValueError("functions must share the mesh")
    free = mesh.free_nodes
    a_lo = p_laplacian_action(lower, p)[free]
    a_up = p_laplacian_action(upper, p)[free]
    margin = float(np.max(a_lo - a_up)) if free.size else 0.0
    worst = float(np.max(lower.nodal - upper.nodal))
    return ComparisonReport(margin, margin <= hypothesis_tol, worst, worst <= tol)


@dataclass
class BoundarySlopeReport:
    slopes: np.ndarray
    min_slope: float
    max_slope: float
    positive: bool
    degenerate: bool


def boundary_slope_check(u: FeFunction, mesh: Optional[Mesh] = None) -> BoundarySlopeReport:
    """Inward one-sided difference quotients at boundary nodes (square corners skipped)."""
    mesh = u.mesh if mesh is None else mesh
    b, inner = mesh.inward[:, 0], mesh.inward[:, 1]
    slopes = (u.nodal[inner] - u.nodal[b]) / mesh.inward_distance
    degenerate = bool(np.all(slopes == 0.0))
    return BoundarySlopeReport(slopes, float(slopes.min()), float(slopes.max()),
                               bool(slopes.min() > 0.0), degenerate)


@dataclass
class SweepRow:
    lam: float
    energy: float
    min_u: float
    negative_measure: float
    residual: float
    iterations: int
    converged: bool
    report: Optional[SolveReport] = None
    error: str = ""


@dataclass
class SweepResult:
    rows: list
    lambda_threshold: Optional[float]


def _threshold(rows) -> Optional[float]:
    """Largest λ whose row and every smaller-λ row have strictly positive min u."""
    thr = None
    for row in reversed(rows):          # smallest λ first
        if row.converged and row.min_u > 0.0:
            thr = row.lam
        else:
            break
    return thr


def lambda_sweep(p: ExponentField, prob_base: Nonlinearity, mesh: Optional[Mesh],
                 lambdas: Sequence[float], opts: Optional[MountainPassOptions] = None,
                 warm_start: bool = True, parallel: bool = False) -> SweepResult:
    """Mountain pass for each λ in a strictly decreasing list.

    Warm start uses the previous solution as the ray direction φ for the
    next initial path. Rows whose solve fails are kept, flagged unconverged.
    """
    lambdas = [float(v) for v in lambdas]
    if any(v <= 0 for v in lambdas) or any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambdas must be positive and strictly decreasing")
    if parallel and warm_start:
        raise ValueError("parallel rows require warm_start=False")
    mesh = p.mesh if mesh is None else mesh

    def run(lam, phi):
        try:
            rep, _ = mountain_pass(p, TruncatedProblem(prob_base, lam), mesh, opts, phi=phi)
            return SweepRow(lam, rep.energy, rep.min_u, rep.negative_measure,
                            rep.residual_dual_norm, rep.iterations, rep.converged, rep)
        except (NoConvergence, CollapsedPath, NoDescent) as exc:
            log.warning("sweep row λ=%g failed: %s", lam, exc)
            return SweepRow(lam, np.nan, np.nan, np.nan, np.nan,
                            getattr(exc, "iterations", 0) or 0, False, None, str(exc))

    if parallel:
        with ThreadPoolExecutor() as pool:
            rows = list(pool.map(lambda lam: run(lam, None), lambdas))
    else:
        rows, phi = [], None
        for lam in lambdas:
            row = run(lam, phi)
            rows.append(row)
            if warm_start and row.converged and row.min_u > 0.0:
                phi = row.report.u
    return SweepResult(rows, _threshold(rows))
