"""Variable-exponent Lebesgue and Sobolev quantities on P1 functions.

The exponent p(·) lives at quadrature points. Every integral here uses the
mesh quadrature, so modulars, norms and the assembled energy agree on how
∫|u|^{p(x)} is approximated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import exprparse
from .errors import (DegenerateInput, ExponentOutOfRange, MeshMismatch,
                     NonFinite, NonZeroTrace)
from .fem import FeFunction, Mesh

__all__ = [
    "ExponentField", "DiscreteFunction",
    "modular", "luxemburg_norm", "sobolev_norm", "lp_norm", "l1_norm", "conjugate",
    "NormModularReport", "HolderReport", "RegularityReport",
    "check_norm_modular", "check_holder", "check_exponent_regularity",
    "regularity_under_refinement", "estimate_embedding_constant",
    "luxemburg_from_samples",
    "random_exponent", "random_function", "SuiteResult", "function_space_suite",
]

# At discrete level a P1 function is its own L^{p(·)} representative.
DiscreteFunction = FeFunction

LUX_RTOL = 1e-12
LUX_MAXITER = 200


@dataclass(eq=False)
class ExponentField:
    """Exponent p(·) sampled at the quadrature points of `mesh`.

    Values must be finite and at least 1. Operations that need p⁻ > 1
    (the conjugate exponent) check that themselves.
    """

    mesh: Mesh
    values: np.ndarray
    source: Optional[object] = None
    p_minus: float = field(init=False)
    p_plus: float = field(init=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        vals = np.broadcast_to(vals, self.mesh.qweights.shape).copy()
        if not np.all(np.isfinite(vals)):
            raise ExponentOutOfRange("exponent must be finite (p⁺ < ∞)")
        if np.any(vals < 1.0):
            raise ExponentOutOfRange(f"exponent must be >= 1, min is {vals.min()!r}")
        self.values = vals
        self.p_minus = float(vals.min())
        self.p_plus = float(vals.max())

    @classmethod
    def constant(cls, mesh: Mesh, value: float) -> "ExponentField":
        return cls(mesh, np.full(mesh.qweights.shape, float(value)), source=float(value))

    @classmethod
    def from_expression(cls, mesh: Mesh, src: Union[str, "exprparse.Expr"]) -> "ExponentField":
        expr = exprparse.parse(src) if isinstance(src, str) else src
        q = mesh.qpoints
        x = q[..., 0]
        y = q[..., 1] if mesh.dim > 1 else np.zeros_like(x)
        return cls(mesh, exprparse.evaluate(expr, x=x, y=y), source=expr)

    @classmethod
    def from_callable(cls, mesh: Mesh, fn: Callable) -> "ExponentField":
        q = mesh.qpoints
        coords = [q[..., d] for d in range(mesh.dim)]
        return cls(mesh, fn(*coords), source=fn)

    @property
    def is_constant(self) -> bool:
        return self.p_minus == self.p_plus


def _check_mesh(u: FeFunction, p: ExponentField):
    if u.mesh is not p.mesh:
        raise MeshMismatch("function and exponent are defined on different meshes")


def _modular_samples(values: np.ndarray, weights: np.ndarray, p: np.ndarray) -> float:
    with np.errstate(over="ignore"):
        return float(np.sum(weights * np.power(np.abs(values), p)))


def modular(u: FeFunction, p: ExponentField) -> float:
    """ρ(u) = ∫ |u(x)|^{p(x)} dx by mesh quadrature."""
    _check_mesh(u, p)
    return _modular_samples(u.at_quadrature(), u.mesh.qweights, p.values)


def luxemburg_from_samples(values, weights, p, rtol=LUX_RTOL, maxiter=LUX_MAXITER) -> float:
    """Luxemburg norm of a function known by its quadrature samples.

    Brackets the root of λ ↦ ρ(u/λ) - 1 by doubling/halving from
    ``max|u|``, bisects to relative width `rtol`, then polishes with one
    Newton step clamped to the bracket.
    """
    a = np.abs(np.asarray(values, dtype=float))
    w = np.asarray(weights, dtype=float)
    p = np.asarray(p, dtype=float)
    a, w, p = np.broadcast_arrays(a, w, p)
    keep = a > 0
    if not np.any(keep):
        return 0.0
    a, w, p = a[keep], w[keep], p[keep]

    def rho(lam):
        with np.errstate(over="ignore", invalid="ignore"):
            return float(np.sum(w * np.power(a / lam, p)))

    lam = float(a.max())
    r = rho(lam)
    if not np.isfinite(r):
        raise NonFinite(f"modular overflowed at the initial bracket λ = {lam!r}")
    if r > 1.0:
        lo, hi = lam, 2.0 * lam
        while rho(hi) > 1.0:
            lo, hi = hi, 2.0 * hi
    else:
        lo, hi = 0.5 * lam, lam
        while True:
            r_lo = rho(lo)
            if not np.isfinite(r_lo):
                raise NonFinite(f"modular overflowed while bracketing at λ = {lo!r}")
            if r_lo > 1.0:
                break
            lo, hi = 0.5 * lo, lo
    for _ in range(maxiter):
        if hi - lo <= rtol * hi:
            break
        mid = 0.5 * (lo + hi)
        if rho(mid) > 1.0:
            lo = mid
        else:
            hi = mid

    lam = 0.5 * (lo + hi)
    with np.errstate(over="ignore"):
        s = np.power(a / lam, p)
    f = float(np.sum(w * s)) - 1.0
    df = -float(np.sum(w * p * s)) / lam
    if df < 0 and np.isfinite(f):
        lam_n = lam - f / df
        if lo <= lam_n <= hi:
            lam = lam_n
    return lam


def luxemburg_norm(u: FeFunction, p: ExponentField) -> float:
    """‖u‖_{p(·)} = inf{λ > 0 : ρ(u/λ) ≤ 1}."""
    _check_mesh(u, p)
    return luxemburg_from_samples(u.at_quadrature(), u.mesh.qweights, p.values)


lp_norm = luxemburg_norm


def l1_norm(u: FeFunction) -> float:
    return float(np.sum(u.mesh.qweights * np.abs(u.at_quadrature())))


def sobolev_norm(u: FeFunction, p: ExponentField) -> float:
    """‖u‖_{1,p(·)} := ‖∇u‖_{p(·)} for zero-trace u."""
    _check_mesh(u, p)
    if u.boundary_max() > 1e-14:
        raise NonZeroTrace(f"Dirichlet values up to {u.boundary_max():.3e}")
    g = np.linalg.norm(u.gradient(), axis=1)
    return luxemburg_from_samples(g[:, None], u.mesh.qweights, p.values)


def conjugate(p: ExponentField) -> ExponentField:
    """Pointwise p'(x) = p(x) / (p(x) - 1)."""
    if not p.p_minus > 1.0:
        raise ExponentOutOfRange(f"conjugate exponent needs p⁻ > 1, got {p.p_minus!r}")
    return ExponentField(p.mesh, p.values / (p.values - 1.0), source=("conjugate", p.source))


@dataclass
class NormModularReport:
    norm: float
    modular: float
    lower: float
    upper: float
    passed: bool
    slack_lower: float   # modular - lower, >= 0 when the left inequality holds
    slack_upper: float   # upper - modular


def check_norm_modular(u: FeFunction, p: ExponentField, rtol: float = 1e-10) -> NormModularReport:
    """Check the norm–modular sandwich for one function.

    For ‖u‖ ≤ 1: ‖u‖^{p⁺} ≤ ρ(u) ≤ ‖u‖^{p⁻}; for ‖u‖ ≥ 1 the exponents swap.
    `rtol` absorbs rounding in the equality cases (constant p).
    """
    nrm = luxemburg_norm(u, p)
    rho = modular(u, p)
    if nrm <= 1.0:
        lower, upper = nrm ** p.p_plus, nrm ** p.p_minus
    else:
        lower, upper = nrm ** p.p_minus, nrm ** p.p_plus
    slack_lo, slack_hi = rho - lower, upper - rho
    scale = max(abs(rho), abs(lower), abs(upper), np.finfo(float).tiny)
    ok = slack_lo >= -rtol * scale and slack_hi >= -rtol * scale
    return NormModularReport(nrm, rho, lower, upper, bool(ok), slack_lo, slack_hi)


@dataclass
class HolderReport:
    l1_product: float
    norm_f: float
    norm_g: float
    bound: float
    constant: float
    passed: bool
    slack: float


def check_holder(f: FeFunction, g: FeFunction, p: ExponentField, constant: float = 2.0) -> HolderReport:
    """Check ‖fg‖₁ ≤ c ‖f‖_{p(·)} ‖g‖_{p'(·)} with c = 2 by default."""
    _check_mesh(f, p)
    _check_mesh(g, p)
    pc = conjugate(p)
    prod = float(np.sum(f.mesh.qweights * np.abs(f.at_quadrature() * g.at_quadrature())))
    nf, ng = luxemburg_norm(f, p), luxemburg_norm(g, pc)
    bound = constant * nf * ng
    slack = bound - prod
    return HolderReport(prod, nf, ng, bound, constant, bool(slack >= -1e-12 * max(bound, 1.0)), slack)


@dataclass
class RegularityReport:
    kind: str
    gamma: Optional[float]
    constant: float
    worst_pair: tuple
    passed: bool


def _pairwise_max(points, values, score, chunk=2048):
    best, best_pair = 0.0, (None, None)
    n = len(points)
    for start in range(0, n, chunk):
        pa = points[start:start + chunk]
        va = values[start:start + chunk]
        d = np.sqrt(((pa[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1))
        dv = np.abs(va[:, None] - values[None, :])
        mask = (d > 0) & (d < 0.5)
        if not np.any(mask):
            continue
        s = np.where(mask, score(dv, np.where(mask, d, 0.25)), -np.inf)
        k = np.unravel_index(np.argmax(s), s.shape)
        if s[k] > best:
            best, best_pair = float(s[k]), (start + k[0], k[1])
    return best, best_pair


def check_exponent_regularity(p: ExponentField, kind: str = "log_holder",
                              gamma: float = 1.0) -> RegularityReport:
    """Smallest admissible constant over quadrature-point pairs with |x-y| < 1/2.

    ``kind="log_holder"`` returns C₀ = max |p(x)-p(y)|·(-log|x-y|);
    ``kind="holder"`` returns L = max |p(x)-p(y)| / |x-y|^γ.
    Coincident points are skipped.
    """
    pts = p.mesh.qpoints.reshape(-1, p.mesh.dim)
    vals = p.values.ravel()
    if len(vals) < 2:
        raise DegenerateInput("need at least two samples of p")
    if kind == "log_holder":
        C, pair = _pairwise_max(pts, vals, lambda dv, d: dv * -np.log(d))
        g = None
    elif kind == "holder":
        if not 0 < gamma <= 1:
            raise ValueError("Hölder exponent must lie in (0, 1]")
        C, pair = _pairwise_max(pts, vals, lambda dv, d: dv / d ** gamma)
        g = gamma
    else:
        raise ValueError(f"unknown regularity kind {kind!r}")
    return RegularityReport(kind, g, C, pair, bool(np.isfinite(C)))


@dataclass
class RefinementReport:
    kind: str
    sizes: list
    constants: list
    growing: bool


def regularity_under_refinement(exponent: Callable[[Mesh], ExponentField], meshes,
                                kind: str = "holder", gamma: float = 1.0,
                                growth: float = 1.05) -> RefinementReport:
    """Track the regularity constant as the mesh is refined.

    A constant that increases by more than the factor `growth` at every
    refinement is flagged: the exponent is not in the class on the continuum.
    """
    consts = [check_exponent_regularity(exponent(m), kind, gamma).constant for m in meshes]
    ratios = [b / a if a > 0 else (np.inf if b > 0 else 1.0)
              for a, b in zip(consts[:-1], consts[1:])]
    growing = len(ratios) > 0 and all(r > growth for r in ratios)
    return RefinementReport(kind, [m.n for m in meshes], consts, growing)


def _random_zero_trace(mesh: Mesh, rng: np.random.Generator) -> FeFunction:
    x = mesh.vertices
    modes = rng.integers(1, 6, size=mesh.dim)
    if mesh.dim == 1:
        base = np.sin(np.pi * modes[0] * x[:, 0])
    else:
        base = np.sin(np.pi * modes[0] * x[:, 0]) * np.sin(np.pi * modes[1] * x[:, 1])
    noise = rng.normal(size=mesh.num_vertices) * rng.uniform(0.0, 1.0)
    nodal = rng.uniform(0.1, 10.0) * (base + noise)
    nodal[mesh.boundary_nodes] = 0.0
    return FeFunction(nodal, mesh)


def estimate_embedding_constant(p: ExponentField, q: ExponentField, trials: int = 100,
                                rng=None, functions=None) -> float:
    """Empirical lower bound for K in ‖u‖_{q(·)} ≤ K ‖u‖_{1,p(·)}.

    Takes the max ratio over `trials` random zero-trace functions, or over
    `functions` when given.
    """
    if p.mesh is not q.mesh:
        raise MeshMismatch("p and q are defined on different meshes")
    if np.any(q.values < p.values):
        raise ExponentOutOfRange("embedding needs p(x) <= q(x) pointwise")
    rng = np.random.default_rng(rng)
    if functions is None:
        functions = [_random_zero_trace(p.mesh, rng) for _ in range(trials)]
    best = 0.0
    for u in functions:
        den = sobolev_norm(u, p)
        if den == 0.0:
            raise DegenerateInput("trial function vanishes")
        best = max(best, luxemburg_norm(u, q) / den)
    return best


# -- seeded property suite -----------------------------------------------------

def random_exponent(mesh: Mesh, rng: np.random.Generator) -> ExponentField:
    """A smooth random exponent with 1.1 <= p <= 5."""
    kind = rng.integers(3)
    q = mesh.qpoints
    x = q[..., 0]
    y = q[..., 1] if mesh.dim > 1 else np.zeros_like(x)
    lo = rng.uniform(1.1, 3.0)
    if kind == 0:
        vals = np.full_like(x, lo)
    elif kind == 1:
        a, b = rng.uniform(0.0, 2.0, size=2)
        vals = lo + a * x + b * y
    else:
        k = rng.integers(1, 4)
        vals = lo + rng.uniform(0.0, 2.0) * np.sin(np.pi * k * x) ** 2 * np.cos(np.pi * y) ** 2
    return ExponentField(mesh, vals, source=f"random[{kind}]")


def random_function(mesh: Mesh, rng: np.random.Generator) -> FeFunction:
    """Random nodal values with a random overall scale in [1e-3, 1e3]."""
    scale = 10.0 ** rng.uniform(-3.0, 3.0)
    return FeFunction(scale * rng.normal(size=mesh.num_vertices), mesh)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    worst_slack: float   # most negative margin seen (>= 0 when every draw passes)
    draws: int


def function_space_suite(meshes, draws: int, seed: int = 0, unit_tol: float = 1e-10,
                         rtol: float = 1e-9) -> list:
    """Norm axioms, unit-sphere identity, norm–modular sandwich and Hölder (c = 2)
    over `draws` seeded (u, p) pairs, cycling through `meshes`."""
    rng = np.random.default_rng(seed)
    worst = {k: np.inf for k in ("norm_axioms", "unit_sphere", "norm_modular", "holder")}
    for i in range(draws):
        mesh = meshes[i % len(meshes)]
        p = random_exponent(mesh, rng)
        u, v = random_function(mesh, rng), random_function(mesh, rng)
        alpha = rng.uniform(-10.0, 10.0)
        nu, nv = luxemburg_norm(u, p), luxemburg_norm(v, p)
        scale = nu + nv
        margins = [
            nu,                                                            # positivity
            rtol * abs(alpha) * nu - abs(luxemburg_norm(alpha * u, p) - abs(alpha) * nu),
            (1.0 + rtol) * scale - luxemburg_norm(u + v, p),               # triangle
        ]
        worst["norm_axioms"] = min(worst["norm_axioms"], min(margins) / max(scale, 1e-300))
        if luxemburg_norm(FeFunction.zeros(mesh), p) != 0.0:
            worst["norm_axioms"] = -np.inf
        worst["unit_sphere"] = min(worst["unit_sphere"], unit_tol - abs(modular(u / nu, p) - 1.0))
        nm = check_norm_modular(u, p)
        sc = max(nm.modular, nm.lower, nm.upper)
        # the sandwich is an equality for constant p; allow rounding
        worst["norm_modular"] = min(worst["norm_modular"],
                                    min(nm.slack_lower, nm.slack_upper) / sc + 1e-10)
        h = check_holder(u, v, p)
        worst["holder"] = min(worst["holder"], h.slack / max(h.bound, 1e-300))
    return [SuiteResult(k, bool(w >= 0.0), float(w), draws) for k, w in worst.items()]
