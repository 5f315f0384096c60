"""Nonlinearity f, its truncation f_λ, and the hypothesis checks on f.

The truncation is

    f_λ(t) = f(t) - λ        for t > 0
           = -λ (t + 1)      for -1 <= t <= 0
           = 0               for t < -1

so f_λ is continuous, and F_λ(t) = ∫₀ᵗ f_λ is constant (= λ/2) below -1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import exprparse

__all__ = [
    "Nonlinearity", "TruncatedProblem", "ArReport", "HypothesisReport",
    "power_model", "zero_nonlinearity", "from_expression",
    "f_lambda", "F_lambda", "df_lambda",
    "validate_hypotheses", "growth_envelope_constant", "truncated_ar_constant",
    "check_growth_bound",
]

# Gauss–Legendre nodes on (0, 1) for antiderivatives of expression-defined f.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(eq=False)
class Nonlinearity:
    """A continuous f: [0, ∞) → [0, ∞) with antiderivative F and slope df.

    The callables are only ever evaluated at t >= 0. `q`, `r`, `theta` and
    `t0` are the growth exponents and the superlinearity data; the checks
    in :func:`validate_hypotheses` decide whether they are consistent with f.
    """

    f: Callable[[np.ndarray], np.ndarray]
    F: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    q: float
    r: float
    theta: float
    t0: float
    label: str = ""


def power_model(q: float, r: Optional[float] = None, theta: Optional[float] = None,
                t0: float = 1.0) -> Nonlinearity:
    """f(t) = t^(q-1) with closed-form F and f'.

    If not given, `r` defaults to ``q`` and `theta` to ``q``.
    """
    q = float(q)
    r = q if r is None else float(r)
    theta = q if theta is None else float(theta)

    def f(t):
        return np.power(t, q - 1.0)

    def F(t):
        return np.power(t, q) / q

    def df(t):
        t = np.asarray(t, dtype=float)
        if q == 2.0:
            return np.ones_like(t)
        with np.errstate(divide="ignore"):
            return (q - 1.0) * np.power(t, q - 2.0)

    return Nonlinearity(f, F, df, q, r, theta, float(t0), label=f"t^{q - 1:g}")


def zero_nonlinearity(q: float = 4.0, r: Optional[float] = None,
                      theta: Optional[float] = None, t0: float = 1.0) -> Nonlinearity:
    def zero(t):
        return np.zeros_like(np.asarray(t, dtype=float))

    r = q if r is None else r
    theta = q if theta is None else theta
    return Nonlinearity(zero, zero, zero, float(q), float(r), float(theta), float(t0), label="0")


def from_expression(src: str, q: float, r: float, theta: float, t0: float) -> Nonlinearity:
    """Nonlinearity given as text in the variable ``t``.

    F is computed by 48-point Gauss–Legendre on [0, t] (exact for
    polynomials up to degree 95); f' by central differences.
    """
    expr = exprparse.parse(src, variables=("t",))

    def f(t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(exprparse.evaluate(expr, t=t), t.shape)

    def F(t):
        t = np.asarray(t, dtype=float)
        nodes = t[..., None] * _GL_X
        return t * (f(nodes) @ _GL_W)

    def df(t):
        t = np.asarray(t, dtype=float)
        h = 1e-6 * np.maximum(1.0, np.abs(t))
        lo = np.maximum(t - h, 0.0)
        return (f(t + h) - f(lo)) / (t + h - lo)

    return Nonlinearity(f, F, df, float(q), float(r), float(theta), float(t0), label=src)


def _positive_part_eval(fn, t, mask):
    out = np.zeros_like(t)
    if np.any(mask):
        out[mask] = fn(t[mask])
    return out


@dataclass(eq=False)
class TruncatedProblem:
    """(f, λ) together with the closed-form truncation f_λ, F_λ."""

    base: Nonlinearity
    lam: float = field(default=0.0)

    def __post_init__(self):
        self.lam = float(self.lam)
        if self.lam < 0:
            raise ValueError("λ must be non-negative")

    def f_lambda(self, t):
        t = np.asarray(t, dtype=float)
        pos = t > 0
        out = np.where(t < -1.0, 0.0, -self.lam * (t + 1.0)) + 0.0  # no -0.0 at t = -1
        return np.where(pos, _positive_part_eval(self.base.f, t, pos) - self.lam, out)

    def F_lambda(self, t):
        t = np.asarray(t, dtype=float)
        pos = t > 0
        mid = -self.lam * (0.5 * t * t + t)
        out = np.where(t < -1.0, 0.5 * self.lam, mid)
        out = np.where(pos, _positive_part_eval(self.base.F, t, pos) - self.lam * t, out)
        return out

    def df_lambda(self, t):
        """Right derivative of f_λ: f'(t) for t >= 0, -λ on [-1, 0), 0 below."""
        t = np.asarray(t, dtype=float)
        nonneg = t >= 0
        out = np.where(t >= -1.0, -self.lam, 0.0)
        return np.where(nonneg, _positive_part_eval(self.base.df, t, nonneg), out)


def f_lambda(prob: TruncatedProblem, t):
    out = prob.f_lambda(t)
    return float(out) if np.ndim(out) == 0 else out


def F_lambda(prob: TruncatedProblem, t):
    out = prob.F_lambda(t)
    return float(out) if np.ndim(out) == 0 else out


def df_lambda(prob: TruncatedProblem, t):
    out = prob.df_lambda(t)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class HypothesisReport:
    checks: dict
    details: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _log_samples(t_max, t_min=1e-8, num=10_000):
    return np.logspace(np.log10(t_min), np.log10(t_max), num)


def validate_hypotheses(nl: Nonlinearity, p, t_max: float = 1e3, samples: int = 10_000,
                        t_min: float = 1e-8) -> HypothesisReport:
    """Sampled checks of (f1)–(f4) and of the exponent ordering.

    `p` is an :class:`~pxlap.varexp.ExponentField` or a number (p⁺).

    * f1: f(0) = 0 = min f over the samples.
    * f2: f(t)/t^(r-1) decreases monotonically over the lowest decade
      of samples (or vanishes identically).
    * f3: sup f(t)/t^(q-1) is finite and not increasing over the top decade.
    * f4: θ F(t) <= f(t) t on [t0, t_max].
    * ordering: p⁺ < r, p⁺ < q and θ > p⁺.
    """
    if not t_max > max(1.0, nl.t0):
        raise ValueError("t_max must exceed max(1, t0)")
    p_plus = float(getattr(p, "p_plus", p))
    t = _log_samples(t_max, t_min, samples)
    ft = np.asarray(nl.f(t), dtype=float)
    f0 = float(np.asarray(nl.f(np.zeros(1)))[0])
    checks, details = {}, {}

    checks["f1"] = bool(f0 == 0.0 and np.all(ft >= 0.0))
    details["f1"] = {"f(0)": f0, "min_f": float(ft.min())}

    low = t <= t[0] * 10.0
    ratio_r = ft[low] / t[low] ** (nl.r - 1.0)
    if np.all(ratio_r == 0.0):
        f2 = True
    else:
        # increasing in t means decreasing as t -> 0+
        f2 = bool(np.all(np.diff(ratio_r) >= 0.0) and ratio_r[0] < ratio_r[-1])
    checks["f2"] = f2
    details["f2"] = {"ratio_at_tmin": float(ratio_r[0]), "ratio_decade_up": float(ratio_r[-1])}

    ratio_q = ft / t ** (nl.q - 1.0)
    high = t >= t[-1] / 10.0
    rq = ratio_q[high]
    strictly_growing = bool(np.all(np.diff(rq) > 0.0) and rq[-1] > rq[0] * (1.0 + 1e-9))
    checks["f3"] = bool(np.all(np.isfinite(ratio_q)) and not strictly_growing)
    details["f3"] = {"sup_ratio": float(ratio_q.max())}

    sel = t >= nl.t0
    lhs = nl.theta * np.asarray(nl.F(t[sel]), dtype=float)
    rhs = ft[sel] * t[sel]
    gap = lhs - rhs
    checks["f4"] = bool(np.all(gap <= 1e-12 * np.maximum(1.0, np.abs(rhs))))
    details["f4"] = {"max_gap": float(gap.max()) if gap.size else 0.0}

    checks["r_gt_p"] = nl.r > p_plus
    checks["q_gt_p"] = nl.q > p_plus
    checks["theta_gt_p"] = nl.theta > p_plus
    details["ordering"] = {"p_plus": p_plus, "r": nl.r, "q": nl.q, "theta": nl.theta}
    return HypothesisReport(checks, details)


def growth_envelope_constant(nl: Nonlinearity, r: float, q: float, t_max: float = 1e8,
                             samples: int = 10_000, t_min: float = 1e-8) -> float:
    """Smallest c₁ >= 0 with f(t) <= t^(r-1) + c₁ t^(q-1) on sampled (0, t_max]."""
    t = _log_samples(t_max, t_min, samples)
    ft = np.asarray(nl.f(t), dtype=float)
    need = (ft - t ** (r - 1.0)) / t ** (q - 1.0)
    return float(max(0.0, need.max()))


def check_growth_bound(prob: TruncatedProblem, r: float, q: float, c1: float, t) -> np.ndarray:
    """Pointwise check of F_λ(t) <= t^r/r + c₁ t^q/q + λ/2 (and F_λ <= λ/2 for t <= 0)."""
    t = np.asarray(t, dtype=float)
    F = prob.F_lambda(t)
    tp = np.maximum(t, 0.0)
    bound = np.where(t > 0, tp ** r / r + c1 * tp ** q / q, 0.0) + 0.5 * prob.lam
    return F <= bound * (1.0 + 1e-12) + 1e-15


@dataclass
class ArReport:
    M: float
    theta: float
    worst_t: float


def truncated_ar_constant(prob: TruncatedProblem, theta: float, t_range=(-2.0, 10.0),
                          density: int = 10_000) -> ArReport:
    """M = max(0, sup θ F_λ(t) - f_λ(t) t) on a uniform sample of `t_range`.

    The kinks t = -1, 0 and the point t0 are always sampled.
    """
    if not theta > 1:
        raise ValueError("theta must exceed 1")
    lo, hi = map(float, t_range)
    num = max(2, int(np.ceil(density * (hi - lo))) + 1)
    extra = [v for v in (-1.0, 0.0, prob.base.t0) if lo <= v <= hi]
    t = np.union1d(np.linspace(lo, hi, num), extra)
    gap = theta * prob.F_lambda(t) - prob.f_lambda(t) * t
    k = int(np.argmax(gap))
    M = max(0.0, float(gap[k]))
    return ArReport(M, float(theta), float(t[k]))
