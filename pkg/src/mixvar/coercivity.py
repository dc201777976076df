"""Coercivity diagnostics: the auxiliary curve theta(t), its linear minorant,
and the pointwise quasiconvexity criterion.

theta(t) is the infimum of the mean energy over zero-boundary fields whose
mean q-th gradient moment is at least t.  The constraint is handled by an
exterior quadratic penalty with continuation; every reported value is the
energy of a verified-feasible field (the incumbent is rescaled onto the
constraint when the penalty leaves a deficit), so the curve is a family of
upper estimates of a convex function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._descent import StencilEnergy, laminate_profile, run_lbfgs, start_portfolio
from .envelope import AQCVerdict, EnvelopeOptions, is_aqc_at
from .grid import Grid, GridField, gradient_adjoint
from .integrand import Integrand, minus_power
from .smoothness import SmoothnessVector

__all__ = [
    "ThetaOptions",
    "ThetaCurve",
    "theta_estimate",
    "mean_coercivity_fit",
    "strong_qc_test",
]


@dataclass(frozen=True)
class ThetaOptions:
    resolution: int = 17
    multistart: int = 4
    maxiter: int = 400
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    penalty_stages: int = 4
    seed: int = 0
    domain: tuple | None = None  # defaults to Q = [-1,1]^N; theta is domain-invariant

    def grid(self, a: SmoothnessVector) -> Grid:
        dom = self.domain
        if dom is None:
            dom = tuple(((-1.0, 1.0),) * a.ndim)
        return Grid(tuple(tuple(d) for d in dom), (self.resolution,) * a.ndim, a)


@dataclass
class ThetaCurve:
    q: float
    t_values: np.ndarray
    theta_hat: np.ndarray
    diagnostics: list = field(default_factory=list)

    def __post_init__(self):
        self.t_values = np.asarray(self.t_values, dtype=float)
        self.theta_hat = np.asarray(self.theta_hat, dtype=float)
        if np.any(np.diff(self.t_values) <= 0):
            raise ValueError("t values must be strictly increasing")
        if np.any(self.t_values < 0):
            raise ValueError("t values must be nonnegative")


class _PenalizedMoment:
    """mean F(grad phi) + rho * max(0, t - mean |grad phi|^q)^2 with exact gradient."""

    def __init__(self, inner: StencilEnergy, q: float, t: float, rho: float):
        self.inner = inner
        self.q = q
        self.t = t
        self.rho = rho
        self.n_int = inner.grid.n_interior

    def moment(self, W: np.ndarray) -> float:
        fro = np.sqrt(np.sum(W**2, axis=(-2, -1)))
        return float(np.mean(fro**self.q))

    def value_and_grad(self, x: np.ndarray):
        inner = self.inner
        phi = inner.unpack(x)
        W = inner.gradient_stack(phi)
        vals = inner.F(W)
        if not np.all(np.isfinite(vals)):
            return float("inf"), np.zeros_like(x)
        dF = inner.F.gradient(W)

        fro = np.sqrt(np.sum(W**2, axis=(-2, -1)))
        moment = float(np.mean(fro**self.q))
        deficit = self.t - moment
        energy = float(np.mean(vals))
        total = energy + (self.rho * deficit**2 if deficit > 0 else 0.0)

        weights = dF / self.n_int
        if deficit > 0:
            safe = np.maximum(fro, 1e-300)[..., None, None]
            dmom = self.q * safe ** (self.q - 2.0) * W / self.n_int
            weights = weights - 2.0 * self.rho * deficit * dmom
        g_full = gradient_adjoint(inner.grid, inner.alphas, weights)
        return total, g_full[inner.free].reshape(-1)


def theta_estimate(
    F: Integrand,
    q: float,
    t_values,
    a,
    opts: ThetaOptions = ThetaOptions(),
) -> ThetaCurve:
    """Upper estimates of theta(t) on the unit box, with verified feasibility.

    Each point runs penalty continuation from a warm start (the previous
    point's incumbent rescaled onto the constraint) plus a deterministic
    scaled laminate candidate; a final downward sweep reuses feasible
    incumbents from larger t, so the curve is nondecreasing by construction.
    """
    if F.C_upper is None:
        raise ValueError("theta estimation requires finite p-growth (C_upper)")
    if not (1.0 <= q <= F.p):
        raise ValueError(f"q={q} outside [1, p={F.p}]")
    a_sv = a if isinstance(a, SmoothnessVector) else SmoothnessVector(tuple(a))
    t_values = np.asarray(sorted(float(t) for t in t_values))
    grid = opts.grid(a_sv)
    inner = StencilEnergy(grid, F, np.zeros((F.n, F.m)))
    rng = np.random.default_rng(opts.seed)

    def stats(phi: np.ndarray) -> tuple[float, float]:
        W = inner.gradient_stack(phi)
        fro = np.sqrt(np.sum(W**2, axis=(-2, -1)))
        return float(np.mean(inner.F(W))), float(np.mean(fro**q))

    # deterministic reference profile with unit moment
    base = laminate_profile(grid, 0, 1, 0.5)[..., None] * np.ones(F.n)
    base[grid.collar_mask()] = 0.0
    _, mom_base = stats(base)
    if mom_base <= 0:
        raise RuntimeError("reference profile has zero gradient moment")
    base = base / mom_base ** (1.0 / q)

    def feasible_candidate(t: float) -> np.ndarray:
        return base * t ** (1.0 / q) if t > 0 else np.zeros_like(base)

    def rescale_to(phi: np.ndarray, t: float) -> np.ndarray:
        _, mom = stats(phi)
        if t <= 0:
            return phi
        if mom <= 0:
            return feasible_candidate(t)
        if mom >= t:
            return phi
        return phi * (t / mom) ** (1.0 / q) * (1.0 + 1e-12)

    theta = np.empty_like(t_values)
    incumbents: list[np.ndarray] = []
    diagnostics = []
    warm = None
    for i, t in enumerate(t_values):
        starts = [("candidate", feasible_candidate(t))]
        if warm is not None:
            starts.append(("warm", rescale_to(warm, t)))
        for label, vals in start_portfolio(grid, F.n, opts.multistart, max(1.0, t) ** (1.0 / q), rng):
            starts.append((label, rescale_to(vals, t)))

        best_phi = None
        best_val = np.inf
        iters = 0
        for label, phi0 in starts:
            phi = phi0.copy()
            phi[grid.collar_mask()] = 0.0
            x = inner.pack(phi)
            rho = opts.penalty_init
            for _ in range(opts.penalty_stages):
                prob = _PenalizedMoment(inner, q, t, rho)
                try:
                    res = run_lbfgs(prob, x, maxiter=opts.maxiter, label=label)
                except RuntimeError:
                    break
                x = res.x
                iters += res.iterations
                rho *= opts.penalty_growth
            phi_final = rescale_to(inner.unpack(x), t)
            val, mom = stats(phi_final)
            if mom >= t - 1e-9 and val < best_val:
                best_val = val
                best_phi = phi_final
        if best_phi is None:
            best_phi = feasible_candidate(t)
            best_val, _ = stats(best_phi)
        theta[i] = best_val
        incumbents.append(best_phi)
        _, mom = stats(best_phi)
        diagnostics.append(
            {"t": float(t), "feasibility_gap": float(max(0.0, t - mom)), "iterations": iters}
        )
        warm = best_phi

    # downward sweep: a feasible incumbent for larger t is feasible for smaller t
    for i in range(len(t_values) - 2, -1, -1):
        if theta[i + 1] < theta[i]:
            theta[i] = theta[i + 1]
            incumbents[i] = incumbents[i + 1]
            diagnostics[i]["reused_incumbent_from"] = float(t_values[i + 1])
    return ThetaCurve(q, t_values, theta, diagnostics)


@dataclass
class CoercivityFit:
    c1: float
    c2: float
    coercive: bool
    degenerate: bool
    c_min: float


def mean_coercivity_fit(curve: ThetaCurve, c_min: float = 1e-3) -> CoercivityFit:
    """Steepest global linear minorant of the curve, read off the lower hull.

    For a convex curve the last lower-hull edge supports the function on all
    of [0, inf), so its slope is the largest c1 with c1*t + c2 <= theta(t)
    everywhere; slopes are clamped at zero.  Verdict: coercive iff c1 >= c_min.
    """
    t = curve.t_values
    y = curve.theta_hat
    if len(t) < 3:
        raise ValueError("need at least 3 points to fit a minorant")
    hull = []
    for p in zip(t, y):
        while len(hull) >= 2 and (
            (hull[-1][1] - hull[-2][1]) * (p[0] - hull[-1][0])
            >= (p[1] - hull[-1][1]) * (hull[-1][0] - hull[-2][0])
        ):
            hull.pop()
        hull.append(p)
    degenerate = len(hull) < 2
    if degenerate:
        c1 = 0.0
        c2 = float(y.min())
    else:
        (t0, y0), (t1, y1) = hull[-2], hull[-1]
        c1 = (y1 - y0) / (t1 - t0)
        if c1 < 0.0:
            c1 = 0.0
        c2 = float(np.min(y - c1 * t))
    return CoercivityFit(float(c1), float(c2), bool(c1 >= c_min), degenerate, c_min)


def strong_qc_test(
    F: Integrand,
    c: float,
    q: float,
    V0,
    a,
    opts: EnvelopeOptions = EnvelopeOptions(),
) -> AQCVerdict:
    """Point criterion: is F(.) - c|.|^q quasiconvex at V0 for the given stencils."""
    if c <= 0:
        raise ValueError("c must be positive")
    return is_aqc_at(minus_power(F, c, q), V0, a, opts)
