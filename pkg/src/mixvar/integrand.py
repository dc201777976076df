"""Integrands F: R^{n x m} -> R u {+inf} with growth metadata and gradients.

Evaluation is vectorized: ``eval`` maps arrays of shape (..., n, m) to (...),
``grad`` maps (..., n, m) to (..., n, m).  Registration runs a finite
difference check on the analytic gradient and a sampled check on the upper
growth constant, so broken metadata fails fast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Integrand", "builtin", "builtin_from_config", "grad_check"]

_CHECK_SEED = 20260501


@dataclass
class Integrand:
    """F with optional analytic gradient and p-growth metadata.

    growth: |F(V)| <= C_upper (|V|^p + 1) when C_upper is set, and
    F(V) >= c_lower |V|^p - C_const when c_lower is set.
    """

    eval: callable
    n: int
    m: int
    p: float
    grad: callable | None = None
    C_upper: float | None = None
    c_lower: float | None = None
    C_const: float | None = None
    convex: bool | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.grad is not None:
            err = grad_check(self, samples=20, seed=_CHECK_SEED)
            if err > 1e-4:
                raise ValueError(
                    f"analytic gradient of {self.name!r} disagrees with finite "
                    f"differences: relative error {err:.3e}"
                )
        if self.C_upper is not None:
            rng = np.random.default_rng(_CHECK_SEED + 1)
            V = rng.normal(scale=3.0, size=(1000, self.n, self.m))
            vals = np.abs(self(V))
            bound = self.C_upper * (_fro(V) ** self.p + 1.0)
            worst = float(np.max(vals - bound))
            if worst > 1e-9 * self.C_upper:
                raise ValueError(
                    f"sampled |F| exceeds declared C_upper for {self.name!r} by {worst:.3e}"
                )

    def __call__(self, V: np.ndarray) -> np.ndarray:
        return np.asarray(self.eval(np.asarray(V, dtype=float)), dtype=float)

    def gradient(self, V: np.ndarray) -> np.ndarray:
        """Analytic gradient when present, vectorized central differences otherwise."""
        V = np.asarray(V, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(V), dtype=float)
        return _fd_gradient(self, V)

    def to_config(self) -> dict:
        return {"integrand": {"name": self.name, "params": self.params}}


def _fro(V: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(V**2, axis=(-2, -1)))


def _fd_gradient(F: Integrand, V: np.ndarray) -> np.ndarray:
    base_step = 1e-5 * (1.0 + _fro(V))[..., None, None]
    out = np.empty_like(V)
    for i in range(F.n):
        for j in range(F.m):
            E = np.zeros_like(V)
            E[..., i, j] = 1.0
            h = base_step[..., 0, 0]
            out[..., i, j] = (F(V + base_step * E) - F(V - base_step * E)) / (2.0 * h)
    return out


def grad_check(F: Integrand, samples: int = 20, seed: int = _CHECK_SEED) -> float:
    """Max over samples of ||grad - central FD|| / (1 + ||grad||).

    Points where F is not finite are resampled, with a retry cap.
    """
    if F.grad is None:
        raise ValueError("integrand has no analytic gradient to check")
    rng = np.random.default_rng(seed)
    worst = 0.0
    got, tries = 0, 0
    while got < samples:
        tries += 1
        if tries > 50 * samples:
            raise RuntimeError("could not sample enough finite points for grad_check")
        V = rng.normal(size=(F.n, F.m))
        if not np.isfinite(F(V)):
            continue
        got += 1
        g = np.asarray(F.grad(V), dtype=float)
        fd = _fd_gradient(F, V)
        err = np.linalg.norm(g - fd) / (1.0 + np.linalg.norm(g))
        worst = max(worst, float(err))
    return worst


def _pnorm(p: float, n: int, m: int) -> Integrand:
    def ev(V):
        return _fro(V) ** p

    def gr(V):
        r = _fro(V)[..., None, None]
        if p == 2.0:
            return 2.0 * V
        safe = np.maximum(r, 1e-300)
        return p * safe ** (p - 2.0) * V

    return Integrand(
        ev, n, m, p, grad=gr, C_upper=1.0, c_lower=1.0, C_const=0.0,
        convex=(p >= 1.0), name="pnorm", params={"p": p, "n": n, "m": m},
    )


def _quadratic(A, n: int, m: int) -> Integrand:
    A = np.asarray(A, dtype=float)
    k = n * m
    if A.shape != (k, k):
        raise ValueError(f"quadratic form must be {k}x{k}, got {A.shape}")
    if not np.allclose(A, A.T, atol=1e-12):
        raise ValueError("quadratic form must be symmetric")
    eigs = np.linalg.eigvalsh(A)
    if eigs[0] <= 0:
        raise ValueError(f"quadratic form must be SPD; min eigenvalue {eigs[0]:.3e}")

    def ev(V):
        v = V.reshape(V.shape[:-2] + (k,))
        return np.einsum("...i,ij,...j->...", v, A, v)

    def gr(V):
        v = V.reshape(V.shape[:-2] + (k,))
        return (2.0 * v @ A.T).reshape(V.shape)

    return Integrand(
        ev, n, m, 2.0, grad=gr, C_upper=float(eigs[-1]), c_lower=float(eigs[0]),
        C_const=0.0, convex=True, name="quadratic",
        params={"A": A.tolist(), "n": n, "m": m},
    )


def _pantographic() -> Integrand:
    # n=1, a=(1,2): squared first column plus squared second column
    def ev(V):
        return V[..., 0, 0] ** 2 + V[..., 0, 1] ** 2

    def gr(V):
        return 2.0 * V

    return Integrand(
        ev, 1, 2, 2.0, grad=gr, C_upper=1.0, c_lower=1.0, C_const=0.0,
        convex=True, name="pantographic", params={},
    )


def _double_well(col: int, w: float, n: int, m: int) -> Integrand:
    if not (0 <= col < m):
        raise ValueError(f"well column {col} out of range for m={m}")

    def ev(V):
        v = V[..., 0, col]
        rest = np.sum(V**2, axis=(-2, -1)) - v**2
        return (v**2 - w**2) ** 2 + rest

    def gr(V):
        out = 2.0 * V
        v = V[..., 0, col]
        out[..., 0, col] = 4.0 * v * (v**2 - w**2)
        return out

    c_lower = 0.5 if (n == 1 and m == 1) else None
    C_const = w**4 if c_lower is not None else None
    return Integrand(
        ev, n, m, 4.0, grad=gr, C_upper=max(3.0, 1.0 + 2.0 * w**4),
        c_lower=c_lower, C_const=C_const, convex=False,
        name="double_well", params={"col": col, "w": w, "n": n, "m": m},
    )


def shifted(F: Integrand, X0) -> Integrand:
    X0 = np.asarray(X0, dtype=float).reshape(F.n, F.m)

    def ev(V):
        return F(X0 + V)

    gr = None
    if F.grad is not None:
        def gr(V):
            return F.grad(X0 + V)

    C_upper = None
    if F.C_upper is not None:
        shift_norm = float(np.linalg.norm(X0))
        C_upper = F.C_upper * 2.0 ** max(F.p - 1.0, 0.0) * (1.0 + shift_norm**F.p + 1.0)
    return Integrand(
        ev, F.n, F.m, F.p, grad=gr, C_upper=C_upper, convex=F.convex,
        name="shifted", params={"base": F.name, "base_params": F.params, "X0": X0.tolist()},
    )


def minus_power(F: Integrand, c: float, q: float) -> Integrand:
    """F(.) - c |.|^q, the point-criterion integrand for coercivity tests."""
    if q > F.p:
        raise ValueError(f"q={q} exceeds the growth exponent p={F.p}")

    def ev(V):
        return F(V) - c * _fro(V) ** q

    gr = None
    if F.grad is not None:
        def gr(V):
            r = _fro(V)[..., None, None]
            safe = np.maximum(r, 1e-300)
            term = c * q * safe ** (q - 2.0) * V if q != 2.0 else 2.0 * c * V
            return F.grad(V) - term

    C_upper = None
    if F.C_upper is not None:
        C_upper = F.C_upper + abs(c) + 1.0
    return Integrand(
        ev, F.n, F.m, F.p, grad=gr, C_upper=C_upper, convex=None,
        name="minus_power", params={"base": F.name, "base_params": F.params, "c": c, "q": q},
    )


def _constant(c: float, n: int, m: int, p: float) -> Integrand:
    def ev(V):
        return np.full(V.shape[:-2], c)

    def gr(V):
        return np.zeros_like(V)

    return Integrand(
        ev, n, m, p, grad=gr, C_upper=abs(c) + 1e-300, convex=True,
        name="constant", params={"c": c, "n": n, "m": m, "p": p},
    )


def builtin(name: str, **params) -> Integrand:
    """Factory for the built-in integrands.

    pnorm(p, n=1, m=1); quadratic(A, n, m); pantographic();
    double_well(col=0, w=1.0, n=1, m=1); constant(c, n, m, p);
    shifted(F, X0); minus_power(F, c, q).
    """
    if name == "constant":
        return _constant(
            float(params.get("c", 0.0)), int(params.get("n", 1)),
            int(params.get("m", 1)), float(params.get("p", 2.0)),
        )
    if name == "pnorm":
        return _pnorm(float(params["p"]), int(params.get("n", 1)), int(params.get("m", 1)))
    if name == "quadratic":
        return _quadratic(params["A"], int(params["n"]), int(params["m"]))
    if name == "pantographic":
        return _pantographic()
    if name == "double_well":
        return _double_well(
            int(params.get("col", 0)), float(params.get("w", 1.0)),
            int(params.get("n", 1)), int(params.get("m", 1)),
        )
    if name == "shifted":
        return shifted(params["F"], params["X0"])
    if name == "minus_power":
        return minus_power(params["F"], float(params["c"]), float(params["q"]))
    raise ValueError(f"unknown integrand {name!r}")


def standard_test_class(n: int = 1, m: int = 1) -> dict:
    """Finite dictionary of test integrands, each with a finite growth bound.

    These play the role of a spanning set of p-growth continuous energies for
    the duality diagnostics; every member carries C_upper by construction.
    """
    members = {
        "pnorm2": _pnorm(2.0, n, m),
        "pnorm4": _pnorm(4.0, n, m),
        "quadratic": _quadratic(1.5 * np.eye(n * m), n, m),
        "double_well": _double_well(0, 1.0, n, m),
        "constant": _constant(1.0, n, m, 2.0),
    }
    assert all(F.C_upper is not None for F in members.values())
    return members


def builtin_from_config(cfg: dict) -> Integrand:
    """Build from the config schema {"integrand": {"name": ..., "params": {...}}}."""
    spec = cfg["integrand"] if "integrand" in cfg else cfg
    name = spec["name"]
    params = dict(spec.get("params", {}))
    if name == "shifted":
        params["F"] = builtin_from_config({"integrand": params.pop("base")})
    if name == "minus_power":
        params["F"] = builtin_from_config({"integrand": params.pop("base")})
    return builtin(name, **params)
