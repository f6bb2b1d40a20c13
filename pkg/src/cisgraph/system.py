"""Discrete-time system definitions and built-in benchmark models.

Every model is a map x+ = f(x, u) on a compact state box X with inputs in a
compact box U.  Step functions are pure, broadcast over leading axes
(vectorized evaluation is the batch contract the graph builder relies on)
and picklable so they can be shipped to worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from cisgraph.geometry import Box

__all__ = [
    "SystemModel",
    "InputGrid",
    "CstrParameters",
    "rk4_discretize",
    "cstr_model",
    "linear_test_model",
    "affine_test_model",
    "identity_model",
    "shift_model",
    "sample_inputs",
    "make_model",
    "MODEL_NAMES",
]


def rk4_discretize(ode_rhs: Callable, x, u, h: float):
    """One classical 4th-order Runge-Kutta step with u held constant.

    ``ode_rhs(x, u)`` must broadcast over leading axes of x.  Non-finite
    results signal a state far outside the physical range; callers treat the
    image as leaving the state constraint.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        k1 = ode_rhs(x, u)
        k2 = ode_rhs(x + 0.5 * h * k1, u)
        k3 = ode_rhs(x + 0.5 * h * k2, u)
        k4 = ode_rhs(x + h * k3, u)
        return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class SystemModel:
    """A discrete-time map with state and input constraint boxes.

    ``step(x, u)`` maps a state vector (or an (N, n) batch of states) and an
    input vector to next states; it must be pure and total on X x U.
    """

    name: str
    n: int
    m: int
    X: Box
    U: Box
    step: Callable

    def __post_init__(self):
        if self.X.n != self.n or self.U.n != self.m:
            raise ValueError("constraint box dimensions do not match n, m")

    def map_points(self, points: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Evaluate the map on an (N, n) batch for a single input vector."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, self.n)
        out = np.asarray(self.step(pts, np.asarray(u, dtype=np.float64)))
        return out.reshape(pts.shape)


@dataclass(frozen=True)
class InputGrid:
    """Finite discretization of the input box U, endpoints always included."""

    points: np.ndarray
    counts: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "points", np.asarray(self.points, dtype=np.float64)
        )

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def sample_inputs(U: Box, counts) -> InputGrid:
    """Cartesian grid over U with uniformly spaced points per dimension.

    ``counts`` is an int or a per-dimension sequence, at least 2 per
    dimension so both endpoints appear.  Duplicate points from degenerate
    input intervals are dropped.
    """
    m = U.n
    if np.isscalar(counts):
        counts = (int(counts),) * m
    counts = tuple(int(c) for c in counts)
    if len(counts) != m:
        raise ValueError("one count per input dimension required")
    if any(c < 2 for c in counts):
        raise ValueError("counts must be at least 2 (endpoints included)")
    axes = [np.linspace(U.lo[d], U.hi[d], counts[d]) for d in range(m)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=-1)
    pts = np.unique(pts, axis=0)
    return InputGrid(pts, counts)


# -- CSTR benchmark ----------------------------------------------------------


@dataclass(frozen=True)
class CstrParameters:
    """Physical parameters of the exothermic CSTR benchmark.

    Units: q [L/min], V [L], c_Af [mol/L], T_f [K], E_over_R [K], k0 [1/min],
    minus_dH [J/mol], UA [J/(min K)], c_p [J/(g K)], rho [g/L], h [min].
    """

    q: float = 100.0
    V: float = 100.0
    c_Af: float = 1.0
    T_f: float = 350.0
    E_over_R: float = 8750.0
    k0: float = 7.2e10
    minus_dH: float = 5.0e4
    UA: float = 5.0e4
    c_p: float = 0.239
    rho: float = 1000.0
    h: float = 0.1

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"CSTR parameter {name} must be positive")


class CstrStep:
    """RK4-discretized CSTR map; callable on (..., 2) state arrays."""

    def __init__(self, params: CstrParameters):
        self.params = params

    def rhs(self, x, u):
        p = self.params
        c_a = x[..., 0]
        temp = x[..., 1]
        t_c = np.asarray(u, dtype=np.float64).reshape(-1)[0]
        rate = p.k0 * np.exp(-p.E_over_R / temp) * c_a
        dca = (p.q / p.V) * (p.c_Af - c_a) - rate
        dtemp = (
            (p.q / p.V) * (p.T_f - temp)
            + (p.minus_dH / (p.rho * p.c_p)) * rate
            + (p.UA / (p.V * p.rho * p.c_p)) * (t_c - temp)
        )
        return np.stack([dca, dtemp], axis=-1)

    def __call__(self, x, u):
        return rk4_discretize(self.rhs, x, u, self.params.h)


def cstr_model(params: CstrParameters | None = None) -> SystemModel:
    """The CSTR benchmark: n=2 (concentration, temperature), m=1 (coolant)."""
    params = params or CstrParameters()
    return SystemModel(
        name="cstr",
        n=2,
        m=1,
        X=Box([0.0, 345.0], [1.0, 355.0]),
        U=Box([285.0], [315.0]),
        step=CstrStep(params),
    )


# -- analytic test models ----------------------------------------------------


class LinearStep:
    """1-D map x+ = a*x + u."""

    def __init__(self, a: float):
        self.a = float(a)

    def __call__(self, x, u):
        u0 = np.asarray(u, dtype=np.float64).reshape(-1)[0]
        return self.a * np.asarray(x, dtype=np.float64) + u0


def linear_test_model(a: float, X=(-1.0, 1.0), U=(-0.5, 0.5)) -> SystemModel:
    """Scalar benchmark with analytically known largest invariant set."""
    return SystemModel(
        name="linear",
        n=1,
        m=1,
        X=Box([X[0]], [X[1]]),
        U=Box([U[0]], [U[1]]),
        step=LinearStep(a),
    )


class AffineStep:
    """Map x+ = A x + B u + c for arbitrary state/input dimensions."""

    def __init__(self, A, B, c):
        self.A = np.asarray(A, dtype=np.float64)
        self.B = np.asarray(B, dtype=np.float64)
        self.c = np.asarray(c, dtype=np.float64)

    def __call__(self, x, u):
        x = np.asarray(x, dtype=np.float64)
        u = np.asarray(u, dtype=np.float64)
        return x @ self.A.T + u @ self.B.T + self.c


def affine_test_model(A, B, c, X: Box, U: Box) -> SystemModel:
    A = np.asarray(A, dtype=np.float64)
    return SystemModel(
        name="affine", n=A.shape[0], m=np.asarray(B).shape[1], X=X, U=U,
        step=AffineStep(A, B, c),
    )


class IdentityStep:
    def __call__(self, x, u):
        return np.asarray(x, dtype=np.float64)


def identity_model(X=(0.0, 1.0)) -> SystemModel:
    """x+ = x; the whole state box is invariant."""
    return SystemModel(
        name="identity", n=1, m=1,
        X=Box([X[0]], [X[1]]), U=Box([0.0], [0.0]),
        step=IdentityStep(),
    )


class ShiftStep:
    def __init__(self, offset: float):
        self.offset = float(offset)

    def __call__(self, x, u):
        return np.asarray(x, dtype=np.float64) + self.offset


def shift_model(offset: float = 10.0, X=(0.0, 1.0)) -> SystemModel:
    """x+ = x + offset; every trajectory leaves X, so no invariant set."""
    return SystemModel(
        name="shift", n=1, m=1,
        X=Box([X[0]], [X[1]]), U=Box([0.0], [0.0]),
        step=ShiftStep(offset),
    )


# -- registry ----------------------------------------------------------------

MODEL_NAMES = ("cstr", "linear", "identity", "shift")

MODEL_PARAMS = {
    "cstr": frozenset(CstrParameters().__dict__),
    "linear": frozenset({"a", "xlo", "xhi", "ulo", "uhi"}),
    "identity": frozenset({"xlo", "xhi"}),
    "shift": frozenset({"offset", "xlo", "xhi"}),
}


def make_model(name: str, **params) -> SystemModel:
    """Build a registered model by name; unknown names fail loudly.

    Recognized parameters: CSTR accepts any CstrParameters field; ``linear``
    accepts a, xlo, xhi, ulo, uhi; ``identity`` accepts xlo, xhi; ``shift``
    accepts offset, xlo, xhi.
    """
    if name == "cstr":
        base = CstrParameters()
        unknown = set(params) - set(base.__dict__)
        if unknown:
            raise ValueError(f"unknown CSTR parameter(s): {sorted(unknown)}")
        return cstr_model(replace(base, **{k: float(v) for k, v in params.items()}))
    if name == "linear":
        allowed = {"a", "xlo", "xhi", "ulo", "uhi"}
        unknown = set(params) - allowed
        if unknown:
            raise ValueError(f"unknown linear parameter(s): {sorted(unknown)}")
        return linear_test_model(
            float(params.get("a", 2.0)),
            X=(float(params.get("xlo", -1.0)), float(params.get("xhi", 1.0))),
            U=(float(params.get("ulo", -0.5)), float(params.get("uhi", 0.5))),
        )
    if name == "identity":
        unknown = set(params) - {"xlo", "xhi"}
        if unknown:
            raise ValueError(f"unknown identity parameter(s): {sorted(unknown)}")
        return identity_model(
            (float(params.get("xlo", 0.0)), float(params.get("xhi", 1.0)))
        )
    if name == "shift":
        unknown = set(params) - {"offset", "xlo", "xhi"}
        if unknown:
            raise ValueError(f"unknown shift parameter(s): {sorted(unknown)}")
        return shift_model(
            float(params.get("offset", 10.0)),
            X=(float(params.get("xlo", 0.0)), float(params.get("xhi", 1.0))),
        )
    raise ValueError(f"unknown model {name!r}; known models: {', '.join(MODEL_NAMES)}")
