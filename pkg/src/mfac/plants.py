"""Discrete-time SISO plants and reference trajectories.

A plant maps newest-first histories ``y = [y(k), ..., y(k-ny)]`` and
``u = [u(k), ..., u(k-nu)]`` to y(k+1).  Built-in plants also expose their
pure partial derivatives so that the Taylor pseudo-gradient can be formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .edlm import PartialDerivativeTable
from .errors import ConfigurationError

# analytic tables can serve any order; 12 covers every truncation used here
ANALYTIC_MAX_ORDER = 12


@dataclass(frozen=True)
class Plant:
    name: str
    ny: int
    nu: int
    f: Callable[[np.ndarray, np.ndarray, int], float]
    partials: Optional[Callable[[int], PartialDerivativeTable]] = None
    truncation: Optional[tuple[int, ...]] = None
    true_pg: Optional[tuple[float, ...]] = None
    params: dict = field(default_factory=dict)

    def step(self, y_hist: Sequence[float], u_hist: Sequence[float], k: int) -> float:
        y_hist = np.asarray(y_hist, dtype=float)
        u_hist = np.asarray(u_hist, dtype=float)
        if y_hist.size != self.ny + 1 or u_hist.size != self.nu + 1:
            raise ConfigurationError(
                f"{self.name} reads {self.ny + 1} outputs and {self.nu + 1} inputs")
        return float(self.f(y_hist, u_hist, k))

    def at_point(self, k: int) -> Callable[[np.ndarray], float]:
        """f as a function of the stacked argument vector [y lags, u lags]."""
        ny = self.ny

        def g(point: np.ndarray) -> float:
            return float(self.f(point[: ny + 1], point[ny + 1:], k))

        return g

    def partial_table(self, k: int = 0) -> PartialDerivativeTable:
        if self.partials is None:
            raise ConfigurationError(f"plant {self.name} has no analytic partials")
        return self.partials(k)


def _poly_derivative(coeffs: Sequence[float], x: float, order: int) -> float:
    """order-th derivative of the ascending-coefficient polynomial at x."""
    return float(P.polyval(x, P.polyder(coeffs, order)))


def _poly_arg(a: int, coeffs: Sequence[float]):
    return lambda point, order: _poly_derivative(coeffs, point[a], order)


def _separable_table(ny: int, nu: int, args) -> PartialDerivativeTable:
    return PartialDerivativeTable(ny, nu, tuple(args), (ANALYTIC_MAX_ORDER,) * (ny + nu + 2))


# --- Example 1: structure-varying linear plant --------------------------------------------

def example1_step(y: Sequence[float], u: Sequence[float], k: int, d1: float = 0.0,
                  d2: float = 0.0) -> float:
    """y(k+1) = -+(0.4 y(k) + 0.5 u(k) + 0.6 u(k-1)) + d, sign flips after k = 350."""
    core = 0.4 * y[0] + 0.5 * u[0] + 0.6 * u[1]
    if k <= 350:
        return -core + d1
    return core + d2


def example1_plant(d1: float = 0.0, d2: float = 0.0) -> Plant:
    def table(k: int) -> PartialDerivativeTable:
        s = -1.0 if k <= 350 else 1.0
        return _separable_table(0, 1, [_poly_arg(0, [0.0, 0.4 * s]),
                                       _poly_arg(1, [0.0, 0.5 * s]),
                                       _poly_arg(2, [0.0, 0.6 * s])])

    return Plant("example1", 0, 1, lambda y, u, k: example1_step(y, u, k, d1, d2),
                 partials=table, truncation=(1, 1, 1), params={"d1": d1, "d2": d2})


# --- Example 2 and general ARX plants ----------------------------------------------------

def example2_step(y: Sequence[float], u: Sequence[float], k: int = 0) -> float:
    return -0.8 * y[0] - 0.5 * u[0] - 0.2 * u[1]


def arx_plant(a: Sequence[float], b: Sequence[float], d: float = 0.0,
              name: str = "arx") -> Plant:
    """y(k+1) = sum a_i y(k-i) + sum b_j u(k-j) + d; its PG is [a, b] everywhere."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 1 or b.size < 1:
        raise ConfigurationError("ARX plant needs at least one output and one input lag")
    ny, nu = a.size - 1, b.size - 1
    coeffs = np.concatenate([a, b])
    args = [_poly_arg(i, [0.0, c]) for i, c in enumerate(coeffs)]
    table = _separable_table(ny, nu, args)
    return Plant(name, ny, nu, lambda y, u, k: float(a @ y + b @ u + d),
                 partials=lambda k: table, truncation=(1,) * coeffs.size,
                 true_pg=tuple(coeffs), params={"a": a.tolist(), "b": b.tolist(), "d": d})


def example2_plant(d: float = 0.0) -> Plant:
    return arx_plant([-0.8], [-0.5, -0.2], d=d, name="example2")


# --- Example 3: strongly nonlinear plant --------------------------------------------------

def example3_step(y: Sequence[float], u: Sequence[float], k: int = 0) -> float:
    """0.2 y(k)^2 + 2u(k) + u(k)^2 + 2u(k-1)^5 + cos u(k-1) + u(k-2)^6."""
    return (0.2 * y[0] ** 2 + 2 * u[0] + u[0] ** 2 + 2 * u[1] ** 5 + math.cos(u[1])
            + u[2] ** 6)


def _cos_derivative(x: float, order: int) -> float:
    return math.cos(x + order * math.pi / 2)


def example3_plant() -> Plant:
    quintic = [0, 0, 0, 0, 0, 2.0]
    sextic = [0, 0, 0, 0, 0, 0, 1.0]
    table = _separable_table(0, 2, [
        _poly_arg(0, [0.0, 0.0, 0.2]),
        _poly_arg(1, [0.0, 2.0, 1.0]),
        lambda p, i: _poly_derivative(quintic, p[2], i) + _cos_derivative(p[2], i),
        _poly_arg(3, sextic),
    ])
    # per-argument Taylor sums used by the exact-gain controller
    return Plant("example3", 0, 2, lambda y, u, k: example3_step(y, u, k),
                 partials=lambda k: table, truncation=(2, 2, 5, 6))


BUILTIN_PLANTS: dict[str, Callable[..., Plant]] = {
    "example1": example1_plant,
    "example2": example2_plant,
    "example3": example3_plant,
    "arx": arx_plant,
}


def make_plant(name: str, **params) -> Plant:
    try:
        factory = BUILTIN_PLANTS[name]
    except KeyError:
        raise ConfigurationError(f"unknown plant {name!r}; choose from {sorted(BUILTIN_PLANTS)}")
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for plant {name!r}: {exc}") from None


# --- reference trajectories -----------------------------------------------------------------

def round_half_away(x: float) -> int:
    """Round to nearest integer, ties away from zero (2.5 -> 3, -2.5 -> -3)."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def _square(k: float, amplitude: float, offset: float, half_period: float) -> float:
    return offset + amplitude * (-1.0) ** round_half_away(k / half_period)


def _staircase_example1(k):
    if k <= 490:
        return 0.4 ** round_half_away(k / 50)
    return _square(k, 0.1, 0.1, 50)


def _staircase_example1_alt(k):
    # sign-alternating reading of the first branch; not used by the built-in scenarios
    if k <= 490:
        return 0.4 * (-1.0) ** round_half_away(k / 50)
    return _square(k, 0.1, 0.1, 50)


def _composite_example3(k):
    if k <= 350:
        return 0.5 * math.sin(k / 50) + 0.5 * math.cos(k / 3) + 0.5 * math.sin(k / 10)
    return _square(k, 0.3, 0.3, 50)


TRAJECTORIES: dict[str, Callable[..., float]] = {
    "staircase_example1": _staircase_example1,
    "staircase_example1_alt": _staircase_example1_alt,
    "composite_example3": _composite_example3,
    "power": lambda k, n=1, scale=1.0: scale * float(k) ** n,
    "square_wave": lambda k, amplitude=1.0, offset=0.0, half_period=50: _square(
        k, amplitude, offset, half_period),
    "constant": lambda k, value=1.0: float(value),
}


def trajectory_eval(kind: str, k: int, **params) -> float:
    """Reference value produced at step k, i.e. the target y*(k+1)."""
    try:
        fn = TRAJECTORIES[kind]
    except KeyError:
        raise ConfigurationError(f"unknown trajectory {kind!r}; choose from {sorted(TRAJECTORIES)}")
    return float(fn(k, **params))


@dataclass(frozen=True)
class Trajectory:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in TRAJECTORIES:
            raise ConfigurationError(f"unknown trajectory {self.kind!r}")
        try:
            trajectory_eval(self.kind, 1, **self.params)
        except TypeError as exc:
            raise ConfigurationError(f"bad parameters for trajectory {self.kind!r}: {exc}") from None

    def __call__(self, k: int) -> float:
        return trajectory_eval(self.kind, k, **self.params)
