"""Equivalent dynamic linearization of a SISO plant.

The incremental model is

    dy(k+1) = phi(k) . dH(k),
    dH(k)   = [dy(k), ..., dy(k-Ly+1), du(k), ..., du(k-Lu+1)],

where ``phi`` is the pseudo-gradient (PG).  For plants whose partial
derivatives are known, the PG can be built exactly from a Taylor expansion
around the previous operating point

    varphi(k-1) = [y(k-1), ..., y(k-ny-1), u(k-1), ..., u(k-nu-1)],

one coefficient per argument:

    phi_a = sum_{i=1..N} d^i f / d a^i * da^(i-1) / i!
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, NumericError, WindowError


@dataclass(frozen=True)
class PseudoOrders:
    """Lengths of the output (``ly``) and input (``lu``) increment windows."""

    ly: int
    lu: int

    def __post_init__(self):
        if self.ly < 0 or self.lu < 1:
            raise ConfigurationError(f"pseudo orders need ly >= 0 and lu >= 1, got {self}")

    @property
    def size(self) -> int:
        return self.ly + self.lu


@dataclass(frozen=True)
class PGVector:
    """Pseudo-gradient: output block ``phi[:ly]`` then input block ``phi[ly:]``."""

    orders: PseudoOrders
    phi: np.ndarray
    k: int = 0

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float).reshape(-1)
        if phi.size != self.orders.size:
            raise ConfigurationError(
                f"PG length {phi.size} does not match orders {self.orders}")
        if not np.all(np.isfinite(phi)):
            raise NumericError("PG has non-finite entries")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def from_list(cls, values: Sequence[float], ly: int, k: int = 0) -> "PGVector":
        return cls(PseudoOrders(ly, len(values) - ly), np.asarray(values, dtype=float), k)

    @property
    def output_block(self) -> np.ndarray:
        """Coefficients of phi_Ly(z^-1), ascending powers of z^-1."""
        return self.phi[: self.orders.ly]

    @property
    def input_block(self) -> np.ndarray:
        """Coefficients of phi_Lu(z^-1), ascending powers of z^-1."""
        return self.phi[self.orders.ly:]

    @property
    def gain(self) -> float:
        """Leading input coefficient, the instantaneous control gain."""
        return float(self.phi[self.orders.ly])

    def scaled(self, alpha: float) -> "PGVector":
        return PGVector(self.orders, alpha * self.phi, self.k)


@dataclass(frozen=True)
class IncrementWindow:
    """dH(k): output increments newest first, then input increments newest first."""

    dy: np.ndarray
    du: np.ndarray
    is_nonzero: bool = field(init=False)

    def __post_init__(self):
        dy = np.array(self.dy, dtype=float).reshape(-1)
        du = np.array(self.du, dtype=float).reshape(-1)
        dy.setflags(write=False)
        du.setflags(write=False)
        object.__setattr__(self, "dy", dy)
        object.__setattr__(self, "du", du)
        # dH(k) != 0 is the premise of the linearization; startup windows break it
        object.__setattr__(self, "is_nonzero", bool(np.any(dy) or np.any(du)))

    @property
    def orders(self) -> PseudoOrders:
        return PseudoOrders(self.dy.size, self.du.size)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.dy, self.du])

    def with_current_input(self, du_now: float) -> "IncrementWindow":
        du = self.du.copy()
        du[0] = du_now
        return IncrementWindow(self.dy, du)


@dataclass(frozen=True)
class History:
    """Signals known at step k, newest first.

    ``y`` holds y(k), y(k-1), ... and ``u`` holds u(k-1), u(k-2), ...;
    the current input u(k) is what the controller is about to choose.
    """

    y: np.ndarray
    u: np.ndarray

    @classmethod
    def from_arrays(cls, y: Sequence[float], u: Sequence[float], k: int) -> "History":
        """Build from time-indexed arrays (``y[t]`` is y(t)), looking back from step k."""
        y = np.asarray(y, dtype=float)
        u = np.asarray(u, dtype=float)
        return cls(y[k::-1].copy(), u[k - 1::-1].copy() if k >= 1 else np.empty(0))

    @property
    def y_now(self) -> float:
        return float(self.y[0])

    @property
    def u_prev(self) -> float:
        return float(self.u[0])

    def _need(self, ny: int, nu: int):
        if self.y.size < ny or self.u.size < nu:
            raise WindowError(
                f"history too short: need {ny} outputs and {nu} inputs, "
                f"have {self.y.size} and {self.u.size}")

    def output_increments(self, n: int, lag: int = 0) -> np.ndarray:
        """[dy(k-lag), ..., dy(k-lag-n+1)]."""
        self._need(n + lag + 1, 0)
        y = self.y[lag: lag + n + 1]
        return y[:-1] - y[1:]

    def input_increments(self, n: int, lag: int = 1) -> np.ndarray:
        """[du(k-lag), ..., du(k-lag-n+1)] for lag >= 1."""
        self._need(0, n + lag)
        u = self.u[lag - 1: lag + n]
        return u[:-1] - u[1:]

    def window(self, orders: PseudoOrders, du_now: float = 0.0) -> IncrementWindow:
        """dH(k) with the not-yet-chosen du(k) set to ``du_now``."""
        du = np.concatenate([[du_now], self.input_increments(orders.lu - 1)])
        return IncrementWindow(self.output_increments(orders.ly), du)

    def previous_window(self, orders: PseudoOrders) -> IncrementWindow:
        """dH(k-1), fully determined by the history."""
        return IncrementWindow(self.output_increments(orders.ly, lag=1),
                               self.input_increments(orders.lu))

    def operating_point(self, ny: int, nu: int) -> np.ndarray:
        """varphi(k-1) = [y(k-1..k-ny-1), u(k-1..k-nu-1)]."""
        self._need(ny + 2, nu + 1)
        return np.concatenate([self.y[1: ny + 2], self.u[: nu + 1]])

    def push(self, u_now: float, y_next: float) -> "History":
        """History one step later, after applying u(k) and observing y(k+1)."""
        return History(np.concatenate([[y_next], self.y]), np.concatenate([[u_now], self.u]))


Derivative = Callable[[np.ndarray, int], float]


@dataclass(frozen=True)
class PartialDerivativeTable:
    """Pure partial derivatives of f, one evaluator per argument.

    Arguments are ordered like the operating point: y lags 0..ny, then
    u lags 0..nu.  ``derivatives[a](point, i)`` returns d^i f / d arg_a^i.
    """

    ny: int
    nu: int
    derivatives: tuple[Derivative, ...]
    max_order: tuple[int, ...]

    def __post_init__(self):
        n = self.ny + self.nu + 2
        if len(self.derivatives) != n or len(self.max_order) != n:
            raise ConfigurationError(f"table needs {n} arguments")
        if min(self.max_order) < 1:
            raise ConfigurationError("every argument needs max_order >= 1")

    @property
    def n_args(self) -> int:
        return self.ny + self.nu + 2

    @property
    def orders(self) -> PseudoOrders:
        return PseudoOrders(self.ny + 1, self.nu + 1)

    def evaluate(self, arg: int, order: int, point: np.ndarray) -> float:
        if order > self.max_order[arg]:
            raise ConfigurationError(
                f"argument {arg}: order {order} exceeds available {self.max_order[arg]}")
        return float(self.derivatives[arg](np.asarray(point, dtype=float), order))

    def gradient(self, point: np.ndarray) -> np.ndarray:
        return np.array([self.evaluate(a, 1, point) for a in range(self.n_args)])

    def taylor_coefficients(self, arg: int, point: np.ndarray, truncation: int) -> np.ndarray:
        """[f^(1)/1!, f^(2)/2!, ...] so that phi_a = polyval(coeffs, da)."""
        return np.array([self.evaluate(arg, i, point) / math.factorial(i)
                         for i in range(1, truncation + 1)])


def predict_increment(pg: PGVector, h: IncrementWindow) -> float:
    """Predicted dy(k+1) = phi(k) . dH(k)."""
    if pg.orders != h.orders:
        raise ConfigurationError(f"PG orders {pg.orders} do not match window {h.orders}")
    return float(pg.phi @ h.vector)


def _truncation(table: PartialDerivativeTable, truncation) -> tuple[int, ...]:
    if truncation is None:
        return table.max_order
    if isinstance(truncation, int):
        truncation = (truncation,) * table.n_args
    truncation = tuple(int(t) for t in truncation)
    if len(truncation) != table.n_args:
        raise ConfigurationError("one truncation order per argument")
    for a, (t, m) in enumerate(zip(truncation, table.max_order)):
        if not 1 <= t <= m:
            raise ConfigurationError(f"argument {a}: truncation {t} outside 1..{m}")
    return truncation


def taylor_pg(table: PartialDerivativeTable, operating_point: np.ndarray,
              increments: IncrementWindow, truncation=None, k: int = 0) -> PGVector:
    """PG whose entries are truncated Taylor secant slopes of f.

    Each entry is the slope of f along its own argument from the operating
    point to the point moved by that argument's increment.  With zero
    increments it reduces to the gradient of f.
    """
    if increments.orders != table.orders:
        raise ConfigurationError(
            f"window orders {increments.orders} must equal plant orders {table.orders}")
    trunc = _truncation(table, truncation)
    deltas = increments.vector
    phi = np.empty(table.n_args)
    for a in range(table.n_args):
        coeffs = table.taylor_coefficients(a, operating_point, trunc[a])
        # ascending powers of the increment
        phi[a] = np.polynomial.polynomial.polyval(deltas[a], coeffs)
    return PGVector(table.orders, phi, k)


def gradient_pg(table: PartialDerivativeTable, operating_point: np.ndarray, k: int = 0) -> PGVector:
    """First-order PG: the plain gradient of f at the operating point."""
    return PGVector(table.orders, table.gradient(operating_point), k)


def finite_difference_table(f: Callable[[np.ndarray], float], ny: int, nu: int,
                            step: float = 1e-6) -> PartialDerivativeTable:
    """First-order central differences with one Richardson extrapolation.

    ``f`` maps the operating-point vector to y(k+1).  Used as a test oracle
    against analytic tables.
    """

    def make(a: int) -> Derivative:
        def d(point: np.ndarray, order: int) -> float:
            if order != 1:
                raise ConfigurationError("finite-difference table only has first order")

            def central(h):
                e = np.zeros_like(point)
                e[a] = h
                return (f(point + e) - f(point - e)) / (2 * h)

            return (4 * central(step / 2) - central(step)) / 3

        return d

    n = ny + nu + 2
    return PartialDerivativeTable(ny, nu, tuple(make(a) for a in range(n)), (1,) * n)


def unmodeled_dynamics(table: PartialDerivativeTable, y: Sequence[float], u: Sequence[float],
                       k: int, truncation=None) -> float:
    """Residual between y(k+1) and the frozen first-order linear model.

    ``y`` and ``u`` are indexed by time and must reach y(k+1), u(k).  The
    residual is taken around varphi(k-1) and excludes the higher-order part
    gamma(k) of the increment expansion.
    """
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    ny, nu = table.ny, table.nu
    if k < 1 or y.size < k + 2 or u.size < k + 1:
        raise WindowError(f"not enough history around step {k}")
    hist = History.from_arrays(y, u, k)
    point = hist.operating_point(ny, nu)
    grad = table.gradient(point)
    window = hist.window(table.orders, du_now=u[k] - u[k - 1])
    gamma = float((taylor_pg(table, point, window, truncation).phi - grad) @ window.vector)
    current = np.concatenate([y[k - ny: k + 1][::-1], u[k - nu: k + 1][::-1]])
    return float(y[k + 1] - grad @ current - gamma)
