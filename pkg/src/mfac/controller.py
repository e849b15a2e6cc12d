"""MFAC control laws.

All laws act on the one-step prediction

    y(k+1) = free + g(du) * du,     free = y(k) + phi . dH(k)|_{du(k)=0},

where ``g`` is the input gain phi_{Ly+1}.  For an estimated or known PG it is
a constant; for a known plant it is the Taylor polynomial of f in du(k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .analysis import polynomial_roots, REAL_TOL
from .edlm import History, PartialDerivativeTable, PGVector, PseudoOrders, taylor_pg
from .errors import (ConfigurationError, DegenerateGainError, IterationDivergenceError,
                     NumericError)

MODES = ("one_step", "iterative", "polynomial_cost", "constrained")
PG_SOURCES = ("estimated", "known", "taylor")
DIVERGENCE_LIMIT = 1e12
NEGLIGIBLE = 1e-12


@dataclass(frozen=True)
class ControllerConfig:
    lam: float
    orders: PseudoOrders
    eps_d: float = 1e-10
    mode: str = "one_step"
    pg_source: str = "estimated"
    n_iter: int = 3
    u_min: Optional[float] = None
    u_max: Optional[float] = None
    approximate_gain: bool = False
    truncation: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if not self.lam >= 0:
            raise ConfigurationError(f"lambda must be >= 0, got {self.lam}")
        if not self.eps_d > 0:
            raise ConfigurationError("denominator guard must be positive")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.pg_source not in PG_SOURCES:
            raise ConfigurationError(f"unknown PG source {self.pg_source!r}")
        if self.mode == "constrained":
            if self.u_min is None or self.u_max is None or not self.u_min < self.u_max:
                raise ConfigurationError("constrained mode needs u_min < u_max")
        if self.mode == "iterative":
            if self.n_iter < 1:
                raise ConfigurationError("n_iter must be >= 1")
            if self.pg_source != "taylor":
                raise ConfigurationError("the iterative law needs the taylor PG source")
        if self.approximate_gain and self.pg_source != "taylor":
            raise ConfigurationError("the lagged gain approximation needs the taylor PG source")


@dataclass(frozen=True)
class ControlDecision:
    delta_u: float
    u: float
    predicted_next_y: float
    bracket: float
    denominator: Optional[float] = None
    cost: Optional[float] = None
    pg: Optional[PGVector] = None
    diagnostics: dict = field(default_factory=dict)


def free_response(pg: PGVector, history: History) -> float:
    """Predicted y(k+1) if u(k) = u(k-1)."""
    window = history.window(pg.orders, 0.0)
    return history.y_now + float(pg.phi @ window.vector)


def one_step_law(pg: PGVector, history: History, y_star_next: float, lam: float,
                 eps_d: float = 1e-10) -> ControlDecision:
    """du(k) = b / (lam + b^2) * [y*(k+1) - free], b = phi_{Ly+1}.

    With lam = 0 this is the exact inverse du = bracket / b, and for any lam
    it minimizes (y* - y(k+1))^2 + lam du^2 under the linear model.
    """
    b = pg.gain
    free = free_response(pg, history)
    bracket = y_star_next - free
    if lam == 0 and abs(b) < eps_d:
        raise DegenerateGainError(f"|phi_Ly+1| = {abs(b):.3g} below guard with lambda = 0")
    denom = lam + b * b
    du = b * bracket / denom
    cost = (bracket - b * du) ** 2 + lam * du * du
    return ControlDecision(du, history.u_prev + du, free + b * du, bracket, denom, cost, pg)


def approximate_gain(gain_coeffs: Sequence[float], du_prev: float) -> float:
    """Input gain with the unknown du(k) replaced by the known du(k-1)."""
    return float(P.polyval(du_prev, np.asarray(gain_coeffs, dtype=float)))


def gain_polynomial(table: PartialDerivativeTable, point: np.ndarray,
                    truncation: int) -> np.ndarray:
    """Ascending coefficients of phi_{Ly+1} as a polynomial in du(k)."""
    return table.taylor_coefficients(table.ny + 1, point, truncation)


def cost_polynomial(gain_coeffs: Sequence[float], bracket: float, lam: float) -> np.ndarray:
    """J(du) = (bracket - g(du) du)^2 + lam du^2, ascending coefficients."""
    g = np.asarray(gain_coeffs, dtype=float)
    # a coefficient whose square underflows would leave J with odd degree
    g = np.where(g * g == 0, 0.0, g)
    residual = np.concatenate([[bracket], -g])
    return P.polyadd(P.polymul(residual, residual), [0.0, 0.0, lam])


def _stationary_points(J: np.ndarray) -> np.ndarray:
    if np.any(J):
        J = np.ldexp(J, -np.frexp(np.max(np.abs(J)))[1])
    dJ = np.trim_zeros(P.polyder(J), "b")
    if dJ.size <= 1:
        return np.zeros(1) if dJ.size == 0 or dJ[0] == 0 else np.empty(0)
    roots = polynomial_roots(dJ[::-1])
    # negligible top coefficients wreck the companion matrix scaling and can hide
    # the moderate roots; solve the trimmed polynomial as well
    big = np.abs(dJ) > NEGLIGIBLE * np.max(np.abs(dJ))
    top = int(np.flatnonzero(big)[-1]) + 1
    if 1 < top < dJ.size:
        roots = np.concatenate([roots, polynomial_roots(dJ[:top][::-1])])
    real = np.abs(roots.imag) <= REAL_TOL * np.maximum(1.0, np.abs(roots))
    # real parts of near-real pairs are harmless extra candidates: a split double root
    # is still found, and every candidate is scored by J anyway
    cands = np.concatenate([roots[real].real, roots[~real].real])
    d2J = P.polyder(dJ)
    polished = []
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for x in cands[np.isfinite(cands)]:
            curv = P.polyval(x, d2J)
            if curv != 0:
                xn = x - P.polyval(x, dJ) / curv
                if P.polyval(xn, J) <= P.polyval(x, J):
                    x = xn
            polished.append(x)
    return np.array(polished)


def _argmin(J: np.ndarray, cands: np.ndarray) -> tuple[float, float]:
    # candidates far beyond the useful range overflow J; they can never win
    with np.errstate(over="ignore", invalid="ignore"):
        values = P.polyval(cands, J)
    keep = np.isfinite(values)
    if not np.any(keep):
        raise NumericError("cost polynomial overflows at every stationary point")
    cands, values = cands[keep], values[keep]
    best = float(np.min(values))
    tied = cands[values <= best + 1e-12 * (1.0 + abs(best))]
    x = float(tied[np.argmin(np.abs(tied))])
    return x, float(P.polyval(x, J))


def minimize_polynomial_cost(gain_coeffs: Sequence[float], y_star_next: float,
                             free: float, lam: float, u_prev: float = 0.0) -> ControlDecision:
    """Global minimizer of the scalar polynomial cost in du(k)."""
    bracket = y_star_next - free
    J = np.trim_zeros(cost_polynomial(gain_coeffs, bracket, lam), "b")
    if J.size == 0:
        J = np.zeros(1)
    if J.size > 1 and not (J.size % 2 == 1 and J[-1] > 0):
        raise AssertionError("cost polynomial must have even degree and positive leading term")
    du, cost = _argmin(J, _stationary_points(J))
    g = approximate_gain(gain_coeffs, du)
    return ControlDecision(du, u_prev + du, free + g * du, bracket, cost=cost,
                           diagnostics={"gain": g})


def minimize_constrained(gain_coeffs: Sequence[float], y_star_next: float, free: float,
                         lam: float, u_prev: float, u_min: float,
                         u_max: float) -> ControlDecision:
    """Minimize the same cost over u(k) in [u_min, u_max]."""
    if not u_min < u_max:
        raise ConfigurationError(f"empty input box [{u_min}, {u_max}]")
    bracket = y_star_next - free
    J = np.trim_zeros(cost_polynomial(gain_coeffs, bracket, lam), "b")
    if J.size == 0:
        J = np.zeros(1)
    lo, hi = u_min - u_prev, u_max - u_prev
    inner = _stationary_points(J)
    inner = inner[(inner > lo) & (inner < hi)]
    du, cost = _argmin(J, np.concatenate([inner, [lo, hi]]))
    if du == lo:
        u = u_min
    elif du == hi:
        u = u_max
    else:
        u = min(max(u_prev + du, u_min), u_max)
    du = u - u_prev
    g = approximate_gain(gain_coeffs, du)
    return ControlDecision(du, u, free + g * du, bracket, cost=cost,
                           diagnostics={"gain": g, "active": u in (u_min, u_max)})


def iterative_law(table: PartialDerivativeTable, history: History, y_star_next: float,
                  lam: float, n_iter: int = 3, truncation=None,
                  eps_d: float = 1e-10) -> ControlDecision:
    """Repeat the one-step law on the plant model before sending u(k).

    Each pass moves the candidate u(k), rolls the Taylor model forward to
    predict y(k+1), relinearizes the input gain at the moved operating point,
    and corrects toward the same target y*(k+1).  The first pass is exactly
    the one-step law with the Taylor PG.
    """
    if n_iter < 1:
        raise ConfigurationError("n_iter must be >= 1")
    orders = table.orders
    ly = orders.ly
    point = history.operating_point(table.ny, table.nu)
    u_prev = history.u_prev

    def predict(u_c):
        window = history.window(orders, u_c - u_prev)
        pg = taylor_pg(table, point, window, truncation)
        y_pred = history.y_now + float(pg.phi @ window.vector)
        if not math.isfinite(y_pred) or abs(y_pred) > DIVERGENCE_LIMIT:
            raise IterationDivergenceError(f"model rollout reached {y_pred}")
        return pg, y_pred

    u_c = u_prev
    pg, y_pred = predict(u_c)
    first_bracket = y_star_next - y_pred
    residuals = [abs(first_bracket)]
    denom = None
    for _ in range(n_iter):
        moved = point.copy()
        moved[ly] = u_c
        g = table.evaluate(ly, 1, moved)
        if lam == 0 and abs(g) < eps_d:
            raise DegenerateGainError(f"|df/du| = {abs(g):.3g} below guard with lambda = 0")
        denom = lam + g * g
        u_c = u_c + g * (y_star_next - y_pred) / denom
        pg, y_pred = predict(u_c)
        residuals.append(abs(y_star_next - y_pred))
    du = u_c - u_prev
    return ControlDecision(du, u_c, y_pred, first_bracket, denom, None, pg,
                           diagnostics={"residuals": residuals})


def decide(cfg: ControllerConfig, history: History, y_star_next: float,
           pg: Optional[PGVector] = None,
           table: Optional[PartialDerivativeTable] = None) -> ControlDecision:
    """Dispatch to the configured law; the returned decision carries the PG it used."""
    if cfg.pg_source != "taylor":
        if pg is None:
            raise ConfigurationError("a PG is required for estimated/known sources")
        if cfg.mode == "one_step":
            return one_step_law(pg, history, y_star_next, cfg.lam, cfg.eps_d)
        free = free_response(pg, history)
        if cfg.mode == "polynomial_cost":
            d = minimize_polynomial_cost([pg.gain], y_star_next, free, cfg.lam, history.u_prev)
        elif cfg.mode == "constrained":
            d = minimize_constrained([pg.gain], y_star_next, free, cfg.lam, history.u_prev,
                                     cfg.u_min, cfg.u_max)
        else:
            raise ConfigurationError(f"mode {cfg.mode!r} needs the taylor PG source")
        return _with_pg(d, pg)

    if table is None:
        raise ConfigurationError("the taylor PG source needs a partial-derivative table")
    if cfg.orders != table.orders:
        raise ConfigurationError(
            f"taylor PG needs ly = ny+1, lu = nu+1 = {table.orders}, got {cfg.orders}")
    trunc = tuple(cfg.truncation) if cfg.truncation is not None else table.max_order
    if cfg.mode == "iterative":
        return iterative_law(table, history, y_star_next, cfg.lam, cfg.n_iter, trunc, cfg.eps_d)

    point = history.operating_point(table.ny, table.nu)
    window0 = history.window(cfg.orders, 0.0)
    base = taylor_pg(table, point, window0, trunc, k=0)
    coeffs = gain_polynomial(table, point, trunc[cfg.orders.ly])
    if cfg.mode == "one_step":
        if cfg.approximate_gain:
            phi = base.phi.copy()
            phi[cfg.orders.ly] = approximate_gain(coeffs, history.input_increments(1)[0])
            base = PGVector(cfg.orders, phi)
        return one_step_law(base, history, y_star_next, cfg.lam, cfg.eps_d)

    free = history.y_now + float(base.phi @ window0.vector)
    if cfg.mode == "polynomial_cost":
        d = minimize_polynomial_cost(coeffs, y_star_next, free, cfg.lam, history.u_prev)
    else:
        d = minimize_constrained(coeffs, y_star_next, free, cfg.lam, history.u_prev,
                                 cfg.u_min, cfg.u_max)
    used = taylor_pg(table, point, history.window(cfg.orders, d.delta_u), trunc)
    return _with_pg(d, used)


def _with_pg(d: ControlDecision, pg: PGVector) -> ControlDecision:
    return ControlDecision(d.delta_u, d.u, d.predicted_next_y, d.bracket, d.denominator,
                           d.cost, pg, d.diagnostics)
