"""Closed-loop pole analysis of the regularized one-step law.

With a frozen PG the loop obeys T(z^-1) y(k) = phi_{Ly+1} phi_Lu(z^-1) y*(k), where

    T(z^-1) = lam (1 - z^-1) [1 - z^-1 phi_Ly(z^-1)] + phi_{Ly+1} phi_Lu(z^-1).

Everything here is a frozen-coefficient prediction: exact for linear plants
with constant PG, a per-step heuristic otherwise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .edlm import PGVector
from .errors import ConfigurationError, DegeneratePlantError

MARGINAL_BAND = 1e-3
REAL_TOL = 1e-8


def polynomial_roots(coeffs: Sequence[float], polish: int = 2) -> np.ndarray:
    """All complex roots of ``coeffs[0] x^n + ... + coeffs[n]``.

    Eigenvalues of the companion matrix of the monic polynomial, followed by
    a few Newton steps on the original coefficients.  Leading coefficients so
    small that normalizing by them overflows are dropped: their roots lie
    beyond floating-point range.
    """
    c = np.trim_zeros(np.asarray(coeffs, dtype=complex), "f")
    if c.size == 0:
        raise ConfigurationError("the zero polynomial has no roots")
    # exact power-of-two rescaling; dividing by a subnormal would overflow
    shift = -np.frexp(np.max(np.abs(c)))[1]
    c = np.ldexp(c.real, shift) + 1j * np.ldexp(c.imag, shift)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        while c.size > 1 and not np.all(np.isfinite(c[1:] / c[0])):
            c = np.trim_zeros(c[1:], "f")
    n = c.size - 1
    if n <= 0:
        return np.empty(0, dtype=complex)
    monic = c[1:] / c[0]
    companion = np.zeros((n, n), dtype=complex)
    companion[0, :] = -monic
    companion[1:, :-1] = np.eye(n - 1)
    roots = np.linalg.eigvals(companion)
    dc = np.polyder(c)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(polish):
            d = np.polyval(dc, roots)
            step = np.where(d != 0, np.polyval(c, roots) / np.where(d != 0, d, 1), 0)
            better = np.abs(np.polyval(c, roots - step)) < np.abs(np.polyval(c, roots))
            roots = np.where(better & np.isfinite(step), roots - step, roots)
    return roots


def real_roots(coeffs: Sequence[float], tol: float = REAL_TOL) -> np.ndarray:
    """Real roots, accepting |Im z| <= tol * max(1, |z|)."""
    roots = polynomial_roots(coeffs)
    keep = np.abs(roots.imag) <= tol * np.maximum(1.0, np.abs(roots))
    return np.sort(roots[keep].real)


@dataclass(frozen=True)
class ClosedLoopPolynomial:
    """T(z^-1), coefficients in ascending powers of z^-1."""

    coefficients: np.ndarray
    lam: float
    pg: PGVector

    @property
    def degree(self) -> int:
        return self.coefficients.size - 1

    def in_z(self) -> np.ndarray:
        """Descending coefficients of z^degree * T(z^-1)."""
        return self.coefficients.copy()

    def evaluate_z(self, z) -> complex:
        return np.polyval(self.coefficients, z)


def build_T(pg: PGVector, lam: float) -> ClosedLoopPolynomial:
    if lam < 0:
        raise ConfigurationError("lambda must be non-negative")
    a = pg.output_block
    b = pg.input_block
    one_minus_shift_a = np.concatenate([[1.0], -a])
    reg = lam * np.convolve([1.0, -1.0], one_minus_shift_a)
    track = pg.gain * b
    n = max(reg.size, track.size)
    coeffs = np.zeros(n)
    coeffs[: reg.size] += reg
    coeffs[: track.size] += track
    nz = np.flatnonzero(coeffs)
    coeffs = coeffs[: nz[-1] + 1] if nz.size else coeffs[:1]
    return ClosedLoopPolynomial(coeffs, float(lam), pg)


@dataclass(frozen=True)
class StabilityReport:
    roots: np.ndarray
    spectral_radius: float
    verdict: str
    band: float = MARGINAL_BAND

    @property
    def root_pairs(self) -> list[tuple[float, float]]:
        return [(float(r.real), float(r.imag)) for r in self.roots]


def classify(radius: float, band: float = MARGINAL_BAND) -> str:
    if radius < 1 - band:
        return "stable"
    if radius > 1 + band:
        return "unstable"
    return "marginal"


def poles(T: ClosedLoopPolynomial, band: float = MARGINAL_BAND) -> StabilityReport:
    c = T.coefficients
    if not np.any(c):
        raise ConfigurationError("zero closed-loop polynomial")
    if c[0] == 0:
        # lam = 0 and zero gain: the loop has poles at infinity
        finite = polynomial_roots(c)
        infinite = np.full(T.degree - finite.size, complex(math.inf, 0))
        return StabilityReport(np.concatenate([finite, infinite]), math.inf, "unstable", band)
    roots = polynomial_roots(c)
    radius = float(np.max(np.abs(roots))) if roots.size else 0.0
    return StabilityReport(roots, radius, classify(radius, band), band)


def static_error_ramp(pg: PGVector, lam: float, Ts: float = 1.0) -> float:
    """Steady tracking error for a ramp of slope Ts per step, proportional to lam."""
    denom = pg.gain * float(np.sum(pg.input_block))
    if denom == 0:
        raise DegeneratePlantError("phi_{Ly+1} * sum(phi_Lu) vanishes")
    return lam * Ts * (1.0 - float(np.sum(pg.output_block))) / denom


def static_error_power(n: int, lam: float, pg: Optional[PGVector] = None) -> float:
    """Limit of the tracking error for the reference k^n.

    Zero for lam = 0.  For n = 1 this is the ramp error (needs ``pg``);
    for n >= 2 and lam > 0 there is no finite limit and ``inf`` is returned.
    """
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    if lam == 0:
        return 0.0
    if n == 1:
        if pg is None:
            raise ConfigurationError("the ramp case needs the PG")
        return static_error_ramp(pg, lam, 1.0)
    return math.inf


@dataclass(frozen=True)
class SweepRow:
    lam: float
    spectral_radius: float
    verdict: str
    ramp_error: Optional[float]

    @property
    def degenerate(self) -> bool:
        return self.ramp_error is None


def lambda_sweep(pg: PGVector, lambda_grid: Iterable[float], Ts: float = 1.0) -> list[SweepRow]:
    grid = [float(x) for x in lambda_grid]
    if not grid:
        raise ConfigurationError("empty lambda grid")
    rows = []
    for lam in grid:
        report = poles(build_T(pg, lam))
        try:
            err: Optional[float] = static_error_ramp(pg, lam, Ts)
        except DegeneratePlantError:
            err = None
        rows.append(SweepRow(lam, report.spectral_radius, report.verdict, err))
    return rows


SWEEP_COLUMNS = ("lambda", "spectral_radius", "verdict", "ramp_error")


def write_sweep_csv(rows: Iterable[SweepRow], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([f"{r.lam:.17g}", f"{r.spectral_radius:.17g}", r.verdict,
                    "" if r.ramp_error is None else f"{r.ramp_error:.17g}"])
