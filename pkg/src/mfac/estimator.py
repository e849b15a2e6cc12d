"""Projection-type pseudo-gradient estimator.

    phi(k) = phi(k-1) + eta * dH(k-1) * (dy(k) - phi(k-1).dH(k-1)) / (mu + |dH(k-1)|^2)

The sign of the leading input coefficient is never forced; the estimate is
free to follow a plant whose gain changes sign.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .edlm import IncrementWindow, PGVector
from .errors import ConfigurationError, NumericError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResetPolicy:
    """``kind`` is ``"none"`` or ``"norm_threshold"``.

    The threshold policy restores the initial estimate whenever
    ``|dH(k-1)| <= eps_h`` or ``|phi(k)| <= eps_phi``.
    """

    kind: str = "none"
    eps_h: float = 1e-5
    eps_phi: float = 1e-5

    def __post_init__(self):
        if self.kind not in ("none", "norm_threshold"):
            raise ConfigurationError(f"unknown reset policy {self.kind!r}")


@dataclass(frozen=True)
class EstimatorConfig:
    eta: float
    mu: float
    initial_pg: PGVector
    reset_policy: ResetPolicy = ResetPolicy()

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigurationError(f"mu must be positive, got {self.mu}")
        if not self.eta > 0:
            raise ConfigurationError(f"eta must be positive, got {self.eta}")
        if self.eta > 2:
            log.warning("eta = %g is outside (0, 2]; the estimate error is no longer "
                        "guaranteed to contract", self.eta)


@dataclass(frozen=True)
class EstimatorState:
    estimate: PGVector
    last_window: Optional[IncrementWindow] = None
    last_error: float = 0.0

    @classmethod
    def initial(cls, cfg: EstimatorConfig) -> "EstimatorState":
        return cls(cfg.initial_pg)


def update(state: EstimatorState, observed_dy: float, window: IncrementWindow,
           cfg: EstimatorConfig) -> EstimatorState:
    """One projection step; ``window`` is dH(k-1) and ``observed_dy`` is dy(k)."""
    if cfg.mu <= 0:
        raise ConfigurationError("mu must be positive")
    phi_old = state.estimate
    if window.orders != phi_old.orders:
        raise ConfigurationError(
            f"window orders {window.orders} do not match estimate {phi_old.orders}")
    h = window.vector
    if not (math.isfinite(observed_dy) and np.all(np.isfinite(h))):
        raise NumericError("non-finite data passed to the estimator")
    err = observed_dy - float(phi_old.phi @ h)
    norm2 = float(h @ h)
    phi = phi_old.phi + cfg.eta * h * err / (cfg.mu + norm2)
    if not np.all(np.isfinite(phi)):
        raise NumericError("estimate became non-finite")

    policy = cfg.reset_policy
    if policy.kind == "norm_threshold" and (
            math.sqrt(norm2) <= policy.eps_h or np.linalg.norm(phi) <= policy.eps_phi):
        phi = cfg.initial_pg.phi

    return replace(state, estimate=PGVector(phi_old.orders, phi, phi_old.k + 1),
                   last_window=window, last_error=err)
