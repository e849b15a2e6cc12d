"""Closed-loop simulation driver, metrics and trace persistence.

Time convention: ``initial.y`` and ``initial.u`` prescribe y(0..my) and
u(0..mu); earlier samples are zero.  The first controlled step is
k0 = mu + 1.  Outputs between my and k0 come from the plant driven by the
prescribed inputs.  Steps k0..horizon are controlled and recorded; row k
holds y*(k), y(k), u(k), e(k) = y*(k) - y(k) and the PG used at step k.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import jsonschema
import numpy as np
import yaml

from .controller import ControllerConfig, decide
from .edlm import History, PGVector, PseudoOrders
from .errors import (ConfigurationError, DegenerateGainError, IterationDivergenceError,
                     TraceParseError)
from .estimator import EstimatorConfig, EstimatorState, ResetPolicy, update
from .plants import Plant, Trajectory, make_plant

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e12
STATIC_WINDOW = 100
TRANSIENT_FRACTION = 0.1


def _schema() -> dict:
    return json.loads(resources.files("mfac").joinpath("scenario.schema.json").read_text())


@dataclass(frozen=True)
class Scenario:
    name: str
    horizon: int
    plant_name: str
    plant_params: dict
    trajectory: Trajectory
    controller: ControllerConfig
    estimator: Optional[EstimatorConfig] = None
    known_pg: Optional[PGVector] = None
    initial_y: tuple = (0.0,)
    initial_u: tuple = (0.0,)
    on_degenerate: str = "hold"
    seed: Optional[int] = None
    description: str = ""
    source: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def first_step(self) -> int:
        return len(self.initial_u)

    def build_plant(self) -> Plant:
        return make_plant(self.plant_name, **self.plant_params)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        try:
            jsonschema.validate(data, _schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigurationError(f"scenario schema violation at {where}: {exc.message}") from None

        c = data["controller"]
        orders = PseudoOrders(c["ly"], c["lu"])
        cfg = ControllerConfig(
            lam=float(c["lambda"]), orders=orders,
            eps_d=float(c.get("denominator_guard", 1e-10)),
            mode=c.get("mode", "one_step"), pg_source=c.get("pg_source", "estimated"),
            n_iter=int(c.get("n_iter", 3)), u_min=c.get("u_min"), u_max=c.get("u_max"),
            approximate_gain=bool(c.get("approximate_gain", False)),
            truncation=tuple(c["truncation"]) if "truncation" in c else None)

        known = None
        if cfg.pg_source == "known":
            if "known_pg" not in c:
                raise ConfigurationError("pg_source 'known' needs controller.known_pg")
            known = PGVector(orders, c["known_pg"])

        est = None
        if cfg.pg_source == "estimated":
            e = data.get("estimator")
            if e is None:
                raise ConfigurationError("pg_source 'estimated' needs an estimator section")
            reset = e.get("reset", {"policy": "none"})
            est = EstimatorConfig(
                eta=float(e["eta"]), mu=float(e["mu"]),
                initial_pg=PGVector(orders, e["initial_pg"]),
                reset_policy=ResetPolicy(reset["policy"], reset.get("eps_h", 1e-5),
                                         reset.get("eps_phi", 1e-5)))

        init = data.get("initial", {})
        traj = data["trajectory"]
        scenario = cls(
            name=data["name"], horizon=int(data["horizon"]),
            plant_name=data["plant"]["name"], plant_params=dict(data["plant"].get("params", {})),
            trajectory=Trajectory(traj["kind"], dict(traj.get("params", {}))),
            controller=cfg, estimator=est, known_pg=known,
            initial_y=tuple(float(v) for v in init.get("y", [0.0])),
            initial_u=tuple(float(v) for v in init.get("u", [0.0])),
            on_degenerate=c.get("on_degenerate", "hold"), seed=data.get("seed"),
            description=data.get("description", ""), source=copy.deepcopy(data))
        scenario.validate()
        return scenario

    def validate(self) -> None:
        plant = self.build_plant()
        if len(self.initial_y) > self.first_step + 1:
            raise ConfigurationError("initial.y may not extend past the first controlled step")
        if self.horizon < self.first_step:
            raise ConfigurationError(
                f"horizon {self.horizon} ends before the first controlled step {self.first_step}")
        if self.controller.pg_source == "taylor":
            table = plant.partial_table(0)
            if table.orders != self.controller.orders:
                raise ConfigurationError(
                    f"taylor PG needs ly, lu = {table.orders.ly}, {table.orders.lu}")
            if self.controller.truncation is not None and (
                    len(self.controller.truncation) != table.n_args):
                raise ConfigurationError("one truncation order per plant argument")


def builtin_scenario_names() -> list[str]:
    root = resources.files("mfac").joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_scenario_dict(path_or_name: Union[str, Path]) -> dict:
    """Parse a scenario file, or a built-in scenario given by name."""
    p = Path(path_or_name)
    if p.suffix in (".yaml", ".yml") or p.exists():
        text = p.read_text()  # FileNotFoundError propagates to the caller
    else:
        res = resources.files("mfac").joinpath("scenarios", f"{path_or_name}.yaml")
        if not res.is_file():
            raise FileNotFoundError(f"no scenario file or built-in named {path_or_name!r}")
        text = res.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"scenario is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError("scenario must be a mapping")
    return data


def load_scenario(path_or_name: Union[str, Path]) -> Scenario:
    return Scenario.from_dict(load_scenario_dict(path_or_name))


@dataclass(eq=False)
class SimTrace:
    k: np.ndarray
    y_star: np.ndarray
    y: np.ndarray
    u: np.ndarray
    e: np.ndarray
    phi: np.ndarray
    status: str = "completed"
    diverged_at: Optional[int] = None

    def __len__(self) -> int:
        return self.k.size

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def __eq__(self, other) -> bool:
        if not isinstance(other, SimTrace):
            return NotImplemented
        return (self.status == other.status and self.diverged_at == other.diverged_at
                and all(np.array_equal(getattr(self, a), getattr(other, a))
                        for a in ("k", "y_star", "y", "u", "e", "phi")))

    def at(self, k: int) -> int:
        """Row index of step k."""
        idx = np.flatnonzero(self.k == k)
        if idx.size == 0:
            raise KeyError(k)
        return int(idx[0])


def run(scenario: Scenario) -> SimTrace:
    """Simulate the closed loop; deterministic given the scenario."""
    scenario.validate()
    plant = scenario.build_plant()
    cfg = scenario.controller
    orders = cfg.orders
    ny, nu = plant.ny, plant.nu
    k0, K = scenario.first_step, scenario.horizon
    depth = max(orders.ly, orders.lu, ny, nu) + 3

    y = np.zeros(depth + K + 2)
    u = np.zeros(depth + K + 2)
    y[depth: depth + len(scenario.initial_y)] = scenario.initial_y
    u[depth: depth + len(scenario.initial_u)] = scenario.initial_u

    def plant_step(t: int) -> float:
        i = depth + t
        return plant.step(y[i - ny: i + 1][::-1], u[i - nu: i + 1][::-1], t)

    for t in range(len(scenario.initial_y) - 1, k0):
        y[depth + t + 1] = plant_step(t)

    est_state = EstimatorState.initial(scenario.estimator) if scenario.estimator else None
    n_rows = K - k0 + 1
    rows_phi = np.zeros((n_rows, orders.size))
    rows_ystar = np.zeros(n_rows)
    status, diverged_at = "completed", None
    last_pg = scenario.known_pg or (est_state.estimate if est_state else None)

    n = 0
    for k in range(k0, K + 1):
        i = depth + k
        hist = History(y[i - depth + 1: i + 1][::-1], u[i - depth: i][::-1])
        y_star_next = scenario.trajectory(k)

        pg = None
        table = None
        if est_state is not None:
            if k > k0:
                est_state = update(est_state, y[i] - y[i - 1], hist.previous_window(orders),
                                   scenario.estimator)
            pg = est_state.estimate
        elif cfg.pg_source == "known":
            pg = scenario.known_pg
        else:
            table = plant.partial_table(k)

        try:
            decision = decide(cfg, hist, y_star_next, pg, table)
            u[i] = decision.u
            used = decision.pg if decision.pg is not None else pg
        except DegenerateGainError:
            if scenario.on_degenerate == "raise":
                raise
            log.debug("degenerate gain at k=%d, holding u", k)
            u[i] = u[i - 1]
            used = pg if pg is not None else last_pg
        except IterationDivergenceError:
            status, diverged_at = "diverged", k
            break
        if used is not None:
            last_pg = used
            rows_phi[n] = used.phi
        rows_ystar[n] = scenario.trajectory(k - 1)
        n += 1

        y_next = plant_step(k)
        if not (math.isfinite(y_next) and math.isfinite(u[i])) or max(
                abs(y_next), abs(u[i])) > DIVERGENCE_LIMIT:
            status, diverged_at = "diverged", k + 1
            break
        y[i + 1] = y_next

    ks = np.arange(k0, k0 + n)
    ys = y[depth + ks].copy()
    us = u[depth + ks].copy()
    ystar = rows_ystar[:n]
    return SimTrace(ks, ystar, ys, us, ystar - ys, rows_phi[:n], status, diverged_at)


def run_many(scenarios: Iterable[Scenario], workers: int = 4) -> list[SimTrace]:
    """Independent runs in parallel; each run owns all of its state."""
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, scenarios))


@dataclass(frozen=True)
class Metrics:
    rms_error: float
    static_error: float
    max_abs_u: float
    violations: int
    partial: bool = False


def compute_metrics(trace: SimTrace, window: int = STATIC_WINDOW,
                    rms_range: Optional[tuple[int, int]] = None,
                    u_bounds: Optional[tuple[float, float]] = None) -> Metrics:
    """RMS error (over ``rms_range`` steps, inclusive, or the whole trace),
    terminal static error (mean e over the last ``window`` rows, never
    reaching into the first 10% of the trace), max |u|, and box violations."""
    n = len(trace)
    if n == 0:
        raise ConfigurationError("empty trace")
    if window < 1 or window > n:
        raise ConfigurationError(f"window {window} does not fit a trace of {n} rows")
    if rms_range is None:
        sel = slice(None)
    else:
        sel = (trace.k >= rms_range[0]) & (trace.k <= rms_range[1])
    e = trace.e[sel]
    rms = float(np.sqrt(np.mean(e ** 2))) if e.size else math.nan
    start = min(max(n - window, math.ceil(TRANSIENT_FRACTION * n)), n - 1)
    static = float(np.mean(trace.e[start:]))
    violations = 0
    if u_bounds is not None:
        lo, hi = u_bounds
        violations = int(np.count_nonzero((trace.u < lo) | (trace.u > hi)))
    return Metrics(rms, static, float(np.max(np.abs(trace.u))), violations, not trace.completed)


def scenario_metrics(scenario: Scenario, trace: SimTrace) -> Metrics:
    cfg = scenario.controller
    bounds = (cfg.u_min, cfg.u_max) if cfg.mode == "constrained" else None
    return compute_metrics(trace, min(STATIC_WINDOW, len(trace)), u_bounds=bounds)


# --- CSV persistence -----------------------------------------------------------------------

BASE_COLUMNS = ("k", "y_star", "y", "u", "e")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def trace_to_csv(trace: SimTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    m = trace.phi.shape[1]
    w.writerow(list(BASE_COLUMNS) + [f"phi_{j}" for j in range(1, m + 1)])
    for r in range(len(trace)):
        w.writerow([str(int(trace.k[r])), _fmt(trace.y_star[r]), _fmt(trace.y[r]),
                    _fmt(trace.u[r]), _fmt(trace.e[r])] + [_fmt(v) for v in trace.phi[r]])
    return buf.getvalue()


def export_csv(trace: SimTrace, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(trace_to_csv(trace))


def parse_trace_csv(text: str) -> SimTrace:
    lines = text.split("\n")
    while lines and lines[-1].strip() == "":
        lines.pop()
    if not lines:
        raise TraceParseError(1, "empty file")
    header = lines[0].rstrip("\r").split(",")
    m = len(header) - len(BASE_COLUMNS)
    expected = list(BASE_COLUMNS) + [f"phi_{j}" for j in range(1, m + 1)]
    if m < 0 or header != expected:
        raise TraceParseError(1, f"header {header} does not match {expected[:len(BASE_COLUMNS)]}"
                                 " followed by phi_1..phi_m")
    ks, data = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.rstrip("\r").split(",")
        if len(fields) != len(header):
            raise TraceParseError(lineno, f"expected {len(header)} fields, got {len(fields)}")
        try:
            ks.append(int(fields[0]))
            data.append([float(v) for v in fields[1:]])
        except ValueError as exc:
            raise TraceParseError(lineno, str(exc)) from None
    arr = np.array(data, dtype=float).reshape(len(ks), len(header) - 1)
    trace = SimTrace(np.array(ks, dtype=int), arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3],
                     arr[:, 4:])
    bad = np.flatnonzero(trace.e != trace.y_star - trace.y)
    if bad.size:
        raise TraceParseError(int(bad[0]) + 2, "e is not y_star - y")
    return trace


def import_csv(path: Union[str, Path]) -> SimTrace:
    with open(path, newline="") as fh:
        return parse_trace_csv(fh.read())
