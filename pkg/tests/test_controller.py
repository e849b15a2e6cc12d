import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfac import (ControllerConfig, History, PGVector, PseudoOrders, approximate_gain, decide,
                  iterative_law, load_scenario, minimize_constrained, minimize_polynomial_cost,
                  one_step_law, run)
from mfac.controller import free_response, gain_polynomial
from mfac.errors import ConfigurationError, DegenerateGainError
from mfac.plants import example2_plant, example3_plant

EX2 = PGVector.from_list([-0.8, -0.5, -0.2], ly=1)


def _rest(y=0.0, u=0.0, n=6):
    return History(np.full(n, y), np.full(n, u))


def test_zero_bracket_gives_zero_move():
    h = History(np.array([0.7, 0.7, 0.7]), np.array([0.2, 0.2, 0.2]))
    d = one_step_law(EX2, h, 0.7, lam=0.2)
    assert d.delta_u == 0.0 and d.u == 0.2


def test_deadbeat_inverse():
    d = one_step_law(EX2, _rest(), 1.0, lam=0.0)
    assert d.delta_u == pytest.approx(-2.0)
    assert d.predicted_next_y == pytest.approx(1.0)


def test_regularized_move():
    d = one_step_law(EX2, _rest(), 1.0, lam=0.2)
    assert d.delta_u == pytest.approx(-0.5 / 0.45, rel=1e-14)
    assert d.denominator == pytest.approx(0.45)


def test_free_response_uses_past_increments():
    h = History(np.array([2.0, 1.0, 0.0]), np.array([1.0, 0.5, 0.0]))
    # y(k) + phi1 dy(k) + phi3 du(k-1)
    assert free_response(EX2, h) == pytest.approx(2.0 - 0.8 * 1.0 - 0.2 * 0.5)


def test_degenerate_gain_at_zero_lambda():
    pg = PGVector.from_list([0.5, 0.0, 0.3], ly=1)
    with pytest.raises(DegenerateGainError):
        one_step_law(pg, _rest(), 1.0, lam=0.0)
    assert one_step_law(pg, _rest(), 1.0, lam=0.1).delta_u == 0.0


gains = st.floats(-5, 5, allow_nan=False).filter(lambda b: abs(b) > 1e-3)


@given(gains, st.floats(-10, 10, allow_nan=False))
def test_zero_lambda_is_exact_inverse(b, bracket):
    pg = PGVector.from_list([0.3, b, -0.1], ly=1)
    d = one_step_law(pg, _rest(), bracket, lam=0.0)
    assert d.delta_u == pytest.approx(bracket / b, rel=1e-12, abs=1e-12)


@given(gains, st.floats(-10, 10, allow_nan=False), st.floats(0, 10), st.floats(0, 10))
def test_move_shrinks_with_lambda(b, bracket, lam1, lam2):
    lo, hi = sorted((lam1, lam2))
    pg = PGVector.from_list([0.3, b], ly=1)
    small = abs(one_step_law(pg, _rest(), bracket, lam=hi).delta_u)
    large = abs(one_step_law(pg, _rest(), bracket, lam=lo).delta_u)
    assert small <= large * (1 + 1e-12)


def _grid_argmin(gain_coeffs, bracket, lam, lo=-5.0, hi=5.0, step=1e-5):
    x = np.arange(lo, hi + step / 2, step)
    g = np.polynomial.polynomial.polyval(x, gain_coeffs)
    J = (bracket - g * x) ** 2 + lam * x ** 2
    i = int(np.argmin(J))
    return x[i], J[i]


def test_quartic_cost_against_grid_oracle():
    # J = (1 - 2 du - du^2)^2 + 1.5 du^2
    d = minimize_polynomial_cost([2.0, 1.0], 1.0, 0.0, 1.5)
    x, J = _grid_argmin([2.0, 1.0], 1.0, 1.5)
    assert d.delta_u == pytest.approx(x, abs=1e-4)
    assert d.delta_u == pytest.approx(0.345, abs=1e-3)
    assert d.cost <= J + 1e-12


def test_constant_gain_cost_matches_one_step_law():
    d = minimize_polynomial_cost([-0.5], 1.0, 0.0, 0.2)
    assert d.delta_u == pytest.approx(one_step_law(EX2, _rest(), 1.0, 0.2).delta_u, rel=1e-12)


def test_heavy_penalty_freezes_input():
    d = minimize_polynomial_cost([2.0, 1.0], 1.0, 0.0, 1e12)
    assert abs(d.delta_u) < 1e-9


@settings(max_examples=60)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=3),
       st.floats(-3, 3, allow_nan=False), st.floats(0, 3, allow_nan=False))
def test_polynomial_cost_beats_local_grid(gain, bracket, lam):
    d = minimize_polynomial_cost(gain, bracket, 0.0, lam)
    x = np.linspace(d.delta_u - 1, d.delta_u + 1, 20001)
    g = np.polynomial.polynomial.polyval(x, gain)
    J = (bracket - g * x) ** 2 + lam * x ** 2
    assert d.cost <= J.min() + 1e-8 * (1 + abs(J.min()))


def test_constrained_inactive_box_matches_unconstrained():
    free = minimize_polynomial_cost([2.0, 1.0], 1.0, 0.0, 1.5, u_prev=0.1)
    boxed = minimize_constrained([2.0, 1.0], 1.0, 0.0, 1.5, 0.1, -2.0, 2.0)
    assert boxed.u == pytest.approx(free.u, abs=1e-12)


def test_constrained_boundary_optimum():
    # unconstrained minimizer is negative, so J increases over the box
    d = minimize_constrained([1.0], -1.0, 0.0, 0.5, 0.0, 0.0, 1.0)
    assert d.u == 0.0
    d = minimize_constrained([1.0], 3.0, 0.0, 0.1, 0.2, -1.0, 0.7)
    assert d.u == 0.7 and d.diagnostics["active"]


def test_constrained_empty_box():
    with pytest.raises(ConfigurationError):
        minimize_constrained([1.0], 1.0, 0.0, 0.1, 0.0, 1.0, 1.0)


@settings(max_examples=100)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=4),
       st.floats(-5, 5, allow_nan=False), st.floats(0, 2, allow_nan=False),
       st.floats(-2, 2, allow_nan=False), st.floats(-2, 2, allow_nan=False),
       st.floats(0.01, 2))
def test_constrained_output_always_inside_box(gain, bracket, lam, u_prev, lo, width):
    d = minimize_constrained(gain, bracket, 0.0, lam, u_prev, lo, lo + width)
    assert lo <= d.u <= lo + width


def test_approximate_gain():
    assert approximate_gain([2.6, 1.0], 0.0) == 2.6
    assert approximate_gain([-0.5], 3.0) == -0.5
    # 2 + 2u(k-1) + du(k-1)
    table = example3_plant().partial_table()
    point = np.array([0.1, 0.3, 0.2, -0.1])
    coeffs = gain_polynomial(table, point, 2)
    assert approximate_gain(coeffs, 0.05) == pytest.approx(2 + 2 * 0.3 + 0.05, abs=1e-14)


def test_linear_plant_gain_polynomial_is_constant():
    table = example2_plant().partial_table()
    coeffs = gain_polynomial(table, np.zeros(3), 4)
    np.testing.assert_allclose(coeffs, [-0.5, 0, 0, 0], atol=1e-15)


def _example3_history(k=150):
    sc = load_scenario("example3_mfac1")
    tr = run(sc)
    y = np.concatenate([sc.initial_y, tr.y[len(sc.initial_y) - sc.first_step:]])
    u = np.concatenate([sc.initial_u, tr.u])
    return y, u, sc


def test_single_iteration_equals_one_step_law():
    y, u, sc = _example3_history()
    table = example3_plant().partial_table()
    orders = PseudoOrders(1, 3)
    cfg = ControllerConfig(1.5, orders, pg_source="taylor", truncation=(2, 2, 5, 6))
    for k in (20, 150, 400):
        h = History.from_arrays(y, u, k)
        target = sc.trajectory(k)
        one = decide(cfg, h, target, table=table)
        it = iterative_law(table, h, target, 1.5, n_iter=1, truncation=(2, 2, 5, 6))
        assert it.delta_u == pytest.approx(one.delta_u, rel=1e-12, abs=1e-15)


def test_iteration_fixed_point():
    table = example3_plant().partial_table()
    h = History(np.full(6, 0.4), np.full(6, -0.3))
    target = free_response(PGVector.from_list([0, 1, 0, 0], ly=1), h)
    d = iterative_law(table, h, target, 1.5, n_iter=4)
    assert d.delta_u == 0.0
    assert max(d.diagnostics["residuals"]) == 0.0


def test_second_pass_improves_prediction():
    y, u, sc = _example3_history()
    table = example3_plant().partial_table()
    better = 0
    steps = range(100, 201)
    for k in steps:
        d = iterative_law(table, History.from_arrays(y, u, k), sc.trajectory(k), 1.5, n_iter=2,
                          truncation=(2, 2, 5, 6))
        r = d.diagnostics["residuals"]
        better += r[2] <= r[1]
    assert better >= 0.9 * len(steps)


def test_config_validation():
    o = PseudoOrders(1, 2)
    with pytest.raises(ConfigurationError):
        ControllerConfig(-0.1, o)
    with pytest.raises(ConfigurationError):
        ControllerConfig(0.1, o, mode="constrained", u_min=1.0, u_max=0.0)
    with pytest.raises(ConfigurationError):
        ControllerConfig(0.1, o, mode="iterative", pg_source="estimated")
    with pytest.raises(ConfigurationError):
        ControllerConfig(0.1, o, mode="bogus")


def test_decide_reports_used_pg():
    cfg = ControllerConfig(0.2, PseudoOrders(1, 2), pg_source="known")
    d = decide(cfg, _rest(), 1.0, pg=EX2)
    assert d.pg is EX2
    with pytest.raises(ConfigurationError):
        decide(cfg, _rest(), 1.0)
