import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from debrisnet.capacity import (CapacityModel1D, CapacityModel2D, bernoulli_solution, classify, extract_coefficients,
                                find_equilibria, integrate, phase_portrait)
from debrisnet.engine import TRACE_KEYS

BASE = dict(a=0.004728332083372, b=8.662467642990248e-08, c=1.175401267752297e-14, d=9.428437648428035e-10,
            gamma=0.368578793358788, lam=0.0, e=2.003922397999517e-17, f=2.316928055993169e-13)
CAM99 = dict(a=0.004226706317436, b=8.676619156862889e-08, c=1.224456162356393e-15, d=9.606253682748494e-11,
             gamma=0.166677662732838, lam=3000.0, e=1.647891773627737e-17, f=1.957039536003774e-13)


def test_bernoulli_fixed_point():
    a, b = 0.005, 1e-7
    sol = bernoulli_solution(a, b, a / b, np.linspace(0, 200, 50))
    assert np.allclose(sol.x, a / b, rtol=1e-9) and sol.t_star is None


def test_bernoulli_below_capacity_decays():
    sol = bernoulli_solution(0.05, 1e-6, 2e4, np.linspace(0, 400, 400))
    assert np.all(np.diff(sol.x) < 0) and sol.x[-1] < 1e-3 * sol.x[0]


def test_bernoulli_above_capacity_blows_up():
    a, b = 0.05, 1e-6
    sol = bernoulli_solution(a, b, 1.2 * a / b, np.linspace(0, 100, 1001))
    assert sol.t_star is not None and 0 < sol.t_star < 100
    # closed form of the blow-up time
    assert sol.t_star == pytest.approx(np.log(1.2 / 0.2) / a, rel=1e-12)
    assert np.all(np.isinf(sol.x[sol.t >= sol.t_star]))
    assert np.all(np.diff(sol.x[sol.t < sol.t_star]) > 0)


def test_bernoulli_domain():
    with pytest.raises(ValueError):
        bernoulli_solution(0.1, 1e-6, 0.0, [0.0])


@given(st.floats(1e-3, 0.5), st.floats(1e-9, 1e-5), st.floats(0.05, 0.95), st.floats(0.1, 50))
def test_bernoulli_solves_ode(a, b, frac, t):
    x0 = frac * a / b
    h = 1e-4 * max(t, 1.0) / 50
    x = bernoulli_solution(a, b, x0, [t - h, t, t + h]).x
    deriv = (x[2] - x[0]) / (2 * h)
    rhs = -a * x[1] + b * x[1] ** 2
    assert abs(deriv - rhs) <= 1e-8 * max(abs(a * x[1]), 1.0) + 1e-6 * abs(rhs)


def test_one_d_model_capacity():
    m = CapacityModel1D(0.0049, 7.8e-10)
    assert m.K == pytest.approx(0.0049 / 7.8e-10)
    assert CapacityModel1D(0.1, 0.0).K == np.inf
    with pytest.raises(ValueError):
        CapacityModel1D(-1.0, 0.0)


def test_lambda_zero_equilibria():
    m = CapacityModel2D(**BASE)
    eq = find_equilibria(m)
    assert eq.status == "found" and len(eq) == 2
    origin, sad = eq
    assert (origin.x, origin.y) == (0.0, 0.0) and origin.stability == "stable"
    assert sad.stability == "saddle" and sad.y == 0.0
    assert sad.x == pytest.approx(BASE["a"] / BASE["b"], rel=1e-10)
    assert sad.x == pytest.approx(5.4584e4, rel=1e-3)


def test_high_cam_row_equilibria():
    eq = find_equilibria(CapacityModel2D(**CAM99))
    ys = {round(q.y, -2) for q in eq}
    xs = sorted(q.x for q in eq)
    assert len(eq) == 2 and ys == {18000.0}
    assert xs[0] < 1.0
    assert xs[1] == pytest.approx(4.90e4, rel=0.02)
    assert [q.stability for q in sorted(eq, key=lambda q: q.x)] == ["stable", "saddle"]


@settings(max_examples=30)
@given(st.sampled_from([BASE, CAM99]), st.floats(0.5, 2.0), st.floats(0.5, 2.0), st.floats(0.5, 2.0))
def test_equilibria_have_small_residual(row, sa, sb, sl):
    kw = dict(row, a=row["a"] * sa, b=row["b"] * sb, lam=row["lam"] * sl)
    m = CapacityModel2D(**kw)
    for q in find_equilibria(m):
        assert q.residual < 1e-6
        assert q.x >= 0 and q.y >= 0


def test_stability_agrees_with_integration():
    m = CapacityModel2D(**CAM99)
    for q in find_equilibria(m):
        x0, y0 = q.x * 1.01 + 50.0, q.y * 1.01
        sol = integrate(m, x0, y0, 2000.0)
        end = np.array([sol.y[0, -1], sol.y[1, -1]])
        back = np.hypot(*(end - [q.x, q.y])) < np.hypot(x0 - q.x, y0 - q.y)
        assert back == (q.stability == "stable")


def test_classify_labels():
    assert classify(np.array([-1.0, -2.0])) == "stable"
    assert classify(np.array([-1.0, 2.0])) == "saddle"
    assert classify(np.array([1.0, 2.0])) == "unstable"


def test_phase_portrait_shapes():
    X, Y, DX, DY = phase_portrait(CapacityModel2D(**CAM99), (0, 1e5), (0, 3e4), 11)
    assert X.shape == Y.shape == DX.shape == DY.shape == (11, 11)
    assert DY[0, 0] == pytest.approx(3000.0)


def synthetic_trace(rng, x0, rate, dt, n_steps, frag_per_x2=0.0):
    tr = {k: np.zeros(n_steps) for k in TRACE_KEYS}
    x = x0
    for k in range(n_steps):
        lost = rng.binomial(x, rate * dt)
        made = rng.poisson(frag_per_x2 * x * x * dt) if frag_per_x2 else 0
        tr["x"][k], tr["dx_decay"][k], tr["dx_FF"][k] = x, -lost, made
        x = x - lost + made
    tr["dt_years"] = dt
    return tr


def test_extract_pure_decay_rate():
    rng = np.random.default_rng(0)
    rate, dt = 0.05, 1.0 / 12
    traces = [synthetic_trace(rng, 100_000, rate, dt, 240) for _ in range(5)]
    m = extract_coefficients(traces, "1d")
    assert m.a == pytest.approx(rate, rel=0.01)
    assert m.b == 0.0 and m.K == np.inf


def test_extract_collision_term():
    rng = np.random.default_rng(1)
    traces = [synthetic_trace(rng, 20000, 0.05, 1.0, 30, frag_per_x2=2e-7) for _ in range(10)]
    m = extract_coefficients(traces, "1d")
    assert m.b == pytest.approx(2e-7, rel=0.05)


def test_extract_window_and_negative_floor():
    rng = np.random.default_rng(2)
    tr = synthetic_trace(rng, 5000, 0.1, 1.0, 20)
    tr["dx_FF"][:] = -1.0
    with pytest.warns(RuntimeWarning):
        m = extract_coefficients([tr], "1d", window=(0.0, 10.0))
    assert m.b == 0.0
    with pytest.raises(ValueError):
        extract_coefficients([], "1d")


def test_extract_two_d_launch_and_pmd():
    n = 50
    tr = {k: np.zeros(n) for k in TRACE_KEYS}
    tr["x"][:] = 1000.0
    tr["dx_decay"][:] = -50.0
    tr["y"][:] = 2000.0
    tr["dy_pmd"][:] = -400.0
    tr["dy_launch"][:] = 400.0
    tr["dt_years"] = 1.0
    m = extract_coefficients([tr], "2d")
    assert m.a == pytest.approx(0.05) and m.gamma == pytest.approx(0.2) and m.lam == pytest.approx(400.0)
    assert m.b == m.c == m.d == m.e == m.f == 0.0
