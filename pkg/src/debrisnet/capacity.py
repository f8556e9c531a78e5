"""Mean-field carrying-capacity models fitted to simulation traces.

One species (fragments ``x``)::

    x' = -a x + b x^2                 K = a / b

Fragments ``x`` and payloads ``y``::

    x' = b x^2 - a x + c y^2 + d x y
    y' = -e y^2 - f x y + lam - gamma y
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- 1-D

@dataclass
class BernoulliSolution:
    t: np.ndarray
    x: np.ndarray  # inf past the blow-up time
    t_star: float | None  # blow-up time, None when the solution stays finite


def bernoulli_solution(a: float, b: float, x0: float, t) -> BernoulliSolution:
    """Closed-form solution of ``x' = -a x + b x^2`` from ``x(0) = x0``."""
    if x0 <= 0:
        raise ValueError("initial population must be positive")
    if not a > 0 or b < 0:
        raise ValueError("need a > 0 and b >= 0")
    t = np.asarray(t, dtype=float)
    C0 = 1.0 / x0 - b / a
    den = b * np.exp(-a * t) / a + C0
    t_star = None
    if C0 < 0:
        t_star = float(-np.log(-C0 * a / b) / a)
    with np.errstate(divide="ignore"):
        x = np.where(den > 0, np.exp(-a * t) / np.where(den > 0, den, 1.0), np.inf)
    if t_star is not None:
        x = np.where(t >= t_star, np.inf, x)
    return BernoulliSolution(t, x, t_star)


@dataclass
class CapacityModel1D:
    a: float  # decay per object per year
    b: float  # net fragment production per object^2 per year

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError("coefficients must be non-negative")

    @property
    def K(self) -> float:
        return self.a / self.b if self.b > 0 else np.inf

    def rhs(self, x):
        return -self.a * x + self.b * x * x

    def solution(self, x0: float, t) -> BernoulliSolution:
        return bernoulli_solution(self.a, self.b, x0, t)

    def coefficients(self) -> dict:
        return {"a": self.a, "b": self.b, "K": self.K}


# ---------------------------------------------------------------- 2-D

@dataclass
class Equilibrium:
    x: float
    y: float
    stability: str  # stable | saddle | unstable | none
    eigenvalues: np.ndarray
    residual: float  # relative


class EquilibriumSet(list):
    """List of equilibria with a ``status`` ("found" / "none") and the payload level where y' = 0 at x = 0."""

    def __init__(self, items=(), status: str = "found", y_nullcline: float = np.nan):
        super().__init__(items)
        self.status = status
        self.y_nullcline = y_nullcline


@dataclass
class CapacityModel2D:
    a: float
    b: float
    c: float
    d: float
    e: float
    f: float
    lam: float = 0.0
    gamma: float = 0.0
    equilibria: EquilibriumSet = field(default_factory=EquilibriumSet)

    def rhs(self, x, y):
        dx = self.b * x * x - self.a * x + self.c * y * y + self.d * x * y
        dy = -self.e * y * y - self.f * x * y + self.lam - self.gamma * y
        return dx, dy

    def jacobian(self, x: float, y: float) -> np.ndarray:
        return np.array([[2 * self.b * x - self.a + self.d * y, 2 * self.c * y + self.d * x],
                         [-self.f * y, -2 * self.e * y - self.f * x - self.gamma]])

    def term_scale(self, x: float, y: float) -> float:
        """Sum of absolute term magnitudes, the yardstick for relative residuals."""
        return (abs(self.b * x * x) + abs(self.a * x) + abs(self.c * y * y) + abs(self.d * x * y)
                + abs(self.e * y * y) + abs(self.f * x * y) + abs(self.lam) + abs(self.gamma * y))

    def residual(self, x: float, y: float) -> float:
        dx, dy = self.rhs(x, y)
        s = self.term_scale(x, y)
        return (abs(dx) + abs(dy)) / s if s > 0 else 0.0

    def y_of_x(self, x):
        """Non-negative root of y' = 0 for given x (unique when lam > 0)."""
        x = np.asarray(x, dtype=float)
        g = self.f * x + self.gamma
        if self.lam == 0:
            return np.zeros_like(x)
        disc = np.sqrt(g * g + 4 * self.e * self.lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            # cancellation-free form of (-g + sqrt(g^2 + 4 e lam)) / (2 e)
            return 2 * self.lam / (g + disc)

    def coefficients(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d, "e": self.e, "f": self.f,
                "lambda": self.lam, "gamma": self.gamma}

    def solve(self) -> EquilibriumSet:
        self.equilibria = find_equilibria(self)
        return self.equilibria


def classify(eigenvalues, tol: float = 0.0) -> str:
    re = np.real(eigenvalues)
    if np.all(re < -tol):
        return "stable"
    if np.all(re > tol):
        return "unstable"
    if np.any(re < -tol) and np.any(re > tol):
        return "saddle"
    return "none"


def _newton_refine(model: CapacityModel2D, x: float, y: float, iters: int = 50):
    """Damped Newton on the full system; keeps the start point if no step improves it."""
    z = np.array([x, y], dtype=float)
    best = model.residual(*z)
    for _ in range(iters):
        F = np.array(model.rhs(*z))
        J = model.jacobian(*z)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam > 1e-6:
            cand = z + lam * step
            r = model.residual(*cand)
            if r < best and cand[0] >= -1e-12 and cand[1] >= -1e-12:
                z, best = cand, r
                break
            lam *= 0.5
        else:
            break
        if best < 1e-15:
            break
    return max(z[0], 0.0), max(z[1], 0.0)


def _h(model: CapacityModel2D, x):
    y = model.y_of_x(x)
    return model.b * x * x - model.a * x + model.c * y * y + model.d * x * y


def _gradient_fallback(model: CapacityModel2D, tol: float) -> list:
    """Minimise sqrt(x'^2 + y'^2) from a few starts; keep minima that are true zeros."""
    scale_x = model.a / model.b if model.b > 0 else 1e5
    scale_y = max(model.y_of_x(0.0), 1.0) if model.lam > 0 else max(scale_x, 1.0)
    found = []
    for sx in (1e-3, 0.3, 1.0, 3.0):
        for sy in (0.0, 1.0):
            z0 = np.array([sx, sy])

            def obj(z):
                x, y = abs(z[0]) * scale_x, abs(z[1]) * scale_y
                dx, dy = model.rhs(x, y)
                return float(np.hypot(dx, dy) / max(model.term_scale(x, y), 1e-300))

            res = minimize(obj, z0, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14,
                                                                   "maxiter": 4000})
            x, y = abs(res.x[0]) * scale_x, abs(res.x[1]) * scale_y
            x, y = _newton_refine(model, x, y)
            if model.residual(x, y) < tol:
                found.append((x, y))
    return found


def find_equilibria(model: CapacityModel2D, tol: float = 1e-6, n_grid: int = 4000) -> EquilibriumSet:
    """Non-negative equilibria of the 2-D system with Jacobian stability labels.

    y' = 0 gives y(x) in closed form; substituting it into x' = 0 leaves one
    scalar equation h(x) = 0, whose roots are bracketed on a logarithmic grid,
    polished with Brent's method and then with damped Newton on the full system.
    """
    m = model
    if not all(np.isfinite(v) for v in m.coefficients().values()):
        raise ValueError("coefficients must be finite")
    y0 = float(m.y_of_x(0.0))
    cands = []
    if abs(_h(m, 0.0)) <= tol * max(m.term_scale(0.0, y0), 1e-300):
        cands.append(0.0)
    hi = 1e3 * (m.a / m.b if m.b > 0 else 1e9)
    hi = max(hi, 1e3 * (y0 if y0 > 0 else 1.0))
    xs = np.geomspace(1e-12 * hi, hi, n_grid)
    hs = _h(m, xs)
    sgn = np.sign(hs)
    for k in np.flatnonzero(sgn[:-1] * sgn[1:] < 0):
        cands.append(brentq(lambda x: _h(m, x), xs[k], xs[k + 1], xtol=1e-14 * xs[k + 1], rtol=1e-15,
                            maxiter=500))
    pts = []
    for x in cands:
        pts.append(_newton_refine(m, x, float(m.y_of_x(x))))
    if not pts:
        pts = _gradient_fallback(m, tol)
    out = EquilibriumSet(y_nullcline=y0)
    for x, y in pts:
        if any(abs(x - q.x) <= 1e-9 * max(1.0, abs(x)) and abs(y - q.y) <= 1e-9 * max(1.0, abs(y))
               for q in out):
            continue
        r = m.residual(x, y)
        if r >= tol:
            log.debug("discarding candidate (%g, %g) with residual %g", x, y, r)
            continue
        ev = np.linalg.eigvals(m.jacobian(x, y))
        out.append(Equilibrium(float(x), float(y), classify(ev), ev, r))
    out.sort(key=lambda q: (q.x, q.y))
    out.status = "found" if out else "none"
    return out


def integrate(model: CapacityModel2D, x0: float, y0: float, t_end: float, n: int = 200):
    """Forward integration of the 2-D system (stiff-safe), stopped if it leaves [0, 1e12]."""
    def fun(_, z):
        return model.rhs(z[0], z[1])

    def escape(_, z):
        return 1e12 - max(abs(z[0]), abs(z[1]))
    escape.terminal = True
    t_eval = np.linspace(0.0, t_end, n)
    return solve_ivp(fun, (0.0, t_end), [x0, y0], method="LSODA", t_eval=t_eval, events=escape,
                     rtol=1e-10, atol=1e-12)


def phase_portrait(model: CapacityModel2D, x_range, y_range, n: int = 41):
    """Grid of (x, y, x', y') for level-curve plots of sqrt(x'^2 + y'^2)."""
    X, Y = np.meshgrid(np.linspace(*x_range, n), np.linspace(*y_range, n))
    DX, DY = model.rhs(X, Y)
    return X, Y, DX, DY


# ---------------------------------------------------------------- extraction

def _floor(name: str, v: float) -> float:
    if v < 0:
        warnings.warn(f"coefficient {name} = {v:.3e} is negative; floored at 0", RuntimeWarning,
                      stacklevel=3)
        return 0.0
    return v


def extract_coefficients(traces, mode: str = "1d", window=None):
    """Fit the mean-field coefficients to per-step cause traces.

    ``traces`` is a list of per-run dicts with the engine trace keys plus
    ``dt_years`` (or a list of such lists, one per initial population). Each
    coefficient is the mean over all (run, step) samples with a nonzero
    denominator of cause delta / (population power * dt).  ``window`` limits the
    average to steps whose start epoch lies in ``[t0, t1)`` years.
    """
    flat = []
    for tr in traces:
        if isinstance(tr, (list, tuple)):
            flat.extend(tr)
        else:
            flat.append(tr)
    if not flat:
        raise ValueError("no traces given")
    cols = {k: [] for k in ("x", "y", "dx_decay", "dx_FF", "dx_PP", "dx_PF", "dy_PP", "dy_PF", "dy_pmd",
                            "dy_launch", "dt")}
    for tr in flat:
        dt = float(tr["dt_years"])
        n = len(tr["x"])
        sel = np.ones(n, dtype=bool)
        if window is not None:
            t = np.arange(n) * dt
            sel = (t >= window[0]) & (t < window[1])
        for k in cols:
            if k == "dt":
                cols[k].append(np.full(int(sel.sum()), dt))
            else:
                cols[k].append(np.asarray(tr[k], dtype=float)[sel])
    c = {k: np.concatenate(v) for k, v in cols.items()}
    x, y, dt = c["x"], c["y"], c["dt"]
    ok_x = x > 0
    a = float(np.mean(-c["dx_decay"][ok_x] / (x[ok_x] * dt[ok_x]))) if ok_x.any() else 0.0
    b = float(np.mean(c["dx_FF"][ok_x] / (x[ok_x] ** 2 * dt[ok_x]))) if ok_x.any() else 0.0
    if mode == "1d":
        return CapacityModel1D(_floor("a", a), _floor("b", b))
    if mode != "2d":
        raise ValueError("mode must be '1d' or '2d'")
    ok_y = y > 0
    ok_xy = ok_x & ok_y

    def mean(num, den, ok):
        return float(np.mean(num[ok] / (den[ok] * dt[ok]))) if ok.any() else 0.0

    coeff = {
        "c": mean(c["dx_PP"], y * y, ok_y),
        "d": mean(c["dx_PF"], x * y, ok_xy),
        "e": mean(-c["dy_PP"], y * y, ok_y),
        "f": mean(-c["dy_PF"], x * y, ok_xy),
        "gamma": mean(-c["dy_pmd"], y, ok_y),
    }
    lam = float(np.mean(c["dy_launch"] / dt))
    coeff = {k: _floor(k, v) for k, v in coeff.items()}
    model = CapacityModel2D(_floor("a", a), _floor("b", b), coeff["c"], coeff["d"], coeff["e"], coeff["f"],
                            _floor("lambda", lam), coeff["gamma"])
    model.solve()
    return model
