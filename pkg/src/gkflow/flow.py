"""Flow construction of generalized Kaehler families.

Input: a complex structure I0, a Poisson tensor Q = Im(sigma), a closed real
(1,1)-form F0 and a vector field X with L_X Q = 0 and L_X I0 = Q F0.

With phi_t the flow of X we set F_t = phi_t^* F0 and I_t = phi_t^* I0, so
that dI_t/dt = phi_t^*(L_X I0) = Q F_t.  G_t integrates F_s over [0, t] and
F_t_bar = G_t / t.  Then I_t - I0 = Q G_t and G_t I_t + I0^* G_t = 0, which
makes (I0, I_t, tQ, F_t_bar) a brane solution.

The flow map and its Jacobian are integrated together (classical RK4 on the
state and the variational equation dJ/dt = DX(y) J).
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from . import linalg as la
from .errors import ChartExitError, SingularError, ValidationError
from .fields import Chart, Diffeo, Field, fd_jacobian, lie_derivative
from .gk_build import BraneSolution, GKPair, gk_from_solution, positivity_margin
from .linalg import maxnorm


@dataclass(frozen=True)
class FlowInput:
    I0: Field
    Q: Field
    F0: Field
    X: Field

    @property
    def chart(self) -> Chart:
        return self.I0.chart


@dataclass
class FlowConfig:
    dt: float = 1e-2
    t_max: float = 1.0
    output_every: int = 1
    samples: int = 64
    seed: int = 0
    check_input: bool = True
    input_tol: float | None = None


@dataclass
class FlowRecord:
    t: float
    r1: float
    r2: float
    margin: float
    type11: float
    q_drift: float


def validate_flow_input(inp: FlowInput, x=None):
    """(max |L_X Q|, max |L_X I0 - Q F0|)."""
    x = inp.chart.samples() if x is None else np.asarray(x, float)
    LQ = lie_derivative(inp.X, inp.Q)(x)
    LI = lie_derivative(inp.X, inp.I0)(x)
    return maxnorm(LQ), maxnorm(LI - inp.Q(x) @ inp.F0(x))


# --- integration -----------------------------------------------------------

class FlowIntegrator:
    """RK4 for y' = X(y) together with J' = DX(y) J."""

    def __init__(self, X: Field):
        self.X = X
        self.chart = X.chart

    def _rhs(self, y, J):
        ch = self.chart
        DX = fd_jacobian(self.X, y, ch.h, ch.order)
        return self.X(y), DX @ J

    def step(self, y, J, dt):
        k1y, k1J = self._rhs(y, J)
        k2y, k2J = self._rhs(y + 0.5 * dt * k1y, J + 0.5 * dt * k1J)
        k3y, k3J = self._rhs(y + 0.5 * dt * k2y, J + 0.5 * dt * k2J)
        k4y, k4J = self._rhs(y + dt * k3y, J + dt * k3J)
        y = y + dt / 6 * (k1y + 2 * k2y + 2 * k3y + k4y)
        J = J + dt / 6 * (k1J + 2 * k2J + 2 * k3J + k4J)
        return y, J

    def trajectory(self, x0, n_steps: int, dt: float):
        """States at steps 0..n_steps: arrays (n_steps + 1, ..., n) and (..., n, n)."""
        y = np.asarray(x0, float)
        n = y.shape[-1]
        J = np.broadcast_to(np.eye(n), y.shape + (n,)).copy()
        ys, Js = [y], [J]
        for _ in range(n_steps):
            y, J = self.step(y, J, dt)
            if not np.all(np.isfinite(J)):
                raise SingularError("flow Jacobian is not finite")
            self.chart.require_inside(y, "flow trajectory")
            ys.append(y)
            Js.append(J)
        return np.stack(ys), np.stack(Js)


def cumulative_simpson(F, dt: float):
    """G[k] = integral of F over [0, k dt] for every k.

    Composite Simpson on even counts; for odd counts >= 3 the last three
    intervals use Simpson's 3/8 rule.  The first interval alone uses the
    quadratic through F[0], F[1], F[2] (trapezoid if only two nodes exist),
    keeping the local error at fourth order.
    """
    F = np.asarray(F)
    N = F.shape[0] - 1
    G = np.zeros_like(F)
    S = np.zeros_like(F)  # Simpson sums on even indices
    for k in range(1, N + 1):
        if k % 2 == 0:
            S[k] = S[k - 2] + dt / 3 * (F[k - 2] + 4 * F[k - 1] + F[k])
            G[k] = S[k]
        elif k == 1:
            if N >= 2:
                G[k] = dt / 12 * (5 * F[0] + 8 * F[1] - F[2])
            else:
                G[k] = 0.5 * dt * (F[0] + F[1])
        else:
            G[k] = S[k - 3] + 3 * dt / 8 * (F[k - 3] + 3 * F[k - 2] + 3 * F[k - 1] + F[k])
    return G


def _transport(inp: FlowInput, ys, Js):
    """I_t and F_t along stored states (leading axis = step)."""
    Ji = np.linalg.inv(Js)
    It = Ji @ inp.I0(ys) @ Js
    Ft = la.tr(Js) @ inp.F0(ys) @ Js
    return It, Ft


def _steps_for(t: float, dt: float):
    if t == 0:
        return 0, 0.0
    k = max(1, math.ceil(abs(t) / dt - 1e-9))
    return k, t / k


# --- flow states -----------------------------------------------------------

class FlowState:
    """Flow data at a single time t as lazily evaluated fields.

    Trajectories started from the same point batch are memoised, so the
    several fields derived from one state share the integration work.
    """

    def __init__(self, inp: FlowInput, t: float, dt: float = 1e-2, cache_size: int = 32):
        self.inp = inp
        self.t = float(t)
        self.dt = dt
        self.n_steps, self.step = _steps_for(self.t, dt)
        self._integ = FlowIntegrator(inp.X)
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        ch = inp.chart
        self.I_t = Field("endo", lambda x: self._data(x)[0], ch)
        self.F_t = Field("form2", lambda x: self._data(x)[1], ch)
        self.G_t = Field("form2", lambda x: self._data(x)[2], ch)
        self.Fbar_t = Field("form2", lambda x: self._data(x)[3], ch)
        self.phi = Diffeo(lambda x: self._data(x)[4], self._inverse_map, lambda x: self._data(x)[5])

    def _data(self, x):
        x = np.asarray(x, float)
        key = (x.shape, x.tobytes())
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        inp = self.inp
        if self.n_steps == 0:
            n = x.shape[-1]
            eye = np.broadcast_to(np.eye(n), x.shape + (n,))
            I, F = inp.I0(x), inp.F0(x)
            out = (I, F, np.zeros_like(F), F, x, eye.copy())
        else:
            ys, Js = self._integ.trajectory(x, self.n_steps, self.step)
            It, Ft = _transport(inp, ys, Js)
            G = cumulative_simpson(Ft, self.step)[-1]
            out = (It[-1], Ft[-1], G, G / self.t, ys[-1], Js[-1])
        self._cache[key] = out
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return out

    def _inverse_map(self, y):
        back = FlowIntegrator(-1.0 * self.inp.X)
        ys, _ = back.trajectory(np.asarray(y, float), self.n_steps, self.step)
        return ys[-1]

    def brane(self) -> BraneSolution:
        """(I0, I_t, tQ, F_t_bar)."""
        inp, t = self.inp, self.t
        tQ = Field("bivector", lambda x: t * inp.Q(x), inp.chart)
        return BraneSolution(inp.I0, self.I_t, tQ, self.Fbar_t)


@dataclass
class FlowResult:
    inp: FlowInput
    config: FlowConfig
    records: list = field(default_factory=list)
    input_residuals: tuple = (0.0, 0.0)

    def column(self, name: str):
        return np.array([getattr(r, name) for r in self.records])

    def max_residual(self, name: str = "r1", t_max: float | None = None) -> float:
        vals = [getattr(r, name) for r in self.records if t_max is None or r.t <= t_max + 1e-12]
        return max(vals) if vals else 0.0

    def threshold(self):
        return positivity_threshold(self.records)

    def state(self, t: float) -> FlowState:
        return FlowState(self.inp, t, self.config.dt)

    def as_rows(self):
        return [asdict(r) for r in self.records]


def positivity_threshold(records) -> float | None:
    """First zero crossing of the positivity margin, linearly interpolated."""
    prev = None
    for r in records:
        if r.margin <= 0:
            if prev is None:
                return 0.0
            return prev.t + (r.t - prev.t) * prev.margin / (prev.margin - r.margin)
        prev = r
    return None


def run_flow(inp: FlowInput, cfg: FlowConfig | None = None, x=None) -> FlowResult:
    cfg = cfg or FlowConfig()
    ch = inp.chart
    x = ch.samples(cfg.samples, cfg.seed) if x is None else np.asarray(x, float)
    res = validate_flow_input(inp, x)
    if cfg.check_input:
        scale = max(1.0, inp.Q.max_abs(x), inp.F0.max_abs(x), inp.X.max_abs(x))
        tol = cfg.input_tol if cfg.input_tol is not None else ch.tol(scale)
        if max(res) > tol:
            raise ValidationError(f"flow input fails: |L_X Q| = {res[0]:.3e}, |L_X I0 - Q F0| = {res[1]:.3e}",
                                  max(res))
    N = int(round(cfg.t_max / cfg.dt))
    if abs(N * cfg.dt - cfg.t_max) > 1e-9 * max(1.0, cfg.t_max):
        raise ValueError("t_max must be a multiple of dt")
    ys, Js = FlowIntegrator(inp.X).trajectory(x, N, cfg.dt)
    It, Ft = _transport(inp, ys, Js)
    G = cumulative_simpson(Ft, cfg.dt)
    I0, Q, F0 = inp.I0(x), inp.Q(x), inp.F0(x)
    out = FlowResult(inp, cfg, [], res)
    for k in range(0, N + 1, cfg.output_every):
        t = k * cfg.dt
        Fbar = F0 if k == 0 else G[k] / t
        Jk = Js[k]
        Jinv = np.linalg.inv(Jk)
        Qpull = Jinv @ inp.Q(ys[k]) @ la.tr(Jinv)
        out.records.append(FlowRecord(
            t=t,
            r1=maxnorm(It[k] - I0 - Q @ G[k]),
            r2=maxnorm(G[k] @ It[k] + la.tr(I0) @ G[k]),
            margin=float(np.min(positivity_margin(I0, It[k], Fbar))),
            type11=maxnorm(Ft[k] @ It[k] + la.tr(It[k]) @ Ft[k]),
            q_drift=maxnorm(Qpull - Q),
        ))
    return out


def gk_family(inp: FlowInput, t: float, dt: float = 1e-2, x=None) -> GKPair:
    """Generalized Kaehler pair from (I0, I_t, tQ, F_t_bar); raises past the positivity threshold."""
    st = FlowState(inp, t, dt)
    return gk_from_solution(st.brane(), x)


def convergence_ratio(inp: FlowInput, dt: float, t_max: float = 1.0, x=None, name: str = "r1") -> float:
    """max residual at dt divided by max residual at dt / 2."""
    a = run_flow(inp, FlowConfig(dt=dt, t_max=t_max, check_input=False), x).max_residual(name)
    b = run_flow(inp, FlowConfig(dt=dt / 2, t_max=t_max, check_input=False), x).max_residual(name)
    return a / b if b > 0 else math.inf


def r2_rate(inp: FlowInput, dt: float, t_max: float, x=None) -> float:
    """max over output times of |d/dt (G_t I_t + I0^* G_t)| by central differences in t."""
    ch = inp.chart
    x = ch.samples() if x is None else np.asarray(x, float)
    N = int(round(t_max / dt))
    ys, Js = FlowIntegrator(inp.X).trajectory(x, N, dt)
    It, Ft = _transport(inp, ys, Js)
    G = cumulative_simpson(Ft, dt)
    M = G @ It + la.tr(inp.I0(x)) @ G
    dM = (M[2:] - M[:-2]) / (2 * dt)
    return maxnorm(dM)
