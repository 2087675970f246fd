"""Hybrid systems with one guard family and event-detecting integration.

A model is a flow ``x' = f(x)``, a scalar guard ``h`` and a reset ``Delta``.
All model callables act row-wise on stacked states (last axis = state), so
the integrator below can advance a whole batch of initial conditions at once.
Each row keeps its own step size and event bracket: a row's result never
depends on which other rows share the batch.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    GrazingEvent,
    IntegrationDiverged,
    NoImpact,
    ResetDomainError,
    StepUnderflow,
)

Array = np.ndarray


@dataclass(frozen=True)
class HybridSystemModel:
    """Closed-loop hybrid system ``H_d``: flow off the guard, reset on it.

    ``vector_field``, ``guard``, ``guard_gradient`` and ``guard_armed`` take
    arrays of shape ``(..., n)``; ``reset`` and ``reset_domain`` take
    ``(m, n)``.  ``guard_armed`` optionally masks out crossings that are not
    impacts (e.g. mid-swing scuffing); ``reset_domain`` flags pre-impact
    states the reset rejects.
    """

    name: str
    dimension: int
    vector_field: Callable[[Array], Array]
    guard: Callable[[Array], Array]
    reset: Callable[[Array], Array]
    guard_gradient: Optional[Callable[[Array], Array]] = None
    guard_armed: Optional[Callable[[Array], Array]] = None
    reset_domain: Optional[Callable[[Array], Array]] = None
    guard_interval: tuple = (-math.inf, math.inf)
    state_names: tuple = ()
    state_units: tuple = ()
    scale: tuple = ()
    params: dict = field(default_factory=dict)
    analytic_map: Optional[Callable] = None

    def __post_init__(self):
        n = self.dimension
        if n < 1:
            raise ValueError("dimension must be positive")
        if not self.state_names:
            object.__setattr__(self, "state_names", tuple(f"x{i}" for i in range(n)))
        if not self.state_units:
            object.__setattr__(self, "state_units", ("",) * n)
        if not self.scale:
            object.__setattr__(self, "scale", (1.0,) * n)
        if not (len(self.state_names) == len(self.state_units) == len(self.scale) == n):
            raise ValueError("state metadata must have one entry per coordinate")
        if any(s <= 0 for s in self.scale):
            raise ValueError("state scales must be positive")


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = 0.25
    event_tol: float = 1e-10
    t_dwell: float = 1e-6
    horizon: float = 10.0
    blowup: float = 1e6
    grazing_tol: float = 1e-8
    subsamples: int = 16

    def __post_init__(self):
        for name in ("rtol", "atol", "max_step", "event_tol", "horizon", "blowup", "grazing_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.t_dwell >= 0:
            raise ValueError("t_dwell must be non-negative")
        if self.subsamples < 1:
            raise ValueError("subsamples must be >= 1")
        if self.event_tol < self.atol:
            raise ValueError("event_tol must be >= atol")

    def tightened(self, factor=0.5):
        """Copy with rtol/atol scaled by ``factor`` (event_tol kept >= atol)."""
        from dataclasses import replace
        return replace(self, rtol=self.rtol * factor, atol=self.atol * factor)


@dataclass(frozen=True)
class TerminalEvent:
    level: float
    time: float


@dataclass(frozen=True)
class Trajectory:
    t: Array
    x: Array
    event: Optional[TerminalEvent] = None


class Status(enum.IntEnum):
    OK = 0
    NO_IMPACT = 1
    GRAZING = 2
    DIVERGED = 3
    UNDERFLOW = 4
    RESET_DOMAIN = 5
    RUNNING = -1


_STATUS_ERRORS = {
    Status.NO_IMPACT: NoImpact,
    Status.GRAZING: GrazingEvent,
    Status.DIVERGED: IntegrationDiverged,
    Status.UNDERFLOW: StepUnderflow,
    Status.RESET_DOMAIN: ResetDomainError,
}


def raise_for_status(code, where=""):
    code = Status(int(code))
    if code == Status.OK:
        return
    raise _STATUS_ERRORS[code](f"{code.name.lower()}{': ' + where if where else ''}")


# --- Dormand-Prince 5(4) ---------------------------------------------------

_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
_E = (-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40)
# continuous extension: y(t + th*h) = y + h * sum_j th^(j+1) * (K^T P)[:, j]
_P = (
    (1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432),
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799),
    (0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072),
    (0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632),
    (0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844),
    (0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423),
)
_SAFETY, _MIN_FAC, _MAX_FAC = 0.9, 0.2, 10.0
_EPS = np.finfo(float).eps


def _lincomb(coefs, ks):
    acc = None
    for c, k in zip(coefs, ks):
        if c == 0.0:
            continue
        acc = c * k if acc is None else acc + c * k
    return acc


def _rk_step(f, y, h, k0):
    hc = h[:, None]
    ks = [k0]
    for s in range(1, 6):
        ks.append(f(y + hc * _lincomb(_A[s], ks)))
    y_new = y + hc * _lincomb(_B, ks)
    ks.append(f(y_new))
    err = hc * _lincomb(_E, ks)
    return y_new, ks, err


def _dense_coeffs(ks):
    return [_lincomb([_P[s][j] for s in range(7)], ks) for j in range(4)]


def _dense_eval(y, h, Q, th):
    """Dense output at fractions ``th`` (shape (m,) or (m, S)) of each step."""
    if th.ndim == 1:
        thc = th[:, None]
        poly = Q[0] + thc * (Q[1] + thc * (Q[2] + thc * Q[3]))
        return y + (h * th)[:, None] * poly
    thc = th[:, :, None]
    poly = Q[0][:, None] + thc * (Q[1][:, None] + thc * (Q[2][:, None] + thc * Q[3][:, None]))
    return y[:, None] + (h[:, None] * th)[:, :, None] * poly


def _rms(z):
    return np.sqrt(np.mean(z * z, axis=1))


def _initial_step(f, y, k0, cfg, limit):
    sc = cfg.atol + cfg.rtol * np.abs(y)
    d0, d1 = _rms(y / sc), _rms(k0 / sc)
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    h0 = np.minimum(h0, limit)
    y1 = y + h0[:, None] * k0
    d2 = _rms((f(y1) - k0) / sc) / h0
    dm = np.maximum(d1, d2)
    h1 = np.where(dm <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / np.maximum(dm, 1e-300)) ** 0.2)
    return np.minimum(np.minimum(100 * h0, h1), limit)


def _refine_roots(guard, level, y, h, Q, tha, thb, ga, gb, ftol):
    """Illinois (modified regula falsi) on each row's bracket [tha, thb]."""
    th = tha.copy()
    g = ga.copy()
    side = np.zeros(th.shape, dtype=int)
    live = np.ones(th.shape, dtype=bool)
    done0 = ga == 0.0
    live &= ~done0
    for _ in range(200):
        if not live.any():
            break
        i = np.nonzero(live)[0]
        a, b, fa, fb = tha[i], thb[i], ga[i], gb[i]
        t_new = (a * fb - b * fa) / (fb - fa)
        t_new = np.where((t_new <= a) | (t_new >= b) | ~np.isfinite(t_new), 0.5 * (a + b), t_new)
        x = _dense_eval(y[i], h[i], [q[i] for q in Q], t_new)
        g_new = guard(x) - level[i]
        th[i], g[i] = t_new, g_new
        conv = (np.abs(g_new) <= ftol) | ((b - a) <= 4 * _EPS)
        right = g_new < 0
        # right side moves: halve stale left value if right moved twice in a row
        tb = np.where(right, t_new, b)
        fbn = np.where(right, g_new, fb)
        ta = np.where(right, a, t_new)
        fan = np.where(right, fa, g_new)
        s_old = side[i]
        fan = np.where(right & (s_old == 1), 0.5 * fan, fan)
        fbn = np.where(~right & (s_old == -1), 0.5 * fbn, fbn)
        tha[i], thb[i], ga[i], gb[i] = ta, tb, fan, fbn
        side[i] = np.where(right, 1, -1)
        live[i[conv]] = False
    return th


def _integrate(sys, Y0, cfg, t_end, levels=None, record=False):
    """Advance each row of ``Y0`` until ``t_end`` or a downward crossing of
    ``guard == level`` (when ``levels`` is given).

    Returns ``(t, y, status, samples)``; ``samples`` is a list of
    ``(t, y)`` pairs for accepted steps of row 0 when ``record`` is set.
    """
    f = sys.vector_field
    Y0 = np.atleast_2d(np.asarray(Y0, dtype=float))
    m = Y0.shape[0]
    t_end = np.broadcast_to(np.asarray(t_end, dtype=float), (m,)).copy()
    if levels is not None:
        levels = np.broadcast_to(np.asarray(levels, dtype=float), (m,)).copy()
    t = np.zeros(m)
    y = Y0.copy()
    status = np.full(m, Status.RUNNING, dtype=int)
    out_t = np.zeros(m)
    out_y = Y0.copy()
    samples = [(0.0, Y0[0].copy())] if record else None

    bad0 = ~np.all(np.isfinite(y), axis=1) | (np.linalg.norm(y, axis=1) > cfg.blowup)
    status[bad0] = Status.DIVERGED
    active = np.nonzero(~bad0)[0]
    if active.size == 0:
        return out_t, out_y, status, samples
    k0 = np.empty_like(y)
    k0[active] = f(y[active])
    h = np.zeros(m)
    h[active] = _initial_step(f, y[active], k0[active], cfg, np.minimum(cfg.max_step, t_end[active]))
    g_prev = None
    if levels is not None:
        g_prev = np.zeros(m)
        g_prev[active] = sys.guard(y[active]) - levels[active]
    S = cfg.subsamples
    theta = np.arange(1, S + 1) / S
    armed_fn = sys.guard_armed
    ftol = 1e-3 * cfg.event_tol

    while active.size:
        ya, ha, ta = y[active], h[active], t[active]
        y_new, ks, err = _rk_step(f, ya, ha, k0[active])
        sc = cfg.atol + cfg.rtol * np.maximum(np.abs(ya), np.abs(y_new))
        en = _rms(err / sc)
        finite = np.isfinite(en) & np.all(np.isfinite(y_new), axis=1)
        accept = finite & (en <= 1.0)
        fac = np.where(en == 0.0, _MAX_FAC, _SAFETY * np.where(finite & (en > 0), en, 1.0) ** -0.2)
        fac = np.clip(fac, _MIN_FAC, _MAX_FAC)
        fac = np.where(finite, np.where(accept, fac, np.minimum(fac, 1.0)), _MIN_FAC)

        finished = np.zeros(active.size, dtype=bool)
        acc_idx = np.nonzero(accept)[0]
        if levels is not None and acc_idx.size:
            rows = active[acc_idx]
            ya_acc, h_acc = ya[acc_idx], ha[acc_idx]
            Q = _dense_coeffs([k[acc_idx] for k in ks])
            th_grid = np.broadcast_to(theta, (acc_idx.size, S))
            Ys = _dense_eval(ya_acc, h_acc, Q, th_grid)
            lev = levels[rows]
            G = sys.guard(Ys) - lev[:, None]
            Gfull = np.concatenate([g_prev[rows][:, None], G], axis=1)
            t_right = ta[acc_idx][:, None] + h_acc[:, None] * theta[None, :]
            cand = (Gfull[:, :-1] >= 0) & (Gfull[:, 1:] < 0) & (t_right >= cfg.t_dwell)
            if armed_fn is not None:
                cand &= np.asarray(armed_fn(Ys), dtype=bool)
            pending = np.nonzero(cand.any(axis=1))[0]
            while pending.size:
                j = np.argmax(cand[pending], axis=1)
                tha = np.where(j == 0, 0.0, theta[np.maximum(j - 1, 0)])
                thb = theta[j].copy()
                ga = Gfull[pending, j].copy()
                gb = Gfull[pending, j + 1].copy()
                Qp = [q[pending] for q in Q]
                th_r = _refine_roots(sys.guard, lev[pending], ya_acc[pending], h_acc[pending], Qp,
                                     tha, thb, ga, gb, ftol)
                t_r = ta[acc_idx[pending]] + th_r * h_acc[pending]
                ok = t_r >= cfg.t_dwell
                hit = pending[ok]
                if hit.size:
                    x_r = _dense_eval(ya_acc[hit], h_acc[hit], [q[hit] for q in Q], th_r[ok])
                    rate = guard_rate(sys, x_r)
                    r_rows = active[acc_idx[hit]]
                    out_t[r_rows] = t_r[ok]
                    out_y[r_rows] = x_r
                    status[r_rows] = np.where(np.abs(rate) < cfg.grazing_tol, Status.GRAZING, Status.OK)
                    finished[acc_idx[hit]] = True
                    if record:
                        samples.append((float(t_r[ok][0]), x_r[0].copy()))
                miss = pending[~ok]
                cand[miss, j[~ok]] = False
                pending = miss[cand[miss].any(axis=1)] if miss.size else miss
            g_prev[rows] = G[:, -1]

        # advance accepted rows that did not hit the guard
        adv = accept & ~finished
        ai = np.nonzero(adv)[0]
        rows = active[ai]
        t[rows] = ta[ai] + ha[ai]
        y[rows] = y_new[ai]
        k0[rows] = ks[6][ai]
        if record and ai.size:
            samples.append((float(t[rows][0]), y[rows][0].copy()))
        blow = np.linalg.norm(y[rows], axis=1) > cfg.blowup
        status[rows[blow]] = Status.DIVERGED
        out_t[rows[blow]] = t[rows[blow]]
        out_y[rows[blow]] = y[rows[blow]]
        finished[ai[blow]] = True
        at_end = (t_end[rows] - t[rows]) <= 8 * _EPS * np.maximum(1.0, t[rows])
        at_end &= ~blow
        end_rows = rows[at_end]
        status[end_rows] = Status.NO_IMPACT if levels is not None else Status.OK
        out_t[end_rows] = t[end_rows]
        out_y[end_rows] = y[end_rows]
        finished[ai[at_end]] = True

        h_new = np.minimum(ha * fac, cfg.max_step)
        h_new = np.minimum(h_new, t_end[active] - t[active])
        tiny = h_new < 8 * _EPS * np.maximum(1.0, np.abs(t[active]))
        under = tiny & ~finished
        if under.any():
            u_rows = active[under]
            status[u_rows] = Status.UNDERFLOW
            out_t[u_rows] = t[u_rows]
            out_y[u_rows] = y[u_rows]
            finished |= under
        h[active] = h_new
        active = active[~finished]
    return out_t, out_y, status, samples


# --- public operations -----------------------------------------------------

def guard_rate(sys, x):
    """Time derivative of the guard, ``grad h(x) . f(x)``.

    Uses ``sys.guard_gradient`` when present, otherwise central differences
    with step ``1e-6 * (1 + |x|)``.  Accepts one state or a stack of states.
    """
    x = np.asarray(x, dtype=float)
    fx = sys.vector_field(x)
    if sys.guard_gradient is not None:
        grad = sys.guard_gradient(x)
    else:
        grad = guard_gradient_fd(sys, x)
    return np.sum(grad * fx, axis=-1)


def guard_gradient_fd(sys, x):
    x = np.asarray(x, dtype=float)
    step = 1e-6 * (1.0 + np.linalg.norm(x, axis=-1))
    grad = np.empty_like(x)
    for i in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[i] = 1.0
        dx = step[..., None] * e
        grad[..., i] = (sys.guard(x + dx) - sys.guard(x - dx)) / (2.0 * step)
    return grad


def flow(sys, x0, t_end, cfg=IntegratorConfig(), level=None):
    """Integrate the continuous dynamics from ``x0`` for ``t_end`` seconds.

    No reset is applied.  With ``level`` set, integration stops at the first
    armed downward crossing of ``h == level`` after the dwell time and the
    trajectory carries a terminal event.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    x0 = np.asarray(x0, dtype=float)
    lv = None if level is None else np.array([float(level)])
    t, y, status, samples = _integrate(sys, x0[None], cfg, t_end, levels=lv, record=True)
    code = Status(int(status[0]))
    if code in (Status.DIVERGED, Status.UNDERFLOW):
        raise_for_status(code, "flow")
    ts = np.array([s[0] for s in samples])
    xs = np.array([s[1] for s in samples])
    if ts.size > 1 and ts[-1] <= ts[-2]:
        ts, xs = np.delete(ts, -2), np.delete(xs, -2, axis=0)
    event = None
    if level is not None and code in (Status.OK, Status.GRAZING):
        event = TerminalEvent(level=float(level), time=float(t[0]))
    return Trajectory(t=ts, x=xs, event=event)


def impact_batch(sys, X_post, levels, cfg=IntegratorConfig()):
    """Flow every post-reset row to its first downward crossing of its level.

    Returns ``(T, X, status)`` with one entry per row; failed rows carry a
    non-zero ``Status`` instead of raising.
    """
    X_post = np.atleast_2d(np.asarray(X_post, dtype=float))
    return _integrate(sys, X_post, cfg, cfg.horizon, levels=levels)[:3]


def time_to_impact(sys, x_post, d, cfg=IntegratorConfig()):
    """Extended time-to-impact: first ``t >= t_dwell`` with ``h(phi_t(x)) = d``
    and ``h`` decreasing.  Raises NoImpact / GrazingEvent off its domain."""
    T, _, status = impact_batch(sys, np.asarray(x_post, dtype=float)[None], [d], cfg)
    raise_for_status(status[0], "time_to_impact")
    return float(T[0])


def reset_batch(sys, X_minus):
    """Apply the reset row-wise; returns (X_plus, ok_mask)."""
    X_minus = np.atleast_2d(np.asarray(X_minus, dtype=float))
    ok = np.ones(X_minus.shape[0], dtype=bool)
    if sys.reset_domain is not None:
        ok &= np.asarray(sys.reset_domain(X_minus), dtype=bool)
    X_plus = np.full_like(X_minus, np.nan)
    if ok.any():
        X_plus[ok] = sys.reset(X_minus[ok])
    return X_plus, ok


def apply_reset(sys, x_minus):
    x_plus, ok = reset_batch(sys, np.asarray(x_minus, dtype=float)[None])
    if not ok[0]:
        raise ResetDomainError(f"{sys.name}: reset undefined at {np.asarray(x_minus)}")
    return x_plus[0]
