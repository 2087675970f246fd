"""Shipped hybrid systems.

* ``bouncing_ball`` -- actuated ball with a closed-form return map; the
  reference oracle for everything downstream.
* ``fragile_ball`` -- same flow and spectrum, but the reset only accepts
  impacts close to the orbit, so robustness collapses while the eigenvalues
  stay put.
* ``compass_gait`` -- passive two-link walker on a slope with a plastic
  rigid impact.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from .errors import SingularContact
from .hybrid import HybridSystemModel


# --- bouncing ball ---------------------------------------------------------

@dataclass(frozen=True)
class BouncingBallParams:
    g: float = 9.81
    e: float = 0.8
    u0: float = 1.0

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError("gravity must be positive")
        # e = 1 is accepted on purpose: it is the no-fixed-point case.
        if not 0 < self.e <= 1:
            raise ValueError("restitution must lie in (0, 1]")
        if not self.u0 >= 0:
            raise ValueError("thrust must be non-negative")

    @property
    def v_star(self):
        """Pre-impact velocity on the orbit, ``-u0 / (1 - e)``."""
        if self.e == 1.0:
            return -math.inf
        return -self.u0 / (1.0 - self.e)


def ball_analytic_map(params, v_minus, y_prev, d):
    """Closed-form extended return map of the ball (pre-impact velocity).

    Returns the next pre-impact velocity ``-sqrt(v+^2 + 2 g (y_prev - d))``
    with ``v+ = -e v_minus + u0``; NaN where the level ``d`` is never reached
    while descending.
    """
    v_minus, y_prev, d = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (v_minus, y_prev, d)))
    vp = -params.e * v_minus + params.u0
    rad = vp * vp + 2.0 * params.g * (y_prev - d)
    bad = (rad < 0) | ((vp <= 0) & (y_prev < d))
    out = -np.sqrt(np.where(bad, 0.0, rad))
    return np.where(bad, np.nan, out)


def _ball_model(p, name, reset_domain=None, extra=None):
    g, e, u0 = p.g, p.e, p.u0

    def vector_field(x):
        out = np.empty_like(x)
        out[..., 0] = x[..., 1]
        out[..., 1] = -g
        return out

    def guard(x):
        return x[..., 0]

    def guard_gradient(x):
        out = np.zeros_like(x)
        out[..., 0] = 1.0
        return out

    def reset(x):
        out = np.array(x, dtype=float, copy=True)
        out[..., 1] = -e * x[..., 1] + u0
        return out

    def analytic_map(x, d):
        x = np.asarray(x, dtype=float)
        v = ball_analytic_map(p, x[..., 1], x[..., 0], d)
        return np.stack([np.broadcast_to(np.asarray(d, dtype=float), v.shape), v], axis=-1)

    params = asdict(p)
    if extra:
        params.update(extra)
    return HybridSystemModel(
        name=name,
        dimension=2,
        vector_field=vector_field,
        guard=guard,
        reset=reset,
        guard_gradient=guard_gradient,
        reset_domain=reset_domain,
        guard_interval=(-0.5, 0.5),
        state_names=("y", "v"),
        state_units=("m", "m/s"),
        params=params,
        analytic_map=analytic_map,
    )


def bouncing_ball(params=BouncingBallParams()):
    """Ball with ``h = y`` and reset ``v+ = -e v- + u0``.

    Fixed point ``(0, -u0/(1-e))``, period ``2 v+/g``, return-map slope ``e``.
    """
    if params.u0 == 0:
        warnings.warn("u0 = 0: the only fixed point is (0, 0), a Zeno orbit", RuntimeWarning)
    if params.e == 1.0:
        warnings.warn("e = 1 with u0 > 0: the return map has no fixed point", RuntimeWarning)
    return _ball_model(params, "bouncing-ball")


def fragile_ball(params=BouncingBallParams(), band=1e-3):
    """Bouncing ball whose reset is only defined for ``|v- - v*| <= band``."""
    if not band > 0:
        raise ValueError("band must be positive")
    v_star = params.v_star

    def reset_domain(x):
        return np.abs(x[..., 1] - v_star) <= band

    return _ball_model(params, "fragile-ball", reset_domain=reset_domain, extra={"band": band})


# --- rigid impact ----------------------------------------------------------

def rigid_impact(D, Jh, qdot_minus, R):
    """Post-impact velocity of a plastic, non-slipping impact.

    Solves ``[D, -J^T; J, 0] [qd+; F] = [D qd-; 0]`` and relabels:
    ``qd+ = (R - R D^-1 J^T (J D^-1 J^T)^-1 J) qd-``.  Leading batch axes
    broadcast.  ``Jh`` may have zero rows (no constraint).
    """
    D = np.asarray(D, dtype=float)
    Jh = np.asarray(Jh, dtype=float)
    qd = np.asarray(qdot_minus, dtype=float)
    R = np.asarray(R, dtype=float)
    if Jh.shape[-2] == 0:
        return np.einsum("...ij,...j->...i", R, qd)
    DinvJt = np.linalg.solve(D, np.swapaxes(Jh, -1, -2))
    S = Jh @ DinvJt
    if np.any(~(np.linalg.cond(S) < 1e12)):
        raise SingularContact("J D^-1 J^T is singular at the impact configuration")
    lam = np.linalg.solve(S, (Jh @ qd[..., None]))
    qd_plus = qd - (DinvJt @ lam)[..., 0]
    return np.einsum("...ij,...j->...i", R, qd_plus)


# --- compass gait ----------------------------------------------------------

@dataclass(frozen=True)
class CompassGaitParams:
    m: float = 5.0
    m_H: float = 10.0
    a: float = 0.5
    b: float = 0.5
    l: float = 1.0
    g: float = 9.81
    slope: float = 0.0523598775598298873  # 3 degrees

    def __post_init__(self):
        for name in ("m", "m_H", "a", "b", "l", "g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if abs(self.a + self.b - self.l) > 1e-12:
            raise ValueError("a + b must equal l")


def load_compass_gait_config(path=None):
    """Read the versioned compass-gait parameter file.

    Returns ``(params, x_guess)``; the bundled file is used when ``path`` is
    None.
    """
    if path is None:
        text = resources.files("deltacert").joinpath("data/compass_gait.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    cfg = json.loads(text)
    if cfg.get("version") != 1:
        raise ValueError("unsupported compass-gait config version")
    return CompassGaitParams(**cfg["params"]), np.array(cfg["x_guess"], dtype=float)


def _cg_mass_matrix(p, q1, q2):
    c12 = np.cos(q1 - q2)
    d11 = p.m * p.a ** 2 + (p.m_H + p.m) * p.l ** 2
    d12 = -p.m * p.l * p.b * c12
    d22 = p.m * p.b ** 2
    return np.broadcast_to(d11, np.shape(q1)), d12, np.broadcast_to(d22, np.shape(q1))


def compass_gait_extended_inertia(p, q1, q2):
    """4x4 inertia of the floating-base model ``(px, py, th_st, th_sw)``."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    M = 2 * p.m + p.m_H
    c1 = p.m * p.a + (p.m_H + p.m) * p.l
    d11, d12, d22 = _cg_mass_matrix(p, q1, q2)
    De = np.zeros(q1.shape + (4, 4))
    De[..., 0, 0] = De[..., 1, 1] = M
    De[..., 0, 2] = De[..., 2, 0] = c1 * np.cos(q1)
    De[..., 1, 2] = De[..., 2, 1] = -c1 * np.sin(q1)
    De[..., 0, 3] = De[..., 3, 0] = -p.m * p.b * np.cos(q2)
    De[..., 1, 3] = De[..., 3, 1] = p.m * p.b * np.sin(q2)
    De[..., 2, 2] = d11
    De[..., 2, 3] = De[..., 3, 2] = d12
    De[..., 3, 3] = d22
    return De


def compass_gait_swing_jacobian(p, q1, q2):
    """Jacobian of the swing-foot position w.r.t. ``(px, py, th_st, th_sw)``."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    J = np.zeros(q1.shape + (2, 4))
    J[..., 0, 0] = J[..., 1, 1] = 1.0
    J[..., 0, 2] = p.l * np.cos(q1)
    J[..., 0, 3] = -p.l * np.cos(q2)
    J[..., 1, 2] = -p.l * np.sin(q1)
    J[..., 1, 3] = p.l * np.sin(q2)
    return J


# relabel: swing becomes stance; base velocity of the new stance foot is 0
_CG_RELABEL = np.array([[0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=float)


def compass_gait_kinetic_energy(p, x):
    x = np.asarray(x, dtype=float)
    q1, q2, w1, w2 = (x[..., i] for i in range(4))
    d11, d12, d22 = _cg_mass_matrix(p, q1, q2)
    return 0.5 * (d11 * w1 * w1 + 2 * d12 * w1 * w2 + d22 * w2 * w2)


def compass_gait_energy(p, x):
    """Total mechanical energy with the potential measured from the current
    stance foot.  Conserved along a step; comparing values across an impact
    needs :func:`compass_gait_kinetic_energy`, since the reference foot moves.
    """
    x = np.asarray(x, dtype=float)
    q1, q2 = x[..., 0], x[..., 1]
    pot = p.g * ((p.m * p.a + (p.m_H + p.m) * p.l) * np.cos(q1) - p.m * p.b * np.cos(q2))
    return compass_gait_kinetic_energy(p, x) + pot


def compass_gait_swing_height_rate(p, x):
    """Analytic d/dt of the slope-normal swing-foot height."""
    x = np.asarray(x, dtype=float)
    q1, q2, w1, w2 = (x[..., i] for i in range(4))
    return p.l * (-np.sin(q1 - p.slope) * w1 + np.sin(q2 - p.slope) * w2)


def compass_gait(params=CompassGaitParams()):
    """Passive compass-gait walker, state ``(th_st, th_sw, w_st, w_sw)``.

    Angles are absolute, measured from vertical, positive when the hip is
    downhill (+x) of the respective foot.  The guard is the swing-foot
    height above the slope, armed only while the swing foot is ahead of the
    stance foot (this excludes mid-swing scuffing).
    """
    p = params
    mlb = p.m * p.l * p.b
    g1 = p.g * (p.m * p.a + (p.m_H + p.m) * p.l)
    g2 = p.g * p.m * p.b

    def vector_field(x):
        q1, q2, w1, w2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
        d11, d12, d22 = _cg_mass_matrix(p, q1, q2)
        s12 = np.sin(q1 - q2)
        # D qdd + C(q, qd) qd + G(q) = 0
        r1 = mlb * s12 * w2 * w2 + g1 * np.sin(q1)
        r2 = -mlb * s12 * w1 * w1 - g2 * np.sin(q2)
        det = d11 * d22 - d12 * d12
        out = np.empty_like(x)
        out[..., 0] = w1
        out[..., 1] = w2
        out[..., 2] = (d22 * r1 - d12 * r2) / det
        out[..., 3] = (d11 * r2 - d12 * r1) / det
        return out

    def guard(x):
        return p.l * (np.cos(x[..., 0] - p.slope) - np.cos(x[..., 1] - p.slope))

    def guard_armed(x):
        return np.sin(x[..., 0] - p.slope) - np.sin(x[..., 1] - p.slope) > 0

    def reset(x):
        q1, q2 = x[:, 0], x[:, 1]
        De = compass_gait_extended_inertia(p, q1, q2)
        J = compass_gait_swing_jacobian(p, q1, q2)
        qd = np.zeros((x.shape[0], 4))
        qd[:, 2], qd[:, 3] = x[:, 2], x[:, 3]
        qd_plus = rigid_impact(De, J, qd, _CG_RELABEL)
        return np.stack([q2, q1, qd_plus[:, 2], qd_plus[:, 3]], axis=1)

    def reset_domain(x):
        De = compass_gait_extended_inertia(p, x[:, 0], x[:, 1])
        J = compass_gait_swing_jacobian(p, x[:, 0], x[:, 1])
        S = J @ np.linalg.solve(De, np.swapaxes(J, -1, -2))
        return np.linalg.cond(S) < 1e12

    return HybridSystemModel(
        name="compass-gait",
        dimension=4,
        vector_field=vector_field,
        guard=guard,
        reset=reset,
        guard_armed=guard_armed,
        reset_domain=reset_domain,
        guard_interval=(-0.05, 0.05),
        state_names=("th_st", "th_sw", "w_st", "w_sw"),
        state_units=("rad", "rad", "rad/s", "rad/s"),
        params=asdict(p),
    )


# --- linear oracle model ---------------------------------------------------

def linear_return_model(M):
    """Hybrid system whose return map is exactly linear.

    State ``(s, w)`` with ``w`` in R^m: ``s`` decreases at unit rate, the
    guard is ``h = s`` and the reset is ``(s, w) -> (s + 1, M w)``, so
    ``P_d(s, w) = (d, M w)`` and ``DP_0 = diag(0, M)``.  With ``M = 0`` every
    return lands exactly on ``(d, 0)``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    m = M.shape[0]

    def vector_field(x):
        out = np.zeros_like(x)
        out[..., 0] = -1.0
        return out

    def guard(x):
        return x[..., 0]

    def guard_gradient(x):
        out = np.zeros_like(x)
        out[..., 0] = 1.0
        return out

    def reset(x):
        out = np.empty_like(x)
        out[..., 0] = x[..., 0] + 1.0
        out[..., 1:] = x[..., 1:] @ M.T
        return out

    return HybridSystemModel(
        name="linear-return",
        dimension=m + 1,
        vector_field=vector_field,
        guard=guard,
        reset=reset,
        guard_gradient=guard_gradient,
        state_names=("s",) + tuple(f"w{i}" for i in range(m)),
        params={"M": M.tolist()},
    )


MODEL_NAMES = ("bouncing-ball", "fragile-ball", "compass-gait")


def build_model(name, params=None):
    """Construct a shipped model from its CLI name and a flat parameter dict.

    Returns ``(model, x_guess)`` where ``x_guess`` seeds the orbit search.
    """
    params = dict(params or {})
    if name == "bouncing-ball":
        p = BouncingBallParams(**params)
        return bouncing_ball(p), np.array([0.0, p.v_star * 0.8 if math.isfinite(p.v_star) else -4.0])
    if name == "fragile-ball":
        band = params.pop("band", 1e-3)
        p = BouncingBallParams(**params)
        guess = np.array([0.0, p.v_star]) if math.isfinite(p.v_star) else np.array([0.0, -4.0])
        return fragile_ball(p, band=band), guess
    if name == "compass-gait":
        base, guess = load_compass_gait_config(params.pop("config", None))
        fields = asdict(base)
        fields.update(params)
        if "a" in params or "b" in params:
            fields.setdefault("l", fields["a"] + fields["b"])
            fields["l"] = fields["a"] + fields["b"]
        return compass_gait(CompassGaitParams(**fields)), guess
    raise ValueError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
