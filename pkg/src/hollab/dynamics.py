"""Open-system learning dynamics, closed loops with a game, and RK4 integration.

Every player carries a state ``(x_i, v_i, xi_i)``: the mixed strategy, the
washout state ``v_i`` of dimension ``k_i - 1`` and the controller state
``xi_i`` of dimension ``d_i``. A closed-loop state vector is laid out as
``[x_1..x_n, v_1..v_n, xi_1..xi_n]``.

For replicator, target-gradient and custom players the higher-order term is

    y_i   = N_i^T p_i - v_i
    v_i'  = y_i
    xi_i' = E_i xi_i + F_i y_i
    phi_i = N_i (G_i xi_i + H_i y_i)

and the base field is driven by ``p_i + phi_i``. Exponentially discounted
learning (``edl``) instead keeps a score ``s_i`` in the ``xi`` slot with
``s_i' = p_i - s_i`` and effective payoff ``p_i - s_i``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import DimensionError, DivergenceError
from .simplex import project_simplex, simplex_basis

log = logging.getLogger(__name__)

KINDS = ("replicator", "target_gradient", "edl", "custom")
DRIFT_TOL = 1e-12
DRIFT_FAIL = 1e-6
BLOWUP = 1e6


def replicator_field(x, p):
    """``diag(p - (x^T p) 1) x``."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    return x * (p - x @ p)


def target_gradient_field(x, p):
    """``Pi_Delta[x + p] - x``."""
    x = np.asarray(x, dtype=float)
    return project_simplex(x + np.asarray(p, dtype=float)) - x


def spectral_abscissa(A):
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return -np.inf
    return float(np.max(np.linalg.eigvals(A).real))


@dataclass(frozen=True)
class Controller:
    """Linear higher-order term ``(E, F, G, H)`` of order ``d``.

    Shapes: ``E`` is ``d x d``, ``F`` is ``d x m``, ``G`` is ``m x d`` and
    ``H`` is ``m x m`` with ``m = k - 1``.
    """

    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        m = H.shape[0]
        E = np.asarray(self.E, dtype=float)
        d = E.shape[0] if E.ndim == 2 else int(E.size)
        E = E.reshape(d, d)
        F = np.asarray(self.F, dtype=float).reshape(d, m) if d else np.zeros((0, m))
        G = np.asarray(self.G, dtype=float).reshape(m, d) if d else np.zeros((m, 0))
        if H.shape != (m, m):
            raise DimensionError(f"H must be square, got {H.shape}")
        for name, arr in (("E", E), ("F", F), ("G", G), ("H", H)):
            if not np.all(np.isfinite(arr)):
                raise DimensionError(f"controller matrix {name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def d(self):
        return self.E.shape[0]

    @property
    def m(self):
        return self.H.shape[0]

    @property
    def internally_stable(self):
        return self.d == 0 or spectral_abscissa(self.E) < 0

    @classmethod
    def zero(cls, k, d=0):
        m = k - 1
        return cls(np.zeros((d, d)), np.zeros((d, m)), np.zeros((m, d)), np.zeros((m, m)))

    def params(self):
        return np.concatenate([a.ravel() for a in (self.E, self.F, self.G, self.H)])

    @classmethod
    def from_params(cls, theta, m, d):
        theta = np.asarray(theta, dtype=float)
        sizes = [d * d, d * m, m * d, m * m]
        parts = np.split(theta, np.cumsum(sizes)[:-1])
        return cls(
            parts[0].reshape(d, d),
            parts[1].reshape(d, m),
            parts[2].reshape(m, d),
            parts[3].reshape(m, m),
        )

    def to_dict(self):
        return {
            "d": self.d,
            "E": self.E.ravel().tolist(),
            "F": self.F.ravel().tolist(),
            "G": self.G.ravel().tolist(),
            "H": self.H.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, data, k):
        d = int(data["d"])
        m = k - 1
        return cls(
            np.reshape(np.asarray(data.get("E", []), dtype=float), (d, d)),
            np.reshape(np.asarray(data.get("F", []), dtype=float), (d, m)),
            np.reshape(np.asarray(data.get("G", []), dtype=float), (m, d)),
            np.reshape(np.asarray(data["H"], dtype=float), (m, m)),
        )


def washout_controller(gamma, lam, k):
    """Anticipatory term ``phi = gamma*lam*(p - z)``, ``z' = lam*(p - z)`` in washout form.

    With ``xi = v - N^T z`` one gets ``E = -lam I``, ``F = (1 - lam) I`` and
    ``G = H = gamma*lam I``. No sign restriction on ``lam``.
    """
    m = k - 1
    eye = np.eye(m)
    return Controller(-lam * eye, (1.0 - lam) * eye, gamma * lam * eye, gamma * lam * eye)


def anticipatory_template(gamma, lam, k):
    """Washout-form controller of anticipatory dynamics with rate ``lam > 0``.

    ``phi`` then decays like ``exp(-lam t)`` under a constant input. An
    original anticipatory state ``z0`` corresponds to ``xi0 = v0 - N^T z0``.
    """
    if not lam > 0:
        raise ValueError(f"anticipatory rate must be positive, got {lam}")
    return washout_controller(gamma, lam, k)


@dataclass(frozen=True)
class LearningDynamics:
    """A single player's open-system learning rule.

    ``func`` is required for ``kind='custom'`` and maps ``(x, q) -> dx``
    where ``q`` is the effective payoff vector.
    """

    kind: str
    k: int
    controller: Controller | None = None
    func: Callable | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dynamics kind {self.kind!r}; expected one of {KINDS}")
        if self.k < 2:
            raise DimensionError(f"needs k >= 2, got {self.k}")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom dynamics need a field function")
        if self.controller is not None:
            if self.kind == "edl":
                raise ValueError("edl dynamics carry their own score state and take no controller")
            if self.controller.m != self.k - 1:
                raise DimensionError(
                    f"controller acts on {self.controller.m} reduced coordinates, expected {self.k - 1}"
                )

    @property
    def d(self):
        if self.kind == "edl":
            return self.k
        return self.controller.d if self.controller is not None else 0

    @property
    def ctrl(self):
        if self.kind == "edl":
            return Controller.zero(self.k, self.k)
        return self.controller if self.controller is not None else Controller.zero(self.k)

    def base(self, x, q):
        if self.kind in ("replicator", "edl"):
            return replicator_field(x, q)
        if self.kind == "target_gradient":
            return target_gradient_field(x, q)
        return np.asarray(self.func(x, q), dtype=float)

    def field(self, x, p, v=None, xi=None):
        """Open-system derivatives ``(dx, dv, dxi)`` for input ``p``."""
        N = simplex_basis(self.k)
        p = np.asarray(p, dtype=float)
        v = np.zeros(self.k - 1) if v is None else np.asarray(v, dtype=float)
        xi = np.zeros(self.d) if xi is None else np.asarray(xi, dtype=float)
        y = N.T @ p - v
        if self.kind == "edl":
            q = p - xi
            return replicator_field(x, q), y, q
        c = self.ctrl
        q = p + N @ (c.G @ xi + c.H @ y)
        return self.base(x, q), y, c.E @ xi + c.F @ y


def replicator(k, controller=None):
    return LearningDynamics("replicator", k, controller)


def target_gradient(k, controller=None):
    return LearningDynamics("target_gradient", k, controller)


def edl(k):
    return LearningDynamics("edl", k)


def higher_order_wrap(base, ctrl):
    """Attach a controller to a standard-order rule."""
    if base.controller is not None:
        raise ValueError("dynamics already carry a controller")
    return LearningDynamics(base.kind, base.k, ctrl, base.func)


@dataclass(frozen=True)
class StateLayout:
    """Index bookkeeping for ``[x, v, xi]`` state vectors."""

    actions: tuple
    orders: tuple

    @property
    def n(self):
        return len(self.actions)

    @property
    def size(self):
        return sum(self.actions) + sum(k - 1 for k in self.actions) + sum(self.orders)

    def _offsets(self):
        kx = np.cumsum((0,) + self.actions)
        kv = kx[-1] + np.cumsum((0,) + tuple(k - 1 for k in self.actions))
        kd = kv[-1] + np.cumsum((0,) + self.orders)
        return kx, kv, kd

    def x_slices(self):
        kx, _, _ = self._offsets()
        return [slice(kx[i], kx[i + 1]) for i in range(self.n)]

    def v_slices(self):
        _, kv, _ = self._offsets()
        return [slice(kv[i], kv[i + 1]) for i in range(self.n)]

    def xi_slices(self):
        _, _, kd = self._offsets()
        return [slice(kd[i], kd[i + 1]) for i in range(self.n)]

    @property
    def nx(self):
        return sum(self.actions)

    @property
    def nv(self):
        return sum(k - 1 for k in self.actions)

    def pack(self, xs, vs=None, xis=None):
        vs = [np.zeros(k - 1) for k in self.actions] if vs is None else vs
        xis = [np.zeros(d) for d in self.orders] if xis is None else xis
        parts = [np.asarray(a, dtype=float).ravel() for a in list(xs) + list(vs) + list(xis)]
        out = np.concatenate(parts) if parts else np.zeros(0)
        if out.size != self.size:
            raise DimensionError(f"state has {out.size} entries, layout expects {self.size}")
        return out

    def unpack(self, state):
        state = np.asarray(state)
        return (
            [state[s] for s in self.x_slices()],
            [state[s] for s in self.v_slices()],
            [state[s] for s in self.xi_slices()],
        )

    def column_names(self):
        names = []
        for i, k in enumerate(self.actions):
            names += [f"x_{i + 1}_{a + 1}" for a in range(k)]
        for i, k in enumerate(self.actions):
            names += [f"v_{i + 1}_{a + 1}" for a in range(k - 1)]
        for i, d in enumerate(self.orders):
            names += [f"xi_{i + 1}_{a + 1}" for a in range(d)]
        return names


class ClosedLoop:
    """Autonomous vector field of a game in feedback with per-player dynamics.

    Two-player and polymatrix games have payoffs linear in the profile, so
    the payoff map is evaluated as one stacked matrix product.
    """

    def __init__(self, game, dynamics):
        dynamics = list(dynamics)
        if len(dynamics) != game.n:
            raise DimensionError(f"got {len(dynamics)} dynamics for {game.n} players")
        for i, (dyn, k) in enumerate(zip(dynamics, game.actions)):
            if dyn.k != k:
                raise DimensionError(f"player {i + 1}: dynamics for k={dyn.k}, game has k={k}")
        self.game = game
        self.dynamics = tuple(dynamics)
        self.layout = StateLayout(tuple(game.actions), tuple(d.d for d in dynamics))
        self._xs = self.layout.x_slices()
        self._vs = self.layout.v_slices()
        self._ds = self.layout.xi_slices()
        nx, nv = self.layout.nx, self.layout.nv
        self._v0, self._d0 = nx, nx + nv
        self._N = scipy.linalg.block_diag(*[simplex_basis(k) for k in game.actions])
        ctrls = [d.ctrl for d in dynamics]
        self._E = scipy.linalg.block_diag(*[c.E for c in ctrls])
        self._F = scipy.linalg.block_diag(*[c.F for c in ctrls])
        self._G = scipy.linalg.block_diag(*[c.G for c in ctrls])
        self._H = scipy.linalg.block_diag(*[c.H for c in ctrls])
        self._seg = np.repeat(np.arange(game.n), game.actions)
        self._rep = [i for i, d in enumerate(dynamics) if d.kind == "replicator"]
        self._rep_mask = np.isin(self._seg, self._rep)
        self._other = [i for i, d in enumerate(dynamics) if d.kind in ("target_gradient", "custom")]
        self._edl = [i for i, d in enumerate(dynamics) if d.kind == "edl"]
        if game.n == 2 or game.encoding == "polymatrix":
            xs = [np.full(k, 1.0 / k) for k in game.actions]
            self._Mbig = np.block(
                [[game.jacobian_block(i, j, xs) for j in range(game.n)] for i in range(game.n)]
            )
            self._offset = game.positivity_offset
        else:
            self._Mbig = None

    def payoffs(self, xflat):
        if self._Mbig is not None:
            return self._Mbig @ xflat + self._offset
        return np.concatenate(self.game.payoffs([xflat[s] for s in self._xs]))

    def effective(self, state):
        """Stacked effective payoffs ``q`` together with ``y`` and the raw payoffs."""
        x = state[: self._v0]
        v = state[self._v0 : self._d0]
        xi = state[self._d0 :]
        P = self.payoffs(x)
        y = self._N.T @ P - v
        q = P + self._N @ (self._G @ xi + self._H @ y)
        return P, y, q

    def __call__(self, state, t=0.0):
        x = state[: self._v0]
        xi = state[self._d0 :]
        P, y, q = self.effective(state)
        dxi = self._E @ xi + self._F @ y
        dx = np.empty_like(x)
        for i in self._edl:
            sl, sd = self._xs[i], self._ds[i]
            q[sl] = P[sl] - state[sd]
            dxi[sd.start - self._d0 : sd.stop - self._d0] = q[sl]
        if self._rep or self._edl:
            xq = x * q
            avg = np.bincount(self._seg, weights=xq, minlength=self.game.n)
            rep = xq - x * avg[self._seg]
            dx[:] = rep
        for i in self._other:
            sl = self._xs[i]
            dx[sl] = self.dynamics[i].base(x[sl], q[sl])
        return np.concatenate([dx, y, dxi])

    def equilibrium_state(self, eq):
        """``(x*, v* = N^T P(x*), xi* = 0)``; edl scores sit at ``s* = P(x*)``."""
        xs = list(eq.profile) if hasattr(eq, "profile") else list(eq)
        x = np.concatenate(xs)
        P = self.payoffs(x)
        v = self._N.T @ P
        xi = np.zeros(self.layout.size - self._d0)
        for i in self._edl:
            sd = self._ds[i]
            xi[sd.start - self._d0 : sd.stop - self._d0] = P[self._xs[i]]
        return np.concatenate([x, v, xi])

    def payoff_gaps(self, state):
        x = state[: self._v0]
        P = self.payoffs(x)
        return np.array([P[s].max() - x[s] @ P[s] for s in self._xs])


def closed_loop(game, dynamics):
    return ClosedLoop(game, dynamics)


class OpenSystem:
    """One player's dynamics driven by an exogenous payoff signal ``p(t)``."""

    def __init__(self, dynamics, p):
        self.dynamics = dynamics
        self.layout = StateLayout((dynamics.k,), (dynamics.d,))
        self._p = p if callable(p) else (lambda t, _c=np.asarray(p, dtype=float): _c)
        self._k = dynamics.k

    def __call__(self, state, t=0.0):
        k = self._k
        x, v, xi = state[:k], state[k : 2 * k - 1], state[2 * k - 1 :]
        dx, dv, dxi = self.dynamics.field(x, self._p(t), v, xi)
        return np.concatenate([dx, dv, dxi])


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    layout: StateLayout
    gaps: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.states[-1]

    def x(self, i):
        return self.states[:, self.layout.x_slices()[i]]

    def distance(self, xstar):
        xstar = np.concatenate(list(xstar))
        return np.linalg.norm(self.states[:, : self.layout.nx] - xstar, axis=1)


def _renormalize(state, slices):
    drift = 0.0
    for s in slices:
        x = state[s]
        dev = max(abs(x.sum() - 1.0), -min(x.min(), 0.0))
        drift = max(drift, dev)
        if dev > DRIFT_TOL:
            x = np.maximum(x, 0.0)
            state[s] = x / x.sum()
    return drift


def integrate(system, state0, dt, T, method="rk4", renormalize=True, record_every=1):
    """Fixed-step RK4 from ``state0`` over ``[0, T]``.

    After every step each strategy block whose sum or sign drifts by more
    than 1e-12 is clipped and rescaled onto the simplex; the largest
    pre-correction drift is kept in ``meta['max_drift']``.

    Raises
    ------
    DivergenceError
        On a non-finite state, a state norm above 1e6, or a drift above
        1e-6 (the step is too large for the local dynamics); carries the
        last good state and its time.
    """
    if method != "rk4":
        raise ValueError(f"unsupported method {method!r}")
    if not dt > 0 or not T >= 0:
        raise ValueError("need dt > 0 and T >= 0")
    y = np.array(state0, dtype=float)
    layout = system.layout
    if y.shape != (layout.size,):
        raise DimensionError(f"state has shape {y.shape}, layout expects ({layout.size},)")
    slices = layout.x_slices() if renormalize else []
    steps = int(round(T / dt))
    rec = max(1, int(record_every))
    nrec = steps // rec + 1 + (1 if steps % rec else 0)
    ts = np.empty(nrec)
    out = np.empty((nrec, y.size))
    ts[0], out[0] = 0.0, y
    j = 1
    max_drift = 0.0
    renorms = 0
    f = system
    h2 = 0.5 * dt
    for n in range(1, steps + 1):
        t = (n - 1) * dt
        k1 = f(y, t)
        k2 = f(y + h2 * k1, t + h2)
        k3 = f(y + h2 * k2, t + h2)
        k4 = f(y + dt * k3, t + dt)
        yn = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(yn)) or np.abs(yn).max() > BLOWUP:
            raise DivergenceError(f"integration diverged at t={n * dt:.6g}", n * dt - dt, y.copy())
        d = _renormalize(yn, slices)
        if d > DRIFT_FAIL:
            raise DivergenceError(
                f"strategy left the simplex by {d:.3g} at t={n * dt:.6g}; reduce dt",
                n * dt - dt,
                y.copy(),
            )
        if d > DRIFT_TOL:
            renorms += 1
        max_drift = max(max_drift, d)
        y = yn
        if n % rec == 0 or n == steps:
            ts[j], out[j] = n * dt, y
            j += 1
    if renorms:
        log.debug("renormalized strategies on %d of %d steps (max drift %.3e)", renorms, steps, max_drift)
    gaps = None
    if hasattr(system, "payoff_gaps"):
        gaps = np.array([system.payoff_gaps(s) for s in out[:j]])
    meta = {"integrator": "rk4", "dt": dt, "T": T, "max_drift": max_drift, "renormalizations": renorms}
    return Trajectory(ts[:j], out[:j], layout, gaps, meta)


@dataclass
class ABRResult:
    t: np.ndarray
    gap: np.ndarray
    asymptotic_gap: float
    x_final: np.ndarray
    diverged: bool
    trajectory: Trajectory | None = None


def abr_probe(dynamics, p_bar, x0, z0=None, T=100.0, dt=1e-2, record_every=1):
    """Drive one player with a constant payoff ``p_bar``.

    Returns ``g(t) = max(p_bar) - x(t)^T p_bar`` and its average over the
    last 10% of the horizon. When the auxiliary states blow up the run
    stops early, ``diverged`` is set and the tail is taken over what was
    integrated.
    """
    p_bar = np.asarray(p_bar, dtype=float)
    sys = OpenSystem(dynamics, p_bar)
    k, d = dynamics.k, dynamics.d
    if z0 is None:
        z0 = np.zeros(k - 1 + d)
    state0 = np.concatenate([np.asarray(x0, dtype=float), np.asarray(z0, dtype=float)])
    diverged = False
    try:
        traj = integrate(sys, state0, dt, T, record_every=record_every)
        t, states = traj.t, traj.states
    except DivergenceError as err:
        diverged = True
        # Re-run up to the last finite time to keep the partial record.
        t_stop = max(err.t, dt)
        traj = integrate(sys, state0, dt, t_stop, record_every=record_every)
        t, states = traj.t, traj.states
    xs = states[:, :k]
    gap = p_bar.max() - xs @ p_bar
    tail = t >= 0.9 * t[-1]
    return ABRResult(t, gap, float(gap[tail].mean()), xs[-1].copy(), diverged, traj)
