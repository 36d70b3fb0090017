"""Stochastic bandit learning: single steps, compiled long runs and Monte Carlo.

Every player observes only its own realised utility. Strategies are
projected onto the truncated simplex ``{s : s >= eps, sum(s) = 1}``, an
action is drawn from the projection and the importance-weighted estimate
``(r / sigma_a) e_a`` of the payoff vector feeds the washout controller.

The step coefficient at counter ``t`` is ``delta_i / (t + 1)``. The counter
starts at ``t0``; a large ``t0`` with a proportionally large ``delta_i``
keeps the first steps inside the positivity bound while the schedule still
sums to infinity.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .dynamics import Controller
from .errors import ConfigError
from .simplex import project_simplex, simplex_basis

log = logging.getLogger(__name__)

VARIANTS = ("standard", "higher", "modified")
BETA_MARGIN = 0.1
DELTA_FRACTION = 0.9


@dataclass
class BanditConfig:
    """User-facing knobs of a bandit run.

    Parameters
    ----------
    controllers : sequence of Controller or None
        One per player; ``None`` means no higher-order term.
    variant : {"standard", "higher", "modified"}
    epsilon : float
        Exploration floor; ``epsilon * k_i <= 1`` is required.
    delta : sequence of float or None
        Per-player step constants. ``None`` picks ``0.9`` of the largest
        value that keeps every iterate strictly inside the simplex.
    t0 : int
        Initial value of the step counter.
    beta : sequence of float or None
        Damping caps for the modified variant; ``None`` picks the smallest
        power of two making ``E + E^T - 2 beta I`` stable, plus 0.1.
    steps : int
        Number of iterations per run.
    radius : float
        A run counts as converged when the sup-norm distance between the
        played strategy and the target is below ``radius``.
    snapshots : int
        Number of geometrically spaced recorded states.
    window : int
        Window length for action counts and realised payoffs.
    """

    controllers: tuple | list | None = None
    variant: str = "higher"
    epsilon: float = 0.01
    delta: tuple | list | None = None
    t0: int = 0
    beta: tuple | list | None = None
    steps: int = 100_000
    radius: float = 0.1
    snapshots: int = 60
    window: int = 10_000
    seed: int = 0


@dataclass(frozen=True)
class PlayerBounds:
    """A priori bounds for one player; all norms are Euclidean."""

    y_max: float
    xi_max: float
    phi_max: float
    delta_bar: float
    beta: float
    L: float


@dataclass(frozen=True)
class BanditSetup:
    """A configuration resolved against a game and an initial state."""

    game: object
    variant: str
    epsilon: float
    delta: np.ndarray
    t0: int
    controllers: tuple
    modified: np.ndarray
    bounds: tuple
    utilities: tuple
    steps: int
    radius: float
    snapshots: int
    window: int
    seed: int

    @property
    def beta(self):
        return np.array([b.beta for b in self.bounds])

    @property
    def L(self):
        return np.array([b.L for b in self.bounds])

    @property
    def delta_bar(self):
        return np.array([b.delta_bar for b in self.bounds])


@dataclass
class BanditState:
    """Per-player strategy weights ``x``, washout memory ``v``, controller state ``xi``."""

    x: list
    v: list
    xi: list
    t: int

    def copy(self):
        return BanditState([a.copy() for a in self.x], [a.copy() for a in self.v],
                           [a.copy() for a in self.xi], self.t)

    def flat(self):
        return np.concatenate(self.x + self.v + self.xi)


@dataclass(frozen=True)
class BanditStreams:
    """Independent generators for action draws and controller noise."""

    actions: np.random.Generator
    noise: np.random.Generator

    @classmethod
    def from_seed(cls, seed):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        a, b = ss.spawn(2)
        return cls(np.random.default_rng(a), np.random.default_rng(b))


def _streams(rng):
    if isinstance(rng, BanditStreams):
        return rng
    if isinstance(rng, np.random.Generator):
        return BanditStreams(rng, rng)
    return BanditStreams.from_seed(rng)


# -- bounds -------------------------------------------------------------
def default_beta(E):
    """Smallest power of two ``b`` with ``E + E^T - 2 b I`` stable, plus a margin."""
    E = np.asarray(E, dtype=float)
    if E.size == 0:
        return BETA_MARGIN
    top = float(np.linalg.eigvalsh(E + E.T).max())
    b = 2.0 ** -10
    while top - 2.0 * b >= 0.0:
        b *= 2.0
    return b + BETA_MARGIN


def _row_norm(N):
    return float(np.linalg.norm(N, axis=1).max())


def _player_bounds(ctrl, k, r_max, eps, v0, xi0, modified, beta):
    """Step bound that keeps ``x`` strictly positive, with the supporting state bounds.

    ``y = N^T P_hat - v`` is bounded because ``v`` is a convex combination
    of past estimates whenever the step coefficient is at most one. The
    controller state is bounded by a Lyapunov argument (stable ``E``) or by
    the damping cap (modified variant). Positivity of ``x`` then needs
    ``kappa (r_max + 2 phi_max) < 1``.
    """
    N = simplex_basis(k)
    nrow = _row_norm(N)
    est = r_max / eps * nrow
    y_max = est + max(float(np.linalg.norm(v0)), est)
    d = ctrl.d
    if d == 0:
        xi_max = 0.0
        kap_cap = 1.0
        L = 0.0
    else:
        U = float(np.linalg.norm(ctrl.F, 2)) * y_max
        e = float(np.linalg.norm(ctrl.E, 2))
        if modified:
            c = e * math.sqrt(beta) + beta * math.sqrt(beta)
            L = c + U + math.sqrt(beta)
            W = L * math.sqrt(d)
            Eb = ctrl.E - beta * np.eye(d)
            mu = -float(np.linalg.eigvalsh(0.5 * (Eb + Eb.T)).max())
            eb = float(np.linalg.norm(Eb, 2))
            kap_cap = min(1.0, mu / (2.0 * eb**2))
            R0 = max((U + W) * (1.0 + math.sqrt(1.0 + mu**2 / eb**2)) / mu, math.sqrt(beta))
            R1 = R0 * (1.0 + kap_cap * (e + beta)) + kap_cap * (U + W)
            xi_max = max(float(np.linalg.norm(xi0)), R1)
        else:
            L = 0.0
            P = scipy.linalg.solve_continuous_lyapunov(ctrl.E.T, -np.eye(d))
            ev = np.linalg.eigvalsh(0.5 * (P + P.T))
            pmin, pmax = float(ev[0]), float(ev[-1])
            # A stable E is nonzero, so e > 0.
            kap_cap = min(1.0, 1.0 / (4.0 * pmax * e**2))
            R0 = 2.0 * pmax * U + math.sqrt(4.0 * pmax**2 * U**2 + (U / e) ** 2)
            R1 = R0 * (1.0 + kap_cap * e) + kap_cap * U
            V = max(float(xi0 @ P @ xi0), pmax * R1**2)
            xi_max = math.sqrt(V / pmin)
    G = float(np.linalg.norm(ctrl.G, 2)) if d else 0.0
    phi_max = nrow * (G * xi_max + float(np.linalg.norm(ctrl.H, 2)) * y_max)
    delta_bar = min(kap_cap, 1.0 / (r_max + 2.0 * phi_max))
    return PlayerBounds(y_max, xi_max, phi_max, delta_bar, beta if modified else 0.0, L)


def prepare(game, config, state0):
    """Validate ``config`` against ``game`` and resolve every default.

    Raises
    ------
    ConfigError
        On non-positive utilities, an infeasible exploration floor, a step
        constant above the positivity bound, an unstable controller outside
        the modified variant, or a damping cap that does not stabilise.
    """
    if config.variant not in VARIANTS:
        raise ConfigError(f"unknown variant {config.variant!r}; choose from {VARIANTS}")
    n = game.n
    umin = game.min_utility()
    if umin <= 0.0:
        raise ConfigError(
            f"bandit learning needs strictly positive utilities; minimum is {umin:g}. "
            f"Set a positivity_offset above {-umin:g}."
        )
    eps = float(config.epsilon)
    if eps < 0 or any(eps * k > 1.0 for k in game.actions):
        raise ConfigError(f"epsilon={eps} must satisfy 0 <= epsilon * k_i <= 1")
    if config.t0 < 0:
        raise ConfigError("t0 must be non-negative")
    ctrls = config.controllers
    if ctrls is None or config.variant == "standard":
        ctrls = [None] * n
    if len(ctrls) != n:
        raise ConfigError(f"expected {n} controllers, got {len(ctrls)}")
    ctrls = tuple(Controller.zero(k) if c is None else c for c, k in zip(ctrls, game.actions))
    for i, (c, k) in enumerate(zip(ctrls, game.actions)):
        if c.m != k - 1:
            raise ConfigError(f"player {i + 1}: controller has m={c.m}, expected {k - 1}")
    modified = np.array([c.d > 0 and not c.internally_stable for c in ctrls])
    if config.variant == "higher" and modified.any():
        bad = [i + 1 for i in np.flatnonzero(modified)]
        raise ConfigError(f"controllers of players {bad} are not internally stable; "
                          "use the modified variant")
    if config.variant != "modified":
        modified[:] = False
    betas = [0.0] * n
    for i in np.flatnonzero(modified):
        E = ctrls[i].E
        b = default_beta(E) if config.beta is None else float(config.beta[i])
        if not np.all(np.linalg.eigvalsh(E + E.T - 2.0 * b * np.eye(E.shape[0])) < 0):
            raise ConfigError(f"player {i + 1}: beta={b} does not make E + E^T - 2 beta I stable")
        betas[i] = b
    bounds = []
    for i, (c, k) in enumerate(zip(ctrls, game.actions)):
        r_max = game.max_utility(i)
        if config.variant == "standard":
            bounds.append(PlayerBounds(0.0, 0.0, 0.0, 1.0 / r_max, 0.0, 0.0))
        else:
            bounds.append(_player_bounds(c, k, r_max, max(eps, 1e-300), state0.v[i],
                                         state0.xi[i], bool(modified[i]), betas[i]))
    scale = config.t0 + 1.0
    if config.delta is None:
        delta = np.array([DELTA_FRACTION * b.delta_bar * scale for b in bounds])
    else:
        delta = np.asarray(config.delta, dtype=float).reshape(-1)
        if delta.shape != (n,):
            raise ConfigError(f"expected {n} step constants, got {delta.size}")
        for i, (dl, b) in enumerate(zip(delta, bounds)):
            if dl < 0:
                raise ConfigError(f"player {i + 1}: delta must be non-negative")
            lim = b.delta_bar * scale
            if dl > lim or (config.variant != "standard" and dl >= lim):
                raise ConfigError(
                    f"player {i + 1}: delta={dl:g} exceeds the positivity bound {lim:g} "
                    f"(t0={config.t0})"
                )
    return BanditSetup(
        game=game,
        variant=config.variant,
        epsilon=eps,
        delta=delta,
        t0=int(config.t0),
        controllers=ctrls,
        modified=modified,
        bounds=tuple(bounds),
        utilities=tuple(game.tensor(i) for i in range(n)),
        steps=int(config.steps),
        radius=float(config.radius),
        snapshots=int(config.snapshots),
        window=int(config.window),
        seed=config.seed,
    )


def initial_state(game, x0, controllers=None, t0=0, v0=None, xi0=None):
    """State with strategy ``x0``, zero memories unless given, and counter ``t0``."""
    xs = [np.array(x, dtype=float) for x in x0]
    if controllers is None:
        controllers = [None] * game.n
    ds = [0 if c is None else c.d for c in controllers]
    vs = [np.zeros(k - 1) for k in game.actions] if v0 is None else [np.array(a, float) for a in v0]
    xis = [np.zeros(d) for d in ds] if xi0 is None else [np.array(a, float) for a in xi0]
    return BanditState(xs, vs, xis, int(t0))


# -- single steps -------------------------------------------------------
def sample_action(sigma, rng):
    """Inverse-CDF draw of an action index from the distribution ``sigma``."""
    u = rng.random() * float(np.sum(sigma))
    c = 0.0
    for a, s in enumerate(sigma.tolist()):
        c += s
        if u < c:
            return a
    return len(sigma) - 1


def payoff_estimate(r, a, sigma):
    """Importance-weighted payoff vector ``(r / sigma_a) e_a``."""
    if not sigma[a] > 0:
        raise ValueError(f"action {a} has zero probability")
    out = np.zeros(len(sigma))
    out[a] = r / sigma[a]
    return out


def _setup(game, config, state):
    if isinstance(config, BanditSetup):
        return config
    return prepare(game, config, state)


def _draw(state, setup, streams):
    sig = [project_simplex(x, setup.epsilon) for x in state.x]
    acts = tuple(sample_action(s, streams.actions) for s in sig)
    rs = [float(u[acts]) for u in setup.utilities]
    return sig, acts, rs


def step_standard(state, game, config, rng):
    """One iteration of bandit replicator learning without a higher-order term."""
    setup = _setup(game, config, state)
    streams = _streams(rng)
    sig, acts, rs = _draw(state, setup, streams)
    kap = setup.delta / (state.t + 1.0)
    xs = []
    for i, x in enumerate(state.x):
        a = acts[i]
        x = x - kap[i] * rs[i] * x
        x[a] += kap[i] * rs[i]
        xs.append(x / x.sum())
    return BanditState(xs, [a.copy() for a in state.v], [a.copy() for a in state.xi], state.t + 1)


def _step_controlled(state, setup, streams, noisy):
    sig, acts, rs = _draw(state, setup, streams)
    if noisy:
        dtot = sum(c.d for c in setup.controllers)
        omega = streams.noise.random(dtot)
    kap = setup.delta / (state.t + 1.0)
    xs, vs, xis = [], [], []
    off = 0
    for i, (x, v, xi) in enumerate(zip(state.x, state.v, state.xi)):
        c = setup.controllers[i]
        k = kap[i]
        N = simplex_basis(len(x))
        a = acts[i]
        y = N[a] * (rs[i] / sig[i][a]) - v
        phi = N @ (c.G @ xi + c.H @ y)
        xn = x + k * ((phi - x @ phi) * x - rs[i] * x)
        xn[a] += k * rs[i]
        xs.append(xn / xn.sum())
        dxi = c.E @ xi + c.F @ y
        if noisy and setup.modified[i]:
            damp = min(setup.bounds[i].beta, float(xi @ xi))
            dxi = dxi - damp * xi + setup.bounds[i].L * (2.0 * omega[off:off + c.d] - 1.0)
        off += c.d
        xis.append(xi + k * dxi)
        vs.append(v + k * y)
    return BanditState(xs, vs, xis, state.t + 1)


def step_higher(state, game, config, rng):
    """One iteration with the higher-order controller driven by the payoff estimate."""
    setup = _setup(game, config, state)
    return _step_controlled(state, setup, _streams(rng), False)


def step_modified(state, game, config, rng):
    """As :func:`step_higher`, with damping ``min(beta, |xi|^2) xi`` and bounded noise."""
    setup = _setup(game, config, state)
    return _step_controlled(state, setup, _streams(rng), True)


STEPS = {"standard": step_standard, "higher": step_higher, "modified": step_modified}


def mean_field(state, setup):
    """Expected increment divided by the step coefficient, at a frozen state.

    Returns the flattened ``(x, v, xi)`` drift. In the modified variant the
    damping term is included and the zero-mean noise is not.
    """
    game = setup.game
    sig = [project_simplex(x, setup.epsilon) for x in state.x]
    P = game.payoffs(sig)
    dx, dv, dxi = [], [], []
    for i, (x, v, xi) in enumerate(zip(state.x, state.v, state.xi)):
        s, p = sig[i], P[i]
        if setup.variant == "standard":
            dx.append(p * s - (s @ p) * x)
            dv.append(np.zeros_like(v))
            dxi.append(np.zeros_like(xi))
            continue
        c = setup.controllers[i]
        N = simplex_basis(len(x))
        y = N.T @ p - v
        phi = N @ (c.G @ xi + c.H @ y)
        dx.append(p * s + phi * x - (s @ p + x @ phi) * x)
        dv.append(y)
        f = c.E @ xi + c.F @ y
        if setup.modified[i]:
            f = f - min(setup.bounds[i].beta, float(xi @ xi)) * xi
        dxi.append(f)
    return np.concatenate(dx + dv + dxi)


# -- long runs ------------------------------------------------------------
@dataclass
class BanditRun:
    """Outcome of one long run.

    ``snapshots`` rows are flattened ``(x, v, xi)`` states at ``times``
    (number of completed steps). ``action_counts`` and ``payoff_trace`` are
    per window of ``setup.window`` steps; the payoff trace holds mean
    realised utilities.
    """

    times: np.ndarray
    snapshots: np.ndarray
    final: BanditState
    action_counts: np.ndarray
    payoff_trace: np.ndarray
    xi_sup: np.ndarray
    min_x: np.ndarray
    initial_distance: float
    final_distance: float
    converged: bool
    seed: object = None


def snapshot_steps(steps, count):
    """Geometrically spaced step numbers in ``[1, steps]``, always including ``steps``."""
    if steps <= 0:
        return np.zeros(0, dtype=np.int64)
    g = np.unique(np.round(np.geomspace(1, steps, max(count, 1))).astype(np.int64))
    return g


def _pad(setup, state):
    n = setup.game.n
    ks = np.array(setup.game.actions, dtype=np.int64)
    ds = np.array([c.d for c in setup.controllers], dtype=np.int64)
    kmax = int(ks.max())
    dmax = max(int(ds.max()), 1)
    mmax = kmax - 1
    x = np.zeros((n, kmax))
    v = np.zeros((n, mmax))
    xi = np.zeros((n, dmax))
    N = np.zeros((n, kmax, mmax))
    E = np.zeros((n, dmax, dmax))
    F = np.zeros((n, dmax, mmax))
    G = np.zeros((n, mmax, dmax))
    H = np.zeros((n, mmax, mmax))
    for i, c in enumerate(setup.controllers):
        k, d, m = ks[i], ds[i], ks[i] - 1
        x[i, :k] = state.x[i]
        v[i, :m] = state.v[i]
        xi[i, :d] = state.xi[i]
        N[i, :k, :m] = simplex_basis(k)
        E[i, :d, :d] = c.E
        F[i, :d, :m] = c.F
        G[i, :m, :d] = c.G
        H[i, :m, :m] = c.H
    util = np.stack([u.reshape(-1) for u in setup.utilities])
    strides = np.array([int(np.prod(ks[i + 1:])) for i in range(n)], dtype=np.int64)
    return ks, ds, x, v, xi, N, E, F, G, H, util, strides


def _unpad(ks, ds, x, v, xi, t):
    return BanditState([x[i, :k].copy() for i, k in enumerate(ks)],
                       [v[i, :k - 1].copy() for i, k in enumerate(ks)],
                       [xi[i, :d].copy() for i, d in enumerate(ds)], int(t))


def _distance(state, target, eps):
    return max(float(np.abs(project_simplex(x, eps) - np.asarray(t)).max())
               for x, t in zip(state.x, target))


CHUNK = 1 << 15


def run(setup, state0, target, seed=None, steps=None):
    """Iterate ``steps`` times with the compiled kernel.

    Parameters
    ----------
    setup : BanditSetup
    state0 : BanditState
    target : sequence of array_like
        Reference profile for the convergence test.
    seed : int, SeedSequence or None
        Defaults to ``setup.seed``. Two independent streams are spawned, one
        for action draws and one for controller noise, consumed exactly as
        the single-step functions consume them.
    """
    from . import _bandit_kernel as K

    steps = setup.steps if steps is None else int(steps)
    seed = setup.seed if seed is None else seed
    streams = BanditStreams.from_seed(seed)
    ks, ds, x, v, xi, N, E, F, G, H, util, strides = _pad(setup, state0)
    n = len(ks)
    code = {"standard": K.STANDARD, "higher": K.HIGHER, "modified": K.MODIFIED}[setup.variant]
    noisy = setup.variant == "modified"
    dtot = int(ds.sum())
    snaps_at = snapshot_steps(steps, setup.snapshots)
    snaps = np.zeros((len(snaps_at), int(ks.sum() + (ks - 1).sum() + dtot)))
    pos = np.zeros(1, dtype=np.int64)
    nwin = max(1, -(-steps // setup.window))
    counts = np.zeros((nwin, int(ks.sum())), dtype=np.int64)
    paysum = np.zeros((nwin, n))
    xi_sup = np.array([float(a @ a) for a in state0.xi])
    min_x = np.array([float(a.min()) for a in state0.x])
    beta, L = setup.beta, setup.L
    done = 0
    while done < steps:
        c = min(CHUNK, steps - done)
        ua = streams.actions.random((c, n))
        un = streams.noise.random((c, dtot)) if noisy else np.zeros((c, 1))
        K.run_chunk(code, ks, ds, setup.epsilon, setup.delta, state0.t + done, x, v, xi,
                    N, E, F, G, H, util, strides, setup.modified, beta, L,
                    ua, un, snaps_at, pos, snaps, done, setup.window, counts, paysum,
                    xi_sup, min_x)
        done += c
    final = _unpad(ks, ds, x, v, xi, state0.t + steps)
    win = np.minimum(setup.window, steps - setup.window * np.arange(nwin))[:, None]
    d0 = _distance(state0, target, setup.epsilon)
    d1 = _distance(final, target, setup.epsilon)
    return BanditRun(
        times=snaps_at,
        snapshots=snaps,
        final=final,
        action_counts=counts,
        payoff_trace=paysum / np.maximum(win, 1),
        xi_sup=np.sqrt(xi_sup),
        min_x=min_x,
        initial_distance=d0,
        final_distance=d1,
        converged=bool(d1 < setup.radius),
        seed=seed,
    )


def run_python(setup, state0, seed=None, steps=None):
    """Reference loop over the single-step functions; returns the final state."""
    steps = setup.steps if steps is None else int(steps)
    streams = BanditStreams.from_seed(setup.seed if seed is None else seed)
    step = STEPS[setup.variant]
    s = state0
    for _ in range(steps):
        s = step(s, setup.game, setup, streams)
    return s


# -- Monte Carlo --------------------------------------------------------
def wilson_interval(successes, trials, z=1.959963984540054):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return (0.0, 1.0)
    p = successes / trials
    den = 1.0 + z * z / trials
    mid = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    return (max(0.0, mid - half), min(1.0, mid + half))


@dataclass
class MonteCarloResult:
    runs: list
    converged_fraction: float
    ci: tuple
    median_initial_distance: float
    median_final_distance: float
    xi_sup: np.ndarray = field(default=None)

    def summary(self):
        return {
            "runs": len(self.runs),
            "converged_fraction": self.converged_fraction,
            "ci_low": self.ci[0],
            "ci_high": self.ci[1],
            "median_initial_distance": self.median_initial_distance,
            "median_final_distance": self.median_final_distance,
            "xi_sup": [float(a) for a in self.xi_sup],
        }


def _tangent_start(target, radius, rng):
    xs = []
    for t in target:
        t = np.asarray(t, dtype=float)
        N = simplex_basis(len(t))
        z = rng.standard_normal(N.shape[1])
        z *= radius * rng.random() ** (1.0 / len(z)) / np.linalg.norm(z)
        x = t + N @ z
        if x.min() <= 0:
            x = project_simplex(x, 1e-3)
        xs.append(x)
    return xs


def _one_run(args):
    setup, state0, target, seed = args
    return run(setup, state0, target, seed=seed)


def monte_carlo(setup, target, runs, x0=None, init_radius=0.2, parallelism=1):
    """Independent seeded runs and the converged fraction with a 95% Wilson interval.

    Each run gets its own child of ``SeedSequence(setup.seed)``. Without
    ``x0`` the starting strategy is drawn uniformly from a tangent ball of
    radius ``init_radius`` around ``target`` using a third child stream.
    """
    children = np.random.SeedSequence(setup.seed).spawn(runs)
    jobs = []
    for ss in children:
        run_ss, init_ss = ss.spawn(2)
        xs = x0 if x0 is not None else _tangent_start(target, init_radius,
                                                       np.random.default_rng(init_ss))
        st = initial_state(setup.game, xs, setup.controllers, setup.t0)
        jobs.append((setup, st, target, run_ss))
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as ex:
            results = list(ex.map(_one_run, jobs))
    else:
        results = [_one_run(j) for j in jobs]
    ok = sum(r.converged for r in results)
    log.info("monte carlo: %d/%d converged", ok, runs)
    return MonteCarloResult(
        runs=results,
        converged_fraction=ok / runs,
        ci=wilson_interval(ok, runs),
        median_initial_distance=float(np.median([r.initial_distance for r in results])),
        median_final_distance=float(np.median([r.final_distance for r in results])),
        xi_sup=np.max([r.xi_sup for r in results], axis=0),
    )


def with_steps(setup, steps):
    return replace(setup, steps=int(steps))
