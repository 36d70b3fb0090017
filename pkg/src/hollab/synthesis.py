"""Numerical search for uncoupled stabilizing controllers, plus verification.

Controllers are searched over block-diagonal parameters by multi-start
Nelder-Mead on the closed-loop spectral abscissa. Anticipatory templates on
a ``(gamma, lambda)`` grid supply warm starts; seeded Gaussian draws supply
the rest.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .dynamics import (
    Controller,
    LearningDynamics,
    closed_loop,
    integrate,
    spectral_abscissa,
)
from .errors import AnalysisError, DimensionError, DivergenceError, EquilibriumError
from .game import find_completely_mixed_ne, perturb_game
from .linear import decentralized_stabilizability, finite_diff_linearize, linearize_plant, strong_stabilizability

log = logging.getLogger(__name__)

GAMMA_GRID = tuple(np.logspace(-1, 2, 13))
LAMBDA_GRID = tuple(np.logspace(-1, 2, 13))


@dataclass(frozen=True)
class SynthesisConfig:
    """Search settings.

    ``orders`` defaults to ``k_i - 1`` per player. ``target`` is the depth
    the search aims for once the margin is met; below it only the
    parameter-norm tie-breaker acts. ``jitter`` is the standard deviation,
    in log space, of the seeded perturbation applied to each template start.
    """

    orders: tuple | None = None
    margin: float = 0.01
    budget: int = 20000
    starts: int = 8
    template_starts: int = 3
    round_size: int = 4
    seed: int = 0
    template: str = "free"
    target: float = 0.25
    reg: float = 1e-3
    init_scale: float = 1.0
    jitter: float = 0.1
    strong_penalty: float = 10.0
    jobs: int = 1

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError("stability margin must be positive")
        if self.orders is not None and any(int(d) < 0 for d in self.orders):
            raise ValueError("controller orders must be non-negative")
        if self.template not in ("free", "anticipatory"):
            raise ValueError(f"unknown template restriction {self.template!r}")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")
        if self.budget < 1 or self.starts < 1:
            raise ValueError("budget and starts must be positive")


@dataclass(frozen=True)
class SynthesisResult:
    controllers: tuple
    abscissa: float
    internally_stable: tuple
    evaluations: int
    success: bool
    reason: str = ""
    margin: float = 0.01
    start: object = None

    def to_dict(self):
        return {
            "success": self.success,
            "reason": self.reason,
            "abscissa": self.abscissa,
            "margin": self.margin,
            "internally_stable": list(self.internally_stable),
            "evaluations": self.evaluations,
            "start": self.start,
            "controllers": {str(i + 1): c.to_dict() for i, c in enumerate(self.controllers)},
        }


def assemble_closed_loop_matrix(plant, controllers):
    """``[[A + B H C, B G], [F C, E]]`` with block-diagonal controller matrices."""
    controllers = list(controllers)
    if len(controllers) != plant.n:
        raise DimensionError(f"got {len(controllers)} controllers for {plant.n} players")
    for i, (c, m) in enumerate(zip(controllers, plant.sizes)):
        if c.m != m:
            raise DimensionError(f"player {i + 1}: controller acts on {c.m} coordinates, plant has {m}")
    E = scipy.linalg.block_diag(*[c.E for c in controllers])
    F = scipy.linalg.block_diag(*[c.F for c in controllers])
    G = scipy.linalg.block_diag(*[c.G for c in controllers])
    H = scipy.linalg.block_diag(*[c.H for c in controllers])
    B, C = plant.B, plant.C
    D = E.shape[0]
    E = E.reshape(D, D)
    F = F.reshape(D, C.shape[0])
    G = G.reshape(B.shape[1], D)
    return np.block([[plant.A + B @ H @ C, B @ G], [F @ C, E]])


def _rect_eye(r, c):
    return np.eye(r, c)


def template_controller(gamma, lam, m, d):
    """Anticipatory template generalised to order ``d`` via rectangular identities."""
    return Controller(
        -lam * np.eye(d),
        (1.0 - lam) * _rect_eye(d, m),
        gamma * lam * _rect_eye(m, d),
        gamma * lam * np.eye(m),
    )


class _Problem:
    """Fast parameter-to-matrix map for one plant and one order choice."""

    def __init__(self, plant, orders, strong, cfg):
        self.plant = plant
        self.orders = tuple(int(d) for d in orders)
        self.sizes = plant.sizes
        self.strong = strong
        self.cfg = cfg
        self.npar = sum(d * d + 2 * d * m + m * m for d, m in zip(self.orders, self.sizes))
        ell, D = plant.ell, sum(self.orders)
        self.ell, self.D = ell, D
        self.B, self.C, self.A = plant.B, plant.C, plant.A
        self.mo = np.cumsum((0,) + self.sizes)
        self.do = np.cumsum((0,) + self.orders)

    def controllers(self, theta):
        out = []
        pos = 0
        for d, m in zip(self.orders, self.sizes):
            n = d * d + 2 * d * m + m * m
            c = Controller.from_params(theta[pos : pos + n], m, d)
            pos += n
            if self.strong and d:
                c = _stabilize_E(c, self.cfg.margin)
            out.append(c)
        return out

    def shift(self, theta):
        # Total eigenvalue shift the strong projection had to apply.
        if not self.strong:
            return 0.0
        total = 0.0
        pos = 0
        for d, m in zip(self.orders, self.sizes):
            n = d * d + 2 * d * m + m * m
            if d:
                E = theta[pos : pos + d * d].reshape(d, d)
                total += max(0.0, spectral_abscissa(E) + 2 * self.cfg.margin)
            pos += n
        return total

    def matrix(self, theta):
        return assemble_closed_loop_matrix(self.plant, self.controllers(theta))

    def abscissa(self, theta):
        return spectral_abscissa(self.matrix(theta))

    def objective(self, theta):
        a = self.abscissa(theta)
        if not np.isfinite(a):
            return 1e6
        # Bounded, increasing in ||theta||: breaks ties without moving the optimum.
        sq = float(theta @ theta)
        val = max(a, -self.cfg.target) + self.cfg.reg * sq / (sq + self.npar)
        if self.strong:
            val += self.cfg.strong_penalty * self.shift(theta)
        return val

    def theta_from(self, controllers):
        return np.concatenate([c.params() for c in controllers])


def _stabilize_E(c, margin):
    a = spectral_abscissa(c.E)
    s = a + 2 * margin
    if s <= 0:
        return c
    return Controller(c.E - s * np.eye(c.d), c.F, c.G, c.H)


class _Anticipatory:
    """Restricted search over one ``(log gamma, log lambda)`` pair per player."""

    def __init__(self, base):
        self.base = base
        self.npar = 2 * len(base.sizes)

    def full(self, phi):
        phi = np.clip(phi, -20.0, 20.0)
        cs = [
            template_controller(float(np.exp(phi[2 * i])), float(np.exp(phi[2 * i + 1])), m, d)
            for i, (d, m) in enumerate(zip(self.base.orders, self.base.sizes))
        ]
        return self.base.theta_from(cs)

    def objective(self, phi):
        return self.base.objective(self.full(phi))


def _run_start(args):
    fun, x0, maxfev = args
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    simplex = np.vstack([x0] + [x0 + 0.1 * max(1.0, abs(x0[j])) * np.eye(n)[j] for j in range(n)])
    res = scipy.optimize.minimize(
        fun,
        x0,
        method="Nelder-Mead",
        options={
            "maxfev": int(maxfev),
            "initial_simplex": simplex,
            "adaptive": n > 10,
            "xatol": 1e-10,
            "fatol": 1e-12,
        },
    )
    return res.x, float(res.fun), int(res.nfev)


def _search(plant, cfg, strong):
    orders = cfg.orders if cfg.orders is not None else plant.sizes
    if len(orders) != plant.n:
        raise DimensionError(f"got {len(orders)} controller orders for {plant.n} players")
    prob = _Problem(plant, orders, strong, cfg)
    tmpl = _Anticipatory(prob)
    evals = 0
    best = (np.inf, None, None)

    def consider(fval, theta, tag):
        nonlocal best
        if fval < best[0]:
            best = (fval, theta, tag)

    # Stage 1: one common anticipatory template for all players on a log grid.
    grid = []
    for g in GAMMA_GRID:
        for lam in LAMBDA_GRID:
            phi = np.tile([np.log(g), np.log(lam)], plant.n)
            grid.append((tmpl.objective(phi), g, lam, phi))
            evals += 1
    grid.sort(key=lambda r: (r[0], r[1], r[2]))
    consider(grid[0][0], tmpl.full(grid[0][3]), "grid")

    # Stage 2: per-player template refinement from the best grid points.
    # The seed jitters each start in log space so different seeds explore
    # different local optima.
    rng = np.random.default_rng(cfg.seed)
    refined = []
    n_t = min(cfg.template_starts, len(grid))
    t_budget = max(50, min(400 * plant.n, cfg.budget // (4 * max(1, n_t))))
    for r in grid[:n_t]:
        phi0 = r[3] + cfg.jitter * rng.standard_normal(r[3].size)
        x, fval, nfev = _run_start((tmpl.objective, phi0, t_budget))
        evals += nfev
        refined.append(tmpl.full(x))
        consider(fval, refined[-1], "template")

    done = lambda: prob.abscissa(best[1]) <= -cfg.target or evals >= cfg.budget
    if cfg.template == "free" and not done():
        # Stage 3: full block-diagonal parameters.
        starts = list(refined[: cfg.starts])
        while len(starts) < cfg.starts:
            starts.append(cfg.init_scale * rng.standard_normal(prob.npar))
        per = max(prob.npar + 2, (cfg.budget - evals) // len(starts))
        for lo in range(0, len(starts), cfg.round_size):
            batch = [(prob.objective, s0, min(per, max(1, cfg.budget - evals))) for s0 in starts[lo : lo + cfg.round_size]]
            if cfg.jobs > 1 and len(batch) > 1:
                with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
                    outs = list(ex.map(_run_start, batch))
            else:
                outs = [_run_start(b) for b in batch]
            for idx, (x, fval, nfev) in enumerate(outs):
                evals += nfev
                consider(fval, x, lo + idx)
            if done():
                break

    theta = best[1]
    cs = tuple(prob.controllers(theta))
    a = spectral_abscissa(assemble_closed_loop_matrix(plant, cs))
    ok = a < -cfg.margin
    if strong:
        ok = ok and all(spectral_abscissa(c.E) < -cfg.margin for c in cs if c.d)
    reason = "" if ok else "budget exhausted before reaching the stability margin"
    return SynthesisResult(
        cs,
        a,
        tuple(c.internally_stable for c in cs),
        evals,
        bool(ok),
        reason,
        cfg.margin,
        best[2],
    )


def _refusal(plant, cfg, reason):
    orders = cfg.orders if cfg.orders is not None else plant.sizes
    cs = tuple(Controller.zero(m + 1, d) for d, m in zip(orders, plant.sizes))
    return SynthesisResult(cs, spectral_abscissa(assemble_closed_loop_matrix(plant, cs)),
                           tuple(c.internally_stable for c in cs), 0, False, reason, cfg.margin)


def synthesize(plant, config=None):
    """Search for block-diagonal controllers with closed-loop abscissa below ``-margin``.

    Refuses immediately when the plant has a decentralized fixed mode.
    Deterministic for a given seed and config.
    """
    cfg = config or SynthesisConfig()
    if not decentralized_stabilizability(plant).stabilizable:
        return _refusal(plant, cfg, "decentralized fixed mode")
    return _search(plant, cfg, strong=False)


def synthesize_strong(plant, config=None):
    """As :func:`synthesize`, with every ``E_i`` kept stable.

    Each candidate ``E_i`` is shifted left until its abscissa is at most
    ``-2 * margin``; the size of the shift is penalised so the search
    prefers intrinsically stable blocks.
    """
    cfg = config or SynthesisConfig()
    if not decentralized_stabilizability(plant).stabilizable:
        return _refusal(plant, cfg, "decentralized fixed mode")
    try:
        verdict = strong_stabilizability(plant)
    except AnalysisError as err:
        return _refusal(plant, cfg, f"strong stabilizability undecided: {err}")
    if not verdict.strongly_stabilizable:
        return _refusal(plant, cfg, "not strongly stabilizable")
    return _search(plant, cfg, strong=True)


# -- nonlinear verification ----------------------------------------------------


@dataclass(frozen=True)
class VerificationResult:
    converged_fraction: float
    max_final_error: float
    final_errors: np.ndarray
    dt: float
    diverged: int = 0


def auto_dt(system, state, cap=0.05):
    """Step below the RK4 stability limit for the local spectrum."""
    J = finite_diff_linearize(system, state, reduce=False)
    rho = float(np.abs(np.linalg.eigvals(J)).max())
    return min(cap, 1.0 / rho) if rho > 0 else cap


def _ball_sample(rng, dim, radius):
    u = rng.standard_normal(dim)
    u /= np.linalg.norm(u)
    return radius * rng.uniform() ** (1.0 / dim) * u


def verify_nonlinear(game, eq, dynamics, ball_radius=0.01, samples=20, T=200.0, dt=None, seed=0, tol=1e-4):
    """Integrate the nonlinear closed loop from random states near the equilibrium.

    Initial states are uniform in the ball of radius ``ball_radius`` around
    ``(x*, v*, 0)`` in reduced coordinates ``(w, v, xi)``. A sample
    converges when ``||x(T) - x*|| < tol``.
    """
    cl = closed_loop(game, dynamics)
    s_star = cl.equilibrium_state(eq)
    if dt is None:
        dt = auto_dt(cl, s_star)
    lay = cl.layout
    Nc = eq.Nc
    xstar = eq.x_flat()
    rng = np.random.default_rng(seed)
    dim = eq.ell + (lay.size - lay.nx)
    errs = np.empty(samples)
    diverged = 0
    for s in range(samples):
        z = _ball_sample(rng, dim, ball_radius) if ball_radius > 0 else np.zeros(dim)
        state = s_star.copy()
        state[: lay.nx] += Nc @ z[: eq.ell]
        state[lay.nx :] += z[eq.ell :]
        try:
            traj = integrate(cl, state, dt, T, record_every=max(1, int(round(T / dt))))
            errs[s] = np.linalg.norm(traj.final[: lay.nx] - xstar)
        except DivergenceError:
            errs[s] = np.inf
            diverged += 1
    frac = float(np.mean(errs < tol)) if samples else float("nan")
    return VerificationResult(frac, float(errs.max()) if samples else float("nan"), errs, dt, diverged)


# -- robustness ------------------------------------------------------------------


@dataclass(frozen=True)
class RobustnessRow:
    delta: float
    stable: int
    unstable: int
    indeterminate: int
    max_abscissa: float

    @property
    def samples(self):
        return self.stable + self.unstable + self.indeterminate

    @property
    def stable_fraction(self):
        det = self.stable + self.unstable
        return self.stable / det if det else float("nan")

    def to_dict(self):
        return {
            "delta": self.delta,
            "stable_fraction": self.stable_fraction,
            "stable": self.stable,
            "unstable": self.unstable,
            "indeterminate": self.indeterminate,
            "max_abscissa": self.max_abscissa,
        }


def _robust_sample(args):
    game, x0, controllers, family, delta, seq, newton_tol = args
    rng = np.random.default_rng(seq)
    g = perturb_game(game, delta, rng) if delta > 0 else game
    try:
        eq = find_completely_mixed_ne(g, x0, tol=newton_tol)
    except EquilibriumError:
        return None
    if eq.residual >= 1e-8:
        return None
    plant = linearize_plant(g, eq, family)
    return spectral_abscissa(assemble_closed_loop_matrix(plant, controllers))


def robustness_sweep(game, eq, controllers, delta_list, samples_per_delta=20, seed=0,
                     family="replicator", jobs=1, newton_tol=1e-10):
    """Fraction of perturbed games still stabilized by the same controllers.

    Each utility entry moves by an independent uniform draw in
    ``(-delta, delta)``; the perturbed equilibrium is re-found by Newton
    from the nominal one. Samples where Newton fails are counted as
    indeterminate and excluded from the fraction.
    """
    controllers = tuple(controllers)
    root = np.random.SeedSequence(seed)
    rows = []
    for di, seq in enumerate(root.spawn(len(delta_list))):
        delta = float(delta_list[di])
        tasks = [
            (game, eq.profile, controllers, family, delta, s, newton_tol)
            for s in seq.spawn(samples_per_delta)
        ]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                outs = list(ex.map(_robust_sample, tasks))
        else:
            outs = [_robust_sample(t) for t in tasks]
        vals = [a for a in outs if a is not None]
        rows.append(
            RobustnessRow(
                delta,
                sum(1 for a in vals if a < 0),
                sum(1 for a in vals if a >= 0),
                sum(1 for a in outs if a is None),
                max(vals) if vals else float("nan"),
            )
        )
    return rows
