"""Finite games, payoff vectors, Nash equilibria and the regularity test.

Utilities come in two encodings:

* ``tensor``: player ``i`` owns an array of shape ``(k_1, ..., k_n)``;
  flattened files use row-major order over ``(a_1, ..., a_n)``.
* ``polymatrix``: directed edges ``(i, j, M_ij)`` with
  ``R_i(x) = sum_j x_i^T M_ij x_j``.

Player indices are 0-based throughout the Python API.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import EquilibriumError, GameError
from .simplex import simplex_basis

PROFILE_TOL = 1e-12
RANK_TOL = 1e-8


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    matrix: np.ndarray


class Game:
    """A finite normal-form game.

    Parameters
    ----------
    actions : sequence of int
        Action counts ``k_i`` (each at least 2).
    tensors : sequence of array_like, optional
        Per-player utility arrays, either already shaped ``actions`` or flat
        in row-major order.
    edges : sequence of (i, j, matrix), optional
        Polymatrix edges; mutually exclusive with ``tensors``.
    positivity_offset : float
        Constant added to every utility. It does not change the strategic
        content of the game but lets bandit learners see positive rewards.
    """

    def __init__(self, actions, tensors=None, edges=None, positivity_offset=0.0):
        actions = tuple(int(k) for k in actions)
        if len(actions) < 1:
            raise GameError("a game needs at least one player")
        for i, k in enumerate(actions):
            if k < 2:
                raise GameError(f"needs at least 2 actions, got {k}", player=i)
        if (tensors is None) == (edges is None):
            raise GameError("give exactly one of tensors / edges")
        self.actions = actions
        self.n = len(actions)
        self.positivity_offset = float(positivity_offset)
        self._tensors = None
        self._edges = None
        if tensors is not None:
            self.encoding = "tensor"
            if len(tensors) != self.n:
                raise GameError(f"expected {self.n} utility tensors, got {len(tensors)}")
            size = int(np.prod(actions))
            ts = []
            for i, t in enumerate(tensors):
                t = np.array(t, dtype=float)
                if t.shape != actions:
                    if t.size != size:
                        raise GameError(
                            f"utility tensor has {t.size} entries, expected {size}", player=i
                        )
                    t = t.reshape(actions)
                if not np.all(np.isfinite(t)):
                    raise GameError("non-finite utility", player=i)
                t.setflags(write=False)
                ts.append(t)
            self._tensors = tuple(ts)
        else:
            self.encoding = "polymatrix"
            es = []
            for e in edges:
                i, j, m = (e.i, e.j, e.matrix) if isinstance(e, Edge) else e
                i, j = int(i), int(j)
                if not (0 <= i < self.n and 0 <= j < self.n) or i == j:
                    raise GameError(f"bad edge ({i}, {j})")
                m = np.array(m, dtype=float)
                if m.shape != (actions[i], actions[j]):
                    raise GameError(
                        f"edge to player {j + 1} has shape {m.shape}, "
                        f"expected {(actions[i], actions[j])}",
                        player=i,
                    )
                m.setflags(write=False)
                es.append(Edge(i, j, m))
            self._edges = tuple(es)
            self._out_edges = [[(e.j, e.matrix) for e in es if e.i == i] for i in range(self.n)]

    # -- construction helpers -------------------------------------------
    @classmethod
    def bimatrix(cls, A, B, **kw):
        """Two-player game from row payoffs ``A`` and column payoffs ``B`` (both ``k1 x k2``)."""
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        return cls(A.shape, tensors=[A, B], **kw)

    @property
    def edges(self):
        return self._edges

    @property
    def ell(self):
        return sum(k - 1 for k in self.actions)

    def tensor(self, i):
        """Utility array of player ``i`` (materialised for polymatrix games)."""
        if self._tensors is not None:
            return self._tensors[i] + self.positivity_offset
        out = np.zeros(self.actions)
        for j, m in self._out_edges[i]:
            shape = [1] * self.n
            shape[i], shape[j] = m.shape
            out = out + m.reshape(shape) if i < j else out + m.T.reshape(shape)
        return out + self.positivity_offset

    def to_tensor(self):
        """The same game in tensor encoding (offset folded in)."""
        return Game(self.actions, tensors=[self.tensor(i) for i in range(self.n)])

    def with_offset(self, offset):
        if self._tensors is not None:
            return Game(self.actions, tensors=self._tensors, positivity_offset=offset)
        return Game(self.actions, edges=self._edges, positivity_offset=offset)

    def utility(self, i, a):
        """Pure-profile utility ``r_i(a)``."""
        a = tuple(int(x) for x in a)
        if self._tensors is not None:
            return float(self._tensors[i][a]) + self.positivity_offset
        return float(sum(m[a[i], a[j]] for j, m in self._out_edges[i])) + self.positivity_offset

    def min_utility(self):
        return min(float(self.tensor(i).min()) for i in range(self.n))

    def max_utility(self, i):
        return float(self.tensor(i).max())

    # -- payoffs ----------------------------------------------------------
    def _payoff(self, i, xs):
        # Unvalidated; xs is a full profile (entry i is ignored).
        if self._edges is not None:
            p = np.full(self.actions[i], self.positivity_offset)
            for j, m in self._out_edges[i]:
                p = p + m @ xs[j]
            return p
        t = self._tensors[i]
        for j in range(self.n - 1, -1, -1):
            if j != i:
                t = np.tensordot(t, xs[j], axes=([j], [0]))
        return t + self.positivity_offset

    def payoffs(self, xs):
        """Payoff vectors of all players at full profile ``xs`` (no validation)."""
        if self._tensors is not None and self.n == 2:
            t0, t1 = self._tensors
            c = self.positivity_offset
            return [t0 @ xs[1] + c, xs[0] @ t1 + c]
        return [self._payoff(i, xs) for i in range(self.n)]

    def jacobian_block(self, i, j, xs):
        """``d P_i / d x_j`` at ``xs``; zero when ``i == j``."""
        if i == j:
            return np.zeros((self.actions[i], self.actions[i]))
        if self._edges is not None:
            out = np.zeros((self.actions[i], self.actions[j]))
            for jj, m in self._out_edges[i]:
                if jj == j:
                    out = out + m
            return out
        t = self._tensors[i]
        for m in range(self.n - 1, -1, -1):
            if m not in (i, j):
                t = np.tensordot(t, xs[m], axes=([m], [0]))
        return t if i < j else t.T

    def payoff_vector(self, i, x_minus_i):
        """Payoff vector ``P_i(x_{-i})``; ``x_minus_i`` lists the opponents in player order."""
        i = self._check_player(i)
        x_minus_i = list(x_minus_i)
        if len(x_minus_i) != self.n - 1:
            raise GameError(f"expected {self.n - 1} opponent strategies, got {len(x_minus_i)}", player=i)
        xs = x_minus_i[:i] + [None] + x_minus_i[i:]
        for j in range(self.n):
            if j != i:
                xs[j] = _check_strategy(xs[j], self.actions[j], j)
        return self._payoff(i, xs)

    def expected_utility(self, i, x):
        i = self._check_player(i)
        xs = as_profile(self, x)
        return float(xs[i] @ self._payoff(i, xs))

    def _check_player(self, i):
        i = int(i)
        if not 0 <= i < self.n:
            raise GameError(f"no player with index {i}")
        return i

    def __repr__(self):
        return f"Game(actions={self.actions}, encoding={self.encoding!r})"


def _check_strategy(x, k, player, tol=PROFILE_TOL):
    x = np.asarray(x, dtype=float)
    if x.shape != (k,):
        raise GameError(f"strategy has shape {x.shape}, expected ({k},)", player=player)
    if x.min() < -tol or abs(x.sum() - 1.0) > tol:
        raise GameError("strategy is not on the simplex", player=player)
    return x


def as_profile(game, x, tol=PROFILE_TOL):
    """Validate a mixed profile and return it as a tuple of float arrays."""
    x = list(x)
    if len(x) != game.n:
        raise GameError(f"profile has {len(x)} strategies, game has {game.n} players")
    return tuple(_check_strategy(xi, k, i, tol) for i, (xi, k) in enumerate(zip(x, game.actions)))


def payoff_vector(game, i, x_minus_i):
    return game.payoff_vector(i, x_minus_i)


def expected_utility(game, i, x):
    return game.expected_utility(i, x)


# -- equilibria -------------------------------------------------------------


@dataclass(frozen=True)
class NEVerdict:
    is_ne: bool
    is_strict: bool
    is_completely_mixed: bool
    alphas: np.ndarray | None
    gaps: np.ndarray


def verify_ne(game, x, tol=1e-9):
    """Check the Nash conditions at ``x``.

    ``gaps[i] = max_k P_ik - x_i^T P_i``. A strict equilibrium needs a unique
    best reply with margin above ``tol``; ties count as non-strict.
    """
    xs = as_profile(game, x)
    ps = game.payoffs(xs)
    gaps = np.array([p.max() - xi @ p for xi, p in zip(xs, ps)])
    is_ne = bool(np.all(gaps <= tol))
    strict = is_ne
    for xi, p in zip(xs, ps):
        srt = np.sort(p)
        if srt[-1] - srt[-2] <= tol or xi[np.argmax(p)] < 1 - tol:
            strict = False
    interior = all(xi.min() > tol for xi in xs)
    spread = max(p.max() - p.min() for p in ps)
    mixed = bool(is_ne and interior and spread <= tol)
    alphas = np.array([xi @ p for xi, p in zip(xs, ps)]) if mixed else None
    return NEVerdict(is_ne, bool(strict), mixed, alphas, gaps)


@dataclass(frozen=True)
class MixedEquilibrium:
    """A completely mixed equilibrium with its local payoff structure.

    ``blocks[i][j]`` is ``d P_i / d x_j`` at the equilibrium, ``M`` stacks
    them, and ``Mred = Nc^T M Nc`` is the reduced payoff Jacobian, where
    ``Nc`` is the block-diagonal tangent basis.
    """

    profile: tuple
    alphas: np.ndarray
    basis: tuple
    blocks: tuple
    M: np.ndarray
    Mred: np.ndarray
    regular: bool
    sigma_min: float
    residual: float
    iterations: int = 0

    @property
    def n(self):
        return len(self.profile)

    @property
    def ell(self):
        return self.Mred.shape[0]

    @property
    def Nc(self):
        return scipy.linalg.block_diag(*self.basis)

    def x_flat(self):
        return np.concatenate(self.profile)


@dataclass(frozen=True)
class Jacobians:
    blocks: tuple
    M: np.ndarray
    Mred: np.ndarray
    basis: tuple


@dataclass(frozen=True)
class Regularity:
    regular: bool
    sigma_min: float
    sigma_max: float


def stacked_basis(actions):
    basis = tuple(simplex_basis(k) for k in actions)
    return basis, scipy.linalg.block_diag(*basis)


def _jacobians(game, xs):
    basis, Nc = stacked_basis(game.actions)
    blocks = tuple(
        tuple(game.jacobian_block(i, j, xs) for j in range(game.n)) for i in range(game.n)
    )
    M = np.block([list(row) for row in blocks])
    return Jacobians(blocks, M, Nc.T @ M @ Nc, basis)


def _reduced_payoff(game, xs, basis):
    return np.concatenate([N.T @ p for N, p in zip(basis, game.payoffs(xs))])


def payoff_jacobians(game, eq, tol=1e-8):
    """Blocks ``M_ij``, stacked ``M`` and reduced ``Mred`` at a completely mixed equilibrium."""
    xs = eq.profile if isinstance(eq, MixedEquilibrium) else as_profile(game, eq)
    if not isinstance(eq, MixedEquilibrium):
        verdict = verify_ne(game, xs, tol)
        if not verdict.is_completely_mixed:
            raise GameError("profile is not a completely mixed equilibrium")
    return _jacobians(game, xs)


def check_regularity(game, eq, rank_tol=RANK_TOL):
    """Regular iff the smallest singular value of ``Mred`` exceeds ``rank_tol * sigma_max``."""
    Mred = eq.Mred if isinstance(eq, MixedEquilibrium) else payoff_jacobians(game, eq).Mred
    s = np.linalg.svd(Mred, compute_uv=False)
    smax = float(s[0]) if s.size else 0.0
    smin = float(s[-1]) if s.size else 0.0
    return Regularity(bool(smax > 0 and smin > rank_tol * smax), smin, smax)


def completely_mixed_equilibrium(game, x, tol=1e-8):
    """Wrap a user-supplied completely mixed equilibrium with its Jacobians."""
    xs = as_profile(game, x)
    verdict = verify_ne(game, xs, tol)
    if not verdict.is_completely_mixed:
        raise GameError("profile is not a completely mixed equilibrium")
    return _build_equilibrium(game, xs, 0)


def _build_equilibrium(game, xs, iterations):
    jac = _jacobians(game, xs)
    ps = game.payoffs(xs)
    alphas = np.array([xi @ p for xi, p in zip(xs, ps)])
    residual = float(np.linalg.norm(_reduced_payoff(game, xs, jac.basis)))
    s = np.linalg.svd(jac.Mred, compute_uv=False)
    regular = bool(s[0] > 0 and s[-1] > RANK_TOL * s[0])
    return MixedEquilibrium(
        profile=tuple(np.array(x) for x in xs),
        alphas=alphas,
        basis=jac.basis,
        blocks=jac.blocks,
        M=jac.M,
        Mred=jac.Mred,
        regular=regular,
        sigma_min=float(s[-1]),
        residual=residual,
        iterations=iterations,
    )


def find_completely_mixed_ne(game, x0, tol=1e-10, max_iter=100):
    """Damped Newton on ``w -> Nc^T P(x0 + Nc w)`` restricted to the interior.

    Each step solves with the reduced Jacobian and halves the step until the
    iterate is strictly interior and the residual decreases.
    """
    xs = [np.array(x) for x in as_profile(game, x0, tol=1e-9)]
    if any(x.min() <= 0 for x in xs):
        raise EquilibriumError("initial guess must be strictly interior", profile=xs)
    basis, _ = stacked_basis(game.actions)
    sizes = [k - 1 for k in game.actions]
    cuts = np.cumsum(sizes)[:-1]
    F = _reduced_payoff(game, xs, basis)
    res = float(np.linalg.norm(F))
    it = 0
    while res >= tol:
        if it >= max_iter:
            raise EquilibriumError(
                f"Newton did not converge in {max_iter} iterations (residual {res:.3e})",
                residual=res,
                profile=xs,
            )
        it += 1
        J = _jacobians(game, xs).Mred
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -F, rcond=None)[0]
        s = 1.0
        while True:
            trial = [x + N @ w for x, N, w in zip(xs, basis, np.split(s * step, cuts))]
            if all(t.min() > 0 for t in trial):
                Ft = _reduced_payoff(game, trial, basis)
                rt = float(np.linalg.norm(Ft))
                if rt < (1 - 1e-4 * s) * res or rt < tol:
                    break
            s *= 0.5
            if s < 1e-10:
                raise EquilibriumError(
                    f"no interior descent step (residual {res:.3e})", residual=res, profile=xs
                )
        # Re-normalise to kill drift off the affine hull.
        xs = [t / t.sum() for t in trial]
        F = _reduced_payoff(game, xs, basis)
        res = float(np.linalg.norm(F))
    verdict = verify_ne(game, xs, tol=max(1e-8, 10 * tol))
    if not verdict.is_completely_mixed:
        raise EquilibriumError("root is not a completely mixed equilibrium", residual=res, profile=xs)
    return _build_equilibrium(game, xs, it)


def perturb_game(game, delta, rng):
    """Tensor game with every utility moved by an independent draw from ``(-delta, delta)``."""
    base = game.to_tensor()
    ts = [base.tensor(i) + rng.uniform(-delta, delta, size=game.actions) for i in range(game.n)]
    return Game(game.actions, tensors=ts)


def joint_actions(actions):
    return itertools.product(*[range(k) for k in actions])
