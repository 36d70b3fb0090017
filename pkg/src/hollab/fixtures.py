"""Reference games and dynamics used in examples, tests and the data corpus."""

from __future__ import annotations

import numpy as np

from .dynamics import replicator, washout_controller
from .game import Game

UNIFORM2 = ((0.5, 0.5), (0.5, 0.5))


def matching_pennies(offset=0.0):
    """Row player wins on a match: ``M12 = [[1, -1], [-1, 1]]``, ``M21 = -M12^T``."""
    M12 = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return Game.bimatrix(M12, -M12, positivity_offset=offset)


def coordination():
    """Two-player identity coordination game with mixed equilibrium at (1/2, 1/2)."""
    return Game.bimatrix(np.eye(2), np.eye(2))


def potential_3x3():
    """Ordinal potential game with a completely mixed equilibrium at ((1/2,1/6,1/3), uniform)."""
    M12 = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])
    M21 = np.array([[2.0, 3.0, 2.0], [1.0, 4.0, 3.0], [1.0, 2.0, 4.0]])
    return Game.bimatrix(M12, M21.T)


POTENTIAL_3X3_NE = ((0.5, 1 / 6, 1 / 3), (1 / 3, 1 / 3, 1 / 3))


def _example1_matrices(c=None):
    c = np.ones((4, 3)) if c is None else np.asarray(c, dtype=float)
    M1 = np.diag([c[0, 0], c[0, 1], c[0, 2], 1.0])
    M2 = np.diag([c[1, 0], c[1, 1], c[1, 2], 1.0])
    M3 = np.zeros((4, 4))
    M3[0, 2], M3[1, 3], M3[2, 0], M3[3, 1] = c[2, 0], c[2, 1], c[2, 2], 1.0
    M4 = np.zeros((4, 4))
    M4[0, 1], M4[1, 2], M4[2, 3], M4[3, 0] = c[3, 0], c[3, 1], c[3, 2], 1.0
    return [M1, M2, M3, M4]


CYCLIC_OPPONENTS = (1, 2, 3, 0)
PAIRWISE_OPPONENTS = (3, 2, 1, 0)


def network_game(opponents, c=None):
    """Four-player polymatrix game where player ``i`` only faces ``opponents[i]``."""
    Ms = _example1_matrices(c)
    return Game((4, 4, 4, 4), edges=[(i, j, Ms[i]) for i, j in enumerate(opponents)])


def cyclic_game(c=None):
    return network_game(CYCLIC_OPPONENTS, c)


def pairwise_game(c=None):
    return network_game(PAIRWISE_OPPONENTS, c)


UNIFORM4 = tuple((0.25,) * 4 for _ in range(4))


def random_game_with_equilibrium(actions, rng, x_star=None):
    """Standard-normal tensor game shifted so that ``x_star`` is a completely mixed equilibrium.

    Each slice ``a_i`` of player ``i``'s tensor is moved by a constant so all
    of ``i``'s actions earn the same payoff at ``x_star``. Without
    ``x_star`` a Dirichlet(2) profile is drawn from ``rng``.
    """
    actions = tuple(actions)
    n = len(actions)
    if x_star is None:
        x_star = [rng.dirichlet(2.0 * np.ones(k)) for k in actions]
    xs = [np.asarray(x, dtype=float) for x in x_star]
    ts = [rng.standard_normal(actions) for _ in range(n)]
    g = Game(actions, tensors=ts)
    for i in range(n):
        p = g._payoff(i, xs)
        shape = [1] * n
        shape[i] = actions[i]
        ts[i] = ts[i] - (p - p.mean()).reshape(shape)
    return Game(actions, tensors=ts), xs


def three_player_template(seed=0, x_star=((0.4, 0.6), (0.3, 0.7), (0.55, 0.45))):
    """Random three-player two-action game with ``x_star`` as a completely mixed equilibrium."""
    return random_game_with_equilibrium((2, 2, 2), np.random.default_rng(seed), x_star)[0]


def zero_sum_polymatrix(seed=0):
    """Four players with four actions on a ring; ``M_ji = -M_ij^T`` on every edge.

    Each edge matrix is circulant, so the uniform profile is an equilibrium.
    """
    rng = np.random.default_rng(seed)
    edges = []
    for i in range(4):
        j = (i + 1) % 4
        row = rng.uniform(-1.0, 1.0, 4)
        C = np.array([np.roll(row, s) for s in range(4)])
        edges.append((i, j, C))
        edges.append((j, i, -C.T))
    return Game((4, 4, 4, 4), edges=edges)


def strategic_zero_sum(A=None, alpha=2.0, beta=0.5, q1=(1.0, 2.0, 3.0), q2=(0.5, -1.0, 4.0)):
    """Two-player game with ``M12 = alpha A + 1 q1^T`` and ``M21 = -beta A^T + 1 q2^T``.

    The default ``A`` is rock-paper-scissors.
    """
    if A is None:
        A = np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])
    A = np.asarray(A, dtype=float)
    k1, k2 = A.shape
    M12 = alpha * A + np.outer(np.ones(k1), q1)
    M21 = -beta * A.T + np.outer(np.ones(k2), q2)
    return Game.bimatrix(M12, M21.T)


def noabr_dynamics():
    """Player 1 with an unstable washout (rate -1, gain 20) and player 2 with rate 50, gain 1."""
    return [
        replicator(2, washout_controller(20.0, -1.0, 2)),
        replicator(2, washout_controller(1.0, 50.0, 2)),
    ]


def indifferent_player():
    """Player 1 earns nothing, player 2 plays matching pennies against player 1.

    Every ``x_2`` is a best reply for player 1, so the uniform equilibrium is
    not isolated and the reduced payoff Jacobian is singular.
    """
    M21 = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return Game.bimatrix(np.zeros((2, 2)), M21.T)
