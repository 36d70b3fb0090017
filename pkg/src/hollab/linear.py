"""Linearized open plants at mixed equilibria and their stabilizability tests.

The reduced plant in coordinates ``(w, v)`` with ``x = x* + Nc w`` is

    A = [[K, 0], [Mred, -I]],   B_i = [N_i^T Bbar_i (rows of player i); 0],
    C = [Mred, -I]

where ``K = Nc^T Jbar Nc`` and ``Mred = Nc^T M Nc``. Player ``i`` reads the
rows of ``C`` belonging to its own reduced coordinates and drives its own
input columns.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dynamics import LearningDynamics, spectral_abscissa
from .errors import AnalysisError, DimensionError
from .game import MixedEquilibrium, completely_mixed_equilibrium
from .simplex import simplex_basis

IMAG_TOL = 1e-9
RANK_TOL = 1e-8
FD_STEP = 1e-6
BUILTIN_FAMILIES = ("replicator", "target_gradient", "edl")


@dataclass(frozen=True)
class LinearPlant:
    A: np.ndarray
    B_blocks: tuple
    C: np.ndarray
    actions: tuple
    families: tuple
    regular: bool = True
    sigma_min: float = float("nan")

    @property
    def ell(self):
        return sum(k - 1 for k in self.actions)

    @property
    def n(self):
        return len(self.actions)

    @property
    def sizes(self):
        return tuple(k - 1 for k in self.actions)

    @property
    def B(self):
        return np.hstack(self.B_blocks)

    @property
    def K(self):
        return self.A[: self.ell, : self.ell]

    @property
    def Mred(self):
        return self.C[:, : self.ell]

    def row_slices(self):
        cuts = np.cumsum((0,) + self.sizes)
        return [slice(cuts[i], cuts[i + 1]) for i in range(self.n)]

    def C_block(self, i):
        return self.C[self.row_slices()[i]]


def _family_name(f):
    return f.kind if isinstance(f, LearningDynamics) else str(f)


def _local_derivatives(family, x, p):
    """``(D_x f, D_p f)`` of one player's base field at ``(x, p)``."""
    k = x.size
    name = _family_name(family)
    if name in ("replicator", "edl"):
        return np.diag(p - x @ p) - np.outer(x, p), np.diag(x) - np.outer(x, x)
    if name == "target_gradient":
        # The projection is affine near an interior point shifted along 1.
        P = np.eye(k) - np.ones((k, k)) / k
        return P - np.eye(k), P
    if not isinstance(family, LearningDynamics) or family.func is None:
        raise ValueError(f"unknown dynamics family {family!r}")
    f = family.func
    h = FD_STEP
    Dx = np.empty((k, k))
    Dp = np.empty((k, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = h
        Dx[:, j] = (np.asarray(f(x + e, p)) - np.asarray(f(x - e, p))) / (2 * h)
        Dp[:, j] = (np.asarray(f(x, p + e)) - np.asarray(f(x, p - e))) / (2 * h)
    return Dx, Dp


def linearize_plant(game, eq, family):
    """Assemble the reduced plant for per-player dynamics families.

    ``family`` is one name (``'replicator'``, ``'target_gradient'``) applied
    to everyone, or a per-player list of names or :class:`LearningDynamics`
    (custom fields are differentiated numerically). A non-regular
    equilibrium still yields a plant, with ``regular=False`` and a warning.
    """
    if not isinstance(eq, MixedEquilibrium):
        eq = completely_mixed_equilibrium(game, eq)
    fams = [family] * game.n if isinstance(family, (str, LearningDynamics)) else list(family)
    if len(fams) != game.n:
        raise DimensionError(f"got {len(fams)} dynamics families for {game.n} players")
    ps = game.payoffs(eq.profile)
    basis = eq.basis
    sizes = [k - 1 for k in game.actions]
    ell = sum(sizes)
    cuts = np.cumsum([0] + sizes)
    K = np.zeros((ell, ell))
    Bt = []
    for i in range(game.n):
        Dx, Dp = _local_derivatives(fams[i], eq.profile[i], ps[i])
        Ni = basis[i]
        ri = slice(cuts[i], cuts[i + 1])
        for j in range(game.n):
            Jij = Dx if i == j else Dp @ eq.blocks[i][j]
            K[ri, cuts[j] : cuts[j + 1]] = Ni.T @ Jij @ basis[j]
        Bt.append(Ni.T @ Dp @ Ni)
    A = np.block([[K, np.zeros((ell, ell))], [eq.Mred, -np.eye(ell)]])
    blocks = []
    for i in range(game.n):
        b = np.zeros((2 * ell, sizes[i]))
        b[cuts[i] : cuts[i + 1]] = Bt[i]
        blocks.append(b)
    C = np.hstack([eq.Mred, -np.eye(ell)])
    if not eq.regular:
        warnings.warn("equilibrium is not regular; plant returned for inspection", RuntimeWarning)
    return LinearPlant(
        A, tuple(blocks), C, tuple(game.actions), tuple(_family_name(f) for f in fams),
        eq.regular, eq.sigma_min,
    )


def finite_diff_linearize(system, state, h=FD_STEP, reduce=True):
    """Central-difference Jacobian of a closed-loop field at a rest point.

    With ``reduce=True`` the strategy block is expressed in tangent
    coordinates, giving a matrix comparable with the analytic closed loop.
    """
    state = np.asarray(state, dtype=float)
    f0 = system(state)
    if np.linalg.norm(f0) > 1e-6:
        raise AnalysisError(f"field norm {np.linalg.norm(f0):.3e} at the point; not a rest point")
    n = state.size
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (system(state + e) - system(state - e)) / (2 * h)
    if not reduce:
        return J
    layout = system.layout
    Nc = scipy.linalg.block_diag(*[simplex_basis(k) for k in layout.actions])
    T = scipy.linalg.block_diag(Nc, np.eye(n - layout.nx))
    return T.T @ J @ T


# -- spectra --------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray
    abscissa: float
    trace: float
    real: np.ndarray

    def to_dict(self):
        return {
            "eigenvalues": [{"re": float(z.real), "im": float(z.imag)} for z in self.eigenvalues],
            "abscissa": self.abscissa,
            "trace": self.trace,
            "real": [bool(r) for r in self.real],
        }


def spectral_report(matrix):
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"spectral report needs a square matrix, got shape {A.shape}")
    ev = np.linalg.eigvals(A)
    order = np.lexsort((-ev.imag, -ev.real))
    ev = ev[order]
    return SpectralReport(
        ev,
        float(ev.real.max()) if ev.size else -np.inf,
        float(np.trace(A)),
        np.abs(ev.imag) < IMAG_TOL,
    )


# -- decentralized test ---------------------------------------------------------


@dataclass(frozen=True)
class DecentralizedVerdict:
    stabilizable: bool
    failing_partition: tuple | None = None
    failing_lambda: complex | None = None

    def to_dict(self):
        out = {"stabilizable": self.stabilizable, "failing_partition": None, "failing_lambda": None}
        if self.failing_partition is not None:
            U, Y = self.failing_partition
            out["failing_partition"] = {"U": [i + 1 for i in U], "Y": [i + 1 for i in Y]}
            lam = complex(self.failing_lambda)
            out["failing_lambda"] = {"re": lam.real, "im": lam.imag}
        return out


def _rank(M, tol=RANK_TOL):
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


def decentralized_stabilizability(plant):
    """Rank test over every split of the players into input and output sets.

    Fails at ``lambda`` when ``rank [[A - lambda I, B_U], [C_Y, 0]] < dim A``
    for some partition ``(U, Y)``; candidates are the eigenvalues of ``A``
    with non-negative real part and ``lambda = 0``.
    """
    A = plant.A
    n = A.shape[0]
    ev = np.linalg.eigvals(A)
    cands = [0j] + [complex(z) for z in ev if z.real >= -IMAG_TOL]
    rows = plant.row_slices()
    players = range(plant.n)
    for lam in cands:
        Al = A - lam * np.eye(n)
        for r in range(plant.n + 1):
            for U in itertools.combinations(players, r):
                Y = tuple(i for i in players if i not in U)
                BU = (
                    np.hstack([plant.B_blocks[i] for i in U]) if U else np.zeros((n, 0))
                )
                CY = np.vstack([plant.C[rows[i]] for i in Y]) if Y else np.zeros((0, n))
                top = np.hstack([Al, BU])
                bot = np.hstack([CY, np.zeros((CY.shape[0], BU.shape[1]))])
                if _rank(np.vstack([top, bot])) < n:
                    return DecentralizedVerdict(False, (U, Y), lam)
    return DecentralizedVerdict(True)


# -- strong stabilizability ----------------------------------------------------


def _orth(M, tol=RANK_TOL):
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((M.shape[0], 0))
    return U[:, s > tol * s[0]]


def _krylov(A, B, tol=RANK_TOL):
    # Orthonormal basis of the smallest A-invariant subspace containing range(B).
    Q = _orth(B, tol)
    while 0 < Q.shape[1] < A.shape[0]:
        Qn = _orth(np.hstack([Q, A @ Q]), tol)
        if Qn.shape[1] == Q.shape[1]:
            break
        Q = Qn
    return Q


def minimal_realization(A, B, C, tol=RANK_TOL):
    """Controllable-then-observable restriction of ``(A, B, C)``."""
    Qc = _krylov(A, B, tol)
    Ac, Bc, Cc = Qc.T @ A @ Qc, Qc.T @ B, C @ Qc
    Qo = _krylov(Ac.T, Cc.T, tol)
    return Qo.T @ Ac @ Qo, Qo.T @ Bc, Cc @ Qo


def _pbh_ok(A, B, tol=RANK_TOL):
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real >= -IMAG_TOL and _rank(np.hstack([A - lam * np.eye(n), B]), tol) < n:
            return False
    return True


def _transfer(A, B, C, s):
    n = A.shape[0]
    return C @ np.linalg.solve(s * np.eye(n) - A, B)


@dataclass(frozen=True)
class StrongVerdict:
    strongly_stabilizable: bool
    real_unstable_poles: tuple
    real_unstable_blocking_zeros: tuple
    closed_form: dict | None = None

    def to_dict(self):
        def num(z):
            return "inf" if np.isinf(z) else float(z)

        return {
            "verdict": self.strongly_stabilizable,
            "poles": [num(p) for p in self.real_unstable_poles],
            "zeros": [num(z) for z in self.real_unstable_blocking_zeros],
            "closed_form": self.closed_form,
        }


def _check_custom_margins(plant, tol):
    """Abstain when a numerically differentiated plant is nearly singular.

    The strong test assumes ``K`` and every input block are nonsingular.
    Custom fields come from finite differences, so a smallest singular
    value within ``10 * tol`` (relative) is treated as undecidable.
    """
    rows = plant.row_slices()
    mats = [("K", plant.K)] + [
        (f"input block {i + 1}", plant.B_blocks[i][rows[i]]) for i in range(plant.n)
    ]
    for name, M in mats:
        sv = np.linalg.svd(M, compute_uv=False)
        smin, smax = float(sv.min()), float(sv.max())
        if not smin > 10.0 * tol * max(smax, 1.0):
            raise AnalysisError(
                f"{name} has smallest singular value {smin:.3e}, within 10x of the rank "
                "tolerance; no verdict"
            )


def strong_stabilizability(plant, tol=RANK_TOL):
    """Parity-interlacing decision on the plant's transfer matrix.

    Poles are the real non-negative eigenvalues of a minimal realization.
    Blocking-zero candidates are ``s = 0``, ``s = inf`` (the plant is
    strictly proper) and the real non-negative finite invariant zeros of
    the Rosenbrock pencil; each finite candidate is kept only if the
    transfer matrix vanishes there. The plant is strongly stabilizable iff
    every interval between consecutive blocking zeros holds an even number
    of real poles.
    """
    A, B, C = plant.A, plant.B, plant.C
    if any(f not in BUILTIN_FAMILIES for f in plant.families):
        _check_custom_margins(plant, tol)
    if not _pbh_ok(A, B, tol):
        raise AnalysisError("plant is not stabilizable")
    if not _pbh_ok(A.T, C.T, tol):
        raise AnalysisError("plant is not detectable")
    Am, Bm, Cm = minimal_realization(A, B, C, tol)
    ev = np.linalg.eigvals(Am) if Am.size else np.zeros(0)
    poles = sorted(float(z.real) for z in ev if abs(z.imag) < IMAG_TOL and z.real >= -IMAG_TOL)
    scale = max(1.0, np.linalg.norm(Cm) * np.linalg.norm(Bm))

    cands = {0.0}
    p, m = C.shape[0], B.shape[1]
    if p != m:
        raise AnalysisError(
            f"blocking zeros are computed for square plants only (got {p} outputs, {m} inputs); "
            "use the two-player two-action closed form"
        )
    n = A.shape[0]
    pencil_a = np.block([[A, B], [C, np.zeros((p, m))]])
    pencil_b = scipy.linalg.block_diag(np.eye(n), np.zeros((p, m)))
    alpha, beta = scipy.linalg.eig(pencil_a, pencil_b, right=False, homogeneous_eigvals=True)
    if np.any((np.abs(alpha) < tol * max(1.0, np.abs(pencil_a).max())) & (np.abs(beta) < tol)):
        raise AnalysisError(
            "Rosenbrock pencil is singular; zeros are ill-defined here, "
            "use the two-player two-action closed form"
        )
    finite = np.abs(beta) > tol
    for z in alpha[finite] / beta[finite]:
        if abs(z.imag) < IMAG_TOL * max(1.0, abs(z)) and z.real >= -IMAG_TOL:
            cands.add(max(0.0, float(z.real)))
    zeros = []
    for s in sorted(cands):
        try:
            val = np.linalg.norm(_transfer(Am, Bm, Cm, s)) if Am.size else 0.0
        except np.linalg.LinAlgError:
            continue
        if val < 1e-7 * scale and not any(abs(s - z) < 1e-7 * max(1.0, s) for z in zeros):
            zeros.append(s)
    zeros.append(np.inf)
    ok = True
    for lo, hi in zip(zeros[:-1], zeros[1:]):
        count = sum(1 for q in poles if lo < q < hi)
        if count % 2:
            ok = False
    closed = _two_by_two(plant)
    if closed is not None and closed["strongly_stabilizable"] != ok:
        raise AnalysisError(
            "pole/zero parity disagrees with the two-player two-action closed form "
            f"(n1*n2 = {closed['n1n2']:.3e}); minimal realization is ambiguous"
        )
    return StrongVerdict(ok, tuple(q for q in poles), tuple(zeros), closed)


def _two_by_two(plant):
    if plant.actions != (2, 2):
        return None
    K = plant.K
    if abs(K[0, 0]) > 1e-10 or abs(K[1, 1]) > 1e-10:
        return None
    n1n2 = float(K[0, 1] * K[1, 0])
    return {"n1": float(K[0, 1]), "n2": float(K[1, 0]), "n1n2": n1n2, "strongly_stabilizable": not n1n2 > 0}


# -- strategic equivalence ---------------------------------------------------


@dataclass(frozen=True)
class ZeroSumVerdict:
    equivalent: bool
    alpha: float | None = None
    beta: float | None = None
    A: np.ndarray | None = None
    Q1: np.ndarray | None = None
    Q2: np.ndarray | None = None
    residual: float = float("nan")


def _center(X):
    return X - X.mean(axis=0, keepdims=True) - X.mean(axis=1, keepdims=True) + X.mean()


def strategic_zero_sum_check(game, tol=1e-9):
    """Closed-form test for strategic equivalence to a zero-sum game.

    With ``rho = beta/alpha`` the conditions collapse to
    ``M21 + rho M12^T = q1 rho 1^T + 1 q2^T``, i.e. the double-centred
    parts satisfy ``C(M21) + rho C(M12^T) = 0``; ``rho`` is the
    least-squares solution and must be positive. Witnesses are returned
    with ``alpha = 1``.
    """
    if game.n != 2:
        raise DimensionError("strategic zero-sum test needs a two-player game")
    M12 = game.tensor(0)
    M21 = game.tensor(1).T
    c21, c12 = _center(M21), _center(M12.T)
    scale = max(1.0, np.abs(M12).max(), np.abs(M21).max())
    den = float(np.sum(c12 * c12))
    if den <= (tol * scale) ** 2:
        rho = 1.0
    else:
        rho = -float(np.sum(c21 * c12)) / den
    res = float(np.abs(c21 + rho * c12).max())
    if not (rho > tol and res <= tol * scale):
        return ZeroSumVerdict(False, residual=res)
    X = M21 + rho * M12.T
    a = X.mean(axis=1) - X.mean()
    b = X.mean(axis=0)
    q1 = a / rho
    k1, k2 = M12.shape
    Q1 = np.outer(np.ones(k1), q1)
    Q2 = np.outer(np.ones(k2), b)
    A = M12 - Q1
    return ZeroSumVerdict(True, 1.0, rho, A, Q1, Q2, res)
