import numpy as np
import pytest
from oracles import payoff_by_enumeration, project_by_bisection, rk4_reference

from hollab import fixtures as fx
from hollab.dynamics import (
    ClosedLoop,
    Controller,
    OpenSystem,
    StateLayout,
    abr_probe,
    anticipatory_template,
    closed_loop,
    edl,
    higher_order_wrap,
    integrate,
    replicator,
    replicator_field,
    spectral_abscissa,
    target_gradient,
    target_gradient_field,
    washout_controller,
)
from hollab.errors import DimensionError, DivergenceError
from hollab.game import completely_mixed_equilibrium
from hollab.simplex import simplex_basis


def test_base_fields_are_tangent(rng):
    for k in (2, 3, 5):
        x = rng.dirichlet(np.ones(k))
        p = rng.normal(size=k)
        assert abs(replicator_field(x, p).sum()) < 1e-14
        np.testing.assert_allclose(target_gradient_field(x, p), project_by_bisection(x + p) - x,
                                   atol=1e-12)
        assert abs(target_gradient_field(x, p).sum()) < 1e-14
        np.testing.assert_allclose(replicator_field(x, p), x * (p - x @ p), atol=1e-14)
    # Deep in the interior the projection is inactive.
    x = np.full(4, 0.25)
    p = 0.01 * rng.normal(size=4)
    np.testing.assert_allclose(target_gradient_field(x, p), p - p.mean(), atol=1e-14)


def test_fields_ignore_constant_payoff_shift(rng):
    x = rng.dirichlet(np.ones(4))
    p = rng.normal(size=4)
    np.testing.assert_allclose(replicator_field(x, p + 3.0), replicator_field(x, p), atol=1e-14)
    np.testing.assert_allclose(target_gradient_field(x, p + 3.0), target_gradient_field(x, p),
                               atol=1e-14)


def test_controller_validation():
    c = Controller(np.eye(2), np.ones((2, 1)), np.ones((1, 2)), np.zeros((1, 1)))
    assert (c.d, c.m) == (2, 1)
    with pytest.raises(ValueError):
        Controller(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), np.zeros((1, 1)))
    with pytest.raises(DimensionError):
        Controller(np.eye(1), [[np.nan]], [[1.0]], [[0.0]])
    with pytest.raises(DimensionError):
        replicator(3, Controller.zero(2))
    with pytest.raises(ValueError):
        anticipatory_template(1.0, 0.0, 2)


def test_controller_parameter_round_trip(rng):
    c = Controller(rng.normal(size=(2, 2)), rng.normal(size=(2, 3)), rng.normal(size=(3, 2)),
                   rng.normal(size=(3, 3)))
    d = Controller.from_params(c.params(), 3, 2)
    for a, b in zip((c.E, c.F, c.G, c.H), (d.E, d.F, d.G, d.H)):
        np.testing.assert_array_equal(a, b)
    e = Controller.from_dict(c.to_dict(), 4)
    np.testing.assert_array_equal(e.H, c.H)


def test_internal_stability_flag():
    assert washout_controller(1.0, 2.0, 2).internally_stable
    assert not washout_controller(1.0, -1.0, 2).internally_stable
    assert Controller.zero(3).internally_stable


def test_layout_pack_unpack_and_names():
    lay = StateLayout((2, 3), (1, 0))
    assert lay.size == 2 + 3 + 1 + 2 + 1
    state = lay.pack([[0.5, 0.5], [0.2, 0.3, 0.5]], [[0.1], [0.2, 0.3]], [[7.0], []])
    xs, vs, xis = lay.unpack(state)
    np.testing.assert_array_equal(xs[1], [0.2, 0.3, 0.5])
    np.testing.assert_array_equal(vs[1], [0.2, 0.3])
    np.testing.assert_array_equal(xis[0], [7.0])
    names = lay.column_names()
    assert names[:2] == ["x_1_1", "x_1_2"] and names[-1] == "xi_1_1"
    assert len(names) == lay.size


def _field_oracle(game, dyns, state):
    """Closed-loop field assembled directly from the definitions."""
    lay = StateLayout(game.actions, tuple(d.d for d in dyns))
    xs, vs, xis = lay.unpack(state)
    dx, dv, dxi = [], [], []
    for i, d in enumerate(dyns):
        p = payoff_by_enumeration(game.tensor(i), xs, i)
        N = simplex_basis(d.k)
        y = N.T @ p - vs[i]
        if d.kind == "edl":
            q = p - xis[i]
            dxi.append(q)
        else:
            c = d.ctrl
            q = p + N @ (c.G @ xis[i] + c.H @ y)
            dxi.append(c.E @ xis[i] + c.F @ y)
        dx.append(x_dot(d.kind, xs[i], q))
        dv.append(y)
    return np.concatenate(dx + dv + dxi)


def x_dot(kind, x, q):
    if kind == "target_gradient":
        return project_by_bisection(x + q) - x
    return x * (q - x @ q)


@pytest.mark.parametrize("encoding", ["tensor", "polymatrix"])
def test_closed_loop_field_matches_definition(rng, encoding):
    g = fx.cyclic_game()
    if encoding == "tensor":
        g = g.to_tensor()
    dyns = [
        replicator(4, washout_controller(2.0, 3.0, 4)),
        target_gradient(4, Controller(-np.eye(2), rng.normal(size=(2, 3)),
                                      rng.normal(size=(3, 2)), rng.normal(size=(3, 3)))),
        edl(4),
        replicator(4),
    ]
    cl = closed_loop(g, dyns)
    xs = [rng.dirichlet(np.ones(4)) for _ in range(4)]
    state = cl.layout.pack(xs, [rng.normal(size=3) for _ in range(4)],
                           [rng.normal(size=d.d) for d in dyns])
    np.testing.assert_allclose(cl(state), _field_oracle(g, dyns, state), atol=1e-12)


def test_three_player_closed_loop_matches_definition(rng):
    g = fx.three_player_template()
    dyns = [replicator(2, washout_controller(1.0, 2.0, 2)), target_gradient(2), replicator(2)]
    cl = ClosedLoop(g, dyns)
    state = cl.layout.pack([rng.dirichlet(np.ones(2)) for _ in range(3)],
                           [rng.normal(size=1) for _ in range(3)], [rng.normal(size=1), [], []])
    np.testing.assert_allclose(cl(state), _field_oracle(g, dyns, state), atol=1e-12)


def test_equilibrium_state_is_a_rest_point():
    g = fx.potential_3x3()
    eq = completely_mixed_equilibrium(g, fx.POTENTIAL_3X3_NE)
    for dyns in (
        [replicator(3, washout_controller(1.0, 2.0, 3)), target_gradient(3)],
        [edl(3), edl(3)],
    ):
        cl = closed_loop(g, dyns)
        s = cl.equilibrium_state(eq)
        assert np.abs(cl(s)).max() < 1e-13


def test_anticipatory_washout_form_reproduces_original_form():
    # Original form: z' = lam (p - z), q = p + gamma lam (p - z), z in R^k.
    g = fx.matching_pennies()
    gam, lam = 1.5, 2.0
    N = simplex_basis(2)

    def original(y):
        x1, x2, z1, z2 = y[0:2], y[2:4], y[4:6], y[6:8]
        p1 = g.tensor(0) @ x2
        p2 = g.tensor(1).T @ x1
        q1 = p1 + gam * lam * (p1 - z1)
        q2 = p2 + gam * lam * (p2 - z2)
        return np.concatenate([x_dot("replicator", x1, q1), x_dot("replicator", x2, q2),
                               lam * (p1 - z1), lam * (p2 - z2)])

    x0 = [np.array([0.7, 0.3]), np.array([0.4, 0.6])]
    z0 = [np.array([0.2, -0.1]), np.array([0.0, 0.3])]
    y_ref = rk4_reference(original, np.concatenate(x0 + z0), 0.01, 500)

    cl = closed_loop(g, [replicator(2, washout_controller(gam, lam, 2))] * 2)
    v0 = [N.T @ (g.tensor(0) @ x0[1]), N.T @ (g.tensor(1).T @ x0[0])]
    xi0 = [v0[i] - N.T @ z0[i] for i in range(2)]
    traj = integrate(cl, cl.layout.pack(x0, v0, xi0), 0.01, 5.0, renormalize=False)
    np.testing.assert_allclose(traj.final[:4], y_ref[:4], atol=1e-9)


def test_integrator_matches_reference_rk4(rng):
    g = fx.matching_pennies()
    cl = closed_loop(g, [replicator(2, washout_controller(1.0, 3.0, 2))] * 2)
    s0 = cl.layout.pack([[0.8, 0.2], [0.3, 0.7]], [[0.1], [0.0]], [[0.0], [0.2]])
    traj = integrate(cl, s0, 0.02, 4.0, renormalize=False)
    np.testing.assert_allclose(traj.final, rk4_reference(cl, s0, 0.02, 200), atol=1e-13)
    assert traj.t[-1] == pytest.approx(4.0)


def test_integrator_fourth_order_convergence():
    # Constant payoff: x_a(t) is proportional to x_a(0) exp(p_a t).
    p = np.array([1.0, 0.2, -0.5])
    sys = OpenSystem(replicator(3), p)
    x0 = np.array([0.2, 0.5, 0.3])
    exact = x0 * np.exp(p * 2.0)
    exact /= exact.sum()
    errs = []
    for dt in (0.1, 0.05):
        tr = integrate(sys, np.concatenate([x0, np.zeros(2)]), dt, 2.0)
        errs.append(np.abs(tr.final[:3] - exact).max())
    assert errs[1] < 1e-6
    assert 12 < errs[0] / errs[1] < 20


def test_record_every_keeps_endpoints():
    sys = OpenSystem(replicator(2), [1.0, 0.0])
    tr = integrate(sys, [0.5, 0.5, 0.0], 0.1, 1.05, record_every=3)
    assert tr.t[0] == 0 and tr.t[-1] == pytest.approx(1.0)


def test_divergence_is_reported():
    sys = OpenSystem(fx.noabr_dynamics()[0], [1.0, 0.0])
    with pytest.raises(DivergenceError) as err:
        integrate(sys, [0.5, 0.5, 0.0, 0.0], 0.01, 100.0)
    assert np.all(np.isfinite(err.value.last_state)) and 0 < err.value.t < 100


def test_abr_plain_replicator_reaches_best_reply():
    res = abr_probe(replicator(3), [0.2, 1.0, 0.5], [1 / 3] * 3, T=60.0, dt=0.05)
    assert res.asymptotic_gap < 1e-3 and not res.diverged
    assert res.x_final[1] > 0.999


def test_abr_unstable_washout_reports_divergence():
    res = abr_probe(fx.noabr_dynamics()[0], [1.0, 0.0], [0.5, 0.5], T=100.0, dt=0.01)
    assert res.diverged
    assert res.t[-1] < 100.0
    assert res.gap[np.searchsorted(res.t, 3.0)] > 0.99


def test_higher_order_wrap():
    d = higher_order_wrap(target_gradient(3), washout_controller(1.0, 1.0, 3))
    assert d.kind == "target_gradient" and d.d == 2
    with pytest.raises(ValueError):
        higher_order_wrap(d, washout_controller(1.0, 1.0, 3))


def test_spectral_abscissa_values():
    assert spectral_abscissa(np.array([[0.0, 1.0], [-1.0, 0.0]])) == pytest.approx(0.0)
    assert spectral_abscissa(np.diag([-3.0, 2.0])) == 2.0
    assert spectral_abscissa(np.zeros((0, 0))) == -np.inf


def test_base_field_values():
    half = np.array([0.5, 0.5])
    np.testing.assert_allclose(replicator_field(half, [1.0, 0.0]), [0.25, -0.25])
    np.testing.assert_allclose(replicator_field(np.array([0.2, 0.3, 0.5]), [4.0] * 3), 0.0,
                               atol=1e-15)
    np.testing.assert_allclose(replicator_field(np.array([0.0, 1.0, 0.0]), [3.0, 1.0, 2.0]), 0.0)
    np.testing.assert_allclose(target_gradient_field(half, [1.0, 0.0]), [0.5, -0.5])
    np.testing.assert_allclose(target_gradient_field(np.array([0.2, 0.8]), [2.0, 2.0]), 0.0, atol=1e-15)


def test_washout_output_vanishes_under_constant_input():
    c = washout_controller(1.5, 2.0, 2)
    sys = OpenSystem(replicator(2, c), [1.0, 0.0])
    traj = integrate(sys, np.array([0.5, 0.5, 0.0, 0.0]), 0.01, 20.0)
    N = simplex_basis(2)
    x, v, xi = traj.final[:2], traj.final[2:3], traj.final[3:]
    y = N.T @ np.array([1.0, 0.0]) - v
    phi = N @ (c.G @ xi + c.H @ y)
    assert np.abs(phi).max() < 1e-6


def test_zero_gain_wrap_reproduces_base_field(rng):
    base = target_gradient(3)
    wrapped = higher_order_wrap(base, washout_controller(0.0, 1.3, 3))
    for _ in range(5):
        x, p = rng.dirichlet(np.ones(3)), rng.normal(size=3)
        v, xi = rng.normal(size=2), rng.normal(size=2)
        np.testing.assert_allclose(wrapped.field(x, p, v, xi)[0], base.field(x, p)[0],
                                   atol=1e-15)


def test_plain_replicator_cycles_around_matching_pennies():
    cl = closed_loop(fx.matching_pennies(), [replicator(2), replicator(2)])
    s0 = cl.layout.pack([[0.6, 0.4], [0.5, 0.5]])
    traj = integrate(cl, s0, 0.01, 500.0, record_every=100)
    d = traj.distance(fx.UNIFORM2)
    assert d[traj.t >= 400.0].min() > 0.5 * d[0]


def test_abr_stable_washout_reaches_best_reply(rng):
    p_bar = rng.normal(size=3)
    res = abr_probe(replicator(3, washout_controller(2.0, 1.0, 3)), p_bar, [1 / 3] * 3,
                    T=500.0, dt=0.02, record_every=50)
    assert not res.diverged and res.asymptotic_gap < 1e-3
    assert res.x_final[np.argmax(p_bar)] > 0.999
