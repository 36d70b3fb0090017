import itertools

import numpy as np
import scipy.stats
import pytest
from conftest import data_path
from oracles import payoff_by_enumeration, wilson

from hollab import fixtures as fx
from hollab.bandit import (
    BanditConfig,
    BanditStreams,
    initial_state,
    mean_field,
    monte_carlo,
    payoff_estimate,
    prepare,
    run,
    run_python,
    sample_action,
    snapshot_steps,
    step_higher,
    step_modified,
    step_standard,
    wilson_interval,
    with_steps,
)
from hollab.dynamics import Controller, closed_loop, replicator
from hollab.errors import ConfigError
from hollab.game import Game
from hollab.io import read_controllers
from hollab.simplex import project_simplex


class Scripted:
    """Stand-in generator returning preset uniforms in order."""

    def __init__(self, values):
        self.values = list(values)

    def random(self, size=None):
        if size is None:
            return self.values.pop(0)
        out = np.array([self.values.pop(0) for _ in range(int(np.prod(size)))])
        return out.reshape(size)


@pytest.fixture(scope="module")
def mp_ctrls():
    return read_controllers(data_path("mp_strong_controllers.json"), (2, 2))


def _unstable():
    return Controller([[0.5]], [[1.0]], [[0.2]], [[0.1]])


def test_standard_step_worked_example():
    # delta * r = 1 at t = 0 sends x to the vertex of the played action.
    g = Game((2, 2), tensors=[np.array([[1.0, 0.5], [0.5, 1.0]])] * 2)
    st = initial_state(g, [[0.5, 0.5], [0.5, 0.5]])
    cfg = BanditConfig(variant="standard", epsilon=0.0, delta=[1.0, 1.0])
    out = step_standard(st, g, cfg, BanditStreams(Scripted([0.0, 0.0]), Scripted([])))
    np.testing.assert_allclose(out.x[0], [1.0, 0.0])
    np.testing.assert_allclose(out.x[1], [1.0, 0.0])
    assert out.t == 1


def test_sample_action_inverse_cdf():
    sig = np.array([0.2, 0.5, 0.3])
    assert sample_action(sig, Scripted([0.0])) == 0
    assert sample_action(sig, Scripted([0.2])) == 1
    assert sample_action(sig, Scripted([0.69])) == 1
    assert sample_action(sig, Scripted([0.7])) == 2
    rng = np.random.default_rng(0)
    freq = np.bincount([sample_action(sig, rng) for _ in range(20000)], minlength=3) / 20000
    np.testing.assert_allclose(freq, sig, atol=0.015)


def test_payoff_estimate_is_unbiased_by_enumeration(rng):
    g = fx.three_player_template()
    sig = [rng.dirichlet(np.ones(2)) for _ in range(3)]
    for i in range(3):
        mean = np.zeros(2)
        for a in itertools.product(range(2), repeat=3):
            prob = np.prod([sig[j][a[j]] for j in range(3)])
            mean += prob * payoff_estimate(g.tensor(i)[a], a[i], sig[i])
        np.testing.assert_allclose(mean, payoff_by_enumeration(g.tensor(i), sig, i), atol=1e-12)
    with pytest.raises(ValueError):
        payoff_estimate(1.0, 0, np.array([0.0, 1.0]))


def _expected_increment(step, state, setup):
    """Exact E[(x', v', xi') - (x, v, xi)] / kappa by enumerating action profiles."""
    g = setup.game
    sig = [project_simplex(x, setup.epsilon) for x in state.x]
    kap = setup.delta / (state.t + 1.0)
    kvec = np.concatenate([np.full(len(a), kap[i]) for i, a in enumerate(state.x)]
                          + [np.full(len(a), kap[i]) for i, a in enumerate(state.v)]
                          + [np.full(len(a), kap[i]) for i, a in enumerate(state.xi)])
    dnoise = sum(len(a) for a in state.xi)
    total = np.zeros(state.flat().size)
    for a in itertools.product(*[range(k) for k in g.actions]):
        prob = np.prod([sig[j][a[j]] for j in range(g.n)])
        # Uniforms that land in the middle of each chosen action's CDF slot.
        us = [(sig[j][: a[j]].sum() + 0.5 * sig[j][a[j]]) / sig[j].sum() for j in range(g.n)]
        streams = BanditStreams(Scripted(us), Scripted([0.5] * dnoise))
        nxt = step(state, g, setup, streams)
        total += prob * (nxt.flat() - state.flat()) / kvec
    return total


@pytest.mark.parametrize("variant", ["standard", "higher", "modified"])
def test_mean_field_is_exact_expected_increment(variant, mp_ctrls):
    g = fx.matching_pennies(1.5)
    ctrls = list(mp_ctrls) if variant != "modified" else [_unstable(), mp_ctrls[1]]
    st = initial_state(g, [[0.7, 0.3], [0.2, 0.8]], ctrls, t0=50, v0=[[0.1], [-0.2]],
                       xi0=[[0.3], [-0.1]])
    setup = prepare(g, BanditConfig(ctrls, variant=variant, epsilon=0.05, t0=50), st)
    step = {"standard": step_standard, "higher": step_higher, "modified": step_modified}[variant]
    np.testing.assert_allclose(_expected_increment(step, st, setup), mean_field(st, setup),
                               atol=1e-9)


def test_mean_field_matches_continuous_closed_loop(mp_ctrls):
    g = fx.potential_3x3()
    g = Game(g.actions, tensors=[g.tensor(i) + 5.0 for i in range(2)])
    ctrls = [Controller(-np.eye(2), 0.5 * np.eye(2), 0.3 * np.eye(2), 0.2 * np.eye(2))] * 2
    xs = [np.array([0.3, 0.3, 0.4]), np.array([0.25, 0.35, 0.4])]
    st = initial_state(g, xs, ctrls, v0=[[0.1, 0.0], [0.0, -0.1]], xi0=[[0.2, 0.1], [0.0, 0.3]])
    setup = prepare(g, BanditConfig(ctrls, epsilon=0.01), st)
    cl = closed_loop(g, [replicator(3, c) for c in ctrls])
    np.testing.assert_allclose(mean_field(st, setup), cl(st.flat()), atol=1e-12)


def test_refusals(mp_ctrls):
    mp = fx.matching_pennies()
    st = initial_state(mp, fx.UNIFORM2, mp_ctrls)
    with pytest.raises(ConfigError, match="positivity_offset"):
        prepare(mp, BanditConfig(mp_ctrls), st)
    g = fx.matching_pennies(1.5)
    with pytest.raises(ConfigError, match="epsilon"):
        prepare(g, BanditConfig(mp_ctrls, epsilon=0.6), st)
    with pytest.raises(ConfigError, match="positivity bound"):
        prepare(g, BanditConfig(mp_ctrls, delta=[10.0, 10.0]), st)
    with pytest.raises(ConfigError, match="internally stable"):
        prepare(g, BanditConfig([_unstable(), mp_ctrls[1]]), initial_state(g, fx.UNIFORM2,
                                                                           [_unstable(), mp_ctrls[1]]))
    with pytest.raises(ConfigError, match="beta"):
        prepare(g, BanditConfig([_unstable(), mp_ctrls[1]], variant="modified", beta=[0.4, 0.0]),
                initial_state(g, fx.UNIFORM2, [_unstable(), mp_ctrls[1]]))
    with pytest.raises(ConfigError, match="variant"):
        prepare(g, BanditConfig(mp_ctrls, variant="bogus"), st)
    with pytest.raises(ConfigError):
        prepare(g, BanditConfig(mp_ctrls, t0=-1), st)


def test_default_delta_respects_bound(mp_ctrls):
    g = fx.matching_pennies(1.5)
    st = initial_state(g, fx.UNIFORM2, mp_ctrls, t0=100)
    s = prepare(g, BanditConfig(mp_ctrls, t0=100), st)
    np.testing.assert_allclose(s.delta, 0.9 * s.delta_bar * 101)
    std = prepare(g, BanditConfig(variant="standard"), initial_state(g, fx.UNIFORM2))
    np.testing.assert_allclose(std.delta, 0.9 / 2.5)
    mod = prepare(g, BanditConfig([_unstable(), mp_ctrls[1]], variant="modified"),
                  initial_state(g, fx.UNIFORM2, [_unstable(), mp_ctrls[1]]))
    # Smallest power of two above 0.5 is 1, plus the margin.
    assert mod.beta[0] == pytest.approx(1.1) and mod.beta[1] == 0.0
    assert list(mod.modified) == [True, False]


def _setup(g, ctrls, variant, steps, **kw):
    st = initial_state(g, [[0.6, 0.4], [0.45, 0.55]], ctrls, kw.get("t0", 0))
    cfg = BanditConfig(ctrls, variant=variant, steps=steps, snapshots=10, window=500, seed=4, **kw)
    return prepare(g, cfg, st), st


@pytest.mark.parametrize("variant", ["standard", "higher", "modified"])
def test_kernel_matches_python_reference(variant, mp_ctrls):
    g = fx.matching_pennies(1.5)
    ctrls = {"standard": None, "higher": list(mp_ctrls),
             "modified": [_unstable(), mp_ctrls[1]]}[variant]
    setup, st = _setup(g, ctrls, variant, 3000, t0=10)
    fast = run(setup, st, fx.UNIFORM2)
    ref = run_python(setup, st)
    np.testing.assert_allclose(fast.final.flat(), ref.flat(), atol=1e-12)
    assert fast.final.t == ref.t == 3010
    # The last snapshot is the final state.
    np.testing.assert_allclose(fast.snapshots[-1], fast.final.flat(), atol=0)
    assert fast.action_counts.sum() == 2 * 3000
    assert fast.action_counts.shape == (6, 4)


def test_iterates_stay_strictly_positive(mp_ctrls):
    g = fx.matching_pennies(1.5)
    for variant, ctrls in (("higher", mp_ctrls), ("modified", [_unstable(), mp_ctrls[1]])):
        setup, st = _setup(g, list(ctrls), variant, 20000)
        r = run(setup, st, fx.UNIFORM2)
        assert r.min_x.min() > 0
        assert np.all(r.snapshots[:, :4] > 0)


def test_controller_state_stays_within_bound(mp_ctrls):
    g = fx.matching_pennies(1.5)
    setup, st = _setup(g, [_unstable(), mp_ctrls[1]], "modified", 50000)
    r = run(setup, st, fx.UNIFORM2)
    for i in range(2):
        assert r.xi_sup[i] <= setup.bounds[i].xi_max
    assert np.isfinite(r.final.flat()).all()


def test_payoff_trace_is_window_mean(mp_ctrls):
    g = fx.matching_pennies(1.5)
    setup, st = _setup(g, list(mp_ctrls), "higher", 1200)
    r = run(setup, st, fx.UNIFORM2)
    assert r.payoff_trace.shape == (3, 2)
    assert np.all((r.payoff_trace >= 0.5) & (r.payoff_trace <= 2.5))


def test_snapshot_steps():
    s = snapshot_steps(10000, 20)
    assert s[0] == 1 and s[-1] == 10000 and np.all(np.diff(s) > 0)
    assert snapshot_steps(0, 5).size == 0


def test_wilson_interval_known_values():
    lo, hi = wilson_interval(0, 10)
    assert lo == 0.0 and hi == pytest.approx(0.2775, abs=1e-4)
    lo, hi = wilson_interval(5, 10)
    assert (lo, hi) == pytest.approx((0.2366, 0.7634), abs=1e-4)
    for s, n in ((3, 17), (99, 100), (100, 100)):
        assert wilson_interval(s, n) == pytest.approx(wilson(s, n), abs=1e-12)


def test_monte_carlo_is_deterministic(mp_ctrls):
    g = fx.matching_pennies(1.5)
    st = initial_state(g, fx.UNIFORM2, mp_ctrls, 1000)
    setup = prepare(g, BanditConfig(mp_ctrls, t0=1000, steps=2000, seed=11), st)
    a = monte_carlo(setup, fx.UNIFORM2, 4)
    b = monte_carlo(setup, fx.UNIFORM2, 4, parallelism=2)
    assert [r.final_distance for r in a.runs] == [r.final_distance for r in b.runs]
    assert a.summary() == b.summary()
    c = monte_carlo(with_steps(setup, 10), fx.UNIFORM2, 4)
    assert all(r.final.t == 1010 for r in c.runs)
    # Initial strategies lie within the requested tangent radius.
    for r in a.runs:
        assert r.initial_distance <= 0.2


def test_standard_variant_does_not_settle(mp_ctrls):
    g = fx.matching_pennies(1.5)
    st = initial_state(g, [[0.55, 0.45], [0.5, 0.5]], None, 1000)
    setup = prepare(g, BanditConfig(variant="standard", t0=1000, steps=100000, seed=2), st)
    r = run(setup, st, fx.UNIFORM2)
    assert r.final_distance > r.initial_distance


def test_sampling_degenerate_and_uniform():
    rng = np.random.default_rng(3)
    e1 = np.array([1.0, 0.0, 0.0])
    assert all(sample_action(e1, rng) == 0 for _ in range(1000))
    counts = np.bincount([sample_action(np.full(4, 0.25), rng) for _ in range(100_000)],
                         minlength=4)
    assert scipy.stats.chisquare(counts).pvalue > 1e-3


def test_payoff_estimate_value():
    np.testing.assert_array_equal(payoff_estimate(2.0, 0, np.array([0.5, 0.5])), [4.0, 0.0])


def test_vanishing_step_leaves_strategy_unchanged():
    g = fx.matching_pennies(1.5)
    st = initial_state(g, [[0.7, 0.3], [0.4, 0.6]])
    cfg = BanditConfig(variant="standard", delta=[1e-12, 1e-12])
    out = step_standard(st, g, cfg, np.random.default_rng(0))
    for a, b in zip(out.x, st.x):
        np.testing.assert_allclose(a, b, atol=1e-11)


def _modified_one_step(ctrl, xi, noise):
    g = fx.matching_pennies(1.5)
    ctrls = [ctrl, Controller.zero(2)]
    st = initial_state(g, fx.UNIFORM2, ctrls, t0=9, xi0=[[xi], []])
    setup = prepare(g, BanditConfig(ctrls, variant="modified", t0=9), st)
    out = step_modified(st, g, setup, BanditStreams(Scripted([0.1, 0.1]), Scripted([noise])))
    return setup, out


def test_modified_noise_alone_moves_zero_memory():
    setup, out = _modified_one_step(Controller([[0.5]], [[0.0]], [[0.2]], [[0.1]]), 0.0, 0.8)
    kap = setup.delta[0] / 10.0
    assert out.xi[0][0] == pytest.approx(kap * setup.bounds[0].L * 0.6, rel=1e-12)


def test_modified_damping_is_capped_at_beta():
    xi = 3.0
    setup, out = _modified_one_step(Controller([[0.0]], [[0.0]], [[0.2]], [[0.1]]), xi, 0.5)
    beta = setup.bounds[0].beta
    assert xi * xi >= beta
    kap = setup.delta[0] / 10.0
    assert out.xi[0][0] == pytest.approx(xi - kap * beta * xi, rel=1e-12)


def test_zero_step_freezes_the_state(mp_ctrls):
    g = fx.matching_pennies(1.5)
    st = initial_state(g, [[0.8, 0.2], [0.3, 0.7]], list(mp_ctrls))
    setup = prepare(g, BanditConfig(list(mp_ctrls), delta=[0.0, 0.0], steps=2000, snapshots=4,
                                    window=500), st)
    r = run(setup, st, fx.UNIFORM2)
    np.testing.assert_array_equal(r.final.flat(), st.flat())
    assert r.final.t == 2000 and not r.converged
    with pytest.raises(ConfigError, match="delta"):
        prepare(g, BanditConfig(list(mp_ctrls), delta=[-0.1, 0.1]), st)


def test_halving_the_step_quarters_the_increment_variance(mp_ctrls):
    g = fx.matching_pennies(1.5)
    st = initial_state(g, [[0.6, 0.4], [0.45, 0.55]], list(mp_ctrls), t0=20,
                       xi0=[[0.1], [-0.2]])
    incs = []
    for d in (0.02, 0.01):
        setup = prepare(g, BanditConfig(list(mp_ctrls), delta=[d, d], t0=20), st)
        streams = BanditStreams.from_seed(11)
        incs.append(np.array([step_higher(st, g, setup, streams).flat() - st.flat()
                              for _ in range(2000)]))
    # Same draws, so each increment scales exactly with the step.
    np.testing.assert_allclose(incs[1], 0.5 * incs[0], rtol=1e-9, atol=1e-15)
    np.testing.assert_allclose(incs[0].var(axis=0)[:4] / incs[1].var(axis=0)[:4], 4.0, rtol=1e-6)


def test_memory_bound_holds_over_a_million_steps(mp_ctrls):
    g = fx.matching_pennies(1.5)
    setup, st = _setup(g, [_unstable(), mp_ctrls[1]], "modified", 1_000_000)
    r = run(setup, st, fx.UNIFORM2)
    for i in range(2):
        assert r.xi_sup[i] <= setup.bounds[i].xi_max


def test_simplex_sums_and_window_play_frequencies(mp_ctrls):
    g = fx.matching_pennies(1.5)
    st = initial_state(g, [[0.6, 0.4], [0.45, 0.55]], list(mp_ctrls))
    cfg = BanditConfig(list(mp_ctrls), epsilon=0.01, steps=100_000, snapshots=40,
                       window=10_000, seed=8)
    r = run(prepare(g, cfg, st), st, fx.UNIFORM2)
    x = r.snapshots[:, :4]
    np.testing.assert_allclose(x[:, :2].sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(x[:, 2:].sum(axis=1), 1.0, atol=1e-12)
    assert r.min_x.min() > 0
    # Every action keeps at least half the exploration floor in every window.
    assert r.action_counts.shape == (10, 4)
    assert r.action_counts.min() >= 0.5 * 0.01 * 10_000
