"""Command-line entry point ``hollab``.

Every command writes its outputs plus ``manifest.json`` (SHA-256 of every
file) into ``--out``. Verdicts live in the JSON payload; the exit code is
nonzero only for invalid input (2) or a failed computation (1).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bandit import BanditConfig, initial_state, monte_carlo, prepare
from .dynamics import LearningDynamics, abr_probe, closed_loop, integrate
from .errors import ConfigError, HollabError
from .game import (
    check_regularity,
    completely_mixed_equilibrium,
    find_completely_mixed_ne,
    verify_ne,
)
from .io import (
    Scenario,
    dump_json,
    load_scenario,
    read_game,
    write_controllers,
    write_csv,
    write_manifest,
    write_trajectory_csv,
)
from .linear import (
    decentralized_stabilizability,
    linearize_plant,
    spectral_report,
    strategic_zero_sum_check,
    strong_stabilizability,
)
from .synthesis import (
    SynthesisConfig,
    assemble_closed_loop_matrix,
    robustness_sweep,
    synthesize,
    synthesize_strong,
    verify_nonlinear,
)

log = logging.getLogger("hollab")

STANDARD_FAMILIES = ("replicator", "target_gradient")
IMAG_TOL = 1e-6


def _setup_logging():
    level = os.environ.get("HOLLAB_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


# -- shared helpers ----------------------------------------------------------
def _scenario(args):
    if args.scenario:
        sc = load_scenario(args.scenario)
        if args.game:
            sc.game = read_game(args.game)
            if sc.game.actions != tuple(d.k for d in sc.dynamics):
                raise ConfigError("--game does not match the scenario's dynamics dimensions")
    elif args.game:
        game = read_game(args.game)
        sc = Scenario(game, dynamics=[LearningDynamics("replicator", k) for k in game.actions])
    else:
        raise ConfigError("give --game or --scenario")
    if args.seed is not None:
        sc.seed = args.seed
        for sec in (sc.synthesis, sc.bandit, sc.robustness):
            sec.pop("seed", None)
    return sc


def _seed(sc, section):
    return int(section.get("seed", sc.seed))


def _out_dir(args, sc):
    if args.out:
        out = Path(args.out)
    elif sc.output:
        out = sc.base / sc.output
    else:
        out = Path("hollab-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _equilibrium(sc):
    if sc.equilibrium == "find":
        guess = sc.guess or [np.full(k, 1.0 / k) for k in sc.game.actions]
        return find_completely_mixed_ne(sc.game, guess), "find"
    return completely_mixed_equilibrium(sc.game, sc.equilibrium), "given"


def _eq_dict(eq, source):
    return {
        "source": source,
        "profile": [x.tolist() for x in eq.profile],
        "alphas": eq.alphas.tolist(),
        "residual": eq.residual,
        "iterations": eq.iterations,
    }


def _spectrum(plant):
    rep = spectral_report(plant.K)
    d = rep.to_dict()
    ev = rep.eigenvalues
    real = np.abs(ev.imag) < IMAG_TOL
    d["has_real_eigenvalue"] = bool(real.any())
    d["has_real_positive_eigenvalue"] = bool(np.any(real & (ev.real > IMAG_TOL)))
    return d


def _guarded(fn, *a):
    try:
        return fn(*a).to_dict()
    except HollabError as err:
        return {"error": str(err)}


# -- commands -----------------------------------------------------------------
def cmd_analyze(args):
    sc = _scenario(args)
    out = _out_dir(args, sc)
    game = sc.game
    eq, source = _equilibrium(sc)
    ne = verify_ne(game, eq.profile)
    reg = check_regularity(game, eq)
    report = {
        "game": {"players": game.n, "actions": list(game.actions), "encoding": game.encoding},
        "equilibrium": dict(_eq_dict(eq, source), is_ne=ne.is_ne,
                            completely_mixed=ne.is_completely_mixed),
    }
    if "regularity" in sc.analysis:
        report["regularity"] = dataclasses.asdict(reg)
    plants = {f: linearize_plant(game, eq, f) for f in STANDARD_FAMILIES}
    if "spectrum" in sc.analysis:
        report["spectrum"] = {f: _spectrum(p) for f, p in plants.items()}
    if "decentralized" in sc.analysis:
        report["decentralized"] = {f: _guarded(decentralized_stabilizability, p)
                                   for f, p in plants.items()}
    if "strong" in sc.analysis:
        report["strong"] = {f: _guarded(strong_stabilizability, p) for f, p in plants.items()}
    if "zero_sum" in sc.analysis and game.n == 2:
        v = strategic_zero_sum_check(game)
        report["strategic_zero_sum"] = {"equivalent": v.equivalent, "alpha": v.alpha,
                                        "beta": v.beta, "residual": v.residual}
    path = dump_json(report, out / "analysis.json")
    write_manifest(out, [path])
    print(json.dumps({"regular": reg.regular, "output": str(path)}))
    return 0


def _synth(args, strong):
    sc = _scenario(args)
    out = _out_dir(args, sc)
    eq, source = _equilibrium(sc)
    syn = dict(sc.synthesis)
    family = syn.pop("family", "replicator")
    verify = syn.pop("verify", None)
    syn["seed"] = _seed(sc, syn)
    cfg = SynthesisConfig(**syn, jobs=args.jobs)
    plant = linearize_plant(sc.game, eq, family)
    res = (synthesize_strong if strong else synthesize)(plant, cfg)
    report = res.to_dict()
    report["family"] = family
    report["equilibrium"] = _eq_dict(eq, source)
    files = []
    if res.success:
        files.append(write_controllers(res.controllers, out / "controllers.json"))
        A = assemble_closed_loop_matrix(plant, res.controllers)
        report["closed_loop"] = spectral_report(A).to_dict()
        if verify is not None:
            v = verify if isinstance(verify, dict) else {}
            dyn = [LearningDynamics(family, k, c) for k, c in zip(sc.game.actions, res.controllers)]
            vr = verify_nonlinear(sc.game, eq, dyn, ball_radius=v.get("radius", 0.01),
                                  samples=v.get("samples", 20), T=v.get("T", 200.0),
                                  seed=syn["seed"])
            report["verification"] = {"converged_fraction": vr.converged_fraction,
                                      "max_final_error": vr.max_final_error, "dt": vr.dt,
                                      "diverged": vr.diverged}
    name = "synthesis_strong.json" if strong else "synthesis.json"
    files.append(dump_json(report, out / name))
    write_manifest(out, files)
    print(json.dumps({"success": res.success, "abscissa": res.abscissa, "reason": res.reason}))
    return 0


def cmd_synthesize(args):
    return _synth(args, strong=False)


def cmd_synthesize_strong(args):
    return _synth(args, strong=True)


def cmd_simulate(args):
    sc = _scenario(args)
    out = _out_dir(args, sc)
    sim = sc.simulate
    if "x0" not in sim:
        raise ConfigError("field 'simulate.x0': missing")
    cl = closed_loop(sc.game, sc.dynamics)
    state0 = cl.layout.pack(sim["x0"], sim.get("v0"), sim.get("xi0"))
    traj = integrate(cl, state0, float(sim.get("dt", 0.01)), float(sim.get("T", 200.0)),
                     record_every=sim.get("record_every", 10))
    files = [write_trajectory_csv(traj, out / "trajectory.csv")]
    summary = {"meta": traj.meta, "final": traj.final.tolist(),
               "columns": ["t"] + cl.layout.column_names()}
    try:
        eq, source = _equilibrium(sc)
    except HollabError as err:
        summary["equilibrium"] = {"error": str(err)}
    else:
        dist = traj.distance(eq.profile)
        files.append(write_csv(out / "distance.csv", ["t", "distance"],
                               np.column_stack([traj.t, dist])))
        summary["equilibrium"] = _eq_dict(eq, source)
        summary["final_distance"] = float(dist[-1])
        summary["initial_distance"] = float(dist[0])
    files.append(dump_json(summary, out / "simulation.json"))
    write_manifest(out, files)
    print(json.dumps({"final_distance": summary.get("final_distance")}))
    return 0


def cmd_bandit(args):
    sc = _scenario(args)
    out = _out_dir(args, sc)
    b = dict(sc.bandit)
    eq, source = _equilibrium(sc)
    ctrls = [d.controller for d in sc.dynamics]
    cfg = BanditConfig(
        controllers=ctrls,
        variant=b.get("variant", "higher"),
        epsilon=float(b.get("epsilon", 0.01)),
        delta=b.get("delta"),
        t0=int(b.get("t0", 0)),
        beta=b.get("beta"),
        steps=int(b.get("steps", 100_000)),
        radius=float(b.get("radius", 0.1)),
        snapshots=int(b.get("snapshots", 60)),
        window=int(b.get("window", 10_000)),
        seed=_seed(sc, b),
    )
    x0 = b.get("x0")
    st = initial_state(sc.game, x0 or eq.profile, cfg.controllers, cfg.t0)
    setup = prepare(sc.game, cfg, st)
    mc = monte_carlo(setup, eq.profile, int(b.get("runs", 100)), x0=x0,
                     init_radius=float(b.get("init_radius", 0.2)), parallelism=args.jobs)
    report = mc.summary()
    report.update(
        variant=setup.variant,
        epsilon=setup.epsilon,
        t0=setup.t0,
        steps=setup.steps,
        delta=setup.delta.tolist(),
        delta_bar=setup.delta_bar.tolist(),
        beta=setup.beta.tolist(),
        L=setup.L.tolist(),
        bounds=[dataclasses.asdict(bd) for bd in setup.bounds],
        equilibrium=_eq_dict(eq, source),
    )
    files = [dump_json(report, out / "bandit_report.json")]
    rows = [[r, run.initial_distance, run.final_distance, float(run.converged), *run.xi_sup,
             *run.min_x] for r, run in enumerate(mc.runs)]
    n = sc.game.n
    header = (["run", "initial_distance", "final_distance", "converged"]
              + [f"xi_sup_{i + 1}" for i in range(n)] + [f"min_x_{i + 1}" for i in range(n)])
    files.append(write_csv(out / "bandit_runs.csv", header, rows))
    first = mc.runs[0]
    cl_cols = closed_loop(sc.game, sc.dynamics).layout.column_names()
    files.append(write_csv(out / "bandit_run0_snapshots.csv", ["step"] + cl_cols,
                           np.column_stack([first.times, first.snapshots])))
    acts = [f"count_{i + 1}_{a + 1}" for i, k in enumerate(sc.game.actions) for a in range(k)]
    pays = [f"payoff_{i + 1}" for i in range(n)]
    win = np.arange(len(first.action_counts))
    files.append(write_csv(out / "bandit_run0_windows.csv", ["window"] + acts + pays,
                           np.column_stack([win, first.action_counts, first.payoff_trace])))
    write_manifest(out, files)
    print(json.dumps({"converged_fraction": mc.converged_fraction, "ci": list(mc.ci)}))
    return 0


def cmd_abr(args):
    sc = _scenario(args)
    out = _out_dir(args, sc)
    a = sc.abr
    if not a:
        raise ConfigError("field 'abr': missing")
    p = a["player"]
    dyn = sc.dynamics[p - 1]
    k = dyn.k
    res = abr_probe(dyn, a["p_bar"], a.get("x0", np.full(k, 1.0 / k)), a.get("z0"),
                    T=float(a.get("T", 100.0)), dt=float(a.get("dt", 1e-2)),
                    record_every=int(a.get("record_every", 1)))
    xs = res.trajectory.states[:, :k]
    files = [write_csv(out / "abr_gap.csv", ["t", "gap"] + [f"x_{p}_{j + 1}" for j in range(k)],
                       np.column_stack([res.t, res.gap, xs]))]
    report = {"player": p, "p_bar": a["p_bar"], "asymptotic_gap": res.asymptotic_gap,
              "x_final": res.x_final, "diverged": res.diverged}
    files.append(dump_json(report, out / "abr.json"))
    write_manifest(out, files)
    print(json.dumps({"asymptotic_gap": res.asymptotic_gap, "diverged": res.diverged}))
    return 0


def cmd_robustness(args):
    sc = _scenario(args)
    out = _out_dir(args, sc)
    r = sc.robustness
    eq, source = _equilibrium(sc)
    ctrls = [d.ctrl for d in sc.dynamics]
    family = r.get("family", sc.dynamics[0].kind)
    rows = robustness_sweep(sc.game, eq, ctrls, r.get("deltas", [0.0, 0.02]),
                            samples_per_delta=int(r.get("samples", 20)), seed=_seed(sc, r),
                            family=family, jobs=args.jobs)
    report = {"family": family, "equilibrium": _eq_dict(eq, source),
              "rows": [row.to_dict() for row in rows]}
    files = [dump_json(report, out / "robustness.json")]
    write_manifest(out, files)
    print(json.dumps({"stable_fraction": [row.stable_fraction for row in rows]}))
    return 0


COMMANDS = {
    "analyze": (cmd_analyze, "regularity, spectra and stabilizability verdicts"),
    "synthesize": (cmd_synthesize, "search for stabilizing higher-order controllers"),
    "synthesize-strong": (cmd_synthesize_strong, "as synthesize, with internally stable controllers"),
    "simulate": (cmd_simulate, "integrate the closed loop from a scenario"),
    "bandit": (cmd_bandit, "Monte Carlo runs of bandit learning"),
    "abr": (cmd_abr, "drive one player with a constant payoff vector"),
    "robustness": (cmd_robustness, "re-check stability on perturbed games"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="hollab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hollab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (fn, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--game", help="game JSON file")
        p.add_argument("--scenario", help="scenario JSON file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override every seed in the scenario")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.set_defaults(func=fn)
    return parser


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"hollab {args.command}: error: {err}", file=sys.stderr)
        return 2
    except (HollabError, ValueError) as err:
        print(f"hollab {args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
