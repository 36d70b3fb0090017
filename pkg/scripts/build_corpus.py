"""Regenerate the fixture corpus in src/hollab/data.

Games come from hollab.fixtures; expected verdicts are written by hand
from known structural facts and are not computed by the package.
"""

from pathlib import Path

from hollab import fixtures as fx
from hollab.dynamics import Controller
from hollab.game import completely_mixed_equilibrium
from hollab.io import dump_json, write_controllers, write_game
from hollab.linear import linearize_plant
from hollab.synthesis import SynthesisConfig, synthesize, synthesize_strong

DATA = Path(__file__).resolve().parents[1] / "src" / "hollab" / "data"

GAMES = {
    "matching_pennies": fx.matching_pennies(),
    "matching_pennies_offset": fx.matching_pennies(1.5),
    "coordination": fx.coordination(),
    "potential_3x3": fx.potential_3x3(),
    "example1_cyclic": fx.cyclic_game(),
    "example1_pairwise": fx.pairwise_game(),
    "three_player": fx.three_player_template(),
    "zero_sum_polymatrix": fx.zero_sum_polymatrix(),
    "strategic_zero_sum": fx.strategic_zero_sum(),
    "indifferent_player": fx.indifferent_player(),
}

U2 = [[0.5, 0.5], [0.5, 0.5]]
U3 = [[1 / 3] * 3] * 2
U4 = [[0.25] * 4] * 4

EXPECTED = {
    "matching_pennies": {"equilibrium": U2, "regular": True,
                         "strong": {"replicator": True, "target_gradient": True},
                         "strategic_zero_sum": True},
    "coordination": {"equilibrium": U2, "regular": True,
                     "strong": {"replicator": False, "target_gradient": False},
                     "strategic_zero_sum": False},
    "potential_3x3": {"equilibrium": [list(x) for x in fx.POTENTIAL_3X3_NE], "regular": True,
                      "strong": {"target_gradient": True},
                      "target_gradient_eigenvalues": [[1.1721, 0.2011], [1.1721, -0.2011],
                                                      [-1.1721, 0.2011], [-1.1721, -0.2011]]},
    "example1_cyclic": {"equilibrium": U4, "regular": True,
                        "replicator_has_real_eigenvalue": False},
    "example1_pairwise": {"equilibrium": U4, "regular": True,
                          "replicator_has_real_positive_eigenvalue": True},
    "three_player": {"equilibrium": [[0.4, 0.6], [0.3, 0.7], [0.55, 0.45]], "regular": True},
    "zero_sum_polymatrix": {"equilibrium": U4, "regular": True,
                            "strong": {"target_gradient": True}},
    "strategic_zero_sum": {"equilibrium": U3, "regular": True,
                           "strong": {"target_gradient": True}, "strategic_zero_sum": True},
    "indifferent_player": {"equilibrium": U2, "regular": False},
}


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    for name, g in GAMES.items():
        write_game(g, DATA / f"{name}.json")
    for name, exp in EXPECTED.items():
        dump_json(exp, DATA / f"{name}.expected.json")

    mp = GAMES["matching_pennies"]
    eq = completely_mixed_equilibrium(mp, U2)
    plant = linearize_plant(mp, eq, "replicator")
    cfg = SynthesisConfig(orders=(1, 1))
    write_controllers(synthesize(plant, cfg).controllers, DATA / "mp_controllers.json")
    write_controllers(synthesize_strong(plant, cfg).controllers, DATA / "mp_strong_controllers.json")

    washout = [{"family": "replicator", "controller": {"washout": {"gamma": 20.0, "lambda": -1.0}}},
               {"family": "replicator", "controller": {"washout": {"gamma": 1.0, "lambda": 50.0}}}]
    dump_json({"game": "coordination.json", "equilibrium": U2, "dynamics": washout,
               "simulate": {"x0": [[0.75, 0.25], [0.75, 0.25]], "T": 200.0, "dt": 0.01,
                            "record_every": 10}},
              DATA / "scenario_noabr_simulate.json")
    dump_json({"game": "coordination.json", "equilibrium": U2, "dynamics": washout,
               "abr": {"player": 1, "p_bar": [1.0, 0.0], "x0": [0.5, 0.5], "T": 4.0,
                       "dt": 0.001, "record_every": 10}},
              DATA / "scenario_noabr_abr.json")
    dump_json({"game": "matching_pennies.json", "equilibrium": U2,
               "synthesis": {"family": "replicator", "orders": [1, 1], "seed": 0,
                             "verify": {"radius": 0.01, "samples": 20, "T": 200.0}}},
              DATA / "scenario_mp_synthesize.json")
    dump_json({"game": "matching_pennies.json", "equilibrium": U2,
               "controllers": "mp_controllers.json",
               "robustness": {"deltas": [0.0, 0.02], "samples": 20, "seed": 0}},
              DATA / "scenario_mp_robustness.json")
    dump_json({"game": "example1_cyclic.json", "equilibrium": U4,
               "synthesis": {"family": "replicator", "seed": 0}},
              DATA / "scenario_cy_synthesize.json")
    dump_json({"game": "matching_pennies_offset.json", "equilibrium": U2,
               "controllers": "mp_strong_controllers.json",
               "bandit": {"variant": "higher", "epsilon": 0.01, "t0": 10000, "steps": 100000,
                          "runs": 100, "radius": 0.1, "init_radius": 0.2, "seed": 0}},
              DATA / "scenario_mp_bandit.json")
    unstable = Controller([[0.5]], [[1.0]], [[0.2]], [[0.1]]).to_dict()
    dump_json({"game": "matching_pennies_offset.json", "equilibrium": U2,
               "dynamics": [{"family": "replicator", "controller": unstable}] * 2,
               "bandit": {"variant": "modified", "epsilon": 0.01, "t0": 1000, "steps": 100000,
                          "runs": 20, "seed": 0}},
              DATA / "scenario_mp_bandit_modified.json")


if __name__ == "__main__":
    main()
