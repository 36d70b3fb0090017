"""File formats: games, controllers, scenarios, CSV series and output manifests.

Game files are JSON objects::

    {"players": 2, "actions": [2, 2], "encoding": "tensor",
     "utilities": [[...], [...]], "positivity_offset": 0.0}

``utilities[i]`` lists player ``i + 1``'s utilities in row-major order over
``(a_1, ..., a_n)``. Polymatrix games use ``"encoding": "polymatrix"`` and
``"edges": [{"i": 1, "j": 2, "M": [[...], ...]}, ...]`` with 1-based player
indices. Floats are written with the shortest repr that round-trips, so
``read_game(write_game(g))`` reproduces every utility bit for bit.

Trajectory CSV files have a header ``t, x_<i>_<a>..., v_<i>_<c>...,
xi_<i>_<c>...`` (1-based indices) and one row per recorded time; numbers
use 12 significant digits and a '.' decimal point.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import numbers
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import Controller, LearningDynamics, washout_controller
from .errors import ConfigError, GameError
from .game import Game

FAMILIES = ("replicator", "target_gradient", "edl")


# -- generic JSON ---------------------------------------------------------
def load_json(path):
    """Parse a JSON file; syntax errors report ``path:line:column``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"{path}: cannot read ({err.strerror or err})") from err
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from err


def to_jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, numbers.Integral):
        return int(obj)
    if isinstance(obj, complex):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    if isinstance(obj, numbers.Real):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dump_json(obj, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(to_jsonable(obj), indent=2) + "\n", encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"{path}: cannot write ({err.strerror or err})") from err
    return path


# -- field validation -----------------------------------------------------
def _fail(where, msg):
    raise ConfigError(f"field '{where}': {msg}")


def _require(data, key, where):
    if not isinstance(data, dict):
        _fail(where, f"expected an object, got {type(data).__name__}")
    if key not in data:
        _fail(f"{where}.{key}" if where else key, "missing")
    return data[key]


def _number(x, where):
    if isinstance(x, bool) or not isinstance(x, numbers.Real):
        _fail(where, f"expected a number, got {x!r}")
    x = float(x)
    if not math.isfinite(x):
        _fail(where, "must be finite")
    return x


def _integer(x, where, lo=None):
    if isinstance(x, bool) or not isinstance(x, numbers.Integral):
        if isinstance(x, float) and x.is_integer():
            x = int(x)
        else:
            _fail(where, f"expected an integer, got {x!r}")
    x = int(x)
    if lo is not None and x < lo:
        _fail(where, f"must be at least {lo}, got {x}")
    return x


def _numbers(xs, where, length=None):
    if not isinstance(xs, (list, tuple)):
        _fail(where, f"expected a list of numbers, got {type(xs).__name__}")
    if length is not None and len(xs) != length:
        _fail(where, f"expected {length} numbers, got {len(xs)}")
    return np.array([_number(x, f"{where}[{i}]") for i, x in enumerate(xs)], dtype=float)


def _matrix(rows, where, shape):
    if not isinstance(rows, (list, tuple)) or len(rows) != shape[0]:
        got = len(rows) if isinstance(rows, (list, tuple)) else type(rows).__name__
        _fail(where, f"expected {shape[0]} rows, got {got}")
    return np.array([_numbers(r, f"{where}[{a}]", shape[1]) for a, r in enumerate(rows)])


def _profile(data, actions, where):
    if not isinstance(data, (list, tuple)) or len(data) != len(actions):
        _fail(where, f"expected one strategy per player ({len(actions)})")
    out = []
    for i, (x, k) in enumerate(zip(data, actions)):
        x = _numbers(x, f"{where}[{i}]", k)
        if x.min() < 0 or abs(x.sum() - 1.0) > 1e-9:
            _fail(f"{where}[{i}]", "not a probability vector")
        out.append(x)
    return out


# -- games --------------------------------------------------------------
def game_to_dict(game):
    out = {"players": game.n, "actions": list(game.actions), "encoding": game.encoding}
    if game.encoding == "tensor":
        base = game.with_offset(0.0)
        out["utilities"] = [base.tensor(i).reshape(-1).tolist() for i in range(game.n)]
    else:
        out["edges"] = [{"i": e.i + 1, "j": e.j + 1, "M": e.matrix.tolist()} for e in game.edges]
    if game.positivity_offset:
        out["positivity_offset"] = game.positivity_offset
    return out


def game_from_dict(data, where="game"):
    """Build a :class:`Game`; malformed input raises ``ConfigError`` naming the field."""
    n = _integer(_require(data, "players", where), f"{where}.players", lo=1)
    acts = _require(data, "actions", where)
    if not isinstance(acts, list) or len(acts) != n:
        _fail(f"{where}.actions", f"expected {n} action counts")
    actions = tuple(_integer(k, f"{where}.actions[{i}]", lo=2) for i, k in enumerate(acts))
    enc = data.get("encoding", "tensor")
    offset = _number(data.get("positivity_offset", 0.0), f"{where}.positivity_offset")
    if enc == "tensor":
        utils = _require(data, "utilities", where)
        if not isinstance(utils, list) or len(utils) != n:
            _fail(f"{where}.utilities", f"expected {n} utility lists")
        size = int(np.prod(actions))
        ts = [_numbers(u, f"{where}.utilities[{i}]", size) for i, u in enumerate(utils)]
        try:
            return Game(actions, tensors=ts, positivity_offset=offset)
        except GameError as err:
            _fail(f"{where}.utilities", str(err))
    if enc == "polymatrix":
        edges = _require(data, "edges", where)
        if not isinstance(edges, list):
            _fail(f"{where}.edges", "expected a list")
        es = []
        for e, ed in enumerate(edges):
            w = f"{where}.edges[{e}]"
            i = _integer(_require(ed, "i", w), f"{w}.i", lo=1) - 1
            j = _integer(_require(ed, "j", w), f"{w}.j", lo=1) - 1
            if i >= n or j >= n or i == j:
                _fail(w, f"bad edge ({i + 1}, {j + 1})")
            es.append((i, j, _matrix(_require(ed, "M", w), f"{w}.M", (actions[i], actions[j]))))
        try:
            return Game(actions, edges=es, positivity_offset=offset)
        except GameError as err:
            _fail(f"{where}.edges", str(err))
    _fail(f"{where}.encoding", f"expected 'tensor' or 'polymatrix', got {enc!r}")


def read_game(path):
    data = load_json(path)
    try:
        return game_from_dict(data)
    except ConfigError as err:
        raise ConfigError(f"{path}: {err}") from err


def write_game(game, path):
    return dump_json(game_to_dict(game), path)


# -- controllers ------------------------------------------------------------
def controllers_to_dict(controllers):
    return {"controllers": {str(i + 1): c.to_dict() for i, c in enumerate(controllers)}}


def controller_from_dict(data, k, where):
    """Explicit ``{d, E, F, G, H}`` (flat row-major) or ``{"washout": {"gamma", "lambda"}}``."""
    if isinstance(data, dict) and "washout" in data:
        w = data["washout"]
        return washout_controller(
            _number(_require(w, "gamma", f"{where}.washout"), f"{where}.washout.gamma"),
            _number(_require(w, "lambda", f"{where}.washout"), f"{where}.washout.lambda"),
            k,
        )
    d = _integer(_require(data, "d", where), f"{where}.d", lo=0)
    m = k - 1
    mats = {}
    for name, size in (("E", d * d), ("F", d * m), ("G", m * d), ("H", m * m)):
        mats[name] = _numbers(data.get(name, []), f"{where}.{name}", size)
    return Controller(mats["E"].reshape(d, d), mats["F"].reshape(d, m),
                      mats["G"].reshape(m, d), mats["H"].reshape(m, m))


def controllers_from_dict(data, actions, where="controllers"):
    block = data.get("controllers", data) if isinstance(data, dict) else data
    if not isinstance(block, dict):
        _fail(where, "expected an object keyed by 1-based player index")
    out = []
    for i, k in enumerate(actions):
        key = str(i + 1)
        if key not in block:
            _fail(f"{where}.{key}", "missing")
        out.append(controller_from_dict(block[key], k, f"{where}.{key}"))
    return out


def read_controllers(path, actions):
    data = load_json(path)
    try:
        return controllers_from_dict(data, actions)
    except ConfigError as err:
        raise ConfigError(f"{path}: {err}") from err


def write_controllers(controllers, path):
    return dump_json(controllers_to_dict(controllers), path)


# -- CSV --------------------------------------------------------------------
def format_float(x):
    """12 significant digits, locale independent."""
    return format(float(x), ".12g")


def write_csv(path, header, rows):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([format_float(v) for v in row])
    except OSError as err:
        raise ConfigError(f"{path}: cannot write ({err.strerror or err})") from err
    return path


def read_csv(path):
    """Header and a float array from a file written by :func:`write_csv`."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as err:
        raise ConfigError(f"{path}: cannot read ({err.strerror or err})") from err
    header, body = rows[0], rows[1:]
    return header, np.array([[float(v) for v in r] for r in body]).reshape(len(body), len(header))


def write_trajectory_csv(traj, path):
    """One column for time, then every state component in layout order."""
    header = ["t"] + traj.layout.column_names()
    return write_csv(path, header, np.column_stack([traj.t, traj.states]))


# -- manifest ---------------------------------------------------------------
def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, files):
    """List ``files`` (relative to ``out_dir``) with sizes and SHA-256 hashes."""
    out_dir = Path(out_dir)
    entries = []
    for f in sorted({Path(f).resolve() for f in files}):
        entries.append({
            "path": f.relative_to(out_dir.resolve()).as_posix(),
            "bytes": f.stat().st_size,
            "sha256": sha256_file(f),
        })
    return dump_json({"files": entries}, out_dir / "manifest.json")


# -- scenarios ----------------------------------------------------------------
@dataclass
class Scenario:
    """A validated scenario file.

    ``dynamics`` holds one :class:`LearningDynamics` per player (replicator
    without controller when the file gives none). Section dictionaries keep
    the raw values for the command that uses them; every dimension they
    mention has already been checked against the game.
    """

    game: Game
    equilibrium: object = "find"
    guess: list | None = None
    analysis: tuple = ("regularity", "spectrum", "decentralized", "strong", "zero_sum")
    dynamics: list = field(default_factory=list)
    simulate: dict = field(default_factory=dict)
    synthesis: dict = field(default_factory=dict)
    bandit: dict = field(default_factory=dict)
    abr: dict = field(default_factory=dict)
    robustness: dict = field(default_factory=dict)
    output: str | None = None
    seed: int = 0
    base: Path = Path(".")


ANALYSES = ("regularity", "spectrum", "decentralized", "strong", "zero_sum")
SIM_KEYS = {"x0", "v0", "xi0", "T", "dt", "record_every"}
SYN_KEYS = {"family", "orders", "margin", "budget", "starts", "template_starts", "round_size",
            "seed", "template", "target", "reg", "init_scale", "strong_penalty", "verify"}
BANDIT_KEYS = {"variant", "epsilon", "delta", "t0", "beta", "steps", "runs", "radius",
               "init_radius", "x0", "seed", "snapshots", "window"}
ABR_KEYS = {"player", "p_bar", "x0", "z0", "T", "dt", "record_every"}
ROB_KEYS = {"deltas", "samples", "seed", "family"}
TOP_KEYS = {"game", "equilibrium", "guess", "analysis", "dynamics", "controllers", "simulate",
            "synthesis", "bandit", "abr", "robustness", "output", "seed"}


def _section(data, name, keys):
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        _fail(name, "expected an object")
    extra = set(sec) - keys
    if extra:
        _fail(f"{name}.{sorted(extra)[0]}", "unknown key")
    return dict(sec)


def _vectors(data, sizes, where):
    if not isinstance(data, list) or len(data) != len(sizes):
        _fail(where, f"expected {len(sizes)} vectors")
    return [_numbers(x, f"{where}[{i}]", s) for i, (x, s) in enumerate(zip(data, sizes))]


def _dynamics(specs, game, ctrl_file):
    n = game.n
    if specs is None:
        specs = [{}] * n
    if not isinstance(specs, list) or len(specs) != n:
        _fail("dynamics", f"expected one entry per player ({n})")
    out = []
    for i, (spec, k) in enumerate(zip(specs, game.actions)):
        w = f"dynamics[{i}]"
        if not isinstance(spec, dict):
            _fail(w, "expected an object")
        fam = spec.get("family", "replicator")
        if fam not in FAMILIES:
            _fail(f"{w}.family", f"expected one of {FAMILIES}, got {fam!r}")
        ctrl = None
        if "controller" in spec:
            ctrl = controller_from_dict(spec["controller"], k, f"{w}.controller")
        elif ctrl_file is not None and fam != "edl":
            ctrl = ctrl_file[i]
        if fam == "edl":
            if ctrl is not None:
                _fail(f"{w}.controller", "edl dynamics take no controller")
            out.append(LearningDynamics("edl", k))
        else:
            out.append(LearningDynamics(fam, k, ctrl))
    return out


def scenario_from_dict(data, base=Path(".")):
    """Validate a scenario object. Relative paths resolve against ``base``."""
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a JSON object")
    extra = set(data) - TOP_KEYS
    if extra:
        _fail(sorted(extra)[0], "unknown key")
    base = Path(base)
    g = _require(data, "game", "")
    if isinstance(g, str):
        game = read_game(base / g)
    else:
        game = game_from_dict(g)
    acts = game.actions
    xsize = [k for k in acts]
    msize = [k - 1 for k in acts]
    eq = data.get("equilibrium", "find")
    if eq != "find":
        eq = _profile(eq, acts, "equilibrium")
    guess = _profile(data["guess"], acts, "guess") if "guess" in data else None
    analysis = data.get("analysis", list(ANALYSES))
    if not isinstance(analysis, list) or any(a not in ANALYSES for a in analysis):
        _fail("analysis", f"expected a list drawn from {ANALYSES}")
    ctrl_file = None
    if "controllers" in data:
        c = data["controllers"]
        ctrl_file = (read_controllers(base / c, acts) if isinstance(c, str)
                     else controllers_from_dict(c, acts))
    dyn = _dynamics(data.get("dynamics"), game, ctrl_file)
    dsize = [d.d for d in dyn]

    sim = _section(data, "simulate", SIM_KEYS)
    if "x0" in sim:
        sim["x0"] = _profile(sim["x0"], acts, "simulate.x0")
    if "v0" in sim:
        sim["v0"] = _vectors(sim["v0"], msize, "simulate.v0")
    if "xi0" in sim:
        sim["xi0"] = _vectors(sim["xi0"], dsize, "simulate.xi0")
    for key in ("T", "dt"):
        if key in sim and not _number(sim[key], f"simulate.{key}") > 0:
            _fail(f"simulate.{key}", "must be positive")
    if "record_every" in sim:
        sim["record_every"] = _integer(sim["record_every"], "simulate.record_every", lo=1)

    syn = _section(data, "synthesis", SYN_KEYS)
    if "family" in syn and syn["family"] not in FAMILIES:
        _fail("synthesis.family", f"expected one of {FAMILIES}")
    if "orders" in syn:
        o = syn["orders"]
        if not isinstance(o, list) or len(o) != game.n:
            _fail("synthesis.orders", f"expected {game.n} integers")
        syn["orders"] = tuple(_integer(x, f"synthesis.orders[{i}]", lo=0) for i, x in enumerate(o))

    ban = _section(data, "bandit", BANDIT_KEYS)
    if "x0" in ban:
        ban["x0"] = _profile(ban["x0"], acts, "bandit.x0")
    for key in ("delta", "beta"):
        if ban.get(key) is not None:
            ban[key] = _numbers(ban[key], f"bandit.{key}", game.n)
    if any(d.kind != "replicator" for d in dyn) and ban:
        _fail("bandit", "bandit learning needs replicator dynamics for every player")

    abr = _section(data, "abr", ABR_KEYS)
    if abr:
        p = _integer(abr.get("player", 1), "abr.player", lo=1)
        if p > game.n:
            _fail("abr.player", f"no player {p}")
        k = acts[p - 1]
        abr["player"] = p
        abr["p_bar"] = _numbers(_require(abr, "p_bar", "abr"), "abr.p_bar", k)
        if "x0" in abr:
            abr["x0"] = _profile([abr["x0"]], (k,), "abr.x0")[0]
        if "z0" in abr:
            abr["z0"] = _numbers(abr["z0"], "abr.z0", k - 1 + dsize[p - 1])

    rob = _section(data, "robustness", ROB_KEYS)
    if "deltas" in rob:
        rob["deltas"] = _numbers(rob["deltas"], "robustness.deltas").tolist()

    out = data.get("output")
    if out is not None and not isinstance(out, str):
        _fail("output", "expected a path string")
    seed = _integer(data.get("seed", 0), "seed", lo=0)
    return Scenario(game, eq, guess, tuple(analysis), dyn, sim, syn, ban, abr, rob,
                    out, seed, base)


def load_scenario(path):
    path = Path(path)
    data = load_json(path)
    try:
        return scenario_from_dict(data, base=path.parent)
    except ConfigError as err:
        raise ConfigError(f"{path}: {err}") from err
