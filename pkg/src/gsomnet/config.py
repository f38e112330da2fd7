"""Scenario files: loading, validation and canonical serialization.

A scenario is a JSON object with these blocks (only ``model`` is required;
each subcommand checks for the blocks it needs)::

    {
      "model":    {"family": "greenshields", "w_min": 0.5, "w_max": 2.0, "rho_max": 1.0},
      "junction": {"n": 2, "m": 1, "p": [0.5, 0.5], "A": [[1.0, 1.0]], "mode": "adaptive",
                   "states": [[rho, w], ...]},
      "roads":    [{"side": "in", "length": 1.0, "profile": [[x, rho, w], ...]}, ...],
      "run":      {"t_end": 4.0, "eps_fan": 0.05, "eps_0": 0.01, "max_events": 1000000,
                   "max_fronts": 100000, "snapshot_times": [], "seed": 0},
      "riemann":  {"left": [rho, w], "right": [rho, w]}
    }

Roads are listed incoming first, then outgoing, matching ``junction.n`` and
``junction.m``. A profile row ``[x, rho, w]`` holds from ``x`` to the next
row; incoming roads span ``[-length, 0]`` and outgoing roads ``[0, length]``.
``junction.states`` is optional: without it the junction problem uses the
road states next to the junction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .fundamental import FluxModel, RoadState, build_model
from .junction import MODES, JunctionSpec, JunctionSpecError
from .wft import INCOMING, OUTGOING, Caps, RoadSpec

MODEL_DEFAULTS = {"family": "greenshields", "w_min": 0.5, "w_max": 2.0, "rho_max": 1.0}
RUN_DEFAULTS = {
    "t_end": 4.0,
    "eps_fan": 0.05,
    "eps_0": 0.01,
    "max_events": 1_000_000,
    "max_fronts": 100_000,
    "snapshot_times": [],
    "seed": 0,
}


class ConfigError(ValueError):
    """Every problem found in a scenario file, each prefixed by its field path."""

    def __init__(self, errors: list[str]):
        super().__init__("\n".join(errors))
        self.errors = errors


@dataclass
class ScenarioConfig:
    raw: dict
    model: FluxModel
    spec: JunctionSpec | None = None
    roads: list[RoadSpec] = field(default_factory=list)
    profiles: list[list[tuple[float, float, float]]] = field(default_factory=list)
    junction_states: list[RoadState] | None = None
    run: dict = field(default_factory=lambda: dict(RUN_DEFAULTS))
    riemann: tuple[RoadState, RoadState] | None = None

    @property
    def caps(self) -> Caps:
        return Caps(int(self.run["max_events"]), int(self.run["max_fronts"]))

    def states_at_junction(self) -> list[RoadState]:
        if self.junction_states is not None:
            return list(self.junction_states)
        out = []
        for road, rows in zip(self.roads, self.profiles):
            rows = sorted(rows, key=lambda r: r[0])
            inside = [r for r in rows if road.a <= r[0] < road.b] or rows[:1]
            x, rho, w = inside[-1] if road.side == INCOMING else inside[0]
            out.append(RoadState(rho, w))
        return out


def _num(value, path: str, errors: list[str], positive: bool = False, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append(f"{path}: expected a number, got {type(value).__name__}")
        return None
    if not math.isfinite(value):
        errors.append(f"{path}: must be finite")
        return None
    if integer and int(value) != value:
        errors.append(f"{path}: expected an integer")
        return None
    if positive and value <= 0:
        errors.append(f"{path}: must be positive")
        return None
    return int(value) if integer else float(value)


def _pair(value, path: str, errors: list[str]):
    if not isinstance(value, list) or len(value) != 2:
        errors.append(f"{path}: expected [rho, w]")
        return None
    a = _num(value[0], f"{path}[0]", errors)
    b = _num(value[1], f"{path}[1]", errors)
    return None if a is None or b is None else (a, b)


def _state(model: FluxModel | None, value, path: str, errors: list[str]) -> RoadState | None:
    pair = _pair(value, path, errors)
    if pair is None or model is None:
        return None
    if not model.is_valid(*pair):
        errors.append(f"{path}: state (rho={pair[0]!r}, w={pair[1]!r}) outside the model domain")
        return None
    return RoadState(*pair)


def normalize(raw: dict) -> dict:
    """Fill defaults and coerce numbers, keeping unknown-free canonical structure."""
    out = {"model": {**MODEL_DEFAULTS, **raw.get("model", {})}}
    for key in ("w_min", "w_max", "rho_max"):
        if isinstance(out["model"][key], (int, float)) and not isinstance(out["model"][key], bool):
            out["model"][key] = float(out["model"][key])
    if "junction" in raw:
        j = dict(raw["junction"])
        j.setdefault("mode", "adaptive")
        out["junction"] = j
    if "roads" in raw:
        roads = []
        for r in raw["roads"]:
            r = dict(r) if isinstance(r, dict) else r
            if isinstance(r, dict):
                r.setdefault("length", 1.0)
            roads.append(r)
        out["roads"] = roads
    if "run" in raw or "roads" in raw:
        out["run"] = {**RUN_DEFAULTS, **raw.get("run", {})}
    if "riemann" in raw:
        out["riemann"] = raw["riemann"]
    return _floats(out)


def _floats(obj):
    # integers stay integers only where they count things
    if isinstance(obj, dict):
        return {k: (v if k in ("n", "m", "max_events", "max_fronts", "seed") else _floats(v)) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_floats(v) for v in obj]
    if isinstance(obj, int) and not isinstance(obj, bool):
        return float(obj)
    return obj


def validate(raw: dict) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig`, collecting every problem before failing."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: expected an object"])
    known = {"model", "junction", "roads", "run", "riemann"}
    for key in sorted(set(raw) - known):
        errors.append(f"{key}: unknown block")
    blocks = {}
    for key in sorted(known & set(raw)):
        want = list if key == "roads" else dict
        if isinstance(raw[key], want):
            blocks[key] = raw[key]
        else:
            errors.append(f"{key}: expected {'a list' if want is list else 'an object'}")
    cfg_raw = normalize(blocks)

    model = None
    mp = cfg_raw["model"]
    for key in ("w_min", "w_max", "rho_max"):
        _num(mp[key], f"model.{key}", errors, positive=True)
    if all(not e.startswith("model") for e in errors):
        try:
            model = build_model(mp)
        except ValueError as exc:
            errors.append(f"model.family: {exc}")
        if model is not None and not model.w_min <= model.w_max:
            errors.append("model: w_min must not exceed w_max")

    spec = None
    jstates = None
    if "junction" in cfg_raw:
        j = cfg_raw["junction"]
        n = _num(j.get("n"), "junction.n", errors, positive=True, integer=True)
        m = _num(j.get("m"), "junction.m", errors, positive=True, integer=True)
        p = j.get("p")
        A = j.get("A")
        ok = n is not None and m is not None
        if not isinstance(p, list):
            errors.append("junction.p: expected a list")
            ok = False
        else:
            for k, v in enumerate(p):
                ok &= _num(v, f"junction.p[{k}]", errors) is not None
        if not isinstance(A, list) or not all(isinstance(row, list) for row in A):
            errors.append("junction.A: expected a list of rows")
            ok = False
        else:
            for r_, row in enumerate(A):
                for c_, v in enumerate(row):
                    ok &= _num(v, f"junction.A[{r_}][{c_}]", errors) is not None
        if j.get("mode") not in MODES:
            errors.append(f"junction.mode: must be one of {list(MODES)}")
            ok = False
        if ok:
            try:
                spec = JunctionSpec(n, m, tuple(p), tuple(tuple(row) for row in A), j["mode"])
            except JunctionSpecError as exc:
                errors.extend(f"junction: {msg}" for msg in exc.problems)
        if "states" in j:
            st = j["states"]
            if not isinstance(st, list):
                errors.append("junction.states: expected a list")
            else:
                if n is not None and m is not None and len(st) != n + m:
                    errors.append(f"junction.states: expected {n + m} states, got {len(st)}")
                jstates = [_state(model, v, f"junction.states[{k}]", errors) for k, v in enumerate(st)]

    roads: list[RoadSpec] = []
    profiles = []
    if "roads" in cfg_raw:
        rl = cfg_raw["roads"]
        if not isinstance(rl, list):
            errors.append("roads: expected a list")
            rl = []
        if spec is None and "junction" not in cfg_raw:
            errors.append("roads: a junction block is required with roads")
        if spec is not None and len(rl) != spec.n + spec.m:
            errors.append(f"roads: expected {spec.n + spec.m} roads (n + m), got {len(rl)}")
        for k, r in enumerate(rl):
            path = f"roads[{k}]"
            if not isinstance(r, dict):
                errors.append(f"{path}: expected an object")
                continue
            side = r.get("side")
            if side not in (INCOMING, OUTGOING):
                errors.append(f"{path}.side: must be 'in' or 'out'")
                side = None
            elif spec is not None:
                want = INCOMING if k < spec.n else OUTGOING
                if side != want:
                    errors.append(f"{path}.side: expected '{want}' (incoming roads come first)")
            length = _num(r.get("length"), f"{path}.length", errors, positive=True)
            road = RoadSpec(k, side or INCOMING, length or 1.0)
            rows = r.get("profile")
            good_rows = []
            if not isinstance(rows, list) or not rows:
                errors.append(f"{path}.profile: expected a non-empty list of [x, rho, w]")
            else:
                for i, row in enumerate(rows):
                    rp = f"{path}.profile[{i}]"
                    if not isinstance(row, list) or len(row) != 3:
                        errors.append(f"{rp}: expected [x, rho, w]")
                        continue
                    x = _num(row[0], f"{rp}[0]", errors)
                    st = _state(model, row[1:], rp, errors)
                    if x is None or st is None:
                        continue
                    if side is not None and length is not None and not (road.a - 1e-12 <= x <= road.b + 1e-12):
                        errors.append(f"{rp}[0]: x={x!r} outside the road [{road.a!r}, {road.b!r}]")
                        continue
                    good_rows.append((x, st.rho, st.w))
            roads.append(road)
            profiles.append(good_rows)

    run = dict(RUN_DEFAULTS)
    if "run" in cfg_raw:
        rr = cfg_raw["run"]
        for key in ("t_end", "eps_fan", "eps_0"):
            v = _num(rr.get(key), f"run.{key}", errors, positive=True)
            if v is not None:
                run[key] = v
        for key in ("max_events", "max_fronts"):
            v = _num(rr.get(key), f"run.{key}", errors, positive=True, integer=True)
            if v is not None:
                run[key] = v
        v = _num(rr.get("seed"), "run.seed", errors, integer=True)
        if v is not None:
            run["seed"] = v
        st = rr.get("snapshot_times")
        if not isinstance(st, list):
            errors.append("run.snapshot_times: expected a list")
        else:
            times = [_num(t, f"run.snapshot_times[{k}]", errors) for k, t in enumerate(st)]
            run["snapshot_times"] = [t for t in times if t is not None]

    riemann = None
    if "riemann" in cfg_raw:
        rb = cfg_raw["riemann"]
        if not isinstance(rb, dict):
            errors.append("riemann: expected an object")
        else:
            left = _state(model, rb.get("left"), "riemann.left", errors)
            right = _state(model, rb.get("right"), "riemann.right", errors)
            if left is not None and right is not None:
                riemann = (left, right)

    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(cfg_raw, model, spec, roads, profiles, jstates, run, riemann)


def parse(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{source}:{exc.lineno}:{exc.colno}: parse error: {exc.msg}"]) from None
    return validate(raw)


def load(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    return parse(path.read_text(encoding="utf-8"), str(path))


def dumps(cfg: ScenarioConfig | dict) -> str:
    """Canonical text: sorted keys, two-space indent, trailing newline."""
    raw = cfg.raw if isinstance(cfg, ScenarioConfig) else normalize(cfg)
    return json.dumps(raw, sort_keys=True, indent=2) + "\n"
