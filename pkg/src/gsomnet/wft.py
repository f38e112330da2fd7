"""Wave-front tracking on a network made of one junction and its roads.

Incoming roads occupy ``[-L, 0]`` and outgoing roads ``[0, L]``; the junction
sits at ``x = 0`` on every road. Far ends are transparent: the boundary state
is extended as a constant, so no wave enters from outside and fronts that
reach a far end leave the domain.

The solution is piecewise constant. Every discontinuity is a :class:`Front`
moving at constant speed. Events are front collisions inside a road,
front arrivals at the junction and front exits at far ends. Collisions are
resolved with the road Riemann solver over the outermost states; arrivals
trigger a new junction solve whose trace states emit waves on every road
whose trace changed. Rarefactions are split into fragments of density jump
at most ``eps_fan`` travelling at their Rankine-Hugoniot speeds.

Every front ever created is kept in ``genealogy`` with its parents and the
way it was born, so backward trees can be rebuilt after the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .fundamental import DomainError, FluxModel, RoadState
from .junction import JunctionSolution, JunctionSpec, aprsom_solve
from .riemann import CONTACT, RAREFACTION, RHO, SHOCK, STATE_TOL, Wave, solve_riemann

INCOMING = "in"
OUTGOING = "out"

FRAGMENT = "rarefaction-fragment"

ORIGIN_INITIAL = "initial"
ORIGIN_INTERACTION = "interaction"
ORIGIN_JUNCTION = "junction"

TIME_TOL = 1e-12
POS_TOL = 1e-11
SPEED_REL_TOL = 1e-10


class WFTInvariantError(RuntimeError):
    """An internal invariant of the front-tracking construction was violated."""


@dataclass
class RoadSpec:
    index: int
    side: str
    length: float = 1.0

    @property
    def a(self) -> float:
        return -self.length if self.side == INCOMING else 0.0

    @property
    def b(self) -> float:
        return 0.0 if self.side == INCOMING else self.length


@dataclass
class Front:
    id: int
    road: int
    family: str
    kind: str
    x0: float
    t0: float
    speed: float
    left: RoadState
    right: RoadState
    parents: tuple[int, ...]
    origin: str
    vacuum: bool = False
    t_end: float | None = None
    fate: str | None = None

    def position(self, t: float) -> float:
        return self.x0 + self.speed * (t - self.t0)

    def flux_jump(self, model: FluxModel) -> float:
        """delta_+ Q = Q(right) - Q(left)."""
        return model.flux(self.right.rho, self.right.w) - model.flux(self.left.rho, self.left.w)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "road": self.road,
            "family": self.family,
            "kind": self.kind,
            "x0": self.x0,
            "t0": self.t0,
            "speed": self.speed,
            "left": [self.left.rho, self.left.w],
            "right": [self.right.rho, self.right.w],
            "parents": list(self.parents),
            "origin": self.origin,
            "vacuum": self.vacuum,
            "t_end": self.t_end,
            "fate": self.fate,
        }


@dataclass
class EventRecord:
    time: float
    kind: str  # collision | junction | exit | start
    road: int | None
    retired: tuple[int, ...]
    created: tuple[int, ...]


@dataclass
class JunctionEvent:
    time: float
    arrivals: tuple[int, ...]
    states_before: tuple[RoadState, ...]
    states_after: tuple[RoadState, ...]
    solution: JunctionSolution
    emitted: tuple[int, ...]


@dataclass
class Caps:
    max_events: int = 1_000_000
    max_fronts: int = 100_000


@dataclass
class MassLedger:
    initial: float = 0.0
    final: float = 0.0
    boundary_net_inflow: float = 0.0
    junction_imbalance: float = 0.0  # largest |sum q_in - sum q_out| over junction solves

    @property
    def residual(self) -> float:
        return self.final - self.initial - self.boundary_net_inflow


Piece = tuple[float, RoadState]


# ---------------------------------------------------------------------------
# initial data


def _dedupe(pieces: list[Piece]) -> list[Piece]:
    out: list[Piece] = []
    for x, u in pieces:
        if out and abs(out[-1][1].rho - u.rho) < STATE_TOL and abs(out[-1][1].w - u.w) < STATE_TOL:
            continue
        out.append((x, u))
    return out


def _relabel_vacuum(pieces: list[Piece]) -> list[Piece]:
    out = []
    for k, (x, u) in enumerate(pieces):
        if u.rho < STATE_TOL and out:
            u = RoadState(0.0, out[-1][1].w)
        out.append((x, u))
    return out


def sample_initial(
    model: FluxModel,
    road: RoadSpec,
    profile: Sequence[tuple[float, float, float]] | Callable[[float], tuple[float, float]],
    eps0: float = 0.01,
    n_samples: int = 2001,
) -> list[Piece]:
    """Piecewise-constant data on ``road`` as ``[(x_start, state), ...]``.

    ``profile`` is either a list of breakpoints ``(x, rho, w)`` meaning the
    state holds from ``x`` to the next breakpoint, or a callable ``x -> (rho, w)``.
    A callable is sampled on ``n_samples`` points and a new piece starts when
    rho or w moves at least ``eps0`` away from the current piece value; each
    piece takes the sampled value at its start, so the staircase never has
    more variation than the samples.
    """
    a, b = road.a, road.b
    pieces: list[Piece] = []
    if callable(profile):
        for k in range(n_samples):
            x = a + (b - a) * k / (n_samples - 1)
            rho, w = profile(x)
            model.check_state(rho, w)
            u = RoadState(float(rho), float(w))
            if not pieces:
                pieces.append((a, u))
                continue
            cur = pieces[-1][1]
            if abs(u.rho - cur.rho) >= eps0 or abs(u.w - cur.w) >= eps0:
                pieces.append((x, u))
    else:
        rows = sorted(profile, key=lambda r: r[0])
        if not rows:
            raise DomainError(f"road {road.index}: empty initial profile")
        for k, (x, rho, w) in enumerate(rows):
            model.check_state(rho, w)
            x = float(x)
            if k == 0:
                x = a
            elif not (a < x < b):
                continue
            pieces.append((x, RoadState(float(rho), float(w))))
    return _dedupe(_relabel_vacuum(pieces))


def fan_discretize(model: FluxModel, wave: Wave, eps_fan: float) -> list[Wave]:
    """Split a rarefaction into fragments with density jump at most ``eps_fan``."""
    if wave.kind != RAREFACTION:
        raise ValueError("only rarefactions are discretized")
    rl, rr, w = wave.left.rho, wave.right.rho, wave.left.w
    n = max(1, math.ceil(abs(rl - rr) / eps_fan - 1e-9))
    rhos = [rl + (rr - rl) * k / n for k in range(n + 1)]
    rhos[0], rhos[-1] = rl, rr
    out = []
    for k in range(n):
        left = wave.left if k == 0 else RoadState(rhos[k], w)
        right = wave.right if k == n - 1 else RoadState(rhos[k + 1], w)
        s = model.chord_speed(left.rho, right.rho, w)
        out.append(Wave(RHO, FRAGMENT, left, right, s, s, wave.vacuum))
    return out


# ---------------------------------------------------------------------------
# engine


@dataclass
class Trajectory:
    model: FluxModel
    spec: JunctionSpec
    roads: list[RoadSpec]
    t_end: float
    eps_fan: float
    time: float = 0.0
    genealogy: dict[int, Front] = field(default_factory=dict)
    events: list[EventRecord] = field(default_factory=list)
    junction_events: list[JunctionEvent] = field(default_factory=list)
    snapshots: dict[float, list[list[tuple[float, float, RoadState]]]] = field(default_factory=dict)
    ledger: MassLedger = field(default_factory=MassLedger)
    truncated: str | None = None
    max_live_fronts: int = 0
    n_collisions: int = 0
    n_arrivals: int = 0
    n_exits: int = 0

    def front(self, fid: int) -> Front:
        return self.genealogy[fid]


class Network:
    """Mutable front-tracking state plus the event loop."""

    def __init__(self, model: FluxModel, spec: JunctionSpec, roads: list[RoadSpec], eps_fan: float = 0.05):
        if len(roads) != spec.n + spec.m:
            raise ValueError(f"expected {spec.n + spec.m} roads, got {len(roads)}")
        for k, r in enumerate(roads):
            want = INCOMING if k < spec.n else OUTGOING
            if r.side != want or r.index != k:
                raise ValueError(f"road {k} must be {want!r} with index {k}")
            if not r.length > 0:
                raise ValueError(f"road {k} must have positive length")
        if not eps_fan > 0:
            raise ValueError("eps_fan must be positive")
        self.model = model
        self.spec = spec
        self.roads = roads
        self.eps_fan = eps_fan
        self.time = 0.0
        self.left_end: list[RoadState] = [RoadState(0.0, model.w_min)] * len(roads)
        self.fronts: list[list[Front]] = [[] for _ in roads]
        self.genealogy: dict[int, Front] = {}
        self._next_id = 0
        self._cache: list[tuple | None] = [None] * len(roads)

    # -- state access ------------------------------------------------------
    def junction_state(self, r: int) -> RoadState:
        if r < self.spec.n:
            fr = self.fronts[r]
            return fr[-1].right if fr else self.left_end[r]
        return self.left_end[r]

    def far_state(self, r: int) -> RoadState:
        if r < self.spec.n:
            return self.left_end[r]
        fr = self.fronts[r]
        return fr[-1].right if fr else self.left_end[r]

    def junction_states(self) -> tuple[RoadState, ...]:
        return tuple(self.junction_state(r) for r in range(len(self.roads)))

    def profile(self, r: int, t: float | None = None) -> list[tuple[float, float, RoadState]]:
        """Pieces ``(x_left, x_right, state)`` on road ``r`` at time ``t``."""
        t = self.time if t is None else t
        road = self.roads[r]
        out = []
        x_prev = road.a
        u = self.left_end[r]
        for f in self.fronts[r]:
            x = min(max(f.position(t), road.a), road.b)
            out.append((x_prev, x, u))
            x_prev = x
            u = f.right
        out.append((x_prev, road.b, u))
        return out

    def total_mass(self, t: float | None = None) -> float:
        total = 0.0
        for r in range(len(self.roads)):
            for xl, xr, u in self.profile(r, t):
                total += u.rho * (xr - xl)
        return total

    def live_fronts(self) -> int:
        return sum(len(f) for f in self.fronts)

    # -- construction ------------------------------------------------------
    def _new_front(self, r, wave: Wave, x, t, parents, origin) -> Front:
        f = Front(
            self._next_id,
            r,
            wave.family,
            wave.kind,
            x,
            t,
            wave.speed_lo,
            wave.left,
            wave.right,
            tuple(parents),
            origin,
            wave.vacuum,
        )
        self._next_id += 1
        self.genealogy[f.id] = f
        return f

    def _spawn(self, r, waves, x, t, parents, origin) -> list[Front]:
        out = []
        for wv in waves:
            if wv.kind == RAREFACTION:
                for frag in fan_discretize(self.model, wv, self.eps_fan):
                    out.append(self._new_front(r, frag, x, t, parents, origin))
            else:
                out.append(self._new_front(r, wv, x, t, parents, origin))
        return out

    def load(self, pieces_per_road: list[list[Piece]]) -> None:
        for r, pieces in enumerate(pieces_per_road):
            self.left_end[r] = pieces[0][1]
            fr = []
            for (x, u_next), (_, u_prev) in zip(pieces[1:], pieces[:-1]):
                sol = solve_riemann(self.model, u_prev, u_next)
                fr.extend(self._spawn(r, sol.waves, x, 0.0, (), ORIGIN_INITIAL))
            self.fronts[r] = fr
        self._invalidate_all()

    # -- events ------------------------------------------------------------
    def _invalidate_all(self):
        self._cache = [None] * len(self.roads)

    def _road_events(self, r: int) -> list[tuple]:
        """Earliest event of each kind on road r as (time, priority, road, kind, payload)."""
        cached = self._cache[r]
        if cached is not None:
            return cached
        t = self.time
        fr = self.fronts[r]
        road = self.roads[r]
        out = []
        if fr:
            first, last = fr[0], fr[-1]
            if r < self.spec.n:
                if last.speed > 0:
                    out.append((t + max(-last.position(t) / last.speed, 0.0), 0, r, "arrival", last.id))
                if first.speed < 0:
                    out.append((t + max((road.a - first.position(t)) / first.speed, 0.0), 2, r, "exit", first.id))
            else:
                if first.speed < 0:
                    out.append((t + max(first.position(t) / -first.speed, 0.0), 0, r, "arrival", first.id))
                if last.speed > 0:
                    out.append((t + max((road.b - last.position(t)) / last.speed, 0.0), 2, r, "exit", last.id))
            best = None
            prev_x = first.position(t)
            for k in range(len(fr) - 1):
                f, g = fr[k], fr[k + 1]
                x_g = g.position(t)
                gap_speed = f.speed - g.speed
                if gap_speed > SPEED_REL_TOL * max(1.0, abs(f.speed), abs(g.speed)):
                    tc = t + max(x_g - prev_x, 0.0) / gap_speed
                    # ties keep the leftmost pair
                    if best is None or tc < best[0] - TIME_TOL:
                        best = (tc, 1, r, "collision", k)
                prev_x = x_g
            if best is not None:
                out.append(best)
        self._cache[r] = out
        return out

    def next_event(self, t_end: float):
        """Earliest event before ``t_end``; ``None`` means the horizon comes first.

        Ties within ``TIME_TOL``: junction arrivals, then collisions on the
        lowest road index at the leftmost position, then exits.
        """
        evs = [e for r in range(len(self.roads)) for e in self._road_events(r)]
        if not evs:
            return None
        t_min = min(e[0] for e in evs)
        if t_min > t_end:
            return None
        tied = [e for e in evs if e[0] <= t_min + TIME_TOL]
        arrivals = [e for e in tied if e[3] == "arrival"]
        if arrivals:
            return ("arrival", min(e[0] for e in arrivals), arrivals)
        collisions = [e for e in tied if e[3] == "collision"]
        if collisions:
            e = min(collisions, key=lambda e: e[2])
            return ("collision", e[0], [e])
        exits = sorted(tied, key=lambda e: e[2])
        return ("exit", exits[0][0], [exits[0]])

    def _retire(self, f: Front, t: float, fate: str):
        f.t_end = t
        f.fate = fate

    def resolve_collision(self, t: float, r: int, k: int) -> EventRecord:
        fr = self.fronts[r]
        x_star = 0.5 * (fr[k].position(t) + fr[k + 1].position(t))
        lo, hi = k, k + 1
        while lo > 0 and abs(fr[lo - 1].position(t) - x_star) <= POS_TOL:
            lo -= 1
        while hi < len(fr) - 1 and abs(fr[hi + 1].position(t) - x_star) <= POS_TOL:
            hi += 1
        group = fr[lo : hi + 1]
        left, right = group[0].left, group[-1].right
        sol = solve_riemann(self.model, left, right)
        parents = tuple(f.id for f in group)
        for f in group:
            self._retire(f, t, "collision")
        new = self._spawn(r, sol.waves, x_star, t, parents, ORIGIN_INTERACTION)
        self.fronts[r] = fr[:lo] + new + fr[hi + 1 :]
        self._cache[r] = None
        return EventRecord(t, "collision", r, parents, tuple(f.id for f in new))

    def resolve_exit(self, t: float, r: int) -> EventRecord:
        fr = self.fronts[r]
        if r < self.spec.n:
            f = fr.pop(0)
            self.left_end[r] = f.right
        else:
            f = fr.pop()
        self._retire(f, t, "exit")
        self._cache[r] = None
        return EventRecord(t, "exit", r, (f.id,), ())

    def resolve_junction(self, t: float, arriving: list[tuple[int, int]]) -> tuple[EventRecord, JunctionEvent]:
        """Absorb the arriving fronts ``(road, id)`` and re-solve the junction."""
        before = self.junction_states()
        retired = []
        for r, fid in arriving:
            fr = self.fronts[r]
            if r < self.spec.n:
                f = fr.pop()
            else:
                f = fr.pop(0)
                self.left_end[r] = f.right
            if f.id != fid:
                raise WFTInvariantError(f"front {fid} expected at the junction on road {r}, found {f.id}")
            self._retire(f, t, "junction")
            retired.append(f.id)
        sol, created = self._junction_solve(t, tuple(retired))
        self._invalidate_all()
        rec = EventRecord(t, "junction", None, tuple(retired), created)
        return rec, JunctionEvent(t, tuple(retired), before, self.junction_states_before_emit, sol, created)

    def _junction_solve(self, t, parents):
        states = self.junction_states()
        self.junction_states_before_emit = states
        sol = aprsom_solve(self.model, states, self.spec)
        created = []
        n = self.spec.n
        for r, (u, tr) in enumerate(zip(states, sol.traces)):
            if r < n:
                waves = solve_riemann(self.model, u, tr).waves
            else:
                waves = solve_riemann(self.model, tr, u).waves
            if not waves:
                continue
            new = self._spawn(r, waves, 0.0, t, parents, ORIGIN_JUNCTION)
            for f in new:
                if (r < n and not f.speed < 0) or (r >= n and not f.speed > 0):
                    raise WFTInvariantError(
                        f"junction emitted a {f.kind} with speed {f.speed!r} on "
                        f"{'incoming' if r < n else 'outgoing'} road {r} at t={t!r}"
                    )
            if r < n:
                self.fronts[r].extend(new)
            else:
                self.fronts[r] = new + self.fronts[r]
                self.left_end[r] = tr
            created.extend(f.id for f in new)
        return sol, tuple(created)

    def boundary_rate(self) -> float:
        """Net inflow through the far ends: incoming far fluxes minus outgoing far fluxes."""
        n = self.spec.n
        rate = 0.0
        for r in range(len(self.roads)):
            u = self.far_state(r)
            q = self.model.flux(u.rho, u.w)
            rate += q if r < n else -q
        return rate


def _snapshot(net: Network, t: float):
    return [net.profile(r, t) for r in range(len(net.roads))]


def run(
    model: FluxModel,
    spec: JunctionSpec,
    roads: list[RoadSpec],
    initial: list[list[Piece]],
    t_end: float,
    eps_fan: float = 0.05,
    caps: Caps | None = None,
    snapshot_times: Sequence[float] = (),
) -> Trajectory:
    """Evolve piecewise-constant data up to ``t_end`` (or until a cap is hit)."""
    caps = caps or Caps()
    net = Network(model, spec, roads, eps_fan)
    net.load(initial)
    traj = Trajectory(model, spec, roads, t_end, eps_fan)
    traj.genealogy = net.genealogy
    pending = sorted(set(float(s) for s in snapshot_times if 0 <= s <= t_end))

    traj.ledger.initial = net.total_mass(0.0)
    initial_ids = tuple(net.genealogy)
    traj.events.append(EventRecord(0.0, "start", None, (), initial_ids))
    rec, jev = net.resolve_junction(0.0, [])
    traj.events.append(rec)
    traj.junction_events.append(jev)
    _track_imbalance(traj, jev)

    while True:
        ev = net.next_event(t_end)
        t_next = t_end if ev is None else ev[1]
        t_next = max(t_next, net.time)
        while pending and pending[0] <= t_next:
            ts = pending.pop(0)
            traj.snapshots[ts] = _snapshot(net, ts)
        traj.ledger.boundary_net_inflow += net.boundary_rate() * (t_next - net.time)
        net.time = t_next
        if ev is None:
            break
        if len(traj.events) >= caps.max_events:
            traj.truncated = f"event cap {caps.max_events} reached at t={net.time!r}"
            break
        kind, t, items = ev
        if kind == "arrival":
            rec, jev = net.resolve_junction(t, [(e[2], e[4]) for e in items])
            traj.junction_events.append(jev)
            traj.n_arrivals += len(items)
            _track_imbalance(traj, jev)
        elif kind == "collision":
            rec = net.resolve_collision(t, items[0][2], items[0][4])
            traj.n_collisions += 1
        else:
            rec = net.resolve_exit(t, items[0][2])
            traj.n_exits += 1
        traj.events.append(rec)
        live = net.live_fronts()
        traj.max_live_fronts = max(traj.max_live_fronts, live)
        if live > caps.max_fronts:
            traj.truncated = f"front cap {caps.max_fronts} exceeded at t={net.time!r}"
            break

    traj.time = net.time
    traj.ledger.final = net.total_mass(net.time)
    traj.snapshots.setdefault(net.time, _snapshot(net, net.time))
    traj.network = net
    return traj


def _track_imbalance(traj: Trajectory, jev: JunctionEvent):
    sol = jev.solution
    model = traj.model
    q_in = sum(model.flux(u.rho, u.w) for u in sol.traces[: sol.n])
    q_out = sum(model.flux(u.rho, u.w) for u in sol.traces[sol.n :])
    traj.ledger.junction_imbalance = max(traj.ledger.junction_imbalance, abs(q_in - q_out))


def riemann_network(model: FluxModel, spec: JunctionSpec, states: Sequence[RoadState], length: float = 1.0):
    """Roads and constant initial pieces for a junction Riemann problem."""
    roads = [RoadSpec(k, INCOMING if k < spec.n else OUTGOING, length) for k in range(spec.n + spec.m)]
    initial = [[(roads[k].a, states[k])] for k in range(spec.n + spec.m)]
    return roads, initial
