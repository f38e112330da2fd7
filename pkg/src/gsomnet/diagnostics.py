"""Functionals and structural checks on junction solutions and trajectories.

Four groups live here:

* :func:`functionals` measures the junction inflow, the flux and attribute
  total variation and the priority-ray parameter of a network profile;
* :func:`backward_tree` and :func:`classify_returning` rebuild the ancestry of
  fronts that come back to the junction and test their flux variation;
* :func:`c_star` estimates the constant that bounds how much a w-interaction
  can change the flux jump of a rho-wave;
* :func:`property_harness` perturbs 2x2 junction equilibria with one wave and
  measures how the junction output responds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fundamental import CONGESTED, FREE, FluxModel, GreenshieldsFamily, RoadState
from .junction import ADAPTIVE, MODES, STRICT, JunctionSolution, JunctionSpec, aprsom_solve, theta_hbar
from .riemann import RHO, SHOCK, STATE_TOL, W
from .wft import INCOMING, ORIGIN_INTERACTION, ORIGIN_JUNCTION, OUTGOING, TIME_TOL, Front, Trajectory

CHECK_TOL = 1e-12


# ---------------------------------------------------------------------------
# functionals


@dataclass
class TVReport:
    time: float
    gamma: float
    tv_q: float
    tv_w: float
    h_bar: float
    vacuum_w_jumps: int = 0  # attribute jumps next to an empty stretch, left out of tv_w

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "gamma": self.gamma,
            "tv_q": self.tv_q,
            "tv_w": self.tv_w,
            "h_bar": self.h_bar,
            "vacuum_w_jumps": self.vacuum_w_jumps,
        }


def functionals(model: FluxModel, spec: JunctionSpec, profiles, time: float = 0.0) -> TVReport:
    """Evaluate the functionals on per-road pieces ``(x_left, x_right, state)``."""
    n = spec.n
    tv_q = 0.0
    tv_w = 0.0
    skipped = 0
    for pieces in profiles:
        states = [u for _, _, u in pieces]
        for u, v in zip(states[:-1], states[1:]):
            tv_q += abs(model.flux(v.rho, v.w) - model.flux(u.rho, u.w))
            if u.w != v.w:
                if u.rho < STATE_TOL or v.rho < STATE_TOL:
                    skipped += 1
                else:
                    tv_w += abs(v.w - u.w)
    traces = [profiles[r][-1][2] if r < n else profiles[r][0][2] for r in range(len(profiles))]
    gamma = sum(model.flux(u.rho, u.w) for u in traces[:n])
    return TVReport(time, gamma, tv_q, tv_w, theta_hbar(model, traces, spec), skipped)


def tv_series(traj: Trajectory) -> list[TVReport]:
    """Functionals at every stored snapshot of a trajectory, in time order."""
    return [functionals(traj.model, traj.spec, traj.snapshots[t], t) for t in sorted(traj.snapshots)]


def junction_balance(traj: Trajectory) -> float:
    """Largest gap between incoming and outgoing trace fluxes over all junction solves."""
    worst = 0.0
    model = traj.model
    for jev in traj.junction_events:
        sol = jev.solution
        q_in = sum(model.flux(u.rho, u.w) for u in sol.traces[: sol.n])
        q_out = sum(model.flux(u.rho, u.w) for u in sol.traces[sol.n :])
        worst = max(worst, abs(q_in - q_out))
    return worst


# ---------------------------------------------------------------------------
# backward trees


@dataclass
class BackwardTree:
    root: int
    t_o: float | None
    nodes: dict[int, int]  # rho-front id -> level
    leaves: tuple[int, ...]
    w_events: list[tuple[float, tuple[int, ...]]]  # (time, w-front ids) of level-raising interactions
    K: int
    tv_tree: float
    n_rho_root: int
    junction_fronts: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "t_o": self.t_o,
            "levels": {str(k): v for k, v in sorted(self.nodes.items())},
            "leaves": list(self.leaves),
            "w_events": [[t, list(ids)] for t, ids in self.w_events],
            "K": self.K,
            "tv_tree": self.tv_tree,
            "n_rho_root": self.n_rho_root,
        }


def rho_branch(genealogy: dict[int, Front], fid: int) -> set[int]:
    """Same-family ancestry of ``fid`` inside its road; junction emissions end the walk."""
    seen = {fid}
    stack = [fid]
    while stack:
        f = genealogy[stack.pop()]
        if f.origin != ORIGIN_INTERACTION:
            continue
        for p in f.parents:
            if p not in seen and genealogy[p].family == RHO:
                seen.add(p)
                stack.append(p)
    return seen


def backward_tree(traj: Trajectory | dict[int, Front], fid: int) -> BackwardTree:
    """Ancestry of front ``fid`` back to the last junction emission in its rho-branch.

    Fronts alive at that time are level 1. Every interaction involving a
    w-front lifts the level of its rho-children by one; rho-rho interactions
    keep the largest parent level. Raises ``KeyError`` for unknown ids.
    """
    genealogy = traj.genealogy if isinstance(traj, Trajectory) else traj
    genealogy[fid]
    branch = rho_branch(genealogy, fid)
    emitted = tuple(sorted(g for g in branch if genealogy[g].origin == ORIGIN_JUNCTION))
    t_o = max((genealogy[g].t0 for g in emitted), default=None)

    def expandable(f: Front) -> bool:
        return f.origin == ORIGIN_INTERACTION and (t_o is None or f.t0 > t_o + TIME_TOL)

    levels: dict[int, int] = {}
    leaves: list[int] = []
    events: dict[tuple, list[int]] = {}

    def level(g: int) -> int:
        if g in levels:
            return levels[g]
        f = genealogy[g]
        if not expandable(f):
            levels[g] = 1
            leaves.append(g)
            return 1
        rho_parents = [p for p in f.parents if genealogy[p].family == RHO]
        w_parents = [p for p in f.parents if genealogy[p].family == W]
        base = max((level(p) for p in rho_parents), default=1)
        if w_parents:
            events.setdefault((f.t0, f.parents), w_parents)
            base += 1
        levels[g] = base
        return base

    # iterative deepening keeps long chains off the Python call stack
    order = []
    stack = [fid]
    seen = {fid}
    while stack:
        g = stack.pop()
        order.append(g)
        f = genealogy[g]
        if expandable(f):
            for p in f.parents:
                if genealogy[p].family == RHO and p not in seen:
                    seen.add(p)
                    stack.append(p)
    for g in reversed(order):
        level(g)

    tv = 0.0
    w_events = []
    for (t, _), ws in sorted(events.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        w_events.append((t, tuple(ws)))
        for g in ws:
            wf = genealogy[g]
            tv += abs(wf.right.w - wf.left.w)
    leaves_t = tuple(sorted(set(leaves)))
    return BackwardTree(
        fid,
        t_o,
        levels,
        leaves_t,
        w_events,
        max(levels.values()),
        tv,
        sum(1 for g in leaves_t if genealogy[g].family == RHO),
        emitted,
    )


# ---------------------------------------------------------------------------
# returning waves


@dataclass
class ReturningWaveRecord:
    front: int
    road: int
    t_o: float
    t_a: float
    side: str
    kind: str
    K: int
    tv_tree: float
    n_rho_root: int
    delta_q: float  # incoming: Q(left) - Q(right); outgoing: Q(right) - Q(left)
    root_positive: float  # sum of positive parts of the leaves' flux variations
    bound: float
    case: str
    bound_ok: bool
    case_ok: bool

    @property
    def passed(self) -> bool:
        return self.bound_ok and self.case_ok

    def to_dict(self) -> dict:
        return {
            "front": self.front,
            "road": self.road,
            "t_o": self.t_o,
            "t_a": self.t_a,
            "side": self.side,
            "kind": self.kind,
            "K": self.K,
            "tv_tree": self.tv_tree,
            "n_rho_root": self.n_rho_root,
            "delta_q": self.delta_q,
            "root_positive": self.root_positive,
            "bound": self.bound,
            "case": self.case,
            "bound_ok": self.bound_ok,
            "case_ok": self.case_ok,
            "passed": self.passed,
        }


def _side_delta(model: FluxModel, f: Front, side: str) -> float:
    dq = model.flux(f.right.rho, f.right.w) - model.flux(f.left.rho, f.left.w)
    return -dq if side == INCOMING else dq


def _incoming_case(model: FluxModel, genealogy, f: Front, tree: BackwardTree, delta: float, bound: float, cs: float):
    if f.kind == SHOCK:
        return "a-shock", delta < 0
    if not tree.w_events:
        return "c-rho-only", delta < 0
    w = f.left.w
    sigma = model.critical_density(w)
    r_minus, r_plus = f.left.rho, f.right.rho
    if r_minus > sigma:
        comp = model.companion_density(r_minus, w)
        if comp < r_plus < sigma:
            return "b-rarefaction", delta < 0
        parents = [genealogy[p] for p in f.parents]
        w_par = [p for p in parents if p.family == W]
        rho_par = [p for p in parents if p.family == RHO]
        if (
            r_plus < comp
            and len(w_par) == 1
            and len(rho_par) == 1
            and rho_par[0].origin == ORIGIN_JUNCTION
            and tree.t_o is not None
            and abs(rho_par[0].t0 - tree.t_o) <= TIME_TOL
        ):
            dw = abs(w_par[0].right.w - w_par[0].left.w)
            return "w-single", 0 < delta < cs * dw + CHECK_TOL
    return "general", delta <= bound + CHECK_TOL


def classify_returning(traj: Trajectory, c_star_value: float | None = None) -> list[ReturningWaveRecord]:
    """Every rho-front absorbed at the junction whose rho-branch holds an earlier junction emission."""
    model = traj.model
    genealogy = traj.genealogy
    cs = c_star(model).value if c_star_value is None else c_star_value
    n = traj.spec.n
    records = []
    for jev in traj.junction_events:
        for fid in jev.arrivals:
            f = genealogy[fid]
            if f.family != RHO:
                continue
            tree = backward_tree(genealogy, fid)
            if tree.t_o is None or not tree.t_o < jev.time:
                continue
            side = INCOMING if f.road < n else OUTGOING
            delta = _side_delta(model, f, side)
            root_pos = sum(max(_side_delta(model, genealogy[g], side), 0.0) for g in tree.leaves)
            bound = cs * tree.tv_tree + root_pos
            bound_ok = delta <= bound + CHECK_TOL
            if side == OUTGOING:
                case, case_ok = "outgoing-shock", f.kind == SHOCK and delta < 0
            else:
                case, case_ok = _incoming_case(model, genealogy, f, tree, delta, bound, cs)
            records.append(
                ReturningWaveRecord(
                    fid, f.road, tree.t_o, jev.time, side, f.kind, tree.K, tree.tv_tree,
                    tree.n_rho_root, delta, root_pos, bound, case, bound_ok, case_ok,
                )
            )
    return records


# ---------------------------------------------------------------------------
# C*


@dataclass
class CStarReport:
    value: float
    grid_value: float
    refined_value: float
    n: int
    rel_change: float
    analytic: float | None

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "grid_value": self.grid_value,
            "refined_value": self.refined_value,
            "n": self.n,
            "rel_change": self.rel_change,
            "analytic": self.analytic,
        }


def _c_star_grid(model: FluxModel, n: int) -> float:
    # the expression splits into nonnegative factors, so the sup over the
    # five-dimensional tensor grid is a product of lower-dimensional sups
    ws = np.linspace(model.w_min, model.w_max, n)
    top_dw = 0.0
    inner = 0.0
    for w in ws:
        rhos = np.linspace(0.0, model.rho_max(w), n)
        dw = max(model.d_velocity_dw(r, w) for r in rhos)
        top_dw = max(top_dw, dw)
        inv = max(1.0 / abs(model.d_velocity_drho(r, w)) for r in rhos)
        vmax = max(model.velocity(r, w) for r in rhos)
        inner = max(inner, inv * vmax)
    return 2.0 * max(top_dw, 0.0) * inner


def c_star(model: FluxModel, n: int = 64, refine: bool = True) -> CStarReport:
    """Sampled constant with one 2x refinement; the closed form wins when the family has one."""
    coarse = _c_star_grid(model, n)
    fine = _c_star_grid(model, 2 * n - 1) if refine else coarse
    sampled = max(coarse, fine)
    rel = abs(fine - coarse) / sampled if sampled > 0 else 0.0
    analytic = None
    if isinstance(model, GreenshieldsFamily):
        analytic = 2.0 * model.rho_m
    return CStarReport(analytic if analytic is not None else sampled, coarse, fine, n, rel, analytic)


# ---------------------------------------------------------------------------
# 2x2 perturbation harness


class NotAtEquilibriumError(ValueError):
    """The states handed to the harness are not reproduced by the junction solver."""


def check_equilibrium(model: FluxModel, states, spec: JunctionSpec, tol: float = 1e-9) -> JunctionSolution:
    sol = aprsom_solve(model, states, spec)
    worst = max(max(abs(a.rho - b.rho), abs(a.w - b.w)) for a, b in zip(sol.traces, states))
    if worst > tol:
        raise NotAtEquilibriumError(f"junction traces move by {worst!r} from the given states")
    return sol


def classify_equilibrium(sol: JunctionSolution) -> tuple[str, dict[int, int]]:
    """Case letter and the relabelling that puts the equilibrium in canonical position.

    ``A``: both incoming roads at demand; road 2 is the one the ray meets
    first. ``B``: one incoming road at demand (road 1) and the other limited
    by supply or, in strict mode, by the stopped ray. ``C``: an outgoing
    supply binds at the first step; road 3 is the binding one.
    """
    steps = sol.transcript
    first = steps[0]
    ident = {0: 1, 1: 2, 2: 3, 3: 4}
    if first.binding == "outgoing":
        j = first.binding_roads[0]
        return "C", {0: 1, 1: 2, j: 3, 5 - j: 4}
    if len(first.binding_roads) == 2:
        return "A", ident
    k = first.binding_roads[0]
    other = 1 - k
    if sol.mode == STRICT or len(steps) < 2:
        return "B", {k: 1, other: 2, 2: 3, 3: 4}
    if steps[1].binding == "outgoing":
        return "B", {k: 1, other: 2, 2: 3, 3: 4}
    return "A", {k: 2, other: 1, 2: 3, 3: 4}


@dataclass
class PropertySample:
    mode: str
    case: str
    label: str  # e.g. "A3"
    road: int
    sign: str  # "+" when the perturbed flux rises
    kind: str  # "rho" or "rho-w"
    eps: float
    dw_in: float
    d_gamma: float
    d_hbar: float
    d_tvq: float
    d_tvw: float
    identity: bool
    h_before: float
    h_after: float

    @property
    def scale(self) -> float:
        return min(self.eps, abs(self.d_gamma) + abs(self.d_hbar))

    @property
    def family(self) -> str:
        return f"{self.label}{'i' if self.sign == '+' else 'ii'}/{self.kind}/{self.mode}"


def _ratio(lhs: float, rhs: float, tol: float = 1e-10) -> float:
    """Smallest C with lhs <= C * rhs; inf when rhs vanishes and lhs does not."""
    if lhs <= tol:
        return 0.0
    if rhs <= tol * 1e-3:
        return math.inf
    return lhs / rhs


def perturb(model: FluxModel, spec: JunctionSpec, eq_states, eq_sol: JunctionSolution, road: int, new_state: RoadState,
            mode: str, case: str, label: str, kind: str) -> PropertySample:
    """Replace one road state, re-solve once and measure the functional increments."""
    n = spec.n
    states = list(eq_states)
    states[road] = new_state
    sol = aprsom_solve(model, states, spec)
    q = eq_sol.q_hat
    qh = sol.q_hat
    q_tilde = model.flux(new_state.rho, new_state.w)
    eps = abs(q_tilde - q[road])
    if road < n:
        ell = 1 - road
        tv_after = abs(qh[road] - q_tilde) + abs(qh[ell] - q[ell]) + sum(abs(qh[j] - q[j]) for j in range(n, n + spec.m))
    else:
        tv_after = sum(abs(qh[i] - q[i]) for i in range(n)) + sum(
            abs(qh[j] - (q_tilde if j == road else q[j])) for j in range(n, n + spec.m)
        )
    d_tvq = tv_after - eps
    dw_in = abs(new_state.w - eq_states[road].w)
    d_tvw = sum(abs(sol.w_hat[j] - eq_sol.w_hat[j]) for j in range(n, n + spec.m)) - dw_in
    h0 = theta_hbar(model, eq_states, spec)
    h1 = theta_hbar(model, states, spec)
    identity = all(abs(a - b) <= 1e-12 for a, b in zip(qh, q)) and all(
        abs(a - b) <= 1e-12 for a, b in zip(sol.w_hat[n:], eq_sol.w_hat[n:])
    )
    return PropertySample(
        mode, case, label, road, "+" if q_tilde > q[road] else "-", kind, eps, dw_in,
        sol.gamma - eq_sol.gamma, h1 - h0, d_tvq, d_tvw, identity, h0, h1,
    )


@dataclass
class FamilyConstants:
    family: str
    count: int = 0
    c_tvq: float = 0.0
    c_tvw: float = 0.0
    c_hbar: float = 0.0
    c_gamma: float = 0.0  # P3, flux-decreasing families only
    c1: float = 0.0  # P4, attribute perturbations only
    c_tvq_sum: float = 0.0  # against |dGamma| + |dh| alone, for the factor-4 check
    max_h_rise: float | None = None
    identities: int = 0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class PropertyReport:
    samples: list[PropertySample]
    families: dict[str, FamilyConstants]
    p1_pairs: int
    p1_mismatches: int
    failures: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures and not self.missing

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "n_samples": len(self.samples),
            "p1_pairs": self.p1_pairs,
            "p1_mismatches": self.p1_mismatches,
            "failures": list(self.failures),
            "missing": list(self.missing),
            "families": {k: v.to_dict() for k, v in sorted(self.families.items())},
        }


IDENTITY_CASES = ("A3i", "A4i", "B2i", "C1i", "C2i")
FACTOR4_CASES = ("C3i",)


def _summarize(samples: list[PropertySample]) -> dict[str, FamilyConstants]:
    fams: dict[str, FamilyConstants] = {}
    for s in samples:
        fc = fams.setdefault(s.family, FamilyConstants(s.family))
        fc.count += 1
        fc.identities += int(s.identity)
        fc.c_tvq = max(fc.c_tvq, _ratio(s.d_tvq, s.scale))
        fc.c_tvq_sum = max(fc.c_tvq_sum, _ratio(s.d_tvq, abs(s.d_gamma) + abs(s.d_hbar)))
        fc.c_hbar = max(fc.c_hbar, _ratio(s.d_hbar, s.eps))
        if s.kind == RHO:
            fc.c_tvw = max(fc.c_tvw, _ratio(s.d_tvw, s.scale))
        if s.sign == "-":
            fc.c_gamma = max(fc.c_gamma, _ratio(s.d_gamma, abs(s.d_hbar)))
            rise = s.h_after - s.h_before
            fc.max_h_rise = rise if fc.max_h_rise is None else max(fc.max_h_rise, rise)
    return fams


def _p4_constant(samples: list[PropertySample], fams: dict[str, FamilyConstants]) -> None:
    # C2 is the attribute constant of the matching rho-only family
    for s in samples:
        if s.kind == RHO:
            continue
        fc = fams[s.family]
        ref = fams.get(s.family.replace("/rho-w/", "/rho/"))
        c2 = ref.c_tvw if ref is not None and math.isfinite(ref.c_tvw) else 0.0
        excess = s.d_tvw - c2 * s.scale
        fc.c1 = max(fc.c1, _ratio(excess, s.dw_in))


def random_junction(rng: np.random.Generator, mode: str) -> JunctionSpec:
    p1 = float(rng.uniform(0.2, 0.8))
    a31 = float(rng.uniform(0.2, 0.8))
    a32 = float(rng.uniform(0.2, 0.8))
    return JunctionSpec(2, 2, (p1, 1.0 - p1), ((a31, a32), (1.0 - a31, 1.0 - a32)), mode)


def random_state(model: FluxModel, rng: np.random.Generator) -> RoadState:
    w = float(rng.uniform(model.w_min, model.w_max))
    return RoadState(float(rng.uniform(0.02, 0.98)) * model.rho_max(w), w)


def _equilibrium(model: FluxModel, rng: np.random.Generator, mode: str, tie: bool = False, min_flux: float = 1e-3):
    spec = random_junction(rng, mode)
    raw = [random_state(model, rng) for _ in range(4)]
    if tie:
        # priorities proportional to demands: the ray hits both demand walls at once
        d1, d2 = (model.demand(u.rho, u.w) for u in raw[:2])
        spec = JunctionSpec(2, 2, (d1 / (d1 + d2), d2 / (d1 + d2)), spec.A, mode)
    sol = aprsom_solve(model, raw, spec)
    if min(sol.q_hat) < min_flux:
        return None
    eq = sol.traces
    eq_sol = check_equilibrium(model, eq, spec)
    return spec, eq, eq_sol


def _rho_perturbation(model: FluxModel, u: RoadState, q_target: float, incoming: bool) -> RoadState | None:
    if not 0.0 < q_target < model.max_flux(u.w):
        return None
    branch = FREE if incoming else CONGESTED
    return RoadState(model.invert_flux_on_branch(q_target, u.w, branch), u.w)


def _contact_perturbation(model: FluxModel, u: RoadState, w_new: float) -> RoadState | None:
    v = model.velocity(u.rho, u.w)
    rho = model.rho_dagger(w_new, v)
    if rho <= STATE_TOL:
        return None
    return RoadState(rho, w_new)


def p1_pair(model: FluxModel, rng: np.random.Generator, spec: JunctionSpec):
    """Two junction inputs that differ only in good-datum densities.

    Incoming good data sit on the congested branch. Outgoing good data are
    free states fast enough that the matching density on any admissible
    mixed curve stays free, which needs a velocity above half the top
    attribute.
    """
    a, b = [], []
    for k in range(spec.n + spec.m):
        w = float(rng.uniform(model.w_min, model.w_max))
        sigma = model.critical_density(w)
        top = model.rho_max(w)
        if k < spec.n:
            r1, r2 = (float(x) for x in rng.uniform(sigma, top, 2))
            r1, r2 = max(r1, sigma * (1 + 1e-9)), max(r2, sigma * (1 + 1e-9))
        else:
            v_floor = model.w_max / 2.0
            if model.max_velocity(w) <= v_floor * (1 + 1e-6):
                w = model.w_max
                sigma = model.critical_density(w)
            # densities with V(rho, w) > w_max / 2, strictly
            r_cap = _density_below_velocity(model, w, v_floor)
            r1, r2 = (float(x) for x in rng.uniform(0.0, r_cap, 2))
        a.append(RoadState(r1, w))
        b.append(RoadState(r2, w))
    return a, b


def _density_below_velocity(model: FluxModel, w: float, v: float) -> float:
    """Largest density whose velocity on curve ``w`` still exceeds ``v`` (shrunk slightly)."""
    lo, hi = 0.0, model.rho_max(w)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if model.velocity(mid, w) > v:
            lo = mid
        else:
            hi = mid
    return lo * (1 - 1e-6)


def p1_check(model: FluxModel, n_pairs: int, mode: str, seed: int = 0) -> tuple[int, list[str]]:
    """Solve paired good-datum inputs and list every pair whose outputs differ bitwise."""
    rng = np.random.default_rng(seed)
    bad = []
    for k in range(n_pairs):
        spec = random_junction(rng, mode)
        a, b = p1_pair(model, rng, spec)
        sa = aprsom_solve(model, a, spec).to_dict()
        sb = aprsom_solve(model, b, spec).to_dict()
        if sa != sb:
            bad.append(f"pair {k}: outputs differ")
    return n_pairs, bad


def property_harness(
    model: FluxModel,
    modes=MODES,
    n_equilibria: int = 400,
    seed: int = 0,
    n_p1: int = 200,
) -> PropertyReport:
    """Run single-wave perturbations of random 2x2 equilibria over every case and road.

    Each equilibrium is a solver output fed back to the solver. Incoming
    roads receive a density change at fixed attribute (free branch, so the
    new demand equals the new flux) and a contact change that keeps the
    velocity; outgoing roads receive a density change on the congested branch
    at fixed attribute (so the new supply equals the new flux). Flux levels
    are drawn on both sides of the equilibrium flux.
    """
    rng = np.random.default_rng(seed)
    samples: list[PropertySample] = []
    for mode in modes:
        made = 0
        while made < n_equilibria:
            eq = _equilibrium(model, rng, mode, tie=made % 4 == 3)
            if eq is None:
                continue
            made += 1
            spec, states, eq_sol = eq
            case, relabel = classify_equilibrium(eq_sol)
            for road in range(4):
                u = states[road]
                q = eq_sol.q_hat[road]
                label = f"{case}{relabel[road]}"
                qmax = model.max_flux(u.w)
                targets = [q * float(rng.uniform(0.3, 0.99)), q + (qmax - q) * float(rng.uniform(0.01, 0.9))]
                for qt in targets:
                    new = _rho_perturbation(model, u, qt, road < 2)
                    if new is not None:
                        samples.append(perturb(model, spec, states, eq_sol, road, new, mode, case, label, RHO))
                if road < 2:
                    v = model.velocity(u.rho, u.w)
                    w_lo = max(model.w_min, v * (1 + 1e-6))
                    choices = []
                    if w_lo < u.w:
                        choices.append(float(rng.uniform(w_lo, u.w)))
                    if u.w < model.w_max:
                        choices.append(float(rng.uniform(u.w, model.w_max)))
                    for w_new in choices:
                        new = _contact_perturbation(model, u, w_new)
                        if new is not None and model.is_valid(new.rho, new.w):
                            samples.append(perturb(model, spec, states, eq_sol, road, new, mode, case, label, "rho-w"))

    fams = _summarize(samples)
    _p4_constant(samples, fams)
    failures: list[str] = []
    for key, fc in sorted(fams.items()):
        for name in ("c_tvq", "c_tvw", "c_hbar", "c_gamma", "c1"):
            if not math.isfinite(getattr(fc, name)):
                failures.append(f"{key}: {name} is unbounded")
        if fc.max_h_rise is not None and fc.max_h_rise > 1e-12:
            failures.append(f"{key}: h_bar rises by {fc.max_h_rise!r} after a flux-decreasing wave")
    for s in samples:
        head = f"{s.label}{'i' if s.sign == '+' else 'ii'}"
        if s.kind == RHO and head in IDENTITY_CASES and not s.identity:
            failures.append(f"{s.family}: expected no change, fluxes moved")
        if head in FACTOR4_CASES and s.d_tvq > 4.0 * (abs(s.d_gamma) + abs(s.d_hbar)) + 1e-12:
            failures.append(f"{s.family}: dTV_Q={s.d_tvq!r} above 4(|dGamma|+|dh|)")
    expected = [
        f"{c}{r}{sg}/{kind}/{mode}"
        for mode in modes
        for c in "ABC"
        for r in (1, 2, 3, 4)
        for sg in ("i", "ii")
        for kind in ((RHO, "rho-w") if r <= 2 else (RHO,))
    ]
    missing = [k for k in expected if k not in fams]
    p1_total, p1_bad = 0, []
    for mode in modes:
        cnt, bad = p1_check(model, n_p1, mode, seed + 1)
        p1_total += cnt
        p1_bad += bad
    failures += [f"P1 {b}" for b in p1_bad]
    return PropertyReport(samples, fams, p1_total, len(p1_bad), failures, missing)


# ---------------------------------------------------------------------------
# randomized networks


def random_network(model: FluxModel, rng: np.random.Generator, jams: bool = True, length: float = 1.0):
    """Random single-junction network with piecewise-constant data.

    With ``jams`` the outgoing roads start free next to the junction and
    carry congested blocks further downstream, so backward shocks meet the
    waves the junction sends out.
    """
    n, m = [(2, 1), (2, 2), (1, 2), (3, 2)][int(rng.integers(4))]
    p = rng.uniform(0.1, 1.0, n)
    p = p / p.sum()
    A = rng.uniform(0.1, 1.0, (m, n))
    A = A / A.sum(axis=0)
    mode = MODES[int(rng.integers(2))]
    spec = JunctionSpec(n, m, tuple(float(x) for x in p), tuple(tuple(float(x) for x in row) for row in A), mode)

    def state(lo, hi):
        w = float(rng.uniform(model.w_min, model.w_max))
        return float(rng.uniform(lo, hi) * model.rho_max(w)), w

    profiles = []
    for k in range(n + m):
        if k >= n and jams:
            rows = [(0.0, *state(0.0, 0.3))]
            x = float(rng.uniform(0.1, 0.4)) * length
            while x < length:
                rows.append((x, *state(0.6, 1.0)))
                x += float(rng.uniform(0.1, 0.4)) * length
                if x < length and rng.random() < 0.5:
                    rows.append((x, *state(0.0, 0.4)))
                    x += float(rng.uniform(0.1, 0.3)) * length
        else:
            a = -length if k < n else 0.0
            cuts = np.sort(rng.uniform(a, a + length, int(rng.integers(0, 6))))
            rows = [(a, *state(0.0, 1.0))] + [(float(x), *state(0.0, 1.0)) for x in cuts]
        profiles.append(rows)
    return spec, profiles
