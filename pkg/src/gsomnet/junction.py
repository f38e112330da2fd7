"""Adapting priority Riemann solver at a junction with n incoming and m outgoing roads.

Incoming fluxes are pushed along the priority ray ``h * p`` until either a
supply constraint of some outgoing road binds (the procedure stops there)
or the demand of an incoming road binds. In ``strict`` mode the latter also
stops the procedure. In ``adaptive`` mode the saturated road is frozen at its
demand and the ray continues with the remaining roads; this repeats until a
supply binds or every road is at demand.

Road indices are 0-based: incoming roads are ``0..n-1`` and outgoing roads
are ``n..n+m-1``. The distribution matrix ``A`` has one row per outgoing
road and one column per incoming road.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy.optimize import brentq

from .fundamental import CONGESTED, FREE, FluxModel, GreenshieldsFamily, RoadState
from .riemann import RiemannSolution, solve_riemann

STRICT = "strict"
ADAPTIVE = "adaptive"
MODES = (STRICT, ADAPTIVE)

TIE_TOL = 1e-12
SUM_TOL = 1e-9
ROOT_XTOL = 1e-14
ROOT_RTOL = 4 * 2.3e-16


class JunctionSpecError(ValueError):
    """Raised for an inconsistent junction description; carries every problem found."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


class JunctionNumericError(RuntimeError):
    pass


@dataclass(frozen=True)
class JunctionSpec:
    n: int
    m: int
    p: tuple[float, ...]
    A: tuple[tuple[float, ...], ...]
    mode: str = ADAPTIVE

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(x) for x in self.p))
        object.__setattr__(self, "A", tuple(tuple(float(x) for x in row) for row in self.A))
        problems = self.problems()
        if problems:
            raise JunctionSpecError(problems)

    def problems(self) -> list[str]:
        out = []
        if self.n < 1 or self.m < 1:
            out.append(f"junction needs at least one incoming and one outgoing road (n={self.n}, m={self.m})")
        if self.mode not in MODES:
            out.append(f"mode must be one of {MODES}, got {self.mode!r}")
        if len(self.p) != self.n:
            out.append(f"priority has {len(self.p)} entries, expected n={self.n}")
        if any(x < 0 for x in self.p):
            out.append("priority entries must be nonnegative")
        if self.p and abs(sum(self.p) - 1.0) > SUM_TOL:
            out.append(f"priority must sum to 1 (sum is {sum(self.p)!r})")
        if len(self.A) != self.m or any(len(row) != self.n for row in self.A):
            out.append(f"distribution matrix must be {self.m}x{self.n}")
            return out
        if any(a < 0 for row in self.A for a in row):
            out.append("distribution matrix entries must be nonnegative")
        for i in range(self.n):
            col = sum(self.A[j][i] for j in range(self.m))
            if abs(col - 1.0) > SUM_TOL:
                out.append(f"column {i} of the distribution matrix sums to {col!r}, not 1")
        for j in range(self.m):
            if not any(a > 0 for a in self.A[j]):
                out.append(f"outgoing road {self.n + j} receives from no incoming road")
        return out

    def with_mode(self, mode: str) -> "JunctionSpec":
        return JunctionSpec(self.n, self.m, self.p, self.A, mode)

    def to_dict(self) -> dict:
        return {"n": self.n, "m": self.m, "p": list(self.p), "A": [list(r) for r in self.A], "mode": self.mode}


@dataclass
class TranscriptStep:
    step: int
    h_bar: float
    fixed: tuple[int, ...]
    h_in: dict[int, float]
    h_out: dict[int, float]
    binding: str  # "outgoing", "incoming" or "all-fixed"
    binding_roads: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "h_bar": self.h_bar,
            "fixed": list(self.fixed),
            "h_in": {str(k): v for k, v in self.h_in.items()},
            "h_out": {str(k): v for k, v in self.h_out.items()},
            "binding": self.binding,
            "binding_roads": list(self.binding_roads),
        }


@dataclass
class JunctionSolution:
    n: int
    m: int
    q_hat: tuple[float, ...]
    w_hat: tuple[float, ...]
    traces: tuple[RoadState, ...]
    transcript: list[TranscriptStep] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    mode: str = ADAPTIVE

    @property
    def incoming_flux(self) -> tuple[float, ...]:
        return self.q_hat[: self.n]

    @property
    def outgoing_flux(self) -> tuple[float, ...]:
        return self.q_hat[self.n :]

    @property
    def gamma(self) -> float:
        return sum(self.incoming_flux)

    @property
    def h_bars(self) -> list[float]:
        return [s.h_bar for s in self.transcript]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "mode": self.mode,
            "q_hat": list(self.q_hat),
            "w_hat": list(self.w_hat),
            "traces": [[u.rho, u.w] for u in self.traces],
            "transcript": [s.to_dict() for s in self.transcript],
            "notes": list(self.notes),
        }


# ---------------------------------------------------------------------------
# admissible half-Riemann sets


@dataclass(frozen=True)
class AdmissibleSet:
    """Union of an optional isolated point and an interval of densities."""

    point: float | None
    lo: float
    hi: float
    lo_open: bool = False
    hi_open: bool = False
    bound: float = 0.0  # demand (incoming) or supply (outgoing)
    rho_dagger: float | None = None
    branch: str = CONGESTED

    def contains(self, rho: float, tol: float = 1e-12) -> bool:
        if self.point is not None and abs(rho - self.point) <= tol:
            return True
        if self.hi < self.lo:
            return False
        above = rho > self.lo + tol if self.lo_open else rho >= self.lo - tol
        below = rho < self.hi - tol if self.hi_open else rho <= self.hi + tol
        return above and below


def incoming_admissible(model: FluxModel, u: RoadState) -> AdmissibleSet:
    """Trace densities reachable from ``u`` with waves of negative speed."""
    sigma = model.critical_density(u.w)
    top = model.rho_max(u.w)
    d = model.demand(u.rho, u.w)
    if u.rho <= 0.0:
        return AdmissibleSet(0.0, 1.0, 0.0, bound=0.0)
    if u.rho <= sigma:
        comp = model.companion_density(u.rho, u.w)
        # the companion itself would be joined by a zero-speed shock
        return AdmissibleSet(u.rho, comp, top, lo_open=True, bound=d)
    return AdmissibleSet(None, sigma, top, bound=d)


def outgoing_admissible(model: FluxModel, u: RoadState, w_bar: float) -> AdmissibleSet:
    """Trace densities on the ``w_bar`` curve reachable from ``u`` with positive-speed waves."""
    v = model.velocity(u.rho, u.w)
    r_dag = model.rho_dagger(w_bar, v)
    sigma = model.critical_density(w_bar)
    s = model.supply(r_dag, w_bar)
    if r_dag <= sigma:
        return AdmissibleSet(None, 0.0, sigma, bound=s, rho_dagger=r_dag, branch=FREE)
    comp = model.companion_density(r_dag, w_bar)
    return AdmissibleSet(r_dag, 0.0, comp, hi_open=True, bound=s, rho_dagger=r_dag, branch=FREE)


def mix_w(q_in, w_in, a_row) -> float:
    """Flux-weighted attribute entering an outgoing road."""
    num = 0.0
    den = 0.0
    for q, w, a in zip(q_in, w_in, a_row):
        num += a * q * w
        den += a * q
    if den <= 0.0:
        raise ZeroDivisionError("no flux enters this outgoing road")
    return num / den


def outgoing_supply(model: FluxModel, w_bar: float, v_plus: float) -> float:
    """Supply of an outgoing road with downstream velocity ``v_plus`` for mixed attribute ``w_bar``."""
    return model.supply(model.rho_dagger(w_bar, v_plus), w_bar)


# ---------------------------------------------------------------------------
# step S+1 root: smallest h >= h0 with psi(h) = s(w_hat(h))


def _crossing_scan(model, v, a, b, c, e, h0, s_cap):
    """Generic route: psi = a + b h, phi = c + e h, w_hat = phi / psi.

    ``s_cap`` bounds every supply from above, so psi exceeds it beyond
    ``h_top`` and a sign change is guaranteed inside [h0, h_top].
    """

    def g(h):
        psi = a + b * h
        if psi <= 0.0:
            return -1.0
        w_bar = min(max((c + e * h) / psi, model.w_min), model.w_max)
        return psi - outgoing_supply(model, w_bar, v)

    if g(h0) >= 0.0:
        return h0
    h_top = max((s_cap - a) / b, h0) * 1.01 + 1e-12
    # geometric bracket from h0, refined by a uniform sweep so a thin
    # excursion above zero is not stepped over
    n_sweep = 48
    prev = h0
    for k in range(1, n_sweep + 1):
        h = h0 + (h_top - h0) * (k / n_sweep) ** 2
        if g(h) >= 0.0:
            return brentq(g, prev, h, xtol=ROOT_XTOL, rtol=ROOT_RTOL)
        prev = h
    raise JunctionNumericError("no supply crossing found on the priority ray")


def _crossing_greenshields(model: GreenshieldsFamily, v, a, b, c, e, h0):
    """Closed form for the reference family.

    With rho_dagger = rho_M (1 - v / w) the supply is rho_M w / 4 when
    w <= 2 v and rho_M (v - v^2 / w) otherwise; both equations
    psi = s(phi / psi) are quadratics in h.
    """
    rm = model.rho_m

    def psi(h):
        return a + b * h

    def w_at(h):
        return (c + e * h) / psi(h)

    def g(h):
        p = psi(h)
        if p <= 0.0:
            return -1.0
        w_bar = w_at(h)
        if w_bar <= 2.0 * v:
            return p - 0.25 * rm * w_bar
        return p - rm * (v - v * v / w_bar)

    if g(h0) >= 0.0:
        return h0
    candidates = []
    # 4 psi^2 = rm phi
    for h in _quadratic_roots(4 * b * b, 8 * a * b - rm * e, 4 * a * a - rm * c):
        if h >= h0 and psi(h) > 0 and w_at(h) <= 2.0 * v * (1 + 1e-12):
            candidates.append(h)
    # psi phi - rm v phi + rm v^2 psi = 0
    qa = b * e
    qb = a * e + b * c - rm * v * e + rm * v * v * b
    qc = a * c - rm * v * c + rm * v * v * a
    for h in _quadratic_roots(qa, qb, qc):
        if h >= h0 and psi(h) > 0 and w_at(h) > 2.0 * v:
            candidates.append(h)
    if not candidates:
        raise JunctionNumericError("no supply crossing found on the priority ray")
    return min(candidates)


def _quadratic_roots(qa, qb, qc):
    scale = max(abs(qa), abs(qb), abs(qc))
    if scale == 0.0:
        return []
    if abs(qa) <= 1e-15 * scale:
        return [] if qb == 0 else [-qc / qb]
    disc = qb * qb - 4 * qa * qc
    if disc < 0:
        if disc > -1e-14 * qb * qb:
            disc = 0.0
        else:
            return []
    sq = math.sqrt(disc)
    # stable pair of roots
    t = -0.5 * (qb + math.copysign(sq, qb)) if qb != 0 else 0.5 * sq
    roots = []
    if t != 0:
        roots.append(qc / t)
    roots.append(t / qa)
    return roots


def supply_crossing(model: FluxModel, v, a, b, c, e, h0, generic: bool = False) -> float:
    """Smallest h >= h0 where psi(h) = a + b h meets the supply at w_hat = (c + e h)/psi."""
    if b <= 0.0:
        return math.inf
    if isinstance(model, GreenshieldsFamily) and not generic:
        return _crossing_greenshields(model, v, a, b, c, e, h0)
    return _crossing_scan(model, v, a, b, c, e, h0, model.max_flux(model.w_max))


# ---------------------------------------------------------------------------
# trace states


def incoming_trace(model: FluxModel, u: RoadState, q: float) -> RoadState:
    sigma = model.critical_density(u.w)
    if u.rho <= sigma and abs(q - model.flux(u.rho, u.w)) <= TIE_TOL * max(1.0, q):
        return u
    return RoadState(model.invert_flux_on_branch(q, u.w, CONGESTED), u.w)


def outgoing_trace(model: FluxModel, u: RoadState, q: float, w_bar: float) -> RoadState:
    v = model.velocity(u.rho, u.w)
    r_dag = model.rho_dagger(w_bar, v)
    sigma = model.critical_density(w_bar)
    if r_dag > sigma:
        s = model.flux(r_dag, w_bar)
        if q >= s * (1 - TIE_TOL):
            return RoadState(r_dag, w_bar)
    return RoadState(model.invert_flux_on_branch(q, w_bar, FREE), w_bar)


def emitted_waves(model: FluxModel, states, solution: JunctionSolution) -> list[RiemannSolution]:
    """Waves leaving the junction on every road, in road order."""
    out = []
    for k, (u, tr) in enumerate(zip(states, solution.traces)):
        if k < solution.n:
            out.append(solve_riemann(model, u, tr))
        else:
            out.append(solve_riemann(model, tr, u))
    return out


def inadmissible_waves(model: FluxModel, states, solution: JunctionSolution, tol: float = 1e-12) -> list[str]:
    """Describe every emitted wave whose speed would not leave the junction."""
    bad = []
    for k, sol in enumerate(emitted_waves(model, states, solution)):
        for wv in sol.waves:
            if k < solution.n:
                ok = wv.speed_lo < 0 and wv.speed_hi <= tol
            else:
                ok = wv.speed_hi > 0 and wv.speed_lo >= -tol
            if not ok:
                bad.append(f"road {k}: {wv.kind} with speeds [{wv.speed_lo!r}, {wv.speed_hi!r}]")
    return bad


# ---------------------------------------------------------------------------
# solver


def _prepare(model: FluxModel, states, spec: JunctionSpec):
    if len(states) != spec.n + spec.m:
        raise JunctionSpecError([f"expected {spec.n + spec.m} road states, got {len(states)}"])
    for u in states:
        model.check_state(u.rho, u.w)
    d = [model.demand(u.rho, u.w) for u in states[: spec.n]]
    w_in = [u.w for u in states[: spec.n]]
    v_out = [model.velocity(u.rho, u.w) for u in states[spec.n :]]
    notes = []
    active = []
    for i in range(spec.n):
        if spec.p[i] <= 0.0:
            notes.append(f"road {i} has zero priority and is removed")
        elif d[i] <= 0.0:
            notes.append(f"road {i} has zero demand and is removed")
        else:
            active.append(i)
    return d, w_in, v_out, active, notes


def _ray_coefficients(spec, j, d, w_in, free, fixed):
    row = spec.A[j]
    a = sum(row[i] * d[i] for i in fixed)
    c = sum(row[i] * d[i] * w_in[i] for i in fixed)
    b = sum(row[i] * spec.p[i] for i in free)
    e = sum(row[i] * spec.p[i] * w_in[i] for i in free)
    return a, b, c, e


def aprsom_solve(model: FluxModel, states, spec: JunctionSpec, generic_roots: bool = False) -> JunctionSolution:
    """Junction fluxes, mixed attributes and trace states for the given road states."""
    n, m = spec.n, spec.m
    states = tuple(states)
    d, w_in, v_out, active, notes = _prepare(model, states, spec)

    q_in = [0.0] * n
    fixed: list[int] = []
    free = list(active)
    transcript: list[TranscriptStep] = []
    h_prev = 0.0
    step = 0
    while free:
        step += 1
        h_in = {i: d[i] / spec.p[i] for i in free}
        h_out = {}
        for j in range(m):
            a, b, c, e = _ray_coefficients(spec, j, d, w_in, free, fixed)
            if b <= 0.0:
                h_out[n + j] = math.inf
                continue
            if a == 0.0:
                # only free roads feed j: the mixture does not depend on h
                s = outgoing_supply(model, e / b, v_out[j])
                h_out[n + j] = max(s / b, h_prev)
            else:
                h_out[n + j] = supply_crossing(model, v_out[j], a, b, c, e, h_prev, generic_roots)
        h_bar = min(min(h_in.values()), min(h_out.values()))
        scale = TIE_TOL * max(1.0, h_bar)
        out_bind = tuple(k for k, h in h_out.items() if h - h_bar <= scale)
        in_bind = tuple(i for i, h in h_in.items() if h - h_bar <= scale)
        if out_bind:
            transcript.append(TranscriptStep(step, h_bar, tuple(fixed), h_in, h_out, "outgoing", out_bind))
            for i in free:
                q_in[i] = d[i] if i in in_bind else min(spec.p[i] * h_bar, d[i])
            break
        transcript.append(TranscriptStep(step, h_bar, tuple(fixed), h_in, h_out, "incoming", in_bind))
        if spec.mode == STRICT:
            for i in free:
                q_in[i] = d[i] if i in in_bind else min(spec.p[i] * h_bar, d[i])
            break
        for i in in_bind:
            q_in[i] = d[i]
            fixed.append(i)
            free.remove(i)
        h_prev = h_bar
        if not free:
            transcript.append(TranscriptStep(step + 1, h_bar, tuple(fixed), {}, {}, "all-fixed", ()))

    return _assemble(model, states, spec, q_in, w_in, transcript, notes)


def _assemble(model, states, spec, q_in, w_in, transcript, notes) -> JunctionSolution:
    n, m = spec.n, spec.m
    q_out = []
    w_out = []
    for j in range(m):
        row = spec.A[j]
        flow = sum(row[i] * q_in[i] for i in range(n))
        q_out.append(flow)
        if flow > 0.0:
            w_bar = mix_w(q_in, w_in, row)
            w_bar = min(max(w_bar, model.w_min), model.w_max)
        else:
            w_bar = states[n + j].w
            notes.append(f"outgoing road {n + j} receives no flux; attribute kept")
        w_out.append(w_bar)
    traces = [incoming_trace(model, states[i], q_in[i]) for i in range(n)]
    traces += [outgoing_trace(model, states[n + j], q_out[j], w_out[j]) for j in range(m)]
    return JunctionSolution(
        n, m, tuple(q_in) + tuple(q_out), tuple(w_in) + tuple(w_out), tuple(traces), transcript, notes, spec.mode
    )


def theta_hbar(model: FluxModel, states, spec: JunctionSpec) -> float:
    """Largest h with h * p inside the feasible flux set of the first step."""
    n, m = spec.n, spec.m
    d, w_in, v_out, active, _ = _prepare(model, tuple(states), spec)
    if not active:
        return 0.0
    h = min(d[i] / spec.p[i] for i in active)
    for j in range(m):
        b = sum(spec.A[j][i] * spec.p[i] for i in active)
        if b <= 0.0:
            continue
        e = sum(spec.A[j][i] * spec.p[i] * w_in[i] for i in active)
        h = min(h, outgoing_supply(model, e / b, v_out[j]) / b)
    return h


# ---------------------------------------------------------------------------
# two incoming roads, one outgoing road: explicit case analysis


def merge_solve(model: FluxModel, u1: RoadState, u2: RoadState, u3: RoadState, p, mode: str = ADAPTIVE) -> JunctionSolution:
    """2 -> 1 merge solved by enumerating which constraint the priority ray meets first."""
    p1, p2 = float(p[0]), float(p[1])
    if not (p1 > 0 and p2 > 0):
        raise JunctionSpecError(["merge needs strictly positive priorities"])
    spec = JunctionSpec(2, 1, (p1, p2), ((1.0, 1.0),), mode)
    d1 = model.demand(u1.rho, u1.w)
    d2 = model.demand(u2.rho, u2.w)
    w1, w2 = u1.w, u2.w
    v3 = model.velocity(u3.rho, u3.w)
    notes = []
    if d1 <= 0.0 or d2 <= 0.0:
        # a silent road leaves a single-road problem: flux = min(demand, supply)
        q = [0.0, 0.0]
        k = 0 if d1 > 0 else 1
        dk = (d1, d2)[k]
        if dk > 0:
            q[k] = min(dk, outgoing_supply(model, (w1, w2)[k], v3))
        notes.append("merge reduced to a single incoming road")
        return _assemble(model, (u1, u2, u3), spec, q, [w1, w2], [], notes)

    w_ray = (p1 * w1 + p2 * w2) / (p1 + p2)
    h1, h2 = d1 / p1, d2 / p2
    h3 = outgoing_supply(model, w_ray, v3) / (p1 + p2)
    h_bar = min(h1, h2, h3)
    steps = []
    tie = TIE_TOL * max(1.0, h_bar)

    if h3 - h_bar <= tie:
        # ray meets the supply line first
        q = [d1 if h1 - h_bar <= tie else p1 * h_bar, d2 if h2 - h_bar <= tie else p2 * h_bar]
        steps.append(TranscriptStep(1, h_bar, (), {0: h1, 1: h2}, {2: h3}, "outgoing", (2,)))
    elif mode == STRICT or abs(h1 - h2) <= tie:
        q = [d1 if h1 - h_bar <= tie else p1 * h_bar, d2 if h2 - h_bar <= tie else p2 * h_bar]
        binding = tuple(k for k, h in ((0, h1), (1, h2)) if h - h_bar <= tie)
        steps.append(TranscriptStep(1, h_bar, (), {0: h1, 1: h2}, {2: h3}, "incoming", binding))
        if mode == ADAPTIVE:
            steps.append(TranscriptStep(2, h_bar, (0, 1), {}, {}, "all-fixed", ()))
    else:
        # one road saturates; the other moves along the vertical or horizontal side
        k, other = (0, 1) if h1 < h2 else (1, 0)
        dk = (d1, d2)[k]
        wk, wo = (w1, w2)[k], (w1, w2)[other]
        po, ho = (p1, p2)[other], (h1, h2)[other]
        steps.append(TranscriptStep(1, h_bar, (), {0: h1, 1: h2}, {2: h3}, "incoming", (k,)))

        def gap(h):
            flow = dk + po * h
            return flow - outgoing_supply(model, (dk * wk + po * h * wo) / flow, v3)

        if gap(h_bar) >= 0.0:
            h3b = h_bar
        else:
            hi = max(2.0 * h_bar, 1e-12)
            while gap(hi) < 0.0:
                hi *= 2.0
            h3b = brentq(gap, h_bar, hi, xtol=ROOT_XTOL, rtol=ROOT_RTOL)
        h_bar2 = min(ho, h3b)
        tie2 = TIE_TOL * max(1.0, h_bar2)
        q = [0.0, 0.0]
        q[k] = dk
        q[other] = (d1, d2)[other] if ho - h_bar2 <= tie2 else po * h_bar2
        if h3b - h_bar2 <= tie2:
            steps.append(TranscriptStep(2, h_bar2, (k,), {other: ho}, {2: h3b}, "outgoing", (2,)))
        else:
            steps.append(TranscriptStep(2, h_bar2, (k,), {other: ho}, {2: h3b}, "incoming", (other,)))
            steps.append(TranscriptStep(3, h_bar2, (0, 1), {}, {}, "all-fixed", ()))
    sol = _assemble(model, (u1, u2, u3), spec, q, [w1, w2], steps, notes)
    total = q[0] + q[1]
    if total > 0:
        sol.notes.append(f"updated priority ({q[0] / total!r}, {q[1] / total!r})")
    return sol
