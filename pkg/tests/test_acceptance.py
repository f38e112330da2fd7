"""Acceptance criteria, one test each.

Every test prints a single ``[PASS]`` or ``[FAIL]`` line; the lines are
collected in ``RESULTS`` and repeated in the pytest terminal summary. Run
directly with ``python3 tests/test_acceptance.py`` for the lines alone.
"""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import walk_oracle  # noqa: E402
from gsomnet.cli import to_json  # noqa: E402
from gsomnet.diagnostics import (  # noqa: E402
    backward_tree,
    c_star,
    classify_returning,
    p1_check,
    property_harness,
    random_network,
)
from gsomnet.fundamental import CONGESTED, FREE, GreenshieldsFamily, RoadState, validate_family  # noqa: E402
from gsomnet.junction import ADAPTIVE, MODES, STRICT, JunctionSpec, aprsom_solve, merge_solve  # noqa: E402
from gsomnet.riemann import RHO, SHOCK, W, solve_riemann  # noqa: E402
from gsomnet.wft import INCOMING, OUTGOING, RoadSpec, run, sample_initial  # noqa: E402

S = RoadState
M = GreenshieldsFamily()
RESULTS: list[str] = []


def report(n: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    RESULTS.append(line)
    print(line)


# reference-family formulas written out independently of the package
def q_ref(rho, w):
    return w * rho * (1 - rho)


def v_ref(rho, w):
    return w * (1 - rho)


def lam_ref(rho, w):
    return w * (1 - 2 * rho)


def test_criterion_1_model_hypotheses():
    t0 = time.perf_counter()
    rep = validate_family(M, 200, 50)
    dt = time.perf_counter() - t0
    worst = max(c.worst_violation for c in rep.checks)
    ok = rep.passed and worst < 1e-6 and dt < 1.0
    report(1, ok, f"validate_family 200x50, {len(rep.checks)} hypotheses, worst violation {worst:.3g}, {dt:.2f}s")
    assert ok


def test_criterion_2_riemann_solver():
    rng = np.random.default_rng(2)
    n = 100_000
    rho = rng.uniform(0, 1, (n, 2))
    w = rng.uniform(0.5, 2.0, (n, 2))
    w_jump = v_jump = lax = order = ends = 0
    vacuum = 0
    t0 = time.perf_counter()
    for k in range(n):
        um, up = S(float(rho[k, 0]), float(w[k, 0])), S(float(rho[k, 1]), float(w[k, 1]))
        sol = solve_riemann(M, um, up)
        waves = sol.waves
        if waves and (waves[0].left != um or waves[-1].right != up):
            ends += 1
        for a, b in zip(waves, waves[1:]):
            if a.right != b.left:
                ends += 1
        rho_speed = None
        for wv in waves:
            if wv.family == RHO:
                if abs(wv.left.w - wv.right.w) > 1e-9:
                    w_jump += 1
                rho_speed = wv.speed_hi
                if wv.kind == SHOCK:
                    rl, rr, ww = wv.left.rho, wv.right.rho, wv.left.w
                    s = (q_ref(rr, ww) - q_ref(rl, ww)) / (rr - rl)
                    if abs(s - wv.speed) > 1e-9 or not lam_ref(rl, ww) + 1e-12 >= s >= lam_ref(rr, ww) - 1e-12:
                        lax += 1
            else:
                if wv.vacuum:
                    vacuum += 1
                elif abs(v_ref(wv.left.rho, wv.left.w) - v_ref(wv.right.rho, wv.right.w)) > 1e-9:
                    v_jump += 1
                if rho_speed is not None and rho_speed > wv.speed + 1e-12:
                    order += 1
    dt = time.perf_counter() - t0
    ok = w_jump == v_jump == lax == order == ends == 0 and dt < 10.0
    report(
        2, ok,
        f"{n} pairs: w jumps across rho-waves {w_jump}, V jumps across w-waves {v_jump} "
        f"({vacuum} vacuum contacts exempt), Lax violations {lax}, speed-order violations {order}, "
        f"broken wave chains {ends}, {dt:.2f}s",
    )
    assert ok


def _random_inputs(rng, topo, mode):
    n, m = topo
    p1 = float(rng.uniform(0.1, 0.9))
    if m == 1:
        A = ((1.0, 1.0),)
    else:
        a, b = rng.uniform(0.1, 0.9, 2)
        A = ((float(a), float(b)), (1 - float(a), 1 - float(b)))
    spec = JunctionSpec(n, m, (p1, 1 - p1), A, mode)
    states = [S(float(rng.uniform(0, 1)), float(rng.uniform(0.5, 2.0))) for _ in range(n + m)]
    return spec, states


def test_criterion_3_junction_conservation_and_consistency():
    rng = np.random.default_rng(3)
    per = 10_000
    worst_cons = worst_fix = 0.0
    count = 0
    t0 = time.perf_counter()
    for topo in ((2, 1), (2, 2)):
        for mode in MODES:
            for _ in range(per // 2):
                spec, states = _random_inputs(rng, topo, mode)
                sol = aprsom_solve(M, states, spec)
                fin = sum(q_ref(u.rho, u.w) for u in sol.traces[: spec.n])
                fout = sum(q_ref(u.rho, u.w) for u in sol.traces[spec.n :])
                worst_cons = max(worst_cons, abs(fin - fout), abs(sum(sol.incoming_flux) - sum(sol.outgoing_flux)))
                again = aprsom_solve(M, sol.traces, spec)
                for a, b in zip(again.traces, sol.traces):
                    worst_fix = max(worst_fix, abs(a.rho - b.rho), abs(a.w - b.w))
                count += 1
    dt = time.perf_counter() - t0
    ok = worst_cons <= 1e-12 and worst_fix <= 1e-9 and dt < 10.0
    report(
        3, ok,
        f"{count} inputs (2->1 and 2x2, both modes): worst flux imbalance {worst_cons:.3g}, "
        f"worst RS(RS) trace drift {worst_fix:.3g}, {dt:.2f}s",
    )
    assert ok


def test_criterion_4_oracle_equivalence():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst_walk = 0.0
    for k in range(500):
        spec, states = _random_inputs(rng, ((2, 1), (2, 2))[k % 2], ADAPTIVE)
        q = walk_oracle([(u.rho, u.w) for u in states], spec.p, spec.A, step=1e-4)
        sol = aprsom_solve(M, states, spec)
        worst_walk = max(worst_walk, float(np.max(np.abs(np.array(sol.incoming_flux) - q))))
    worst_merge = 0.0
    for k in range(10_000):
        spec, states = _random_inputs(rng, (2, 1), MODES[k % 2])
        a = merge_solve(M, *states, spec.p, spec.mode)
        b = aprsom_solve(M, states, spec)
        worst_merge = max(worst_merge, max(abs(x - y) for x, y in zip(a.q_hat, b.q_hat)))
        for u, v in zip(a.traces, b.traces):
            worst_merge = max(worst_merge, abs(u.rho - v.rho), abs(u.w - v.w))
    dt = time.perf_counter() - t0
    ok = worst_walk <= 2e-4 and worst_merge <= 1e-9 and dt < 60.0
    report(
        4, ok,
        f"walk oracle (step 1e-4) on 500 instances: worst gap {worst_walk:.3g}; "
        f"merge_solve vs aprsom_solve on 10000: worst gap {worst_merge:.3g}, {dt:.2f}s",
    )
    assert ok


def test_criterion_5_worked_examples():
    m4 = GreenshieldsFamily(rho_m=4.0)
    merge_states = [
        S(m4.invert_flux_on_branch(0.2, 1.0, FREE), 1.0),
        S(m4.invert_flux_on_branch(0.3, 1.0, FREE), 1.0),
        S(m4.invert_flux_on_branch(0.6, 1.0, CONGESTED), 1.0),
    ]
    merge = aprsom_solve(m4, merge_states, JunctionSpec(2, 1, (0.5, 0.5), ((1.0, 1.0),)))
    merge_err = max(
        max(abs(a - b) for a, b in zip(merge.q_hat, (0.2, 0.3, 0.5))),
        abs(merge.h_bars[0] - 0.4),
        abs(merge.transcript[1].h_out[2] - 0.8),
        abs(merge.h_bars[1] - 0.6),
    )
    spec = JunctionSpec(2, 2, (0.6, 0.4), ((0.5, 0.5), (0.5, 0.5)))
    sol = aprsom_solve(M, [S(0.7, 1.0), S(0.7, 1.0), S(0.3, 1.0), S(0.3, 1.0)], spec)
    first, second = sol.transcript[0], sol.transcript[1]
    grid_err = max(
        max(abs(a - 0.25) for a in sol.q_hat),
        abs(first.h_in[0] - 0.25 / 0.6),
        abs(first.h_in[1] - 0.625),
        abs(first.h_out[2] - 0.5),
        abs(first.h_out[3] - 0.5),
        abs(second.h_out[2] - 0.625),
        abs(second.h_out[3] - 0.625),
    )
    ok = merge_err <= 1e-9 and grid_err <= 1e-9
    report(
        5, ok,
        f"merge q_hat {[round(x, 12) for x in merge.q_hat]} (err {merge_err:.3g}); "
        f"2x2 q_hat {[round(x, 12) for x in sol.q_hat]} (err {grid_err:.3g})",
    )
    assert ok


def _network(seed, jams):
    rng = np.random.default_rng(seed)
    spec, profiles = random_network(M, rng, jams=jams)
    roads = [RoadSpec(k, INCOMING if k < spec.n else OUTGOING, 1.0) for k in range(spec.n + spec.m)]
    initial = [sample_initial(M, road, rows, 0.01) for road, rows in zip(roads, profiles)]
    return spec, roads, initial


def _serialize(traj) -> str:
    return to_json(
        {
            "fronts": [f.to_dict() for f in traj.genealogy.values()],
            "events": [[e.time, e.kind, e.road, list(e.retired), list(e.created)] for e in traj.events],
            "final": [[[a, b, u.rho, u.w] for a, b, u in road] for road in traj.snapshots[traj.time]],
        }
    )


def test_criterion_6_wft_conservation_and_determinism():
    t_end = 2.0
    worst = 0.0
    truncated = mismatched = 0
    events = 0
    t0 = time.perf_counter()
    for seed in range(100):
        spec, roads, initial = _network(1000 + seed, jams=seed % 2 == 0)
        a = run(M, spec, roads, initial, t_end)
        spec, roads, initial = _network(1000 + seed, jams=seed % 2 == 0)
        b = run(M, spec, roads, initial, t_end)
        truncated += a.truncated is not None
        worst = max(worst, abs(a.ledger.residual) / t_end)
        mismatched += _serialize(a) != _serialize(b)
        events += len(a.events)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and truncated == 0 and mismatched == 0 and dt < 300.0
    report(
        6, ok,
        f"100 scenarios to T=2 ({events} events): worst |mass residual|/T {worst:.3g}, "
        f"truncated {truncated}, non-identical reruns {mismatched}, {dt:.1f}s",
    )
    assert ok


@pytest.fixture(scope="module")
def jam_suite():
    """Returning-wave records of 200 randomized networks with jammed outgoing roads."""
    records = []
    for seed in range(200):
        spec, roads, initial = _network(seed, jams=True)
        traj = run(M, spec, roads, initial, 4.0, eps_fan=0.05)
        for rec in classify_returning(traj, 2.0):
            records.append((seed, traj, rec))
    return records


def test_criterion_7_outgoing_returning_waves(jam_suite):
    out = [(s, r) for s, _, r in jam_suite if r.side == OUTGOING]
    shocks = [r for _, r in out if r.kind == SHOCK and r.delta_q < 0]
    bad = [(s, r) for s, r in out if not (r.kind == SHOCK and r.delta_q < 0)]
    kinds = sorted({r.kind for _, r in bad})
    example = f"; first counterexample seed {bad[0][0]} front {bad[0][1].front} ({bad[0][1].kind}, delta_q {bad[0][1].delta_q:.3g})" if bad else ""
    ok = len(out) >= 50 and not bad
    report(
        7, ok,
        f"{len(out)} outgoing returning waves: {len(shocks)} shocks with delta_q<0, "
        f"{len(bad)} others (kinds {kinds}){example}",
    )
    assert ok


def test_criterion_8_incoming_returning_waves(jam_suite):
    cs = c_star(M)
    inc = [(s, t, r) for s, t, r in jam_suite if r.side == INCOMING]
    bad = 0
    for _, traj, rec in inc:
        f = traj.genealogy[rec.front]
        delta = q_ref(f.left.rho, f.left.w) - q_ref(f.right.rho, f.right.w)
        tree = backward_tree(traj, rec.front)
        leaves = sum(
            max(q_ref(g.left.rho, g.left.w) - q_ref(g.right.rho, g.right.w), 0.0)
            for g in (traj.genealogy[i] for i in tree.leaves)
        )
        bound = 2.0 * tree.tv_tree + leaves
        if not (delta <= bound + 1e-12 and rec.bound_ok and abs(delta - rec.delta_q) <= 1e-15):
            bad += 1
    grid_gap = abs(cs.grid_value - 2.0) / 2.0
    cases = {}
    for _, _, r in inc:
        cases[r.case] = cases.get(r.case, 0) + 1
    case_bad = sum(not r.case_ok for _, _, r in inc)
    ok = len(inc) > 0 and bad == 0 and case_bad == 0 and grid_gap <= 0.01 and cs.rel_change <= 0.01
    report(
        8, ok,
        f"{len(inc)} incoming returning waves {dict(sorted(cases.items()))}, bound violations {bad}, "
        f"case-sign violations {case_bad}; "
        f"C* {cs.value} (grid {cs.grid_value:.6g}, refined {cs.refined_value:.6g})",
    )
    assert ok


def test_criterion_9_property_harness():
    t0 = time.perf_counter()
    rep = property_harness(M, MODES, n_equilibria=400, seed=0, n_p1=200)
    dt = time.perf_counter() - t0
    c3 = max((fc.c_tvq_sum for k, fc in rep.families.items() if k.startswith("C3i/")), default=float("nan"))
    ident = {k: (fc.identities, fc.count) for k, fc in rep.families.items()
             if k.split("/")[0] in ("A3i", "B2i", "C1i", "C2i") and "/rho/" in k}
    all_ident = all(a == b and b > 0 for a, b in ident.values())
    h_rise = max((fc.max_h_rise for fc in rep.families.values() if fc.max_h_rise is not None), default=0.0)
    ok = rep.passed and c3 <= 4.0 and all_ident and h_rise <= 1e-12 and dt < 120.0
    report(
        9, ok,
        f"{len(rep.samples)} perturbations in {len(rep.families)} families, failures {len(rep.failures)}, "
        f"missing {len(rep.missing)}; C3(i) dTV_Q/(|dGamma|+|dh|) max {c3:.3g}; identity families "
        f"{'all exact' if all_ident else ident}; max h rise on decreasing waves {h_rise:.3g}, {dt:.1f}s",
    )
    assert ok


def test_criterion_10_p1_bitwise():
    total, bad = 0, []
    for k, mode in enumerate((ADAPTIVE, STRICT)):
        n, b = p1_check(M, 500, mode, seed=10 + k)
        total += n
        bad += b
    ok = total == 1000 and not bad
    report(10, ok, f"{total} good-datum pairs, {len(bad)} bitwise mismatches")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
