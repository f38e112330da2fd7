import numpy as np
import pytest

from gsomnet.diagnostics import (
    NotAtEquilibriumError,
    backward_tree,
    c_star,
    check_equilibrium,
    classify_equilibrium,
    functionals,
    p1_check,
    perturb,
)
from gsomnet.fundamental import GreenshieldsFamily, RoadState, VelocityFamily
from gsomnet.junction import STRICT, JunctionSpec, aprsom_solve
from gsomnet.riemann import CONTACT, RHO, SHOCK, W
from gsomnet.wft import Front

S = RoadState
M = GreenshieldsFamily()
ONE_TO_ONE = JunctionSpec(1, 1, (1.0,), ((1.0,),))


def front(fid, family, t0, parents=(), origin="interaction", left=S(0.2, 1.0), right=S(0.4, 1.0)):
    kind = SHOCK if family == RHO else CONTACT
    return Front(fid, 1, family, kind, 0.0, t0, 0.1, left, right, tuple(parents), origin)


def test_functionals_constant_equilibrium():
    spec = JunctionSpec(2, 1, (0.5, 0.5), ((1.0, 1.0),))
    sol = aprsom_solve(M, [S(0.1, 1.0), S(0.1, 1.0), S(0.2, 1.0)], spec)
    prof = [[(-1.0, 0.0, u)] if k < 2 else [(0.0, 1.0, u)] for k, u in enumerate(sol.traces)]
    rep = functionals(M, spec, prof)
    assert rep.tv_q == 0 and rep.tv_w == 0
    assert rep.gamma == pytest.approx(sum(sol.incoming_flux), abs=1e-15)


def test_functionals_single_shock():
    prof = [[(-1.0, -0.5, S(0.2, 1.0)), (-0.5, 0.0, S(0.6, 1.0))], [(0.0, 1.0, S(0.6, 1.0))]]
    rep = functionals(M, ONE_TO_ONE, prof)
    assert rep.tv_q == pytest.approx(0.08, abs=1e-15)
    assert rep.gamma == pytest.approx(0.24, abs=1e-15)


def test_functionals_alternating_attribute():
    xs = np.linspace(0, 1, 5)
    road = [(xs[k], xs[k + 1], S(0.3, (1.0, 2.0, 1.0, 2.0)[k])) for k in range(4)]
    rep = functionals(M, ONE_TO_ONE, [[(-1.0, 0.0, S(0.3, 1.0))], road])
    assert rep.tv_w == 3.0
    assert rep.vacuum_w_jumps == 0


def test_functionals_skip_attribute_jumps_at_vacuum():
    road = [(0.0, 0.5, S(0.0, 2.0)), (0.5, 1.0, S(0.3, 1.0))]
    rep = functionals(M, ONE_TO_ONE, [[(-1.0, 0.0, S(0.3, 1.0))], road])
    assert rep.tv_w == 0.0 and rep.vacuum_w_jumps == 1


def test_tree_direct_emission():
    gen = {1: front(1, RHO, 0.0, origin="junction")}
    tree = backward_tree(gen, 1)
    assert (tree.K, tree.tv_tree, tree.n_rho_root) == (1, 0.0, 1)


def test_tree_single_w_interaction():
    gen = {
        1: front(1, RHO, 0.0, origin="junction"),
        2: front(2, W, 0.0, origin="initial", left=S(0.5, 2.0), right=S(0.2, 1.25)),
        3: front(3, RHO, 1.0, parents=(1, 2)),
    }
    tree = backward_tree(gen, 3)
    assert tree.K == 2
    assert tree.tv_tree == pytest.approx(0.75, abs=1e-15)
    assert tree.n_rho_root == 1


def test_tree_merge_then_w():
    # hand walk: 6 <- (5, w2); 5 <- (1, 4); leaves 1 (junction) and 4 (initial)
    gen = {
        1: front(1, RHO, 0.0, origin="junction"),
        4: front(4, RHO, 0.0, origin="initial"),
        5: front(5, RHO, 0.5, parents=(1, 4)),
        2: front(2, W, 0.0, origin="initial", left=S(0.5, 2.0), right=S(0.2, 1.0)),
        6: front(6, RHO, 1.0, parents=(5, 2)),
    }
    tree = backward_tree(gen, 6)
    assert tree.K == 2
    assert tree.n_rho_root == 2
    assert tree.leaves == (1, 4)
    assert tree.nodes == {1: 1, 4: 1, 5: 1, 6: 2}
    assert tree.tv_tree == pytest.approx(1.0, abs=1e-15)


def test_tree_unknown_id():
    with pytest.raises(KeyError):
        backward_tree({}, 99)


def test_c_star_reference():
    rep = c_star(M)
    assert rep.value == 2.0
    assert abs(rep.grid_value - 2.0) <= 0.02
    assert rep.rel_change < 0.01


def test_c_star_degenerate_family():
    fam = VelocityFamily(lambda r, w: 1.0 - r, 0.5, 2.0, dv_drho=lambda r, w: -1.0, dv_dw=lambda r, w: 0.0)
    assert c_star(fam, n=16).value == 0.0


def two_by_two():
    spec = JunctionSpec(2, 2, (0.6, 0.4), ((0.5, 0.5), (0.5, 0.5)))
    return spec, [S(0.7, 1.0), S(0.7, 1.0), S(0.3, 1.0), S(0.3, 1.0)]


def test_not_at_equilibrium():
    spec, states = two_by_two()
    with pytest.raises(NotAtEquilibriumError):
        check_equilibrium(M, states, spec)


def test_tie_equilibrium_is_case_b():
    spec, states = two_by_two()
    eq_sol = check_equilibrium(M, aprsom_solve(M, states, spec).traces, spec)
    # road 2 meets its demand exactly when the outgoing supplies bind
    assert classify_equilibrium(eq_sol)[0] == "B"


def test_case_a_supply_rise_is_identity():
    spec = JunctionSpec(2, 2, (0.6, 0.4), ((0.5, 0.5), (0.5, 0.5)))
    eq = aprsom_solve(M, [S(0.2, 1.0), S(0.2, 1.0), S(0.1, 1.0), S(0.1, 1.0)], spec).traces
    eq_sol = check_equilibrium(M, eq, spec)
    case, relabel = classify_equilibrium(eq_sol)
    assert case == "A"
    road = next(r for r, lab in relabel.items() if lab == 3)
    new = S(M.invert_flux_on_branch(0.2, 1.0, "congested"), 1.0)
    s = perturb(M, spec, eq, eq_sol, road, new, spec.mode, case, "A3", RHO)
    assert s.sign == "+" and s.identity
    assert s.d_gamma == 0.0 and s.d_tvq == 0.0


def test_strict_mode_stops_at_first_wall():
    spec, states = two_by_two()
    sol = aprsom_solve(M, states, JunctionSpec(2, 2, spec.p, spec.A, STRICT))
    assert sol.incoming_flux == pytest.approx((0.25, 0.25 / 0.6 * 0.4), abs=1e-12)
    assert classify_equilibrium(sol)[0] == "B"


def test_p1_pairs_small():
    n, bad = p1_check(M, 50, "adaptive", seed=3)
    assert n == 50 and bad == []
