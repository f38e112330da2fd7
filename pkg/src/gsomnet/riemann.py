"""Exact Riemann solver for the 2x2 system on a single road.

A solution has at most two waves. The first (``rho`` family) keeps ``w``
fixed and moves the density to the middle state; it is a shock when the
density increases and a rarefaction when it decreases. The second (``w``
family) is a contact discontinuity travelling at the common velocity of the
middle and right states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .fundamental import FluxModel, RoadState

STATE_TOL = 1e-10
SPEED_TOL = 1e-12

RHO = "rho"
W = "w"
SHOCK = "shock"
RAREFACTION = "rarefaction"
CONTACT = "contact"


class InteractionError(RuntimeError):
    """Raised when two waves that cannot collide are passed to :func:`interact`."""


@dataclass(frozen=True, slots=True)
class Wave:
    family: str
    kind: str
    left: RoadState
    right: RoadState
    speed_lo: float
    speed_hi: float
    # set on fronts that border a vacuum, where V is not continuous across the jump
    vacuum: bool = False

    @property
    def speed(self) -> float:
        return self.speed_lo

    def flux_jump(self, model: FluxModel) -> float:
        """Q(right) - Q(left)."""
        return model.flux(*self.right.as_tuple()) - model.flux(*self.left.as_tuple())


@dataclass(frozen=True, slots=True)
class RiemannSolution:
    waves: tuple[Wave, ...]
    middle: RoadState
    flags: tuple[str, ...] = field(default=())

    @property
    def rho_wave(self) -> Wave | None:
        for wv in self.waves:
            if wv.family == RHO:
                return wv
        return None

    @property
    def w_wave(self) -> Wave | None:
        for wv in self.waves:
            if wv.family == W:
                return wv
        return None


def states_equal(a: RoadState, b: RoadState, tol: float = STATE_TOL) -> bool:
    return abs(a.rho - b.rho) < tol and abs(a.w - b.w) < tol


def middle_state(model: FluxModel, u_minus: RoadState, u_plus: RoadState) -> RoadState:
    """Same attribute as ``u_minus``, same velocity as ``u_plus``.

    When the right velocity exceeds the top speed of the left curve the
    middle state is the vacuum ``(0, u_minus.w)``.
    """
    v_plus = model.velocity(u_plus.rho, u_plus.w)
    return RoadState(model.rho_dagger(u_minus.w, v_plus), u_minus.w)


def rho_wave(model: FluxModel, left: RoadState, right: RoadState) -> Wave | None:
    """Elementary first-family wave between two states on the same curve."""
    w = left.w
    if abs(left.rho - right.rho) < STATE_TOL:
        return None
    if left.rho < right.rho:
        s = model.chord_speed(left.rho, right.rho, w)
        return Wave(RHO, SHOCK, left, right, s, s)
    lo = model.d_flux_drho(left.rho, w)
    hi = model.d_flux_drho(right.rho, w)
    return Wave(RHO, RAREFACTION, left, right, lo, hi)


def solve_riemann(model: FluxModel, u_minus: RoadState, u_plus: RoadState) -> RiemannSolution:
    model.check_state(u_minus.rho, u_minus.w)
    model.check_state(u_plus.rho, u_plus.w)
    if states_equal(u_minus, u_plus):
        return RiemannSolution((), u_minus)

    if u_minus.rho < STATE_TOL and abs(u_minus.w - u_plus.w) >= STATE_TOL:
        # vacuum on the left: the attribute is only a label, transported with
        # the right state's velocity
        v = model.velocity(u_plus.rho, u_plus.w)
        wave = Wave(W, CONTACT, u_minus, u_plus, v, v, vacuum=True)
        return RiemannSolution((wave,), u_minus, ("vacuum-left",))

    mid = middle_state(model, u_minus, u_plus)
    if states_equal(mid, u_plus):
        mid = u_plus
    waves: list[Wave] = []
    flags: tuple[str, ...] = ()
    first = rho_wave(model, u_minus, mid)
    if first is not None:
        waves.append(first)
    if not states_equal(mid, u_plus):
        v = model.velocity(u_plus.rho, u_plus.w)
        vacuum = mid.rho < STATE_TOL
        if vacuum:
            flags = ("vacuum-middle",)
        waves.append(Wave(W, CONTACT, mid, u_plus, v, v, vacuum=vacuum))
    return RiemannSolution(tuple(waves), mid, flags)


def collide(left: Wave, right: Wave) -> bool:
    return left.speed_hi > right.speed_lo + SPEED_TOL


def interact(model: FluxModel, left: Wave, right: Wave) -> RiemannSolution:
    """Resolve the collision of two adjacent waves as a new Riemann problem."""
    if not states_equal(left.right, right.left):
        raise InteractionError("waves are not adjacent: intermediate states differ")
    if (
        left.family == RHO
        and right.family == W
        and not right.vacuum
        and left.speed_hi > 0
        and right.speed_lo > 0
    ):
        raise InteractionError("a rho-wave cannot catch the w-wave ahead of it")
    if not collide(left, right):
        raise InteractionError(
            f"waves do not collide: left speed {left.speed_hi!r} <= right speed {right.speed_lo!r}"
        )
    return solve_riemann(model, left.left, right.right)
