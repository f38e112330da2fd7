"""Flux/velocity families for generic second order traffic models.

A family is described by a velocity law V(rho, w) where ``w`` is the driver
attribute carried by the vehicles. The flux is Q = rho * V. Everything the
junction and road solvers need (critical density, companion density,
demand, supply, the density matching a downstream velocity on a given
attribute curve, branch-restricted flux inversion) is derived here.

The reference instance is the Greenshields-type family

    V(rho, w) = w * (1 - rho / rho_M),    Q(rho, w) = w * rho * (1 - rho / rho_M)

for which all constructions have closed forms. Other families can be built
from a plain velocity callable with :class:`VelocityFamily`; they use
bracketed root finding instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

ROOT_TOL = 1e-12
DOMAIN_SLACK = 1e-12
# near the top of the curve rho ~ sigma (1 -/+ sqrt(1 - q/qmax)), so one ulp in q
# moves rho by ~1e-8; fluxes this close to the maximum are mapped to sigma
SNAP_REL = 1e-14

FREE = "free"
CONGESTED = "congested"


class DomainError(ValueError):
    """Raised when a state lies outside the admissible (rho, w) box."""


class InfeasibleFluxError(ValueError):
    """Raised when a requested flux exceeds the maximal flux of the curve."""


@dataclass(frozen=True, slots=True)
class RoadState:
    """Density and driver attribute at a point of a road."""

    rho: float
    w: float

    def as_tuple(self) -> tuple[float, float]:
        return (self.rho, self.w)


class FluxModel:
    """Base class for a family of fundamental diagrams indexed by ``w``.

    Subclasses must provide ``velocity``, ``rho_max`` and the partial
    derivatives of V. The remaining constructions have generic numerical
    implementations that subclasses may replace with closed forms.
    """

    name = "abstract"

    def __init__(self, w_min: float, w_max: float):
        if not w_max >= w_min:
            raise ValueError(f"attribute range is empty: [{w_min}, {w_max}]")
        self.w_min = float(w_min)
        self.w_max = float(w_max)

    # hooks ---------------------------------------------------------------
    def rho_max(self, w: float) -> float:
        raise NotImplementedError

    def velocity(self, rho: float, w: float) -> float:
        raise NotImplementedError

    def d_velocity_drho(self, rho: float, w: float) -> float:
        step = 1e-6
        lo = max(rho - step, 0.0)
        hi = min(rho + step, self.rho_max(w))
        return (self._v(hi, w) - self._v(lo, w)) / (hi - lo)

    def d_velocity_dw(self, rho: float, w: float) -> float:
        step = 1e-6
        return (self._v(rho, w + step) - self._v(rho, w - step)) / (2 * step)

    def params(self) -> dict:
        return {"family": self.name, "w_min": self.w_min, "w_max": self.w_max}

    # domain --------------------------------------------------------------
    def check_state(self, rho: float, w: float) -> None:
        if not (self.w_min - DOMAIN_SLACK <= w <= self.w_max + DOMAIN_SLACK):
            raise DomainError(f"w={w!r} outside [{self.w_min}, {self.w_max}]")
        if not (-DOMAIN_SLACK <= rho <= self.rho_max(w) + DOMAIN_SLACK):
            raise DomainError(f"rho={rho!r} outside [0, {self.rho_max(w)}] at w={w!r}")

    def is_valid(self, rho: float, w: float) -> bool:
        try:
            self.check_state(rho, w)
        except DomainError:
            return False
        return True

    def _v(self, rho: float, w: float) -> float:
        # unchecked evaluation used inside finite differences
        return self.velocity(rho, w)

    # derived quantities --------------------------------------------------
    def flux(self, rho: float, w: float) -> float:
        self.check_state(rho, w)
        return rho * self.velocity(rho, w)

    def d_flux_drho(self, rho: float, w: float) -> float:
        """lambda_1 = dQ/drho = V + rho * dV/drho."""
        return self.velocity(rho, w) + rho * self.d_velocity_drho(rho, w)

    def max_velocity(self, w: float) -> float:
        return self.velocity(0.0, w)

    def critical_density(self, w: float) -> float:
        top = self.rho_max(w)
        return brentq(lambda r: self.d_flux_drho(r, w), 0.0, top, xtol=ROOT_TOL)

    def max_flux(self, w: float) -> float:
        return self.flux(self.critical_density(w), w)

    def companion_density(self, rho: float, w: float) -> float:
        sigma = self.critical_density(w)
        target = self.flux(rho, w)
        if rho <= sigma:
            return self._invert(target, w, CONGESTED)
        return self._invert(target, w, FREE)

    def demand(self, rho: float, w: float) -> float:
        if rho <= self.critical_density(w):
            return self.flux(rho, w)
        return self.max_flux(w)

    def supply(self, rho: float, w: float) -> float:
        if rho <= self.critical_density(w):
            return self.max_flux(w)
        return self.flux(rho, w)

    def rho_dagger(self, w_bar: float, v_plus: float) -> float:
        """Density on the ``w_bar`` curve whose velocity equals ``v_plus``.

        Returns 0 when ``v_plus`` exceeds the top speed of the curve.
        """
        if v_plus < 0:
            raise DomainError(f"negative velocity {v_plus!r}")
        if v_plus >= self.max_velocity(w_bar):
            return 0.0
        top = self.rho_max(w_bar)
        if v_plus <= self.velocity(top, w_bar):
            return top
        return brentq(lambda r: self.velocity(r, w_bar) - v_plus, 0.0, top, xtol=ROOT_TOL)

    def invert_flux_on_branch(self, q: float, w: float, branch: str) -> float:
        qmax = self.max_flux(w)
        if q > qmax * (1 + 1e-12) + 1e-15:
            raise InfeasibleFluxError(f"flux {q!r} exceeds maximum {qmax!r} at w={w!r}")
        if q < -1e-15:
            raise InfeasibleFluxError(f"negative flux {q!r}")
        return self._invert(min(max(q, 0.0), qmax), w, branch)

    def _invert(self, q: float, w: float, branch: str) -> float:
        sigma = self.critical_density(w)
        qmax = self.flux(sigma, w)
        if q >= qmax * (1.0 - SNAP_REL):
            return sigma
        if branch == FREE:
            if q <= 0.0:
                return 0.0
            return brentq(lambda r: r * self.velocity(r, w) - q, 0.0, sigma, xtol=ROOT_TOL)
        if branch == CONGESTED:
            top = self.rho_max(w)
            if q <= 0.0:
                return top
            return brentq(lambda r: r * self.velocity(r, w) - q, sigma, top, xtol=ROOT_TOL)
        raise ValueError(f"unknown branch {branch!r}")

    def f_function(self, rho: float, w: float) -> float:
        """rho * dQ/drho - Q, negative for rho > 0 under the hypotheses."""
        return rho * self.d_flux_drho(rho, w) - self.flux(rho, w)

    def chord_speed(self, rho_a: float, rho_b: float, w: float) -> float:
        """Rankine-Hugoniot speed of a jump between two densities on one curve."""
        if rho_a == rho_b:
            return self.d_flux_drho(rho_a, w)
        return (self.flux(rho_b, w) - self.flux(rho_a, w)) / (rho_b - rho_a)


class GreenshieldsFamily(FluxModel):
    """Reference family V = w (1 - rho/rho_M) with closed-form constructions."""

    name = "greenshields"

    def __init__(self, w_min: float = 0.5, w_max: float = 2.0, rho_m: float = 1.0):
        super().__init__(w_min, w_max)
        if rho_m <= 0:
            raise ValueError("rho_M must be positive")
        self.rho_m = float(rho_m)

    def params(self) -> dict:
        out = super().params()
        out["rho_max"] = self.rho_m
        return out

    def rho_max(self, w: float) -> float:
        return self.rho_m

    def check_state(self, rho: float, w: float) -> None:
        if not (self.w_min - DOMAIN_SLACK <= w <= self.w_max + DOMAIN_SLACK):
            raise DomainError(f"w={w!r} outside [{self.w_min}, {self.w_max}]")
        if not (-DOMAIN_SLACK <= rho <= self.rho_m + DOMAIN_SLACK):
            raise DomainError(f"rho={rho!r} outside [0, {self.rho_m}]")

    def velocity(self, rho: float, w: float) -> float:
        return w * (1.0 - rho / self.rho_m)

    def d_velocity_drho(self, rho: float, w: float) -> float:
        return -w / self.rho_m

    def d_velocity_dw(self, rho: float, w: float) -> float:
        return 1.0 - rho / self.rho_m

    def flux(self, rho: float, w: float) -> float:
        self.check_state(rho, w)
        return w * rho * (1.0 - rho / self.rho_m)

    def d_flux_drho(self, rho: float, w: float) -> float:
        return w * (1.0 - 2.0 * rho / self.rho_m)

    def max_velocity(self, w: float) -> float:
        return w

    def chord_speed(self, rho_a: float, rho_b: float, w: float) -> float:
        return w * (1.0 - (rho_a + rho_b) / self.rho_m)

    def critical_density(self, w: float) -> float:
        return 0.5 * self.rho_m

    def max_flux(self, w: float) -> float:
        return 0.25 * w * self.rho_m

    def companion_density(self, rho: float, w: float) -> float:
        self.check_state(rho, w)
        return self.rho_m - rho

    def demand(self, rho: float, w: float) -> float:
        if rho <= 0.5 * self.rho_m:
            return self.flux(rho, w)
        self.check_state(rho, w)
        return 0.25 * w * self.rho_m

    def supply(self, rho: float, w: float) -> float:
        if rho <= 0.5 * self.rho_m:
            self.check_state(rho, w)
            return 0.25 * w * self.rho_m
        return self.flux(rho, w)

    def rho_dagger(self, w_bar: float, v_plus: float) -> float:
        if v_plus < 0:
            raise DomainError(f"negative velocity {v_plus!r}")
        if v_plus >= w_bar:
            return 0.0
        return self.rho_m * (1.0 - v_plus / w_bar)

    def _invert(self, q: float, w: float, branch: str) -> float:
        half = 0.5 * self.rho_m
        qmax = 0.25 * w * self.rho_m
        if q >= qmax * (1.0 - SNAP_REL):
            return half
        # rho^2 - rho_M rho + rho_M q / w = 0; write the free root stably
        disc = math.sqrt(max(1.0 - q / qmax, 0.0))
        if branch == FREE:
            return 2.0 * q / (w * (1.0 + disc))
        if branch == CONGESTED:
            return half * (1.0 + disc)
        raise ValueError(f"unknown branch {branch!r}")


class VelocityFamily(FluxModel):
    """Family defined by an arbitrary velocity callable ``velocity_fn(rho, w)``.

    Derivatives are taken by central differences unless callables for them
    are supplied. ``rho_max`` may be a constant or a function of ``w``.
    """

    name = "custom"

    def __init__(
        self,
        velocity_fn: Callable[[float, float], float],
        w_min: float,
        w_max: float,
        rho_max: float | Callable[[float], float] = 1.0,
        dv_drho: Callable[[float, float], float] | None = None,
        dv_dw: Callable[[float, float], float] | None = None,
        name: str = "custom",
    ):
        super().__init__(w_min, w_max)
        self._velocity_fn = velocity_fn
        self._rho_max = rho_max
        self._dv_drho = dv_drho
        self._dv_dw = dv_dw
        self.name = name

    def rho_max(self, w: float) -> float:
        if callable(self._rho_max):
            return float(self._rho_max(w))
        return float(self._rho_max)

    def velocity(self, rho: float, w: float) -> float:
        return float(self._velocity_fn(rho, w))

    def d_velocity_drho(self, rho: float, w: float) -> float:
        if self._dv_drho is not None:
            return float(self._dv_drho(rho, w))
        return super().d_velocity_drho(rho, w)

    def d_velocity_dw(self, rho: float, w: float) -> float:
        if self._dv_dw is not None:
            return float(self._dv_dw(rho, w))
        return super().d_velocity_dw(rho, w)


# ---------------------------------------------------------------------------
# family validation


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    worst_violation: float
    where: tuple[float, float] | None = None


@dataclass
class ValidationReport:
    family: str
    grid: tuple[int, int]
    checks: list[HypothesisCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "grid": list(self.grid),
            "passed": self.passed,
            "checks": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "worst_violation": c.worst_violation,
                    "where": list(c.where) if c.where else None,
                }
                for c in self.checks
            ],
        }


def validate_family(model: FluxModel, n_rho: int = 200, n_w: int = 50, tol: float = 1e-6) -> ValidationReport:
    """Sample the structural hypotheses of ``model`` on an ``n_rho`` x ``n_w`` grid.

    Each check records the largest violation found (0 when satisfied).
    Derivatives are finite differences of the velocity callable with the grid
    spacing as step, so the family's own derivative hooks are not trusted.
    End points use one-sided stencils.
    """
    names = (
        "H1 zero flux at rho=0 and rho_max",
        "H2 strict concavity in rho",
        "H3 flux nondecreasing in w",
        "V1 nonnegative velocity",
        "V2 velocity decreasing in rho",
        "V3 velocity nondecreasing in w",
        "f negative for rho>0",
    )
    worst = {n: (0.0, None) for n in names}

    def record(name, amount, at):
        if amount > worst[name][0]:
            worst[name] = (float(amount), (float(at[0]), float(at[1])))

    vel = model.velocity
    span = model.w_max - model.w_min
    dw = 1e-4 * span if span > 0 else 1e-6
    for w in np.linspace(model.w_min, model.w_max, n_w):
        w = float(w)
        top = model.rho_max(w)
        h = top / (n_rho - 1)
        rhos = [k * h for k in range(n_rho)]
        rhos[-1] = top
        v = [vel(r, w) for r in rhos]
        q = [r * vv for r, vv in zip(rhos, v)]
        record(names[0], abs(q[0]), (0.0, w))
        record(names[0], abs(q[-1]), (top, w))
        for k, r in enumerate(rhos):
            record(names[3], -v[k], (r, w))
            if k == 0:
                second = (q[2] - 2 * q[1] + q[0]) / (h * h)
                dv = (v[1] - v[0]) / h
            elif k == n_rho - 1:
                second = (q[k] - 2 * q[k - 1] + q[k - 2]) / (h * h)
                dv = (v[k] - v[k - 1]) / h
            else:
                second = (q[k + 1] - 2 * q[k] + q[k - 1]) / (h * h)
                dv = (v[k + 1] - v[k - 1]) / (2 * h)
            # strict inequalities: a zero curvature or flat velocity is a violation
            record(names[1], second if second >= 0 else 0.0, (r, w))
            record(names[4], dv if dv >= 0 else 0.0, (r, w))
            if k > 0:
                if 0 < k < n_rho - 1:
                    dq = (q[k + 1] - q[k - 1]) / (2 * h)
                else:
                    dq = (q[k] - q[k - 1]) / h
                f = r * dq - q[k]
                record(names[6], f if f >= 0 else 0.0, (r, w))
            lo_w = max(w - dw, model.w_min)
            hi_w = min(w + dw, model.w_max)
            if hi_w > lo_w and r <= min(model.rho_max(lo_w), model.rho_max(hi_w)):
                dvw = (vel(r, hi_w) - vel(r, lo_w)) / (hi_w - lo_w)
                record(names[5], -dvw, (r, w))
                record(names[2], -r * dvw, (r, w))

    report = ValidationReport(model.name, (n_rho, n_w))
    for n in names:
        amount, at = worst[n]
        report.checks.append(HypothesisCheck(n, amount < tol, amount, at))
    return report


def build_model(params: dict) -> FluxModel:
    """Construct a registered family from a parameter dictionary."""
    family = params.get("family", "greenshields")
    if family == "greenshields":
        return GreenshieldsFamily(
            w_min=float(params.get("w_min", 0.5)),
            w_max=float(params.get("w_max", 2.0)),
            rho_m=float(params.get("rho_max", 1.0)),
        )
    raise ValueError(f"unknown model family {family!r}")


FAMILIES = ("greenshields",)
