"""Two-sided Lifshitz-tail bounds at a band edge and their numerical checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimators import IdsEstimate, delta_ids_empirical, rotation_ids
from .model import ModelEnsemble
from .normal_form import BandEdgeNormalForm
from .prufer import PhaseDynamics
from .spectral import BandEdge, delta_ids_periodic


class EmptyInterval(ValueError):
    pass


class DegenerateCurve(ValueError):
    pass


@dataclass(frozen=True)
class TheoremBounds:
    epsilon: float
    delta_N_nu: float
    p_nu: float
    K: int
    lower: float
    upper_envelope: float


def theorem_bounds(edge: BandEdge, ensemble: ModelEnsemble, epsilon: float) -> TheoremBounds:
    """lower = dN_nu p^(1/(L dN_nu) + 1) / 2 and upper envelope dN_nu p^(1/(L dN_nu)).

    The true upper bound is C times the envelope for an unspecified C.
    """
    p = ensemble.probabilities[edge.owner]
    if not p > 0:
        raise ValueError("owner block has zero probability")
    L = ensemble.period
    dn = delta_ids_periodic(edge, epsilon)
    if not dn > 0:
        raise ValueError(f"delta N_nu({epsilon}) = {dn} is not positive")
    x = 1.0 / (L * dn)
    return TheoremBounds(epsilon, dn, p, math.floor(x) + 1, 0.5 * dn * p ** (x + 1), dn * p ** x)


@dataclass(frozen=True)
class BoundReport:
    epsilon: float
    delta_N_nu: float
    K_lower: int
    lower_bound: float
    upper_envelope: float
    measured: IdsEstimate
    ratio_upper: float
    pass_lower: bool
    in_domain: bool = True

    def row(self) -> dict:
        return {
            "epsilon": self.epsilon, "delta_N_nu": self.delta_N_nu, "K": self.K_lower,
            "lower": self.lower_bound, "upper_envelope": self.upper_envelope,
            "measured": self.measured.value, "stderr": self.measured.std_error,
            "ratio_upper": self.ratio_upper, "pass_lower": self.pass_lower,
        }


def bound_report(edge: BandEdge, ensemble: ModelEnsemble, measured: IdsEstimate) -> BoundReport:
    eps = measured.epsilon
    if not eps > 0:
        nan = math.nan
        return BoundReport(eps, nan, 0, nan, nan, measured, nan, True, in_domain=False)
    b = theorem_bounds(edge, ensemble, eps)
    ok = measured.value + 3 * measured.std_error >= b.lower
    return BoundReport(eps, b.delta_N_nu, b.K, b.lower, b.upper_envelope, measured,
                       measured.value / b.upper_envelope, bool(ok))


def verify_bounds(ensemble: ModelEnsemble, nf: BandEdgeNormalForm, epsilon_grid, blocks_m: int = 10**7,
                  replicas: int = 8, seed: int = 0, method: str = "rotation", sites_n: int = 10**6,
                  workers: int = 1) -> list[BoundReport]:
    """Measure delta-N on the grid and compare with the bounds.

    Offsets <= 0 lie on the gap side; they are measured but flagged out of
    domain and not tested.
    """
    eps0 = nf.epsilon0
    reports = []
    for eps in sorted(float(e) for e in epsilon_grid):
        if eps0 is not None and abs(eps) > eps0 + 1e-15:
            raise ValueError(f"epsilon {eps} outside the validity radius {eps0}")
        if method == "rotation":
            est = rotation_ids(ensemble, nf, eps, blocks_m, replicas, seed, workers=workers)
        elif method == "sturm":
            est = delta_ids_empirical(ensemble, nf.edge, eps, sites_n, replicas, seed, workers=workers)
        else:
            raise ValueError(f"unknown method {method!r}")
        reports.append(bound_report(nf.edge, ensemble, est))
    return reports


def upper_constant_summary(reports: list[BoundReport]) -> dict:
    """Fitted C (largest ratio) and the spread of ratios across the grid."""
    ratios = [r.ratio_upper for r in reports if r.in_domain]
    values = [r.measured.value for r in reports if r.in_domain]
    if not ratios:
        return {"C_fit": math.nan, "ratio_spread": math.nan, "dN_span": math.nan}
    return {
        "C_fit": max(ratios),
        "ratio_spread": max(ratios) / min(ratios) if min(ratios) > 0 else math.inf,
        "dN_span": max(values) / min(values) if min(values) > 0 else math.inf,
    }


@dataclass(frozen=True)
class CriticalInterval:
    a: float
    M_steps: int
    epsilon0_used: float


class _Mirrored:
    """Block maps in the frame where rotation into the spectrum is positive."""

    def __init__(self, nf: BandEdgeNormalForm, ensemble: ModelEnsemble, epsilon: float):
        self.s = nf.edge.sign
        self.dyn = PhaseDynamics.build(nf, ensemble, self.s * epsilon)

    def __call__(self, sigma, theta):
        return self.s * self.dyn.maps[sigma](self.s * np.asarray(theta))


def critical_interval(nf: BandEdgeNormalForm, ensemble: ModelEnsemble, epsilon0: float | None = None,
                      eps_points: int = 41, max_steps: int = 10**6) -> CriticalInterval:
    """Half-width a of the interval crossed only by repeating the owner map, and
    the number M of owner steps taking a past pi - a.

    a is the supremum of theta <= 1 with S_sigma(theta) < -theta for every
    other block and every tested |eps| <= eps0; the left side is increasing in
    theta, so it is found by bisection.
    """
    eps0 = epsilon0 if epsilon0 is not None else nf.epsilon0
    if eps0 is None:
        raise ValueError("epsilon0 required")
    nu = nf.edge.owner
    others = [i for i in ensemble.support if i != nu]
    if not others:
        raise EmptyInterval("ensemble needs at least one block besides the owner")
    maps = {e: _Mirrored(nf, ensemble, e) for e in np.linspace(-eps0, eps0, eps_points)}

    def worst(theta):
        return max(float(m(s, theta)) + theta for m in maps.values() for s in others)

    if worst(0.0) >= 0:
        raise EmptyInterval("another block does not push theta = 0 to the left")
    if worst(1.0) < 0:
        a = 1.0
    else:
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if worst(mid) < 0 else (lo, mid)
        a = lo
    if not a > 0:
        raise EmptyInterval("a = 0")
    steps = 0
    for e, m in maps.items():
        if e < 0:
            continue
        th, n = a, 0
        while th < math.pi - a:
            th = float(m(nu, th))
            n += 1
            if n > max_steps:
                raise EmptyInterval(f"owner orbit from a did not pass pi - a in {max_steps} steps")
        steps = max(steps, n)
    return CriticalInterval(a, steps, eps0)


def check_critical_interval(ci: CriticalInterval, nf: BandEdgeNormalForm, ensemble: ModelEnsemble,
                            theta_points: int = 32, eps_points: int = 32) -> list[str]:
    """Re-verify the defining inequalities on a (theta, eps) grid; returns violations."""
    nu = nf.edge.owner
    others = [i for i in ensemble.support if i != nu]
    bad = []
    thetas = np.linspace(-ci.a, ci.a, theta_points)
    for e in np.linspace(-ci.epsilon0_used, ci.epsilon0_used, eps_points):
        m = _Mirrored(nf, ensemble, e)
        for s in others:
            img = m(s, thetas)
            for th, y in zip(thetas, img):
                if not y < -th:
                    bad.append(f"S_{s}(theta={th:.6g}) = {y:.6g} at eps={e:.4g}")
        if e >= 0:
            th = ci.a
            for _ in range(ci.M_steps):
                th = float(m(nu, th))
            if th < math.pi - ci.a:
                bad.append(f"S_nu^M(a) = {th:.6g} < pi - a at eps={e:.4g}")
    return bad


def lifshitz_exponent(curve) -> float:
    """Least-squares slope of log|log dN| against |log eps|."""
    pts = [(float(e), float(d)) for e, d in curve]
    if len(pts) < 4:
        raise DegenerateCurve("need at least 4 points")
    eps = np.array([p[0] for p in pts])
    dn = np.array([p[1] for p in pts])
    if np.any(eps <= 0) or np.any(dn <= 0) or np.any(dn >= 1):
        raise DegenerateCurve("need 0 < eps and 0 < dN < 1")
    if eps.max() / eps.min() < 10 * (1 - 1e-12):
        raise DegenerateCurve("eps must span at least one decade")
    slope, _ = np.polyfit(np.abs(np.log(eps)), np.log(np.abs(np.log(dn))), 1)
    return float(slope)
