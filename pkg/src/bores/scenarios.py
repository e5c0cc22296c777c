"""Curve families for the four application scenarios, hypothesis
validators, and the barrier-action (Agmon-distance) oracle.

Default parameters are chosen so every shipped scenario passes its
validator at sample density 1e4 and produces widths that are resolvable
across the acceptance h-sweeps.  All bounded curve parts are analytic in
a sector; the shared repulsive core keeps every level above the elliptic
floor near the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .curves import Const, CoreBarrier, Curve, CurveSet, FlatGauss, Gauss, PlaneMixer, Tail
from .errors import BarrierError, ConfigurationError, ModelError

__all__ = [
    "make_scenario", "validate_scenario", "ScenarioReport", "agmon_distance",
    "SCENARIO_TAGS", "scenario_defaults",
]

SCENARIO_TAGS = ("shape", "tunneling", "predissociation", "crossing")

# delta1 shared with the cutoff system; the core must die out before the
# scaling field can turn on.
_DELTA1 = 0.25
_CORE = dict(strength=2.0, r_on=2.0 * _DELTA1, r_off=4.0 * _DELTA1)


def scenario_defaults(tag):
    """Default parameter dict for a scenario tag.

    Values are calibrated so the h-sweep studies resolve every width above
    the eigensolver floor while the fitted laws land inside their
    acceptance windows.
    """
    if tag == "shape":
        # interior shelf + outer barrier: rounded well minimum (linear
        # E(h)), barrier action ~ 0.45 at the ground resonance energy
        return dict(
            lambda0=-0.2, sea=-0.42, shelf=0.28, shelf_width=1.9,
            barrier=0.26, barrier_center=3.1, barrier_width=0.7,
            delta1=_DELTA1, **_CORE,
        )
    if tag == "tunneling":
        # coupling bump placed where both channels are classically
        # forbidden: no oscillatory phase, clean exponential width law
        return dict(
            lambda0=0.0, sea2=0.55, well2=1.05, well2_center=2.3, well2_width=0.8,
            sea1=-0.9, hill1=0.85, hill1_width=2.0,
            couple_amp=0.5, couple_center=0.95, couple_width=0.3,
            delta1=_DELTA1, **_CORE,
        )
    if tag == "predissociation":
        # third curve plunges just outside the well so the two-segment
        # barrier action stays ~ 0.8 and widths stay resolvable
        return dict(
            lambda0=0.0, sea2=0.6, well2=1.1, well2_center=2.2, well2_width=0.85,
            sea3=-0.68, hill3=3.2, hill3_width=2.4,
            sea1=-1.6, tail1=0.3, tail1_offset=0.5,
            couple_amp=0.45, couple_width=0.45,
            delta1=_DELTA1, **_CORE,
        )
    if tag == "crossing":
        # wide well (dense ladder through lambda0) and mildly asymmetric
        # slopes at the crossing: layer statistics scale cleanly
        return dict(
            lambda0=0.0, sea2=0.55, well2=1.05, well2_center=2.1, well2_width=1.4,
            sea3=0.62, hill3_width=3.4,
            sea1=-2.2, hill1=0.4, hill1_width=1.8,
            couple_amp=0.4, couple_width=0.6,
            delta1=_DELTA1, **_CORE,
        )
    raise ConfigurationError([f"unknown scenario tag {tag!r} (expected one of {SCENARIO_TAGS})"])


def _core(p):
    return CoreBarrier(strength=p["strength"], r_on=p["r_on"], r_off=p["r_off"])


def _root_near(f, lo, hi, samples=4096):
    """All sign-change roots of the scalar function f on [lo, hi]."""
    r = np.linspace(lo, hi, samples)
    try:
        v = np.asarray(f(r), dtype=float)
        if v.shape != r.shape:
            raise TypeError
    except TypeError:
        v = np.array([float(f(x)) for x in r])
    roots = []
    for i in range(len(r) - 1):
        if v[i] == 0.0:
            roots.append(float(r[i]))
        elif v[i] * v[i + 1] < 0.0:
            roots.append(float(brentq(f, r[i], r[i + 1], xtol=1e-13)))
    return roots


def make_scenario(tag, params=None) -> CurveSet:
    """Build a scenario curve set; raises ModelError naming any violated
    hypothesis bullet."""
    p = scenario_defaults(tag)
    if params:
        unknown = set(params) - set(p)
        if unknown:
            raise ConfigurationError(
                [f"unknown scenario parameter scenario.params.{k}" for k in sorted(unknown)])
        p.update(params)
    core = _core(p)
    lam0 = p["lambda0"]

    if tag == "shape":
        lam1 = Curve((Const(p["sea"]),
                      FlatGauss(p["shelf"], 0.0, p["shelf_width"]),
                      Gauss(p["barrier"], p["barrier_center"], p["barrier_width"])))
        cs = CurveSet(curves=(lam1,), core=core, lambda0=lam0, tag=tag, params=p)

    elif tag == "tunneling":
        lam1 = Curve((Const(p["sea1"]), Gauss(p["hill1"], 0.0, p["hill1_width"])))
        lam2 = Curve((Const(p["sea2"]),
                      Gauss(-p["well2"], p["well2_center"], p["well2_width"])))
        mix = PlaneMixer(0, 1, p["couple_amp"], p["couple_center"], p["couple_width"])
        cs = CurveSet(curves=(lam1, lam2), core=core, mixers=(mix,),
                      lambda0=lam0, tag=tag, params=p)

    elif tag == "predissociation":
        lam1 = Curve((Const(p["sea1"]), Tail(p["tail1"], p["tail1_offset"])))
        lam2 = Curve((Const(p["sea2"]),
                      Gauss(-p["well2"], p["well2_center"], p["well2_width"])))
        lam3 = Curve((Const(p["sea3"]), Gauss(p["hill3"], 0.0, p["hill3_width"])))
        # the second and third curves cross at r0 between the well exit r2
        # and the lambda0-crossing r3 of the third curve
        r0s = _root_near(lambda r: float(np.real(lam2.value(r) - lam3.value(r))), 1.2, 9.0)
        if not r0s:
            raise ModelError("predissociation: curves 2 and 3 never cross")
        r0 = r0s[-1]
        mix = PlaneMixer(1, 2, p["couple_amp"], r0, p["couple_width"])
        cs = CurveSet(curves=(lam1, lam2, lam3), core=core, mixers=(mix,),
                      lambda0=lam0, tag=tag, params=p,
                      special_radii={"r0": r0})

    else:  # crossing
        lam2 = Curve((Const(p["sea2"]),
                      Gauss(-p["well2"], p["well2_center"], p["well2_width"])))
        r2s = _root_near(lambda r: float(np.real(lam2.value(r))) - lam0,
                         p["well2_center"], 10.0)
        if not r2s:
            raise ModelError("crossing: second curve never exits its well")
        r2 = r2s[0]
        # third curve pinned so {lambda3 = lambda0} is exactly {r2}:
        # lam3(r) = a3*exp(-(r/w)^2) - sea3 with lam3(r2) = lambda0
        a3 = (p["sea3"] + lam0) * float(np.exp((r2 / p["hill3_width"]) ** 2))
        lam3 = Curve((Const(-p["sea3"]), Gauss(a3, 0.0, p["hill3_width"])))
        lam1 = Curve((Const(p["sea1"]), Gauss(p["hill1"], 0.0, p["hill1_width"])))
        mix = PlaneMixer(1, 2, p["couple_amp"], r2, p["couple_width"])
        cs = CurveSet(curves=(lam1, lam2, lam3), core=core, mixers=(mix,),
                      lambda0=lam0, tag=tag, params=p,
                      special_radii={"r2": r2})

    report = validate_scenario(cs)
    if not report.ok:
        raise ModelError(
            "scenario hypotheses violated: "
            + "; ".join(name for name, ok, _ in report.bullets if not ok))
    return cs


@dataclass
class ScenarioReport:
    tag: str
    bullets: list  # (name, passed, detail)

    @property
    def ok(self):
        return all(ok for _, ok, _ in self.bullets)

    def lines(self):
        return [f"[{'pass' if ok else 'FAIL'}] {name}: {detail}" for name, ok, detail in self.bullets]


def _limit_rate_bullet(cs, j):
    """lambda_j(r) - lambda_j^inf -> 0 at O(1/r), sampled at 50/100/200."""
    lim = cs.curves[j].limit
    rs = np.array([50.0, 100.0, 200.0])
    e = np.abs(np.real(cs.curves[j].value(rs)) - lim) + 1e-14
    ok = bool(e[2] <= e[0] * (rs[0] / rs[2]) * 1.5 + 1e-12)
    return (f"limit_rate_curve{j + 1}", ok,
            f"errors {e[0]:.2e}/{e[1]:.2e}/{e[2]:.2e} at r=50/100/200")


def validate_scenario(cs: CurveSet, sample_density=10_000) -> ScenarioReport:
    """Check every scenario hypothesis bullet on a dense sample.

    Report-only: callers decide whether failures are fatal.
    """
    lam0 = cs.lambda0
    r_lo, r_hi = 1e-3, 12.0
    r = np.linspace(r_lo, r_hi, sample_density)
    vals = cs.values(r)
    bullets = []

    def curve_j(j):
        return lambda x: float(cs.values(np.array([x]))[0, j]) - lam0

    if cs.tag == "shape":
        lam = vals[:, 0]
        roots = _root_near(curve_j(0), r_lo, r_hi, sample_density)
        bullets.append(("island_crossings", len(roots) == 3,
                        f"{len(roots)} crossings of lambda0 (expect 3: core edge, well exit, island edge)"))
        if len(roots) == 3:
            ra, rc, rd = roots
            inside_well = (r > ra) & (r < rc)
            ring = ((r < ra) | ((r > rc) & (r < rd)))
            outside = r > rd
            bullets.append(("well_below_lambda0", bool(np.all(lam[inside_well] <= lam0 + 1e-12)),
                            f"U = [{ra:.3f}, {rc:.3f}]"))
            bullets.append(("ring_above_lambda0", bool(np.all(lam[ring] > lam0 - 1e-12)),
                            f"island ring up to {rd:.3f}"))
            bullets.append(("sea_below_lambda0", bool(np.all(lam[outside] <= lam0 + 1e-12)),
                            "lambda1 <= lambda0 outside the island"))
            exit_slice = lam[(r > rd) & (r < rd + 2.0)]
            bullets.append(("nontrapping_sampled", bool(np.all(np.diff(exit_slice) <= 1e-10)),
                            "monotone exit just outside the island (sampled surrogate for "
                            "the dynamical non-trapping condition)"))
        bullets.append(("limit_below_lambda0", cs.curves[0].limit < lam0,
                        f"lambda1_inf = {cs.curves[0].limit}"))
        bullets.append(_limit_rate_bullet(cs, 0))

    elif cs.tag == "tunneling":
        lam1, lam2 = vals[:, 0], vals[:, 1]
        u_mask = lam2 <= lam0
        bullets.append(("well_compact", bool(u_mask.any() and not u_mask[0] and not u_mask[-1]),
                        "U = {lambda2 <= lambda0} is a compact interval"))
        segs = np.flatnonzero(np.diff(u_mask.astype(int)) != 0).size
        bullets.append(("well_single_interval", segs == 2, f"{segs} sign changes (expect 2)"))
        bullets.append(("limit2_above", cs.curves[1].limit > lam0,
                        f"lambda2_inf = {cs.curves[1].limit}"))
        bullets.append(("limit1_below", cs.curves[0].limit < lam0,
                        f"lambda1_inf = {cs.curves[0].limit}"))
        roots1 = _root_near(curve_j(0), r_lo, r_hi, sample_density)
        bullets.append(("single_crossing_curve1", len(roots1) == 1,
                        f"{len(roots1)} crossings of lambda0 by lambda1 (expect 1)"))
        bullets.append(("ordering", bool(np.all(lam1 < lam2 - 1e-12)),
                        "lambda1 < lambda2 everywhere (simplicity)"))
        bullets.append(_limit_rate_bullet(cs, 0))
        bullets.append(_limit_rate_bullet(cs, 1))

    elif cs.tag in ("predissociation", "crossing"):
        lam1, lam2, lam3 = vals[:, 0], vals[:, 1], vals[:, 2]
        u_mask = lam2 <= lam0
        segs = np.flatnonzero(np.diff(u_mask.astype(int)) != 0)
        ok_interval = u_mask.any() and not u_mask[0] and not u_mask[-1] and segs.size == 2
        r1 = r[segs[0]] if segs.size >= 1 else np.nan
        r2 = r[segs[-1]] if segs.size >= 2 else np.nan
        bullets.append(("well2_bounded_interval", bool(ok_interval),
                        f"U = [{r1:.3f}, {r2:.3f}]"))
        bullets.append(("limit2_above", cs.curves[1].limit > lam0,
                        f"lambda2_inf = {cs.curves[1].limit}"))
        bullets.append(("limit3_below", cs.curves[2].limit < lam0,
                        f"lambda3_inf = {cs.curves[2].limit}"))
        bullets.append(("limit1_below_limit3", cs.curves[0].limit < cs.curves[2].limit,
                        f"lambda1_inf = {cs.curves[0].limit} < lambda3_inf"))
        roots3 = _root_near(curve_j(2), r_lo, r_hi, sample_density)
        if cs.tag == "predissociation":
            ok3 = len(roots3) == 1 and ok_interval and roots3[0] > r2
            bullets.append(("curve3_crosses_beyond_well", ok3,
                            f"r3 = {roots3[0] if roots3 else float('nan'):.3f} (needs single root > r2 = {r2:.3f})"))
        else:
            ok3 = len(roots3) == 1 and ok_interval and abs(roots3[0] - r2) < 5e-3
            bullets.append(("curve3_crosses_at_r2", ok3,
                            f"r3 = {roots3[0] if roots3 else float('nan'):.4f} vs r2 = {r2:.4f}"))
            if ok_interval:
                d2 = cs.derivs(np.array([r1, r2]))[:, 1] + (0.0 if cs.core is None else 0.0)
                bullets.append(("well2_transversal_edges",
                                bool(np.all(np.abs(d2) > 1e-3)),
                                f"lambda2'(r1), lambda2'(r2) = {d2[0]:.3f}, {d2[1]:.3f}"))
        roots1 = _root_near(curve_j(0), r_lo, r_hi, sample_density)
        ok1 = len(roots1) == 1 and ok_interval and roots1[0] < r1
        bullets.append(("curve1_single_crossing_inside", ok1,
                        f"{len(roots1)} crossings, first at "
                        f"{roots1[0] if roots1 else float('nan'):.3f} (needs 1, inside (0, r1))"))
        bullets.append(("curve1_lowest", bool(np.all(lam1 < np.minimum(lam2, lam3) - 1e-12)),
                        "lambda1 < min(lambda2, lambda3) for all r"))
        for j in range(3):
            bullets.append(_limit_rate_bullet(cs, j))

    else:
        bullets.append(("known_tag", False, f"unknown tag {cs.tag!r}"))

    return ScenarioReport(tag=cs.tag, bullets=bullets)


def agmon_distance(curve, lambda0, r_a, r_b, rel_tol=1e-9):
    """Barrier action  integral_{r_a}^{r_b} sqrt(max(curve(r) - lambda0, 0)) dr.

    curve: callable r -> value (real).  Adaptive quadrature to relative
    error below 1e-8.  Raises BarrierError when the curve dips below
    lambda0 strictly inside the interval.
    """
    if not r_b > r_a:
        raise ConfigurationError([f"agmon_distance needs r_b > r_a, got [{r_a}, {r_b}]"])
    rs = np.linspace(r_a, r_b, 2001)[1:-1]
    v = np.array([curve(x) for x in rs]) - lambda0
    pad = max(2, len(rs) // 100)
    if np.any(v[pad:-pad] < -1e-10 * max(1.0, abs(lambda0))):
        i = pad + int(np.argmin(v[pad:-pad]))
        raise BarrierError(
            f"curve dips below lambda0 inside the barrier: {v[i] + lambda0:.6g} < {lambda0} "
            f"at r = {rs[i]:.4f}")

    def integrand(x):
        d = curve(x) - lambda0
        return np.sqrt(d) if d > 0.0 else 0.0

    val, _ = quad(integrand, r_a, r_b, epsabs=1e-13, epsrel=rel_tol, limit=300)
    return float(val)
