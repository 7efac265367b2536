"""
Energy sweeps over the width s, log-log exponent fits and the gap between
the pinch and bypass branches.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .deformations import Kind, admissibility_check, make_family
from .errors import ConstraintError, NumericalError, ParameterError
from .geometry import Region, make_domain
from .quadrature import QuadratureSpec, integrate_energy, thread_count

__all__ = [
    "EnergyReport",
    "ScalingFit",
    "GapRow",
    "GapReport",
    "DEFAULT_S_2D",
    "DEFAULT_S_3D",
    "dyadic",
    "predicted_exponent",
    "sweep",
    "fit_exponent",
    "gap_report",
    "optimize_shape",
]


def dyadic(lo, hi):
    """[2^-lo, ..., 2^-hi]."""
    return [2.0**-k for k in range(lo, hi + 1)]


DEFAULT_S_2D = dyadic(4, 10)
DEFAULT_S_3D = dyadic(4, 8)

_REGIONS = (Region.S1_INNER, Region.S1_OUTER, Region.S2_INNER, Region.S2_OUTER)


@dataclass
class EnergyReport:
    s: float
    family: str
    total: float
    per_region: dict
    quadrature_error: float
    diverged: bool = False

    def row(self):
        return [self.s, self.total] + [self.per_region[r] for r in _REGIONS] + [self.quadrature_error]


@dataclass
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    s_range: tuple

    def predict(self, s):
        return math.exp(self.intercept) * np.asarray(s) ** self.slope


@dataclass
class GapRow:
    s: float
    e_pinch: float
    e_bypass: float

    @property
    def ratio(self):
        return self.e_pinch / self.e_bypass


@dataclass
class GapReport:
    rows: list = field(default_factory=list)

    @property
    def ratios(self):
        return [r.ratio for r in self.rows]

    def decreasing_tail(self, n=4):
        """True if the ratio strictly decreases along the last ``n`` (finest) points."""
        rows = sorted(self.rows, key=lambda r: -r.s)[-n:]
        rat = [r.ratio for r in rows]
        return all(b < a for a, b in zip(rat, rat[1:]))


def _shape_family(dimension):
    if dimension == 2:
        return Kind.CROSS_PINCH_2D
    if dimension == 3:
        return Kind.CROSS_PINCH_3D
    raise ParameterError(f"dimension must be 2 or 3, got {dimension}")


def predicted_exponent(params, alpha, beta, dimension=None):
    """Exponent of the upper bound E_s <~ s^gamma for the cross-pinch family.

    2D: min{p alpha - p + 2, 2 + (1-alpha) q, 2 alpha + 1}
    3D: min{2, (alpha-1) p + 2, q (1-alpha) + 2, 1 + 2 alpha}
    """
    dimension = params.d if dimension is None else dimension
    fam = make_family(_shape_family(dimension), params, alpha, beta)
    p, q = params.p, params.q
    a = fam.alpha
    if dimension == 2:
        return min(p * a - p + 2, 2 + (1 - a) * q, 2 * a + 1)
    return min(2.0, (a - 1) * p + 2, q * (1 - a) + 2, 1 + 2 * a)


def _one(family, s, params, spec):
    if family.kind is Kind.CROSS_PINCH_LOG_2D and s > 0.25:
        raise ParameterError("the log-corrected family is swept only for s <= 1/4")
    dom = make_domain(family.dim, s)
    res = integrate_energy(family, dom, params, spec)
    per = {r: res.regions[r].value for r in _REGIONS}
    return EnergyReport(float(s), family.label(), res.total.value, per,
                        res.total.error_estimate, res.total.diverged)


def sweep(family, s_values, params, spec=None):
    """One :class:`EnergyReport` per width, in input order."""
    spec = spec or QuadratureSpec()
    if family.kind.is_pinch:
        rep = admissibility_check(family, params)
        if not rep.admissible:
            raise ConstraintError(f"{family.label()} is not admissible")
    s_values = [float(s) for s in s_values]
    for s in s_values:
        if not 0 < s < 1:
            raise ParameterError(f"s must lie in (0, 1), got {s}")
    workers = min(thread_count(), len(s_values))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(lambda s: _one(family, s, params, spec), s_values))
    return [_one(family, s, params, spec) for s in s_values]


def fit_exponent(reports, energies=None):
    """Least-squares line through (ln s, ln E_s).

    Accepts a list of :class:`EnergyReport` or two sequences (s, E).
    """
    if energies is None:
        s = np.array([r.s for r in reports], float)
        e = np.array([r.total for r in reports], float)
    else:
        s = np.asarray(reports, float)
        e = np.asarray(energies, float)
    if len(s) < 3:
        raise ParameterError("need at least three points for a fit")
    if np.any(~np.isfinite(e)) or np.any(e <= 0):
        raise NumericalError("energies must be finite and positive to fit an exponent",
                             {"energies": e.tolist()})
    fit = stats.linregress(np.log(s), np.log(e))
    r2 = min(1.0, max(0.0, fit.rvalue**2))
    return ScalingFit(float(fit.slope), float(fit.intercept), r2, (float(s.min()), float(s.max())))


def gap_report(pinch, lipschitz, s_values, params, spec=None):
    """E_s of both branches and their ratio at each s."""
    a = sweep(pinch, s_values, params, spec)
    b = a if lipschitz == pinch else sweep(lipschitz, s_values, params, spec)
    return GapReport([GapRow(ra.s, ra.total, rb.total) for ra, rb in zip(a, b)])


def _feasible_box(params, dimension):
    """Strict bounds and the names of the inequalities that could empty the region."""
    p, q = params.p, params.q
    lo = (p - 1) / p
    s_max = 1 + 1 / q  # alpha + beta < 1 + 1/q
    if dimension == 2:
        # alpha > lo, beta > alpha, alpha + beta < s_max
        if 2 * lo >= s_max:
            raise ConstraintError(
                "no admissible (alpha, beta): alpha > (p-1)/p and beta > alpha force "
                f"alpha + beta > {2 * lo:g}, but (1-alpha-beta) q > -1 needs alpha + beta < {s_max:g}")
    else:
        if 2 * lo >= s_max:
            raise ConstraintError(
                "no admissible (alpha, beta): alpha, beta > 1 - 1/p force "
                f"alpha + beta > {2 * lo:g}, but (1-alpha-beta) q > -1 needs alpha + beta < {s_max:g}")
    return lo, s_max


def optimize_shape(params, s, dimension=None, spec=None, grid=7, margin=1e-3):
    """Minimise E_s over admissible (alpha, beta) of the cross-pinch family.

    A coarse grid over the feasible triangle is refined with Nelder-Mead;
    points outside the region (shrunk by ``margin``) get energy +inf so the
    result is always admissible. Returns (alpha, beta, E_s).
    """
    dimension = params.d if dimension is None else dimension
    kind = _shape_family(dimension)
    lo, s_max = _feasible_box(params, dimension)
    spec = spec or QuadratureSpec(gauss_order=12, grading_levels=30, refinement_cap=46)
    dom = make_domain(dimension, s)

    def inside(a, b):
        if dimension == 2:
            ok = lo + margin < a and a + margin < b <= 1 and a + b < s_max - margin
        else:
            ok = lo + margin < a < 1 - margin and lo + margin < b < 1 - margin and a + b < s_max - margin
        return ok

    cache = {}

    def energy(v):
        a, b = float(v[0]), float(v[1])
        if not inside(a, b):
            return math.inf
        key = (a, b)
        if key not in cache:
            fam = make_family(kind, params, a, b)
            res = integrate_energy(fam, dom, params, spec)
            cache[key] = math.inf if res.diverged else res.total.value
        return cache[key]

    hi = 1.0
    cand = []
    for a in np.linspace(lo, hi, grid + 2)[1:-1]:
        for b in np.linspace(lo, hi, grid + 2)[1:-1]:
            if inside(a, b):
                cand.append((energy((a, b)), a, b))
    if not cand:
        # the region is a thin sliver; start from its centroid
        a0 = lo + (s_max - 2 * lo) / 4
        b0 = a0 + (s_max - 2 * lo) / 4 if dimension == 2 else a0
        cand.append((energy((a0, b0)), a0, b0))
    cand.sort()
    e0, a0, b0 = cand[0]
    if not math.isfinite(e0):
        raise NumericalError("no finite energy found in the admissible region")
    res = optimize.minimize(energy, [a0, b0], method="Nelder-Mead",
                            options={"xatol": 1e-4, "fatol": 1e-10 * abs(e0), "maxiter": 200})
    a, b = (float(res.x[0]), float(res.x[1])) if res.fun <= e0 else (a0, b0)
    fam = make_family(kind, params, a, b)  # raises if somehow inadmissible
    final = integrate_energy(fam, dom, params, QuadratureSpec())
    return a, b, final.total.value
