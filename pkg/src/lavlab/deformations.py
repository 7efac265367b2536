"""
Closed-form deformations of the two-component domain.

Every family is described in the canonical frame of S1 by a planar
*profile* acting on the pinch coordinate t and the cross coordinate u

    (t, u) -> (Y_t(t, u), Y_u(t, u)),   grad = [[a, 0], [b, c]],

with a = dY_t/dt, b = dY_u/dt, c = dY_u/du; in 3D the remaining coordinate
x1 is carried along unchanged. On S2 the pinch families are conjugated,
y(x) = Q y(Q^T (x - xi)), while the bypass competitors shear S2 sideways
around S1.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConstraintError, DomainError, ParameterError
from .geometry import _CODES, on_dirichlet_boundary, pullback, pushforward, region_codes

__all__ = [
    "Kind",
    "DeformationFamily",
    "EvalResult",
    "AdmissibilityReport",
    "make_family",
    "evaluate",
    "deformation_values",
    "boundary_datum",
    "pinch_set",
    "admissibility_check",
    "interface_continuity_residual",
    "bypass_shift",
]


class Kind(str, Enum):
    BOUNDARY_DATUM = "BoundaryDatum"
    CROSS_PINCH_2D = "CrossPinch2D"
    CROSS_PINCH_LOG_2D = "CrossPinchLog2D"
    BYPASS_2D = "Bypass2D"
    CROSS_PINCH_3D = "CrossPinch3D"
    BYPASS_3D = "Bypass3D"

    @property
    def is_pinch(self):
        return self in (Kind.CROSS_PINCH_2D, Kind.CROSS_PINCH_LOG_2D, Kind.CROSS_PINCH_3D)

    @property
    def is_bypass(self):
        return self in (Kind.BYPASS_2D, Kind.BYPASS_3D)

    @property
    def dim(self):
        if self in (Kind.CROSS_PINCH_3D, Kind.BYPASS_3D):
            return 3
        if self is Kind.BOUNDARY_DATUM:
            return None
        return 2


_DEFAULT_SHAPE = {
    Kind.CROSS_PINCH_2D: (0.7, 0.75),
    Kind.CROSS_PINCH_3D: (0.72, 0.72),
}


@dataclass(frozen=True)
class DeformationFamily:
    kind: Kind
    dim: int
    alpha: float = None
    beta: float = None

    def label(self):
        if self.alpha is None:
            return self.kind.value
        return f"{self.kind.value}(alpha={self.alpha:g}, beta={self.beta:g})"


@dataclass
class EvalResult:
    """Values, gradients and determinants at a batch of points.

    ``region`` holds integer region codes for batches and a
    :class:`~lavlab.geometry.Region` for a single point. ``singular`` marks points on the pinch set, where the value is the
    continuous limit and the gradient is undefined (NaN).
    """

    y: np.ndarray
    grad: np.ndarray
    det: np.ndarray
    region: np.ndarray
    singular: np.ndarray


@dataclass
class AdmissibilityReport:
    admissible: bool
    constraints: list = field(default_factory=list)  # (description, holds, slack)

    def violated(self):
        return [c for c in self.constraints if not c[1]]


def make_family(kind, params=None, alpha=None, beta=None, dim=None, validate=True):
    """Build a deformation family, checking its exponent constraints against ``params``.

    Shape parameters default to (0.7, 0.75) in 2D, (0.72, 0.72) in 3D and
    alpha = beta = (p-1)/p for the log-corrected family.
    """
    kind = Kind(kind)
    if kind is Kind.BOUNDARY_DATUM:
        d = dim or (params.d if params is not None else 2)
    else:
        d = kind.dim
        if dim is not None and dim != d:
            raise ParameterError(f"{kind.value} is a {d}D family, got dim={dim}")
    if params is not None and params.d != d:
        raise ParameterError(f"material dimension {params.d} does not match family dimension {d}")
    if kind.is_pinch:
        if alpha is None or beta is None:
            if kind is Kind.CROSS_PINCH_LOG_2D:
                if params is None:
                    raise ParameterError("log family defaults need material parameters")
                a0 = (params.p - 1) / params.p
                default = (a0, a0)
            else:
                default = _DEFAULT_SHAPE[kind]
            alpha = default[0] if alpha is None else alpha
            beta = default[1] if beta is None else beta
        fam = DeformationFamily(kind, d, float(alpha), float(beta))
    else:
        fam = DeformationFamily(kind, d)
    if validate and params is not None:
        rep = admissibility_check(fam, params)
        if not rep.admissible:
            msgs = "; ".join(f"{c[0]} (slack {c[2]:.3g})" for c in rep.violated())
            raise ConstraintError(f"{fam.label()} violates: {msgs}")
    return fam


def admissibility_check(family, params):
    """Check the exponent constraints that make the family's energy finite."""
    p, q = params.p, params.q
    a, b = family.alpha, family.beta
    cons = []

    def add(desc, slack, strict=True):
        cons.append((desc, bool(slack > 0 if strict else slack >= 0), float(slack)))

    kind = family.kind
    if kind is Kind.CROSS_PINCH_2D:
        add("alpha > (p-1)/p", a - (p - 1) / p)
        add("alpha < beta", b - a)
        add("beta <= 1", 1 - b, strict=False)
        add("(1-alpha-beta) q > -1", (1 - a - b) * q + 1)
        add("p (alpha-1) > -1", p * (a - 1) + 1)
        add("p (beta-1) > -1", p * (b - 1) + 1)
    elif kind is Kind.CROSS_PINCH_LOG_2D:
        add("0 < alpha", a)
        add("beta >= alpha", b - a, strict=False)
        add("beta <= 1", 1 - b, strict=False)
        add("(1-alpha-beta) q >= -1", (1 - a - b) * q + 1, strict=False)
        add("p (alpha-1) >= -1", p * (a - 1) + 1, strict=False)
    elif kind is Kind.CROSS_PINCH_3D:
        # the construction only covers this exponent window
        add("3 < p", p - 3)
        add("p < 4", 4 - p)
        add("2 < q", q - 2)
        add("q < p/(p-2)", p / (p - 2) - q)
        add("alpha > 1 - 1/p", a - (1 - 1 / p))
        add("beta > 1 - 1/p", b - (1 - 1 / p))
        add("alpha < 1", 1 - a)
        add("beta < 1", 1 - b)
        add("(1-alpha-beta) q > -1", (1 - a - b) * q + 1)
    ok = all(c[1] for c in cons)
    return AdmissibilityReport(ok, cons)


def bypass_shift(s):
    """Sideways amplitude (1+s)/(1-2s) of the bypass competitors."""
    if not s < 0.5:
        raise ParameterError(f"bypass competitor needs s < 1/2, got {s}")
    return (1 + s) / (1 - 2 * s)


# --- planar profiles ------------------------------------------------------

def _profile(family, t, u, s, branch=None):
    """Return Y_t, Y_u, a, b, c, singular for pinch coordinate t and cross coordinate u.

    ``branch`` forces the inner or outer formula (used for interface checks).
    """
    kind = family.kind
    n = t.shape
    if not kind.is_pinch:
        one = np.ones(n)
        return t.copy(), u.copy(), one, np.zeros(n), one.copy(), np.zeros(n, dtype=bool)

    alpha, beta = family.alpha, family.beta
    r = np.abs(t)
    sg = np.sign(t)
    if branch is None:
        inner = r <= s
    else:
        inner = np.full(n, branch == "inner")
    outer = ~inner
    sing = inner & (r == 0)
    ok = inner & ~sing

    Yt = np.empty(n)
    Yu = np.empty(n)
    a = np.empty(n)
    b = np.empty(n)
    c = np.empty(n)

    log = kind is Kind.CROSS_PINCH_LOG_2D
    if log:
        ls = abs(np.log(s))
        kappa = (1 - s**alpha / ls) / (1 - s)
    else:
        kappa = (1 - s**alpha) / (1 - s)

    ro = r[outer]
    Yt[outer] = sg[outer] * (kappa * (ro - 1) + 1)
    Yu[outer] = u[outer]
    a[outer] = kappa
    b[outer] = 0.0
    c[outer] = 1.0

    ri, ui, si = r[ok], u[ok], sg[ok]
    if log:
        L = -np.log(ri)
        C = ls**2 * s**-beta
        Yt[ok] = si * ri**alpha / L
        a[ok] = ri ** (alpha - 1) * (alpha / L + 1 / L**2)
        Yu[ok] = C * ri**beta / L**2 * ui
        b[ok] = si * C * ui * ri ** (beta - 1) * (beta / L**2 + 2 / L**3)
        c[ok] = C * ri**beta / L**2
    else:
        Yt[ok] = si * ri**alpha
        a[ok] = alpha * ri ** (alpha - 1)
        Yu[ok] = (ri / s) ** beta * ui
        b[ok] = beta * s**-beta * ri ** (beta - 1) * si * ui
        c[ok] = (ri / s) ** beta

    # continuous limit on the pinch set
    Yt[sing] = 0.0
    Yu[sing] = 0.0
    a[sing] = b[sing] = c[sing] = np.nan
    return Yt, Yu, a, b, c, sing


def _embed(family, z, s, branch=None):
    """Canonical-frame value, gradient and determinant for points z of S1."""
    d = z.shape[1]
    k = 0 if d == 2 else 1
    t, u = z[:, k], z[:, k + 1]
    Yt, Yu, a, b, c, sing = _profile(family, t, u, s, branch)
    y = z.copy()
    y[:, k] = Yt
    y[:, k + 1] = Yu
    G = np.zeros((len(z), d, d))
    if d == 3:
        G[:, 0, 0] = 1.0
    G[:, k, k] = a
    G[:, k + 1, k] = b
    G[:, k + 1, k + 1] = c
    det = a * c
    return y, G, det, sing


def boundary_datum(x, domain):
    """y0(x): identity on S1, x - xi on S2."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    codes = region_codes(x, domain)
    y = x.copy()
    in2 = codes >= 3
    y[in2] = x[in2] - domain.xi
    return y


def evaluate(family, x, domain, params=None):
    """Evaluate the deformation at points ``x`` (shape (d,) or (n, d)).

    Returns an :class:`EvalResult`; single points give unbatched arrays.
    ``params`` is accepted for interface symmetry and is not needed for the
    closed forms.
    """
    if family.dim != domain.dim:
        raise ParameterError(f"family is {family.dim}D but domain is {domain.dim}D")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    n, d = xs.shape
    codes = region_codes(xs, domain)
    if np.any(codes == 0):
        bad = xs[codes == 0][0]
        raise DomainError(f"point {bad} lies outside Omega_s")

    s = domain.s
    y = np.empty((n, d))
    G = np.empty((n, d, d))
    det = np.empty(n)
    sing = np.zeros(n, dtype=bool)

    m1 = codes <= 2
    m2 = ~m1
    z1 = xs[m1]
    z2 = pullback(xs[m2], domain)

    if family.kind.is_bypass:
        y[m1], G[m1], det[m1] = z1, np.eye(d), 1.0
        k = domain.pinch_axis
        amp = bypass_shift(s)
        Q = domain.Q
        tk = z2[:, k]
        yy = z2 @ Q.T
        yy[:, k] += amp * (1 - np.abs(tk))
        gg = np.broadcast_to(np.eye(d), (len(z2), d, d)).copy()
        gg[:, k, :] -= amp * np.sign(tk)[:, None] * Q[:, k][None, :]
        y[m2], G[m2], det[m2] = yy, gg, 1.0
    else:
        y1, g1, det1, s1 = _embed(family, z1, s)
        y[m1], G[m1], det[m1], sing[m1] = y1, g1, det1, s1
        y2, g2, det2, s2 = _embed(family, z2, s)
        Q = domain.Q
        y[m2] = y2 @ Q.T
        G[m2] = Q[None] @ g2 @ Q.T[None]
        det[m2] = det2
        sing[m2] = s2

    res = EvalResult(y, G, det, codes, sing)
    if single:
        return EvalResult(y[0], G[0], float(det[0]), _CODES[codes[0]], bool(sing[0]))
    return res


def deformation_values(family, x, domain):
    """Only the deformed positions, for rasterisation and plotting."""
    return np.atleast_2d(evaluate(family, x, domain).y)


def pinch_set(family, domain):
    """Axis-aligned boxes (lo, hi) whose union is the set collapsed by the family.

    2D: {0} x (-s,s) and (4-s,4+s) x {0}, both sent to the origin.
    3D: (-1,1) x {0} x (-s,s) and (-1,1) x (4-s,4+s) x {0}, both sent to
    the segment (-1,1) x {0} x {0}. Datum and bypass families collapse nothing.
    """
    if not family.kind.is_pinch:
        return []
    s = domain.s
    half = domain.half_widths()
    k = domain.pinch_axis
    lo = -half.copy()
    hi = half.copy()
    lo[k] = hi[k] = 0.0
    corners = np.array([lo, hi])
    img = pushforward(corners, domain)
    lo2, hi2 = img.min(axis=0), img.max(axis=0)
    assert np.isclose(hi[-1], s)
    return [(lo, hi), (lo2, hi2)]


def interface_continuity_residual(family, domain, n=64, seed=0):
    """Max mismatch of the piecewise formulas across |z_pinch| = s and on Gamma_s."""
    rng = np.random.default_rng(seed)
    d, s, k = domain.dim, domain.s, domain.pinch_axis
    half = domain.half_widths()
    resid = 0.0
    z = rng.uniform(-1, 1, size=(n, d)) * half
    if family.kind.is_pinch:
        for sign in (-1.0, 1.0):
            zi = z.copy()
            zi[:, k] = sign * s
            yi = _embed(family, zi, s, branch="inner")[0]
            yo = _embed(family, zi, s, branch="outer")[0]
            resid = max(resid, float(np.max(np.abs(yi - yo))))
    # Dirichlet faces of both components
    for sign in (-1.0, 1.0):
        zb = z.copy()
        zb[:, k] = sign
        for pts in (zb, pushforward(zb, domain)):
            assert np.all(on_dirichlet_boundary(pts, domain))
            yv = evaluate(family, pts, domain).y
            resid = max(resid, float(np.max(np.abs(yv - boundary_datum(pts, domain)))))
    return resid
