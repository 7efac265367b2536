"""
Injectivity diagnostics: the Ciarlet-Necas inequality, distortion
integrability, section arc lengths and forced self-intersections in 3D.

The image measure |y(Omega_s)| is bracketed by rasterisation. Each
component is sampled on a tensor grid of parameter points whose images are at
most h/2 apart along every parameter axis (the spacing along the pinch axis is
refined adaptively, since pinch families are not Lipschitz there). Pixels of
side h containing an image sample are *marked*; the lower bound keeps marked
pixels whose whole neighbourhood is marked, the upper bound adds the
neighbours of marked pixels.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .deformations import Kind, evaluate
from .errors import ParameterError
from .geometry import pushforward
from .quadrature import QuadratureSpec, gauss_rule, graded_cells_1d, integrate_region

__all__ = [
    "CNReport",
    "DistortionReport",
    "cn_check",
    "image_measure",
    "distortion_integral",
    "distortion_threshold",
    "predicted_distortion_threshold",
    "section_arclength",
    "stretching_bound",
    "miranda_g",
    "miranda_boundary_signs",
    "find_self_intersection",
    "IntersectionWitness",
]

SATISFIED = "satisfied"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"

_MAX_SAMPLES = 40_000_000
_CHUNK = 1 << 18


@dataclass
class CNReport:
    bulk_integral: float
    image_measure_lower: float
    image_measure_upper: float
    resolution: float
    verdict: str
    image_measure: float = math.nan
    bulk_error: float = 0.0
    samples: int = 0

    @property
    def deficit(self):
        """bulk - |y(Omega)| estimate; positive values indicate overlap."""
        return self.bulk_integral - self.image_measure


@dataclass
class DistortionReport:
    eta: float
    integral_estimates: list
    flag: str
    value: float = math.nan
    error_estimate: float = math.nan


# --- image rasterisation ----------------------------------------------------

def _param_to_physical(z, component, domain):
    return z if component == 1 else pushforward(z, domain)


def _values(family, z, component, domain):
    x = _param_to_physical(z, component, domain)
    return np.atleast_2d(evaluate(family, x, domain).y)


def _axis_lipschitz(family, domain, component, axis, n=2048, seed=0):
    """Sampled max |dy/dz_axis| (canonical parameters), with a safety factor."""
    rng = np.random.default_rng(seed)
    half = domain.half_widths()
    z = rng.uniform(-1, 1, size=(n, domain.dim)) * half
    x = _param_to_physical(z, component, domain)
    r = evaluate(family, x, domain)
    jac = r.grad if component == 1 else r.grad @ domain.Q
    col = np.linalg.norm(jac[:, :, axis], axis=1)
    col = col[np.isfinite(col)]
    return 1.1 * float(col.max()) if len(col) else 1.0


def _pinch_axis_nodes(family, domain, component, h, cross_probe, max_rounds=80):
    """Nodes along the pinch axis with image jumps at most h/2 on the probes."""
    k = domain.pinch_axis
    n0 = int(math.ceil(2.0 / (h / 2)))
    nodes = np.linspace(-1.0, 1.0, n0 + 1)
    # keep the region interfaces as nodes so midpoints never straddle them
    nodes = np.union1d(nodes, [-domain.s, 0.0, domain.s])
    for _ in range(max_rounds):
        z = np.repeat(cross_probe[None], len(nodes), axis=0)
        z[:, :, k] = nodes[:, None]
        y = _values(family, z.reshape(-1, domain.dim), component, domain)
        y = y.reshape(len(nodes), len(cross_probe), domain.dim)
        jump = np.linalg.norm(np.diff(y, axis=0), axis=2).max(axis=1)
        bad = jump > h / 2
        if not np.any(bad):
            break
        mids = 0.5 * (nodes[:-1] + nodes[1:])[bad]
        nodes = np.union1d(nodes, mids)
    return nodes


def _sample_grid(family, domain, component, h):
    """Per-axis midpoint samples (list of 1D arrays) in canonical parameters."""
    d, k = domain.dim, domain.pinch_axis
    half = domain.half_widths()
    axes = [None] * d
    for j in range(d):
        if j == k:
            continue
        L = _axis_lipschitz(family, domain, component, j)
        n = max(1, int(math.ceil(2 * half[j] * L / (h / 2))))
        e = np.linspace(-half[j], half[j], n + 1)
        axes[j] = 0.5 * (e[:-1] + e[1:])
    if family.kind.is_pinch or family.kind.is_bypass:
        probes = [np.array([-half[j], 0.0, half[j]]) if j != k else np.array([0.0])
                  for j in range(d)]
        mesh = np.meshgrid(*probes, indexing="ij")
        cross_probe = np.stack([g.ravel() for g in mesh], axis=-1)
        nodes = _pinch_axis_nodes(family, domain, component, h, cross_probe)
    else:
        nodes = np.linspace(-1.0, 1.0, int(math.ceil(2.0 / (h / 2))) + 1)
    axes[k] = 0.5 * (nodes[:-1] + nodes[1:])
    return axes


def _marked_cells(family, domain, h):
    keys = []
    count = 0
    for comp in (1, 2):
        axes = _sample_grid(family, domain, comp, h)
        sizes = [len(a) for a in axes]
        total = int(np.prod(sizes))
        count += total
        if count > _MAX_SAMPLES:
            raise ParameterError(f"resolution h={h} needs more than {_MAX_SAMPLES} samples")
        # iterate over the first axis in blocks to bound memory
        rest = int(np.prod(sizes[1:]))
        block = max(1, _CHUNK // max(rest, 1))
        tail = np.meshgrid(*axes[1:], indexing="ij")
        tail = np.stack([g.ravel() for g in tail], axis=-1)
        for i in range(0, sizes[0], block):
            a0 = axes[0][i:i + block]
            z = np.empty((len(a0), rest, domain.dim))
            z[:, :, 0] = a0[:, None]
            z[:, :, 1:] = tail[None]
            y = _values(family, z.reshape(-1, domain.dim), comp, domain)
            idx = np.floor(y / h).astype(np.int64)
            keys.append(np.unique(idx, axis=0))
    cells = np.unique(np.concatenate(keys), axis=0)
    return cells, count


def image_measure(family, domain, h):
    """(estimate, lower, upper, samples) for |y(Omega_s)| at pixel size h."""
    if not h > 0:
        raise ParameterError("resolution h must be positive")
    cells, count = _marked_cells(family, domain, h)
    lo = cells.min(axis=0) - 2
    shape = tuple(cells.max(axis=0) - lo + 3)
    grid = np.zeros(shape, dtype=bool)
    grid[tuple((cells - lo).T)] = True
    struct = np.ones((3,) * domain.dim, dtype=bool)
    inner = ndimage.binary_erosion(grid, structure=struct)
    outer = ndimage.binary_dilation(grid, structure=struct)
    vol = h**domain.dim
    return (float(grid.sum() * vol), float(inner.sum() * vol),
            float(outer.sum() * vol), count)


def _det_integrand(family, domain):
    def f(x):
        return evaluate(family, x, domain).det
    return f


def cn_check(family, domain, params=None, h=None, spec=None):
    """Compare the bulk integral of det grad y with the measure of the image.

    The verdict is ``violated`` only when the bulk integral exceeds the upper
    image bound by more than the quadrature error, ``inconclusive`` when the
    bracket is too wide to decide or the bulk integral diverges.
    """
    h = domain.s / 64 if h is None else float(h)
    bulk = integrate_region(_det_integrand(family, domain), "Omega", domain, spec)
    est, lower, upper, count = image_measure(family, domain, h)
    tol = bulk.error_estimate + 1e-9 * max(1.0, abs(bulk.value))
    if bulk.diverged or not math.isfinite(bulk.value) or upper - lower > bulk.value:
        verdict = INCONCLUSIVE
    elif bulk.value - upper > tol:
        verdict = VIOLATED
    else:
        verdict = SATISFIED
    return CNReport(bulk.value, lower, upper, h, verdict, est, bulk.error_estimate, count)


# --- distortion ---------------------------------------------------------------

def _distortion_integrand(family, domain, eta):
    d = domain.dim

    def f(x):
        r = evaluate(family, x, domain)
        norm2 = np.einsum("nij,nij->n", r.grad, r.grad)
        with np.errstate(all="ignore"):
            K = norm2 ** (d / 2) / r.det
            return np.where(r.det > 0, K**eta, np.inf)

    return f


def distortion_integral(family, domain, eta, spec=None):
    """Integral of K^eta over Omega_s, K = |grad y|^d / det grad y."""
    if not eta > 0:
        raise ParameterError("eta must be positive")
    res = integrate_region(_distortion_integrand(family, domain, eta), "Omega", domain, spec)
    flag = "divergent" if res.diverged else "finite"
    return DistortionReport(float(eta), list(res.history), flag, res.value, res.error_estimate)


def predicted_distortion_threshold(family):
    """eta* = 1/(1+beta-alpha): K ~ |x1|^(alpha-beta-1) near the pinch line (2D)."""
    if family.kind is not Kind.CROSS_PINCH_2D:
        raise ParameterError("closed-form threshold is derived for CrossPinch2D only")
    return 1.0 / (1.0 + family.beta - family.alpha)


def distortion_threshold(family, domain, lo=0.1, hi=4.0, tol=1e-3, spec=None):
    """Bisection for the exponent where the distortion integral starts to diverge.

    Returns (eta, trace) with trace a list of (eta, flag); ``eta`` is ``inf``
    when the integral is finite up to ``hi``.
    """
    trace = []

    def div(e):
        flag = distortion_integral(family, domain, e, spec).flag
        trace.append((e, flag))
        return flag == "divergent"

    if div(lo):
        return lo, trace
    if not div(hi):
        return math.inf, trace
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if div(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi), trace


# --- sections -----------------------------------------------------------------

def stretching_bound(s):
    """2 sqrt(2) (1 - s): the length one of the two central sections must reach."""
    return 2.0 * math.sqrt(2.0) * (1.0 - s)


def section_arclength(family, domain, sigma, strip=1, n=16, levels=60):
    """Length of y(T^sigma) for T^sigma_1 = (-1,1) x {sigma} or T^sigma_2 = {4+sigma} x (-1,1).

    The parameter runs along the pinch axis; cells are graded toward its
    midpoint so the improper integral at the pinch set converges.
    """
    if domain.dim != 2:
        raise ParameterError("sections are defined for the 2D domain")
    if not abs(sigma) < domain.s:
        raise ParameterError("need |sigma| < s")
    spec = QuadratureSpec(gauss_order=n, grading_levels=levels, refinement_cap=levels + 2)
    cells = []
    for lo, hi in ((-1.0, -domain.s), (domain.s, 1.0)):
        cells.append((lo, hi))
    cells.extend(graded_cells_1d(-domain.s, domain.s, 0.0, spec))
    t, w = gauss_rule(n)
    cells = np.asarray(cells)
    lens = cells[:, 1] - cells[:, 0]
    tt = (cells[:, :1] + lens[:, None] * t[None]).ravel()
    ww = (lens[:, None] * w[None]).ravel()
    if strip == 1:
        x = np.stack([tt, np.full_like(tt, sigma)], axis=1)
        direction = np.array([1.0, 0.0])
    elif strip == 2:
        x = np.stack([np.full_like(tt, 4.0 + sigma), tt], axis=1)
        direction = np.array([0.0, 1.0])
    else:
        raise ParameterError("strip must be 1 or 2")
    G = evaluate(family, x, domain).grad
    speed = np.linalg.norm(G @ direction, axis=1)
    return float(np.dot(speed, ww))


# --- self-intersection in 3D -------------------------------------------------

@dataclass
class IntersectionWitness:
    params: np.ndarray  # (x1, tau1, tau2)
    x: np.ndarray  # point of the S1 slice
    x_prime: np.ndarray  # point of the S2 slice
    value: np.ndarray  # common image y(x) ~ y(x')
    mismatch: float
    history: list = field(default_factory=list)


def _check_3d(domain, sigma):
    if domain.dim != 3:
        raise ParameterError("the intersection argument is three-dimensional")
    if not abs(sigma) < domain.s:
        raise ParameterError("need |sigma| < s")


def _witness_points(sigma, x1, tau1, tau2):
    x1, tau1, tau2 = np.broadcast_arrays(*(np.asarray(v, float) for v in (x1, tau1, tau2)))
    a = np.stack([x1, tau1, np.full_like(x1, sigma)], axis=-1)
    b = np.stack([np.zeros_like(x1), np.full_like(x1, sigma + 4.0), -tau2], axis=-1)
    return a, b


def miranda_g(family, sigma, x1, tau1, tau2, domain):
    """g(x1, tau1, tau2) = y(x1, tau1, sigma) - y(0, sigma + 4, -tau2)."""
    _check_3d(domain, sigma)
    a, b = _witness_points(sigma, x1, tau1, tau2)
    shape = a.shape
    ya = evaluate(family, a.reshape(-1, 3), domain).y
    yb = evaluate(family, b.reshape(-1, 3), domain).y
    return (np.atleast_2d(ya) - np.atleast_2d(yb)).reshape(shape)


def miranda_boundary_signs(family, domain, sigma=None, n=17):
    """Check that g_i > 0 on {x_i = 1} and g_i < 0 on {x_i = -1} for each i.

    Returns (holds, margin) where margin is the smallest signed value found.
    """
    sigma = 0.1 * domain.s if sigma is None else sigma
    u = np.linspace(-1, 1, n)
    A, B = np.meshgrid(u, u, indexing="ij")
    margin = math.inf
    for i in range(3):
        for side in (-1.0, 1.0):
            args = [None, None, None]
            others = [j for j in range(3) if j != i]
            args[i] = np.full(A.shape, side)
            args[others[0]], args[others[1]] = A, B
            g = miranda_g(family, sigma, *args, domain)[..., i]
            margin = min(margin, float(np.min(side * g)))
    return margin > 0, margin


def _straddles(gc):
    """gc: (..., 8, 3) corner values; True where each component changes sign."""
    lo = gc.min(axis=-2)
    hi = gc.max(axis=-2)
    return np.all((lo <= 0) & (hi >= 0), axis=-1)


_CORNERS = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], float)


def _polish(gfun, p, mis, steps=6, fd=1e-7):
    """A few Newton steps with a finite-difference Jacobian; only improvements are kept."""
    for _ in range(steps):
        if mis == 0.0:
            break
        E = np.eye(3) * fd
        J = (gfun(p + E) - gfun(p - E)).T / (2 * fd)
        try:
            step = np.linalg.solve(J, gfun(p[None])[0])
        except np.linalg.LinAlgError:
            break
        cand = np.clip(p - step, -1.0, 1.0)
        cm = float(np.linalg.norm(gfun(cand[None])[0]))
        if not cm < mis:
            break
        p, mis = cand, cm
    return p, mis


def find_self_intersection(family, domain, sigma=None, grid_n=32, tol=1e-8,
                           max_depth=80, max_cells=256):
    """Search [-1,1]^3 for a zero of the difference field g.

    Cells whose corner values straddle zero in every component are
    subdivided, keeping at most ``max_cells`` of them (smallest |g| at the
    centre first), until the centre value is below ``tol``. Returns an
    :class:`IntersectionWitness` or ``None``.
    """
    sigma = 0.1 * domain.s if sigma is None else sigma
    _check_3d(domain, sigma)
    u = np.linspace(-1.0, 1.0, grid_n + 1)
    G = miranda_g(family, sigma, *np.meshgrid(u, u, u, indexing="ij"), domain)
    # corner values of every grid cell
    corners = np.stack([G[i:grid_n + i, j:grid_n + j, k:grid_n + k]
                        for i in (0, 1) for j in (0, 1) for k in (0, 1)], axis=3)
    idx = np.argwhere(_straddles(corners))
    if len(idx) == 0:
        return None
    size = 2.0 / grid_n
    lows = u[idx]
    history = [len(idx)]

    def gfun(p):
        return miranda_g(family, sigma, p[..., 0], p[..., 1], p[..., 2], domain)

    best = None
    for _ in range(max_depth):
        centres = lows + 0.5 * size
        gc = gfun(centres)
        norms = np.linalg.norm(gc, axis=-1)
        j = int(np.argmin(norms))
        if best is None or norms[j] < best[1]:
            best = (centres[j].copy(), float(norms[j]))
        if best[1] <= tol:
            break
        size *= 0.5
        kids = (lows[:, None, :] + size * _CORNERS[None]).reshape(-1, 3)
        cvals = gfun((kids[:, None, :] + size * _CORNERS[None]).reshape(-1, 3))
        keep = _straddles(cvals.reshape(-1, 8, 3))
        if not np.any(keep):
            break
        lows = kids[keep]
        if len(lows) > max_cells:
            cn = np.linalg.norm(gfun(lows + 0.5 * size), axis=-1)
            lows = lows[np.argsort(cn, kind="stable")[:max_cells]]
        history.append(len(lows))
    if best is None:
        return None
    p, mis = _polish(gfun, best[0], best[1])
    if mis > tol:
        return None
    a, b = _witness_points(sigma, p[0], p[1], p[2])
    ya = evaluate(family, a, domain).y
    return IntersectionWitness(p, a, b, ya, mis, history)
