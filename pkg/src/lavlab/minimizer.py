"""
Discrete minimisation of E_s on structured multilinear meshes.

Each component is meshed in the canonical frame of S1 (bilinear cells in 2D,
trilinear in 3D, 2-point Gauss per axis). Because W is isotropic and Q is a
rotation, the energy of S2 only depends on the gradient with respect to the
canonical coordinates, and the Dirichlet datum is the identity in that frame
for both components. Unknowns are therefore the *canonical* deformed
positions Y; the physical deformation is Y on S1 and Q Y on S2.

Without a non-interpenetration constraint the unique minimiser is the
boundary datum itself (energy 0), which double-covers the centre. Two
constraint modes keep the iterates on one branch of the problem:

``bypass``
    S1 is held at the identity and S2 must stay outside the box y(S1),
    enforced by a log barrier on the distance to the box.
``cross``
    the central cross-sections (z_pinch = 0) are pinned to the pinch image
    and each component is kept in its own double cone |Y_u| <= |Y_t|.

Elastic and barrier energies are reported separately; the barrier is a
modelling device and is excluded from the energies used for scaling fits.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .deformations import evaluate
from .energy import INFEASIBLE, cofactor
from .errors import NumericalError, ParameterError
from .geometry import pushforward

__all__ = [
    "StripMesh",
    "GridDeformation",
    "MinimizeOptions",
    "MinimizeResult",
    "discretize",
    "discrete_energy",
    "discrete_gradient",
    "total_objective",
    "minimize",
    "physical_positions",
    "write_checkpoint",
    "read_checkpoint",
    "CHECKPOINT_SCHEMA",
]

CHECKPOINT_SCHEMA = "checkpoint/v1"

_GP = np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)])


def _reference_element(d):
    """Corner bits (A, d), shape values (G, A), derivatives (G, A, d), weights (G,)."""
    corners = np.array(np.meshgrid(*[[0, 1]] * d, indexing="ij")).reshape(d, -1).T
    gps = np.array(np.meshgrid(*[_GP] * d, indexing="ij")).reshape(d, -1).T
    G, A = len(gps), len(corners)
    N = np.ones((G, A))
    dN = np.ones((G, A, d))
    for j in range(d):
        lin = np.where(corners[None, :, j] == 1, gps[:, None, j], 1.0 - gps[:, None, j])
        dlin = np.where(corners[None, :, j] == 1, 1.0, -1.0)
        N *= lin
        for l in range(d):
            dN[:, :, l] *= dlin if l == j else lin
    w = np.full(G, 0.5**d)
    return corners, N, dN, w


@dataclass
class StripMesh:
    """Tensor mesh of one component in canonical coordinates."""

    component: int
    axes: list  # node coordinates per axis
    Z: np.ndarray  # (N, d) canonical reference positions
    conn: np.ndarray  # (E, A) node indices per cell
    dN: np.ndarray  # (E, G, A, d) shape-function gradients
    N: np.ndarray  # (G, A) shape values
    wt: np.ndarray  # (E, G) quadrature weights
    fixed: np.ndarray  # (N,) bool, nodes that never move
    dirichlet: np.ndarray  # (N,) bool, nodes on Gamma_s
    pinned: np.ndarray  # (N,) bool, nodes held on the pinch image

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)


@dataclass
class GridDeformation:
    domain: object
    resolution: tuple
    strips: list
    Y: list  # canonical deformed positions, one (N, d) array per strip
    mode: str = "none"
    source: str = ""

    def copy(self):
        return GridDeformation(self.domain, self.resolution, self.strips,
                               [y.copy() for y in self.Y], self.mode, self.source)


@dataclass
class MinimizeOptions:
    max_iterations: int = 10000
    gtol: float = 1e-6  # relative to the initial free gradient norm
    atol: float = 1e-12
    ftol: float = 1e-9  # relative energy decrease over ``window`` iterations
    window: int = 20
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 60
    memory: int = 10
    barrier_weight: float = 1e-3  # multiplied by s
    barrier_distance: float = 0.1  # obstacle activation distance, multiplied by s
    barrier_cone: float = 0.1  # cone activation level for the cross mode

    def __post_init__(self):
        if self.max_iterations < 0 or self.gtol <= 0 or self.atol <= 0:
            raise ParameterError("iteration counts and tolerances must be positive")
        if not 0 < self.armijo < 1 or not 0 < self.shrink < 1:
            raise ParameterError("line-search parameters must lie in (0, 1)")


@dataclass
class MinimizeResult:
    state: GridDeformation
    energy: float  # elastic part
    barrier: float
    iterations: int
    converged: bool
    stalled: bool
    trace: list = field(default_factory=list)  # (iter, energy, grad_norm)


# --- meshing --------------------------------------------------------------------

def _axis_nodes(half, n, grading, pinch, s):
    u = np.linspace(-1.0, 1.0, n + 1)
    if pinch and grading != 1.0:
        t = np.sign(u) * np.abs(u) ** grading
    else:
        t = u
    return half * t


def _build_strip(domain, component, resolution, grading):
    d, k = domain.dim, domain.pinch_axis
    half = domain.half_widths()
    axes = [_axis_nodes(half[j], resolution[j], grading, j == k, domain.s) for j in range(d)]
    shape = tuple(len(a) for a in axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    Z = np.stack([m.ravel() for m in mesh], axis=-1)
    corners, N, dNref, wref = _reference_element(d)
    cell_idx = np.array(np.meshgrid(*[np.arange(r) for r in resolution], indexing="ij"))
    cell_idx = cell_idx.reshape(d, -1).T  # (E, d)
    conn = np.empty((len(cell_idx), len(corners)), dtype=np.int64)
    for a, c in enumerate(corners):
        conn[:, a] = np.ravel_multi_index(tuple((cell_idx + c).T), shape)
    h = np.stack([np.diff(axes[j])[cell_idx[:, j]] for j in range(d)], axis=-1)  # (E, d)
    dN = dNref[None] / h[:, None, None, :]
    wt = wref[None] * np.prod(h, axis=1)[:, None]
    dirichlet = np.isclose(np.abs(Z[:, k]), 1.0, rtol=0, atol=1e-12)
    pinned = np.zeros(len(Z), dtype=bool)
    return StripMesh(component, axes, Z, conn, dN, N, wt, dirichlet.copy(), dirichlet, pinned)


def _canonical_values(family, domain, component, Z):
    """Canonical deformed positions of the family at canonical reference points."""
    x = Z if component == 1 else pushforward(Z, domain)
    y = np.atleast_2d(evaluate(family, x, domain).y)
    return y if component == 1 else y @ domain.Q


def _default_mode(kind):
    if kind.is_bypass:
        return "bypass"
    if kind.is_pinch:
        return "cross"
    return "none"


def discretize(family, domain, resolution=None, grading=None, mode=None, max_nudges=50):
    """Sample ``family`` at the nodes of a structured mesh of each component.

    ``resolution`` gives cells per axis (pinch axis first in 2D, default
    64 x 16; 32 x 16 x 8 in 3D). ``grading`` > 1 concentrates nodes toward the
    pinch section (default 3 for pinch families). ``mode`` selects the
    constraint set used by :func:`minimize` and defaults from the family kind.
    Cells with det <= 0 at a quadrature node are nudged toward the datum.
    """
    if family.dim != domain.dim:
        raise ParameterError("family and domain dimensions differ")
    d = domain.dim
    if resolution is None:
        resolution = (64, 16) if d == 2 else (32, 16, 8)
    resolution = _canonical_resolution(tuple(int(r) for r in resolution), domain)
    if len(resolution) != d or min(resolution) < 1:
        raise ParameterError(f"resolution must have {d} positive entries")
    if grading is None:
        grading = 3.0 if family.kind.is_pinch else 1.0
    mode = mode or _default_mode(family.kind)
    if mode not in ("none", "bypass", "cross"):
        raise ParameterError(f"unknown constraint mode {mode!r}")
    strips, Ys = [], []
    for comp in (1, 2):
        st = _build_strip(domain, comp, resolution, grading)
        Y = _canonical_values(family, domain, comp, st.Z)
        Y[st.dirichlet] = st.Z[st.dirichlet]  # datum is the identity in this frame
        if mode == "cross":
            k = domain.pinch_axis
            st.pinned = np.isclose(st.Z[:, k], 0.0, rtol=0, atol=1e-15)
            Y[st.pinned] = _pinch_image(st.Z[st.pinned], domain)
        if mode == "bypass" and comp == 1:
            st.fixed = np.ones(len(st.Z), dtype=bool)
            Y = st.Z.copy()
        st.fixed = st.fixed | st.dirichlet | st.pinned
        strips.append(st)
        Ys.append(Y)
    g = GridDeformation(domain, resolution, strips, Ys, mode, family.label())
    _nudge(g, max_nudges)
    return g


def _canonical_resolution(res, domain):
    # accept (pinch, cross) order in 2D; in 3D the pinch axis is the middle one
    if domain.dim == 2:
        return res
    return res if len(res) != 3 else (res[1], res[0], res[2])


def _pinch_image(Z, domain):
    out = np.zeros_like(Z)
    if domain.dim == 3:
        out[:, 0] = Z[:, 0]
    return out


def _strip_F(st, Y):
    return np.matmul(Y[st.conn].transpose(0, 2, 1)[:, None], st.dN)


def _det(F):
    if F.shape[-1] == 2:
        return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    return np.linalg.det(F)


def _nudge(g, max_nudges):
    for st, Y, idx in zip(g.strips, g.Y, range(2)):
        for _ in range(max_nudges):
            det = _det(_strip_F(st, Y))
            bad = np.any(det <= 0, axis=1)
            if not np.any(bad):
                break
            nodes = np.unique(st.conn[bad])
            nodes = nodes[~st.fixed[nodes]]
            if len(nodes) == 0:
                break
            Y[nodes] = 0.5 * (Y[nodes] + st.Z[nodes])
        else:
            pass
        if np.any(_det(_strip_F(st, Y)) <= 0):
            raise NumericalError("initial state has degenerate cells that nudging cannot repair",
                                 {"component": st.component})


# --- energy ---------------------------------------------------------------------

def _strip_energy(st, Y, params, with_grad):
    F = _strip_F(st, Y)
    det = _det(F)
    if np.any(det <= 0):
        return INFEASIBLE, None
    p, q, gam = params.p, params.q, params.gamma
    n2 = np.sum(F * F, axis=(-2, -1))
    w = n2 ** (p / 2) + gam * det ** (-q) - params.identity_energy
    E = float(np.sum(st.wt * w))
    if not with_grad:
        return E, None
    P = (p * n2 ** (p / 2 - 1))[..., None, None] * F \
        - (gam * q * det ** (-q - 1))[..., None, None] * cofactor(F)
    P *= st.wt[..., None, None]
    contrib = np.matmul(st.dN, P.transpose(0, 1, 3, 2)).sum(axis=1)
    grad = np.zeros_like(Y)
    flat = st.conn.ravel()
    for i in range(Y.shape[1]):
        grad[:, i] = np.bincount(flat, weights=contrib[:, :, i].ravel(), minlength=len(Y))
    return E, grad


def discrete_energy(g, params):
    """Elastic energy sum of W(grad y) - W(I) over all cells; +inf if infeasible."""
    total = 0.0
    for st, Y in zip(g.strips, g.Y):
        E, _ = _strip_energy(st, Y, params, False)
        total += E
    return total


def discrete_gradient(g, params):
    """Gradient of :func:`discrete_energy` with respect to every nodal position."""
    out = []
    for st, Y in zip(g.strips, g.Y):
        E, grad = _strip_energy(st, Y, params, True)
        if not math.isfinite(E):
            raise NumericalError("gradient requested at an infeasible state")
        out.append(grad)
    return out


# --- constraint barriers ----------------------------------------------------------

def _ipc(x, xhat):
    """b(x) = -(x - xhat)^2 log(x / xhat) for 0 < x < xhat, and its derivative."""
    b = np.zeros_like(x)
    db = np.zeros_like(x)
    act = x < xhat
    if np.any(x <= 0):
        return None, None
    xa = x[act]
    r = xa - xhat
    lg = np.log(xa / xhat)
    b[act] = -r * r * lg
    db[act] = -2 * r * lg - r * r / xa
    return b, db


def _barrier_points(st, Y):
    """Nodes plus cell quadrature points: positions and the linear map back to nodes."""
    qp = np.einsum("ga,eai->egi", st.N, Y[st.conn]).reshape(-1, Y.shape[1])
    return np.concatenate([Y, qp])


def _scatter_barrier(st, gpts, nY):
    grad = gpts[:nY].copy()
    gq = gpts[nY:].reshape(len(st.conn), len(st.N), -1)
    contrib = np.einsum("ga,egi->eai", st.N, gq)
    flat = st.conn.ravel()
    for i in range(grad.shape[1]):
        grad[:, i] += np.bincount(flat, weights=contrib[:, :, i].ravel(), minlength=nY)
    return grad


def _box_distance(y, half):
    """Euclidean distance from points to the box prod [-half_j, half_j] and its gradient."""
    excess = np.abs(y) - half
    outside = np.maximum(excess, 0.0)
    dist = np.sqrt(np.sum(outside**2, axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        gd = np.where(dist[:, None] > 0, np.sign(y) * outside / dist[:, None], 0.0)
    return dist, gd


def _barrier(g, opts, with_grad):
    dom = g.domain
    s = dom.s
    kappa = opts.barrier_weight * s
    total = 0.0
    grads = [np.zeros_like(Y) for Y in g.Y]
    if g.mode == "none":
        return 0.0, grads
    for idx, (st, Y) in enumerate(zip(g.strips, g.Y)):
        if np.all(st.fixed):
            continue
        pts = _barrier_points(st, Y)
        if g.mode == "bypass":
            if st.component != 2:
                continue
            phys = pts @ dom.Q.T
            dist, gd = _box_distance(phys, dom.half_widths())
            b, db = _ipc(dist, opts.barrier_distance * s)
            if b is None:
                return INFEASIBLE, None
            total += kappa * float(b.sum())
            if with_grad:
                gp = kappa * (db[:, None] * gd) @ dom.Q
                grads[idx] = _scatter_barrier(st, gp, len(Y))
        else:  # cross: |Y_u| <= |Y_t| in the canonical frame
            k = dom.pinch_axis
            t, u = pts[:, k], pts[:, k + 1]
            at, au = np.abs(t), np.abs(u)
            den = at + au
            free = den > 0  # pinned points sit at the apex of the cone
            c = np.ones_like(den)
            c[free] = (at[free] - au[free]) / den[free]
            b, db = _ipc(c, opts.barrier_cone)
            if b is None:
                return INFEASIBLE, None
            total += kappa * float(b.sum())
            if with_grad:
                gp = np.zeros_like(pts)
                f = free & (db != 0)
                dc_dat = 2 * au[f] / den[f] ** 2
                dc_dau = -2 * at[f] / den[f] ** 2
                gp[f, k] = kappa * db[f] * dc_dat * np.sign(t[f])
                gp[f, k + 1] = kappa * db[f] * dc_dau * np.sign(u[f])
                grads[idx] = _scatter_barrier(st, gp, len(Y))
    return total, grads


def total_objective(g, params, opts=None, with_grad=True):
    """(elastic, barrier, gradient list) at the current state."""
    opts = opts or MinimizeOptions()
    el = 0.0
    grads = []
    for st, Y in zip(g.strips, g.Y):
        E, gr = _strip_energy(st, Y, params, with_grad)
        if not math.isfinite(E):
            return INFEASIBLE, INFEASIBLE, None
        el += E
        grads.append(gr)
    bar, bgr = _barrier(g, opts, with_grad)
    if not math.isfinite(bar):
        return el, INFEASIBLE, None
    if with_grad:
        grads = [a + b for a, b in zip(grads, bgr)]
    return el, bar, grads


# --- optimisation -----------------------------------------------------------------

def _pack(g, arrays):
    return np.concatenate([a[~st.fixed].ravel() for st, a in zip(g.strips, arrays)])


def _unpack(g, vec):
    out = [Y.copy() for Y in g.Y]
    pos = 0
    for st, Y in zip(g.strips, out):
        free = ~st.fixed
        n = int(free.sum()) * Y.shape[1]
        Y[free] = vec[pos:pos + n].reshape(-1, Y.shape[1])
        pos += n
    return out


def minimize(g, params, opts=None, callback=None):
    """L-BFGS descent on the free nodal positions with a backtracking Armijo search.

    Trial steps that make any cell infeasible (det <= 0 at a quadrature node)
    or cross a barrier are rejected by the line search. Returns a
    :class:`MinimizeResult`; ``stalled`` is set when the line search cannot
    make progress before the gradient tolerance is met.
    """
    opts = opts or MinimizeOptions()
    state = g.copy()
    el, bar, grads = total_objective(state, params, opts)
    if not (math.isfinite(el) and math.isfinite(bar)):
        raise NumericalError("initial state is infeasible")
    x = _pack(state, state.Y)
    gx = _pack(state, grads)
    f = el + bar
    gnorm0 = float(np.linalg.norm(gx))
    trace = [(0, el, gnorm0)]
    if x.size == 0 or gnorm0 <= opts.atol:
        return MinimizeResult(state, el, bar, 0, True, False, trace)
    S, Yh = [], []
    converged = stalled = False
    it = 0
    for it in range(1, opts.max_iterations + 1):
        # two-loop recursion
        qv = gx.copy()
        alphas = []
        for sv, yv in reversed(list(zip(S, Yh))):
            rho = 1.0 / np.dot(yv, sv)
            a = rho * np.dot(sv, qv)
            alphas.append((rho, a))
            qv -= a * yv
        if S:
            gamma = np.dot(S[-1], Yh[-1]) / np.dot(Yh[-1], Yh[-1])
        else:
            gamma = 1.0 / max(gnorm0, 1e-300) * 1e-2
        r = gamma * qv
        for (sv, yv), (rho, a) in zip(zip(S, Yh), reversed(alphas)):
            b = rho * np.dot(yv, r)
            r += sv * (a - b)
        direction = -r
        slope = float(np.dot(gx, direction))
        if not slope < 0:
            S.clear()
            Yh.clear()
            direction = -gx * (1e-2 / max(float(np.linalg.norm(gx)), 1e-300))
            slope = float(np.dot(gx, direction))
        step = 1.0
        accepted = False
        for _ in range(opts.max_backtracks):
            xn = x + step * direction
            state.Y = _unpack(state, xn)
            el_n, bar_n, grads_n = total_objective(state, params, opts)
            fn = el_n + bar_n
            if math.isfinite(fn) and fn <= f + opts.armijo * step * slope:
                accepted = True
                break
            step *= opts.shrink
        if not accepted:
            state.Y = _unpack(state, x)
            stalled = True
            break
        gn = _pack(state, grads_n)
        sv, yv = xn - x, gn - gx
        if np.dot(sv, yv) > 1e-12 * np.dot(yv, yv):
            S.append(sv)
            Yh.append(yv)
            if len(S) > opts.memory:
                S.pop(0)
                Yh.pop(0)
        x, gx, f, el, bar = xn, gn, fn, el_n, bar_n
        gnorm = float(np.linalg.norm(gx))
        trace.append((it, el, gnorm))
        if callback is not None:
            callback(it, el, gnorm)
        if gnorm <= max(opts.gtol * gnorm0, opts.atol):
            converged = True
            break
        if it > opts.window:
            f_old = trace[-1 - opts.window][1]
            if f_old - el <= opts.ftol * abs(el):
                converged = True
                break
    return MinimizeResult(state, el, bar, it, converged, stalled, trace)


# --- output ---------------------------------------------------------------------

def physical_positions(g):
    """[(reference X, deformed y)] for each strip in physical coordinates."""
    out = []
    for st, Y in zip(g.strips, g.Y):
        if st.component == 1:
            out.append((st.Z, Y))
        else:
            out.append((pushforward(st.Z, g.domain), Y @ g.domain.Q.T))
    return out


def write_checkpoint(g, path):
    """CSV with one row per node: index, component, reference and deformed coordinates."""
    d = g.domain.dim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"#schema={CHECKPOINT_SCHEMA}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "component"] + [f"x{i + 1}" for i in range(d)]
                   + [f"y{i + 1}" for i in range(d)])
        idx = 0
        for comp, (X, y) in enumerate(physical_positions(g), start=1):
            for xr, yr in zip(X, y):
                w.writerow([idx, comp] + [f"{v:.17g}" for v in xr] + [f"{v:.17g}" for v in yr])
                idx += 1


def read_checkpoint(path, g):
    """Load deformed positions written by :func:`write_checkpoint` into a copy of ``g``."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first != f"#schema={CHECKPOINT_SCHEMA}":
            raise ParameterError(f"unexpected checkpoint schema line {first!r}")
        rows = list(csv.reader(fh))[1:]
    d = g.domain.dim
    out = g.copy()
    data = np.array([[float(v) for v in r[2 + d:2 + 2 * d]] for r in rows])
    comp = np.array([int(r[1]) for r in rows])
    for i, st in enumerate(out.strips):
        y = data[comp == st.component]
        if len(y) != len(st.Z):
            raise ParameterError("checkpoint does not match the mesh")
        out.Y[i] = y if st.component == 1 else y @ g.domain.Q
    return out
