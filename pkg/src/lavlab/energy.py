"""
Stored-energy density of the compressible neo-Hookean material

    W(F) = |F|^p + gamma * det(F)^(-q)   if det F > 0,   +inf otherwise,

together with its singular-value form, derivatives and the quantitative
constants behind the lower bound

    W(F) - W(I) >= c |‖F‖_2 - 1|^p + c (‖F‖_2 - 1)^2.

All matrix routines accept stacks of shape (..., d, d).
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import optimize

from .errors import NumericalError, ParameterError, SingularInputError

__all__ = [
    "INFEASIBLE",
    "MaterialParams",
    "LowerBoundConstants",
    "default_params",
    "derive_gamma",
    "energy_density",
    "energy_density_sv",
    "singular_values",
    "energy_gradient",
    "sv_hessian",
    "lower_bound_constants",
    "check_lower_bound",
    "check_coercivity",
    "coercivity_constants",
    "rank_one_convexity_probe",
    "random_deformation_gradients",
]

#: Value returned for det F <= 0. A modelling state, not an arithmetic fault.
INFEASIBLE = math.inf


def derive_gamma(d, p, q):
    """Return the coefficient ``p * d**(p/2 - 1) / q`` that makes W minimal at I."""
    if d not in (2, 3) and not (isinstance(d, int) and d >= 2):
        raise ParameterError(f"dimension must be an integer >= 2, got {d!r}")
    if not p > d:
        raise ParameterError(f"need p > d, got p={p}, d={d}")
    if not q > 0:
        raise ParameterError(f"need q > 0, got q={q}")
    return p * d ** (p / 2 - 1) / q


@dataclass(frozen=True)
class MaterialParams:
    """Exponents of the energy density; ``gamma`` is derived unless overridden.

    An explicit ``gamma`` is accepted so that deliberately inconsistent
    materials can be fed to the verification suite.
    """

    d: int
    p: float
    q: float
    gamma: float = field(default=None)

    def __post_init__(self):
        canonical = derive_gamma(self.d, self.p, self.q)
        if self.gamma is None:
            object.__setattr__(self, "gamma", canonical)

    @property
    def canonical_gamma(self):
        return derive_gamma(self.d, self.p, self.q)

    @property
    def identity_energy(self):
        """W(I) = d^(p/2) + gamma."""
        return self.d ** (self.p / 2) + self.gamma


def default_params(d=2):
    """Showcase materials: (p, q) = (3, 2) in 2D and (3.2, 2.2) in 3D."""
    if d == 2:
        return MaterialParams(2, 3.0, 2.0)
    if d == 3:
        return MaterialParams(3, 3.2, 2.2)
    raise ParameterError(f"no default material for d={d}")


def _check_shape(F, d):
    F = np.asarray(F, dtype=float)
    if F.shape[-2:] != (d, d):
        raise ParameterError(f"expected trailing shape ({d}, {d}), got {F.shape}")
    return F


def energy_density(F, params):
    """W(F); ``INFEASIBLE`` wherever det F <= 0."""
    F = _check_shape(F, params.d)
    det = np.linalg.det(F)
    norm2 = np.einsum("...ij,...ij->...", F, F)
    ok = det > 0
    safe_det = np.where(ok, det, 1.0)
    with np.errstate(over="ignore"):
        w = norm2 ** (params.p / 2) + params.gamma * safe_det ** (-params.q)
    w = np.where(ok, w, INFEASIBLE)
    return float(w) if w.ndim == 0 else w


def energy_density_sv(lam, params):
    """W expressed through singular values: (sum l^2)^(p/2) + gamma (prod l)^(-q)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise SingularInputError("singular values must be nonnegative")
    S2 = np.sum(lam**2, axis=-1)
    P = np.prod(lam, axis=-1)
    ok = P > 0
    with np.errstate(over="ignore"):
        w = S2 ** (params.p / 2) + params.gamma * np.where(ok, P, 1.0) ** (-params.q)
    w = np.where(ok, w, INFEASIBLE)
    return float(w) if w.ndim == 0 else w


def singular_values(F):
    """Singular values of F sorted nonincreasing (LAPACK SVD)."""
    return np.linalg.svd(np.asarray(F, dtype=float), compute_uv=False)


def energy_gradient(F, params):
    """DW(F) = p |F|^(p-2) F - gamma q det(F)^(-q) F^(-T)."""
    F = _check_shape(F, params.d)
    det = np.linalg.det(F)
    if np.any(det <= 0):
        raise SingularInputError("energy gradient requires det F > 0")
    p, q = params.p, params.q
    norm2 = np.einsum("...ij,...ij->...", F, F)
    inv_t = np.swapaxes(np.linalg.inv(F), -1, -2)
    a = p * norm2 ** (p / 2 - 1)
    b = params.gamma * q * det ** (-q)
    return a[..., None, None] * F - b[..., None, None] * inv_t


def sv_hessian(lam, params):
    """Hessian of the singular-value form with respect to (l_1, ..., l_d)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise SingularInputError("sv_hessian requires strictly positive singular values")
    p, q, g = params.p, params.q, params.gamma
    S2 = np.sum(lam**2, axis=-1)[..., None, None]
    P = np.prod(lam, axis=-1)[..., None, None]
    d = lam.shape[-1]
    eye = np.eye(d)
    outer = lam[..., :, None] * lam[..., None, :]
    H = (p * (p - 2) * outer + p * eye * S2) * S2 ** ((p - 4) / 2)
    H = H + g * q * (q + eye) / outer * P ** (-q)
    return H


@dataclass(frozen=True)
class LowerBoundConstants:
    mu: float
    c_hat: float
    c: float


def _mu_closed_form(d, q):
    # Stationary point of l_1^(-2) P^(-q) on the unit sphere (Lagrange multipliers).
    return ((2 + q * d) / (2 + q)) ** ((2 + q) / 2) * ((2 + q * d) / q) ** (q * (d - 1) / 2)


def _mu_objective(theta, d, q):
    lam = _sphere_point(theta, d)
    if np.any(lam <= 0):
        return math.inf
    return lam[0] ** -2 * np.prod(lam) ** -q


def _sphere_point(theta, d):
    # Hyperspherical coordinates restricted to the positive orthant.
    theta = np.atleast_1d(theta)
    if d == 2:
        return np.array([math.cos(theta[0]), math.sin(theta[0])])
    if d == 3:
        a, b = theta
        return np.array([math.cos(a), math.sin(a) * math.cos(b), math.sin(a) * math.sin(b)])
    raise ParameterError("only d = 2, 3 are supported")


def _compute_mu(d, q, grid=200):
    # Coarse scan of the positive part of the sphere, then local refinement.
    ticks = np.linspace(0, math.pi / 2, grid + 2)[1:-1]
    if d == 2:
        cands = [(t,) for t in ticks]
    else:
        cands = [(a, b) for a in ticks[::4] for b in ticks[::4]]
    vals = [_mu_objective(c, d, q) for c in cands]
    best = np.array(cands[int(np.argmin(vals))])
    res = optimize.minimize(
        _mu_objective, best, args=(d, q), method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 5000},
    )
    if not res.success:
        raise NumericalError("mu minimisation did not converge",
                             {"message": res.message, "x": res.x})
    return float(min(res.fun, min(vals)))


def _c_hat_ratio(log_s, params, mu):
    p, q, d, g = params.p, params.q, params.d, params.gamma
    S = math.exp(log_s)
    num = p * S ** (p - 2) + g * q * mu * S ** (-q * d - 2)
    den = p * (p - 1) * S ** (p - 2) + 2
    return num / den


def lower_bound_constants(params):
    """Constants (mu, c_hat, c) for the quantitative minimality of the identity.

    ``mu`` minimises l_j^(-2) P^(-q) over the unit sphere in (0, 1]^d;
    ``c_hat`` is the infimum over S > 0 of

        (p S^(p-2) + gamma q mu S^(-qd-2)) / (p (p-1) S^(p-2) + 2),

    which bounds the Hessian of the singular-value form from below, and
    ``c = min(c_hat, 1/2)``.
    """
    d, p, q = params.d, params.p, params.q
    mu = _compute_mu(d, q)
    if mu < d ** (q * d / 2) * (1 - 1e-12):
        raise NumericalError("mu fell below d^(qd/2)", {"mu": mu})

    grid = np.linspace(-12.0, 12.0, 2401)
    vals = np.array([_c_hat_ratio(t, params, mu) for t in grid])
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(_c_hat_ratio, bounds=(lo, hi), args=(params, mu),
                                   method="bounded", options={"xatol": 1e-12})
    # the ratio tends to 1/(p-1) as S -> infinity
    c_hat = min(float(res.fun), float(vals.min()), 1.0 / (p - 1))
    if not c_hat > 0:
        raise NumericalError("c_hat is not positive", {"c_hat": c_hat})
    return LowerBoundConstants(mu=mu, c_hat=c_hat, c=min(c_hat, 0.5))


def check_lower_bound(F, params, consts):
    """Check W(F) - W(I) >= c |‖F‖_2 - 1|^p + c (‖F‖_2 - 1)^2.

    Returns ``(holds, slack)`` with slack = LHS - RHS (arrays for stacked input).
    """
    F = _check_shape(F, params.d)
    lhs = energy_density(F, params) - params.identity_energy
    op = singular_values(F)[..., 0]
    rhs = consts.c * np.abs(op - 1) ** params.p + consts.c * (op - 1) ** 2
    # rounding in W(F) - W(I) near the identity
    tol = 1e-12 * params.identity_energy
    slack = lhs - rhs
    holds = slack >= -tol
    if np.ndim(slack) == 0:
        return bool(holds), float(slack)
    return holds, slack


def cofactor(F):
    """Cofactor matrix det(F) F^(-T) for invertible F; explicit formula in 2D/3D."""
    F = np.asarray(F, dtype=float)
    d = F.shape[-1]
    if d == 2:
        C = np.empty_like(F)
        C[..., 0, 0] = F[..., 1, 1]
        C[..., 0, 1] = -F[..., 1, 0]
        C[..., 1, 0] = -F[..., 0, 1]
        C[..., 1, 1] = F[..., 0, 0]
        return C
    if d == 3:
        c0 = np.cross(F[..., :, 1], F[..., :, 2])
        c1 = np.cross(F[..., :, 2], F[..., :, 0])
        c2 = np.cross(F[..., :, 0], F[..., :, 1])
        # columns of F x columns -> rows of cof
        return np.stack([c0, c1, c2], axis=-1)
    raise ParameterError("cofactor only implemented for d = 2, 3")


def _coercivity_terms(F, params):
    d, p = params.d, params.p
    nF = np.sqrt(np.einsum("...ij,...ij->...", F, F))
    C = cofactor(F)
    nC = np.sqrt(np.einsum("...ij,...ij->...", C, C))
    det = np.linalg.det(F)
    return nF**p + nC ** (p / (d - 1)) + np.maximum(det, 0.0) ** (p / d)


def check_coercivity(F, params, c, b):
    """Check W(F) >= c (|F|^p + |cof F|^(p/(d-1)) + det(F)^(p/d)) + b.

    Returns ``(holds, slack)``.
    """
    F = _check_shape(F, params.d)
    slack = energy_density(F, params) - (c * _coercivity_terms(F, params) + b)
    holds = slack >= 0
    if np.ndim(slack) == 0:
        return bool(holds), float(slack)
    return holds, slack


def coercivity_constants(params, c=None, n=20000, seed=0, margin=1e-9):
    """Candidate (c, b) for the coercivity inequality from sampled F.

    With ``c`` unset, half of the sampled infimum of W / (coercivity terms)
    is used. ``b`` is the sampled minimum of W - c * terms capped at 0 and
    lowered by ``margin``; with c below the true infimum of the ratio, b <= 0
    holds for every F. These are data, not proofs.
    """
    F = random_deformation_gradients(params.d, n, seed)
    terms = _coercivity_terms(F, params)
    W = energy_density(F, params)
    if c is None:
        c = 0.5 * float(np.min(W / terms))
    b = min(float(np.min(W - c * terms)), 0.0) - margin
    return c, b


def rank_one_convexity_probe(F, a, b, params, steps=64, half_width=0.5, tol=1e-9):
    """Probe convexity of t -> W(F + t a⊗b) by second differences.

    The interval [-half_width, half_width] is shrunk to stay inside
    det > 0; since det(F + t a⊗b) = det F (1 + t b·F^(-1)a) is affine in t,
    the admissible range is known exactly.

    Returns
    -------
    ok : bool
        True when all second differences are >= -tol * scale.
    t_range : tuple
        Effective probed interval.
    second_diff : ndarray
        Second differences at the interior probe points.
    """
    F = _check_shape(F, params.d)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    det = np.linalg.det(F)
    if det <= 0:
        raise SingularInputError("probe base point must have det F > 0")
    slope = float(b @ np.linalg.solve(F, a))
    lo, hi = -half_width, half_width
    if slope > 0:
        lo = max(lo, -0.9 / slope)
    elif slope < 0:
        hi = min(hi, -0.9 / slope)
    ts = np.linspace(lo, hi, steps + 1)
    path = F[None] + ts[:, None, None] * np.outer(a, b)[None]
    w = energy_density(path, params)
    d2 = w[2:] - 2 * w[1:-1] + w[:-2]
    scale = max(1.0, float(np.max(np.abs(w))))
    return bool(np.all(d2 >= -tol * scale)), (float(lo), float(hi)), d2


def random_deformation_gradients(d, n, seed=0, det_range=(0.01, 100.0), log_sv_range=2.5):
    """Seeded random F with det F in ``det_range``.

    F = U diag(sv) V^T with Haar-random rotations U, V in SO(d) and
    log-uniform singular values; samples whose determinant falls outside
    ``det_range`` are redrawn.
    """
    from scipy.stats import special_ortho_group

    rng = np.random.default_rng(seed)
    out = np.empty((0, d))
    lo, hi = np.log(det_range[0]), np.log(det_range[1])
    while len(out) < n:
        logs = rng.uniform(-log_sv_range, log_sv_range, size=(2 * n, d))
        ld = logs.sum(axis=1)
        keep = (ld > lo) & (ld < hi)
        out = np.vstack([out, np.exp(logs[keep])])
    sv = out[:n]
    U = special_ortho_group.rvs(d, size=n, random_state=rng)
    V = special_ortho_group.rvs(d, size=n, random_state=rng)
    return np.einsum("nij,nj,nkj->nik", U, sv, V)
