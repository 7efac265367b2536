"""
Two-component reference configurations.

In 2D the domain is the horizontal stripe S1 = (-1,1) x (-s,s) together with
its copy S2 = xi + Q S1 rotated by 90 degrees and shifted to x1 = 4. In 3D
both pieces are thin cuboids, S1 = (-1,1)^2 x (-s,s) and S2 = xi + Q S1 with
Q a quarter turn about the x1 axis.

Points of S2 are handled through the pullback z = Q^T (x - xi), which maps S2
onto S1. Along one axis of S1 (the *pinch axis*: x1 in 2D, x2 in 3D) the
deformations of interest squeeze the central cross-section; ``inner`` means
|z_pinch| <= s.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ParameterError

__all__ = [
    "Region",
    "StripeDomain",
    "make_domain",
    "classify",
    "on_dirichlet_boundary",
    "domain_measure",
    "sample_points",
    "pullback",
    "pushforward",
]


class Region(str, Enum):
    S1_INNER = "S1_inner"
    S1_OUTER = "S1_outer"
    S2_INNER = "S2_inner"
    S2_OUTER = "S2_outer"
    OUTSIDE = "Outside"

    @property
    def component(self):
        if self in (Region.S1_INNER, Region.S1_OUTER):
            return 1
        if self in (Region.S2_INNER, Region.S2_OUTER):
            return 2
        return 0

    @property
    def inner(self):
        return self in (Region.S1_INNER, Region.S2_INNER)


# integer codes used by the vectorised classifier
_CODES = [Region.OUTSIDE, Region.S1_INNER, Region.S1_OUTER, Region.S2_INNER, Region.S2_OUTER]

_Q2 = np.array([[0.0, -1.0], [1.0, 0.0]])
_Q3 = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True, eq=False)
class StripeDomain:
    dim: int
    s: float
    xi: np.ndarray
    Q: np.ndarray

    @property
    def pinch_axis(self):
        return 0 if self.dim == 2 else 1

    @property
    def cross_axes(self):
        return tuple(i for i in range(self.dim) if i != self.pinch_axis)

    def half_widths(self):
        """Half edge lengths of S1 along each axis."""
        h = np.ones(self.dim)
        h[-1] = self.s
        return h

    def __eq__(self, other):
        return (isinstance(other, StripeDomain) and self.dim == other.dim
                and self.s == other.s)

    def __hash__(self):
        return hash((self.dim, self.s))

    def __repr__(self):
        return f"StripeDomain(dim={self.dim}, s={self.s!r})"


def make_domain(dimension, s):
    """Canonical two-stripe (2D) or two-cuboid (3D) domain of width ``s``."""
    if dimension not in (2, 3):
        raise ParameterError(f"dimension must be 2 or 3, got {dimension!r}")
    s = float(s)
    if not 0 < s < 1:
        raise ParameterError(f"width s must lie in (0, 1), got {s}")
    if dimension == 2:
        return StripeDomain(2, s, np.array([4.0, 0.0]), _Q2.copy())
    return StripeDomain(3, s, np.array([0.0, 4.0, 0.0]), _Q3.copy())


def pullback(x, domain):
    """z = Q^T (x - xi): coordinates of S2 points in the frame of S1."""
    x = np.asarray(x, dtype=float)
    return (x - domain.xi) @ domain.Q


def pushforward(z, domain):
    """Inverse of :func:`pullback`."""
    return np.asarray(z, dtype=float) @ domain.Q.T + domain.xi


def _in_s1(z, domain):
    # a few ulps of slack so that pushforward(pullback(x)) of boundary points stays inside
    half = domain.half_widths() + 8 * np.finfo(float).eps * 4.0
    return np.all(np.abs(z) <= half, axis=-1)


def _codes(x, domain):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k = domain.pinch_axis
    z2 = pullback(x, domain)
    in1 = _in_s1(x, domain)
    in2 = _in_s1(z2, domain) & ~in1
    inner1 = np.abs(x[:, k]) <= domain.s
    inner2 = np.abs(z2[:, k]) <= domain.s
    codes = np.zeros(len(x), dtype=int)
    codes[in1] = np.where(inner1[in1], 1, 2)
    codes[in2] = np.where(inner2[in2], 3, 4)
    return codes


def classify(x, domain):
    """Region label of a point, or an array of labels for an (n, d) array.

    Membership uses closed components so that Dirichlet points are inside;
    interface points |z_pinch| = s count as inner.
    """
    x = np.asarray(x, dtype=float)
    codes = _codes(x, domain)
    if x.ndim == 1:
        return _CODES[codes[0]]
    return np.array([_CODES[c] for c in codes], dtype=object)


def region_codes(x, domain):
    """Integer region codes (0 outside, 1/2 S1 inner/outer, 3/4 S2 inner/outer)."""
    return _codes(x, domain)


def on_dirichlet_boundary(x, domain, tol=1e-12):
    """True where x lies within ``tol`` of the Dirichlet part Gamma_s.

    Gamma_s consists of the two end faces |z_pinch| = 1 of each component.
    """
    x = np.asarray(x, dtype=float)
    xs = np.atleast_2d(x)
    k = domain.pinch_axis
    half = domain.half_widths()
    out = np.zeros(len(xs), dtype=bool)
    for z in (xs, pullback(xs, domain)):
        near_face = np.abs(np.abs(z[:, k]) - 1.0) <= tol
        within = np.all(np.abs(z) <= half + tol, axis=-1)
        out |= near_face & within
    return bool(out[0]) if x.ndim == 1 else out


def domain_measure(domain):
    """|Omega_s| = 8s in 2D and 16s in 3D."""
    return 2.0 * float(np.prod(2 * domain.half_widths()))


def sample_points(domain, n, seed=0):
    """``n`` points uniformly distributed in Omega_s, deterministic in ``seed``."""
    if n <= 0:
        raise ParameterError("n must be positive")
    rng = np.random.default_rng(seed)
    half = domain.half_widths()
    z = rng.uniform(-1.0, 1.0, size=(n, domain.dim)) * half
    second = rng.random(n) < 0.5
    x = z.copy()
    x[second] = pushforward(z[second], domain)
    return x
