import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lavlab.deformations import Kind, make_family
from lavlab.energy import default_params
from lavlab.errors import ParameterError
from lavlab.geometry import make_domain
from lavlab.injectivity import (
    cn_check,
    distortion_integral,
    distortion_threshold,
    find_self_intersection,
    image_measure,
    miranda_boundary_signs,
    miranda_g,
    predicted_distortion_threshold,
    section_arclength,
    stretching_bound,
)

P2 = default_params(2)
P3 = default_params(3)
DOM2 = make_domain(2, 0.25)
DOM3 = make_domain(3, 0.25)


# --- CN ---------------------------------------------------------------------

def test_datum_overlap_deficit():
    rep = cn_check(make_family(Kind.BOUNDARY_DATUM, P2), DOM2, P2, h=0.25 / 64)
    assert rep.bulk_integral == pytest.approx(2.0, rel=1e-12)
    assert rep.verdict == "violated"
    assert rep.deficit == pytest.approx(4 * 0.25**2, rel=0.05)
    assert rep.image_measure_lower <= 1.75 <= rep.image_measure_upper


@pytest.mark.parametrize("s", [0.3, 0.15])
def test_datum_deficit_scales_like_square(s):
    dom = make_domain(2, s)
    rep = cn_check(make_family(Kind.BOUNDARY_DATUM, P2), dom, P2, h=s / 32)
    assert rep.deficit == pytest.approx(4 * s * s, rel=0.05)


def test_cross_satisfies_cn():
    rep = cn_check(make_family(Kind.CROSS_PINCH_2D, P2), DOM2, P2)
    assert rep.verdict == "satisfied"
    assert rep.image_measure_lower <= rep.bulk_integral <= rep.image_measure_upper


def test_bypass_near_equality():
    rep = cn_check(make_family(Kind.BYPASS_2D, P2), DOM2, P2)
    assert rep.verdict == "satisfied"
    assert rep.bulk_integral == pytest.approx(2.0, rel=1e-12)
    perimeter = 2 * (2 * (2 + 2 * 0.25))
    assert abs(rep.bulk_integral - rep.image_measure) <= 2 * rep.resolution * perimeter


def test_image_bracket_tightens_with_resolution():
    fam = make_family(Kind.BYPASS_2D, P2)
    widths = []
    for h in (0.25 / 8, 0.25 / 16, 0.25 / 32):
        _, lo, hi, _ = image_measure(fam, DOM2, h)
        assert lo <= 2.0 <= hi
        widths.append(hi - lo)
    assert widths[0] > widths[1] > widths[2]


def test_image_measure_rejects_bad_h():
    with pytest.raises(ParameterError):
        image_measure(make_family(Kind.BYPASS_2D), DOM2, 0.0)


@pytest.mark.parametrize("kind", [Kind.CROSS_PINCH_3D, Kind.BYPASS_3D])
def test_3d_families_satisfy_cn(kind):
    rep = cn_check(make_family(kind, P3), DOM3, P3, h=0.25 / 8)
    assert rep.verdict == "satisfied"


# --- distortion ---------------------------------------------------------------

def test_datum_distortion_closed_form():
    for eta in (0.5, 1.0, 2.0):
        rep = distortion_integral(make_family(Kind.BOUNDARY_DATUM, P2), DOM2, eta)
        assert rep.flag == "finite"
        assert rep.value == pytest.approx(2 ** (eta * 2 / 2) * 2.0, rel=1e-12)


def test_cross_distortion_transition():
    fam = make_family(Kind.CROSS_PINCH_2D, P2)
    assert distortion_integral(fam, DOM2, 0.5).flag == "finite"
    assert distortion_integral(fam, DOM2, 1.0).flag == "divergent"
    assert predicted_distortion_threshold(fam) == pytest.approx(1 / 1.05)


def test_bypass_distortion_bounded():
    fam = make_family(Kind.BYPASS_2D, P2)
    for eta in (0.5, 2.0, 4.0):
        assert distortion_integral(fam, DOM2, eta).flag == "finite"


def test_threshold_bisection():
    fam = make_family(Kind.CROSS_PINCH_2D, P2)
    eta, trace = distortion_threshold(fam, DOM2, lo=0.5, hi=1.5, tol=1e-2)
    assert abs(eta - predicted_distortion_threshold(fam)) < 0.05
    assert trace[0] == (0.5, "finite")


@settings(max_examples=8, deadline=None)
@given(st.floats(0.67, 0.74), st.floats(0.05, 0.95))
def test_threshold_tracks_shape(alpha, t):
    beta = alpha + 1e-3 + t * (1.5 - 2 * alpha - 2e-3)
    fam = make_family(Kind.CROSS_PINCH_2D, P2, alpha=alpha, beta=beta)
    pred = predicted_distortion_threshold(fam)
    assert distortion_integral(fam, DOM2, pred - 0.05).flag == "finite"
    assert distortion_integral(fam, DOM2, pred + 0.05).flag == "divergent"


def test_distortion_rejects_bad_eta():
    with pytest.raises(ParameterError):
        distortion_integral(make_family(Kind.BYPASS_2D), DOM2, 0.0)


# --- sections -----------------------------------------------------------------

def test_section_lengths():
    assert section_arclength(make_family(Kind.BOUNDARY_DATUM, P2), DOM2, 0.1) == pytest.approx(2.0)
    k = 2.5
    byp = section_arclength(make_family(Kind.BYPASS_2D, P2), DOM2, 0.0, strip=2)
    assert byp == pytest.approx(2 * math.sqrt(1 + k * k), rel=1e-12)
    assert byp >= stretching_bound(0.25)


def test_cross_sections_defeat_stretching_bound():
    fam = make_family(Kind.CROSS_PINCH_2D, P2)
    for s in (0.25, 0.1, 0.05):
        dom = make_domain(2, s)
        lengths = [section_arclength(fam, dom, 0.0, strip=j) for j in (1, 2)]
        assert max(lengths) < stretching_bound(s)


# --- self-intersection --------------------------------------------------------

def test_miranda_g_datum_closed_form():
    fam = make_family(Kind.BOUNDARY_DATUM, P3, dim=3)
    sigma = 0.025
    rng = np.random.default_rng(0)
    p = rng.uniform(-1, 1, size=(20, 3))
    g = miranda_g(fam, sigma, p[:, 0], p[:, 1], p[:, 2], DOM3)
    assert np.allclose(g, np.stack([p[:, 0], p[:, 1] - sigma, sigma + p[:, 2]], axis=1))


def test_datum_witness():
    fam = make_family(Kind.BOUNDARY_DATUM, P3, dim=3)
    sigma = 0.1 * 0.25
    w = find_self_intersection(fam, DOM3, sigma, grid_n=16)
    assert w is not None and w.mismatch <= 1e-8
    assert np.allclose(w.params, [0.0, sigma, -sigma], atol=1e-8)
    assert np.allclose(w.value, [0.0, sigma, sigma], atol=1e-8)


def test_cross_witness_on_pinch_segment():
    fam = make_family(Kind.CROSS_PINCH_3D, P3)
    w = find_self_intersection(fam, DOM3, grid_n=16)
    assert w is not None and w.mismatch <= 1e-8
    assert np.allclose(w.value[1:], 0.0, atol=1e-8)


def test_bypass_has_no_witness():
    assert find_self_intersection(make_family(Kind.BYPASS_3D, P3), DOM3, grid_n=32) is None


def test_boundary_signs():
    assert miranda_boundary_signs(make_family(Kind.BOUNDARY_DATUM, P3, dim=3), DOM3)[0]
    assert miranda_boundary_signs(make_family(Kind.CROSS_PINCH_3D, P3), DOM3)[0]
    assert not miranda_boundary_signs(make_family(Kind.BYPASS_3D, P3), DOM3)[0]


def test_miranda_needs_3d():
    with pytest.raises(ParameterError):
        miranda_g(make_family(Kind.BYPASS_2D), 0.01, 0.0, 0.0, 0.0, DOM2)
