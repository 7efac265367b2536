import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lavlab.deformations import Kind, admissibility_check, make_family
from lavlab.energy import MaterialParams, default_params
from lavlab.errors import ConstraintError, NumericalError, ParameterError
from lavlab.geometry import make_domain
from lavlab.quadrature import integrate_energy
from lavlab.scaling import (
    DEFAULT_S_2D,
    EnergyReport,
    dyadic,
    fit_exponent,
    gap_report,
    optimize_shape,
    predicted_exponent,
    sweep,
)

P2 = default_params(2)
P3 = default_params(3)


def test_dyadic():
    assert dyadic(4, 6) == [2.0**-4, 2.0**-5, 2.0**-6]
    assert DEFAULT_S_2D[0] == 2.0**-4 and DEFAULT_S_2D[-1] == 2.0**-10


def test_predicted_exponents():
    assert predicted_exponent(P2, 0.7, 0.75) == pytest.approx(1.1)
    assert predicted_exponent(P3, 0.72, 0.72) == pytest.approx(1.104)
    with pytest.raises(ConstraintError):
        predicted_exponent(MaterialParams(2, 4.0, 2.0), 0.8, 0.85)


def test_fit_exact_power_law():
    s = np.array(dyadic(2, 9))
    fit = fit_exponent(s, 3 * s**1.1)
    assert fit.slope == pytest.approx(1.1, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.predict(0.5) == pytest.approx(3 * 0.5**1.1)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(0.01, 100.0))
def test_fit_recovers_any_exponent(g, c):
    s = np.array(dyadic(2, 8))
    assert fit_exponent(s, c * s**g).slope == pytest.approx(g, abs=1e-9)


def test_fit_rejects_bad_input():
    with pytest.raises(ParameterError):
        fit_exponent([0.1, 0.2], [1.0, 2.0])
    with pytest.raises(NumericalError):
        fit_exponent([0.1, 0.2, 0.3], [1.0, math.inf, 2.0])


def test_datum_sweep_is_zero():
    reps = sweep(make_family(Kind.BOUNDARY_DATUM, P2), [0.25, 0.125, 0.0625], P2)
    assert all(r.total == 0.0 for r in reps)
    assert isinstance(reps[0], EnergyReport)
    assert len(reps[0].row()) == 7


def test_sweep_regions_add_up():
    rep = sweep(make_family(Kind.CROSS_PINCH_2D, P2), [0.1], P2)[0]
    assert sum(rep.per_region.values()) == pytest.approx(rep.total, rel=1e-13)
    assert rep.quadrature_error < 1e-8 * rep.total


def test_sweep_rejects_bad_widths():
    with pytest.raises(ParameterError):
        sweep(make_family(Kind.BYPASS_2D), [0.1, 1.2], P2)


def test_bypass_energy_per_width_limit():
    # E_s / s tends to 4 ((2 + 1)^(p/2) - 2^(p/2)) because k -> 1 as s -> 0
    reps = sweep(make_family(Kind.BYPASS_2D, P2), dyadic(3, 10), P2)
    ratios = [r.total / r.s for r in reps]
    limit = 4 * (3**1.5 - 2**1.5)
    assert abs(ratios[-1] - limit) < abs(ratios[0] - limit)
    assert ratios[-1] == pytest.approx(limit, rel=0.02)


def test_cross_energy_is_little_o_of_s():
    reps = sweep(make_family(Kind.CROSS_PINCH_2D, P2), dyadic(4, 10), P2)
    ratios = [r.total / r.s for r in reps]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))


def test_cross_slope_near_prediction():
    fit = fit_exponent(sweep(make_family(Kind.CROSS_PINCH_2D, P2), DEFAULT_S_2D, P2))
    assert abs(fit.slope - 1.1) <= 0.1
    assert fit.r_squared >= 0.999


def test_gap_ratio_decreases():
    rep = gap_report(make_family(Kind.CROSS_PINCH_2D, P2), make_family(Kind.BYPASS_2D, P2),
                     DEFAULT_S_2D, P2)
    assert rep.ratios[-1] < rep.ratios[0]
    assert rep.decreasing_tail(4)


def test_gap_of_equal_families_is_one():
    fam = make_family(Kind.BYPASS_2D, P2)
    rep = gap_report(fam, fam, [0.1, 0.05], P2)
    assert rep.ratios == [1.0, 1.0]


def test_optimize_shape_empty_region():
    with pytest.raises(ConstraintError):
        optimize_shape(MaterialParams(2, 4.0, 2.0), 2.0**-8)


def test_optimize_shape_beats_default():
    s = 2.0**-8
    a, b, e = optimize_shape(P2, s)
    fam = make_family(Kind.CROSS_PINCH_2D, P2, a, b)
    assert admissibility_check(fam, P2).admissible
    ref = integrate_energy(make_family(Kind.CROSS_PINCH_2D, P2), make_domain(2, s), P2).value
    assert e <= ref
