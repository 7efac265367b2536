"""What separates the three 2D deformations as far as injectivity goes.

* the datum y0 overlaps itself on a square of side 2s, and the bulk
  integral of det exceeds the image measure by 4 s^2;
* the pinch map meets the Ciarlet-Necas condition, but its distortion is
  integrable only below 1/(1+beta-alpha) < 1, so nothing forces it to be
  injective everywhere;
* the bypass map is bi-Lipschitz.
"""
from lavlab import Kind, default_params, make_domain, make_family
from lavlab.injectivity import (
    cn_check,
    distortion_threshold,
    predicted_distortion_threshold,
    section_arclength,
    stretching_bound,
)

params = default_params(2)
s = 0.25
dom = make_domain(2, s)

for kind in (Kind.BOUNDARY_DATUM, Kind.CROSS_PINCH_2D, Kind.BYPASS_2D):
    rep = cn_check(make_family(kind, params), dom, params, h=s / 64)
    print(f"{kind.value:>14}: bulk {rep.bulk_integral:.4f}  image in "
          f"[{rep.image_measure_lower:.4f}, {rep.image_measure_upper:.4f}]  -> {rep.verdict}")
print(f"datum deficit should be 4 s^2 = {4 * s * s:.4f}")

pinch = make_family(Kind.CROSS_PINCH_2D, params)
eta, trace = distortion_threshold(pinch, dom, lo=0.5, hi=1.5, tol=1e-3)
print(f"\ndistortion threshold {eta:.4f}, predicted {predicted_distortion_threshold(pinch):.4f}")

# a section through the pinch is much shorter than any section of a map that goes around
for j in (1, 2):
    print(f"strip {j}: pinch section length {section_arclength(pinch, dom, 0.0, strip=j):.4f}")
print(f"stretching bound for maps that avoid overlap: {stretching_bound(s):.4f}")
