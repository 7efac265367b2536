"""Start a discrete minimisation from each competitor and see where each settles.

The bypass start keeps the strips apart (obstacle barrier) and stops on a
plateau of order s. The pinch start keeps its pinch point and keeps going
down. These are local minima of a multilinear discretisation, so they are
evidence, not a proof. Set ``ITERATIONS`` higher to push the pinch branch
further; with 10000 iterations it ends well below the bypass branch at
s = 2^-6.
"""
import time

from lavlab import Kind, MinimizeOptions, default_params, discretize, make_domain, make_family, minimize

ITERATIONS = 2000
params = default_params(2)
s = 2.0**-6
dom = make_domain(2, s)
opts = MinimizeOptions(max_iterations=ITERATIONS)

for kind in (Kind.BYPASS_2D, Kind.CROSS_PINCH_2D):
    g = discretize(make_family(kind, params), dom, (64, 16))
    t0 = time.perf_counter()
    res = minimize(g, params, opts)
    print(f"{kind.value:>13}: {res.trace[0][1]:.5g} -> {res.energy:.5g} after {res.iterations}"
          f" iterations ({time.perf_counter() - t0:.0f} s)")
