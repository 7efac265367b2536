"""
Command-line front end.

    lavlab <command> [--config FILE] [--out DIR] [--seed N] [--dim {2,3}]
                     [--p P] [--q Q] [--alpha A] [--beta B]
                     [--s-list "S1 S2 ..."] [--family KIND] [--set key=value]

Commands: verify, sweep, gap, cn, distortion, intersect, minimize, plot.
Settings come from built-in defaults, then the config file, then flags.
Every command writes CSV tables (first line ``#schema=<name>/v1``) and, where
meaningful, SVG figures into ``--out``.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .deformations import Kind, evaluate, interface_continuity_residual, make_family
from .energy import (
    MaterialParams,
    default_params,
    energy_density,
    energy_gradient,
    lower_bound_constants,
    check_lower_bound,
    random_deformation_gradients,
)
from .errors import ConstraintError, DomainError, LavlabError, NumericalError, ParameterError
from .geometry import make_domain, on_dirichlet_boundary, pushforward, sample_points
from .injectivity import (
    cn_check,
    distortion_integral,
    distortion_threshold,
    find_self_intersection,
    predicted_distortion_threshold,
)
from .io import ConfigError, RunConfig, load_config, set_field, svg_loglog, svg_polylines, write_csv
from .minimizer import MinimizeOptions, discretize, minimize, physical_positions, write_checkpoint
from .quadrature import QuadratureSpec, integrate_energy, integrate_singular_1d
from .scaling import (
    DEFAULT_S_2D,
    DEFAULT_S_3D,
    fit_exponent,
    gap_report,
    predicted_exponent,
    sweep,
)

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_PARAMETER = 3
EXIT_CONSTRAINT = 4
EXIT_NUMERICAL = 5
EXIT_DOMAIN = 6
EXIT_INTERNAL = 7

COMMANDS = ("verify", "sweep", "gap", "cn", "distortion", "intersect", "minimize", "plot")


class Outputs:
    """Tracks files written by a command so a failed run leaves nothing behind."""

    def __init__(self, directory):
        self.directory = directory
        self.paths = []

    def path(self, name):
        os.makedirs(self.directory, exist_ok=True)
        p = os.path.join(self.directory, name)
        self.paths.append(p)
        return p

    def cleanup(self):
        for p in self.paths:
            if os.path.exists(p):
                os.remove(p)


# --- configuration resolution ---------------------------------------------------------

def material(cfg):
    base = default_params(cfg.dim)
    p = base.p if cfg.p is None else cfg.p
    q = base.q if cfg.q is None else cfg.q
    return MaterialParams(cfg.dim, p, q, cfg.gamma)


def quad_spec(cfg):
    return QuadratureSpec(cfg.gauss_order, cfg.grading_levels, cfg.grading_ratio, cfg.refinement_cap)


def s_values(cfg, default):
    vals = cfg.s_list if cfg.s_list else default
    for s in vals:
        if not 0 < s < 1:
            raise ParameterError(f"s must lie in (0, 1), got {s}")
    return list(vals)


def _pinch_kind(dim):
    return Kind.CROSS_PINCH_2D if dim == 2 else Kind.CROSS_PINCH_3D


def _bypass_kind(dim):
    return Kind.BYPASS_2D if dim == 2 else Kind.BYPASS_3D


def family_from(cfg, params, default):
    kind = Kind(cfg.family) if cfg.family else default
    if kind.dim not in (None, cfg.dim):
        raise ParameterError(f"{kind.value} needs --dim {kind.dim}")
    alpha = cfg.alpha if kind.is_pinch else None
    beta = cfg.beta if kind.is_pinch else None
    return make_family(kind, params, alpha, beta, dim=cfg.dim)


# --- verify -----------------------------------------------------------------------

def _verify_rows(cfg):
    params = material(cfg)
    d = params.d
    n = max(cfg.samples, 10)
    rows = []

    def add(name, passed, value, tol, detail=""):
        rows.append([name, bool(passed), float(value), float(tol), detail])

    wI = params.identity_energy
    stress = float(np.max(np.abs(energy_gradient(np.eye(d), params))))
    add("energy.stress_free_reference", stress <= 1e-12 * wI, stress, 1e-12 * wI, "|DW(I)|")

    F = random_deformation_gradients(d, n, seed=cfg.seed)
    W = energy_density(F, params)
    worst = float(np.min(W - wI))
    add("energy.minimum_at_identity", worst >= -1e-12 * wI, worst, 1e-12 * wI, "min W(F)-W(I)")

    from scipy.stats import special_ortho_group

    rng = np.random.default_rng(cfg.seed + 1)
    R = special_ortho_group.rvs(d, size=n, random_state=rng)
    Qm = special_ortho_group.rvs(d, size=n, random_state=rng)
    Wr = energy_density(R @ F @ Qm, params)
    rel = float(np.max(np.abs(Wr - W) / W))
    add("energy.frame_indifference", rel <= 1e-12, rel, 1e-12, "max rel |W(RFQ)-W(F)|")

    m = min(n, 200)
    G = energy_gradient(F[:m], params)
    h = 1e-6
    err = 0.0
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d))
            E[i, j] = h
            fd = (energy_density(F[:m] + E, params) - energy_density(F[:m] - E, params)) / (2 * h)
            err = max(err, float(np.max(np.abs(fd - G[:, i, j]) / (np.abs(G[:, i, j]) + 1.0))))
    add("energy.gradient_fd", err <= 1e-6, err, 1e-6, "rel error vs central differences")

    consts = lower_bound_constants(params)
    holds, slack = check_lower_bound(F, params, consts)
    add("energy.quantitative_lower_bound", bool(np.all(holds)), float(np.min(slack)), 0.0,
        f"c={consts.c:.6g}")
    add("energy.mu_bound", consts.mu >= d ** (params.q * d / 2) * (1 - 1e-12), consts.mu,
        d ** (params.q * d / 2), "mu >= d^(qd/2)")

    dom = make_domain(d, 0.25)
    kinds = [Kind.BOUNDARY_DATUM, _pinch_kind(d), _bypass_kind(d)]
    for kind in kinds:
        try:
            fam = make_family(kind, params, dim=d)
        except ConstraintError as exc:
            add(f"deformation.{kind.value}.admissible", False, math.nan, 0.0, str(exc))
            continue
        x = sample_points(dom, 400, seed=cfg.seed)
        r = evaluate(fam, x, dom)
        ok = ~r.singular
        add(f"deformation.{kind.value}.det_positive", bool(np.all(r.det[ok] > 0)),
            float(np.min(r.det[ok])), 0.0, "min det off the pinch set")
        fd_err = 0.0
        step = 1e-6
        for j in range(d):
            e = np.zeros(d)
            e[j] = step
            try:
                yp = evaluate(fam, x + e, dom).y
                ym = evaluate(fam, x - e, dom).y
            except DomainError:
                continue
            fd = (yp - ym) / (2 * step)
            diff = np.abs(fd - r.grad[:, :, j]) / (1.0 + np.abs(r.grad[:, :, j]))
            # points within one step of a kink or interface are not comparable
            k = dom.pinch_axis
            z = np.where(r.region[:, None] >= 3, (x - dom.xi) @ dom.Q, x)
            far = np.all(np.abs(np.abs(z[:, k:k + 1]) - np.array([[0.0, dom.s]])) > 1e-4, axis=1)
            # pinch gradients blow up like |t|^(alpha-1) at the pinch section
            far &= np.abs(z[:, k]) > 1e-2
            fd_err = max(fd_err, float(np.max(diff[far & ok])))
        add(f"deformation.{kind.value}.gradient_fd", fd_err <= 1e-6, fd_err, 1e-6, "")
        res = interface_continuity_residual(fam, dom, n=64, seed=cfg.seed)
        add(f"deformation.{kind.value}.interface_continuity", res <= 1e-12, res, 1e-12, "")

    r = integrate_singular_1d(lambda x: x**-0.9, 0.0, 1.0, spec=quad_spec(cfg))
    rel = abs(r.value - 10.0) / 10.0
    add("quadrature.singular_monomial", rel <= 1e-8, rel, 1e-8, "int |t|^-0.9")
    if d == 2:
        dom2 = make_domain(2, 0.25)
        fam = make_family(Kind.BYPASS_2D, params)
        k = (1 + 0.25) / (1 - 0.5)
        exact = 4 * 0.25 * ((2 + k * k) ** (params.p / 2) - 2 ** (params.p / 2))
        val = integrate_energy(fam, dom2, params, quad_spec(cfg)).value
        rel = abs(val - exact) / exact
        add("quadrature.bypass_closed_form", rel <= 1e-10, rel, 1e-10, "constant-gradient strip")
        rep = cn_check(make_family(Kind.BOUNDARY_DATUM, params), dom2, params, h=0.25 / 32)
        add("injectivity.datum_overlap", rep.verdict == "violated", rep.deficit, 4 * 0.25**2,
            "bulk - image for y0")
    return rows


def cmd_verify(cfg, out):
    rows = _verify_rows(cfg)
    write_csv(out.path("verify.csv"), "verify/v1",
              ["check", "passed", "value", "tolerance", "detail"], rows)
    failed = [r[0] for r in rows if not r[1]]
    for r in rows:
        print(f"{'PASS' if r[1] else 'FAIL'} {r[0]} value={r[2]:.6g}")
    if failed:
        print("failing invariants: " + ", ".join(failed), file=sys.stderr)
        return EXIT_ASSERTION
    return EXIT_OK


# --- sweeps -----------------------------------------------------------------------

def _sweep_rows(reports):
    return [r.row() for r in reports]


def cmd_sweep(cfg, out):
    params = material(cfg)
    fam = family_from(cfg, params, _pinch_kind(cfg.dim))
    svals = s_values(cfg, DEFAULT_S_2D if cfg.dim == 2 else DEFAULT_S_3D)
    reps = sweep(fam, svals, params, quad_spec(cfg))
    write_csv(out.path("sweep.csv"), "sweep/v1",
              ["s", "E_total", "E_S1_inner", "E_S1_outer", "E_S2_inner", "E_S2_outer", "quad_err"],
              _sweep_rows(reps))
    positive = [r for r in reps if r.total > 0 and math.isfinite(r.total)]
    fit_rows = []
    if len(positive) >= 3:
        fit = fit_exponent(positive)
        pred = math.nan
        if fam.kind in (Kind.CROSS_PINCH_2D, Kind.CROSS_PINCH_3D):
            pred = predicted_exponent(params, fam.alpha, fam.beta, cfg.dim)
        fit_rows.append([fam.label(), fit.slope, fit.intercept, fit.r_squared,
                         fit.s_range[0], fit.s_range[1], pred])
        print(f"{fam.label()}: slope {fit.slope:.4f} (predicted {pred:.4f}), r^2 {fit.r_squared:.6f}")
        svg_loglog(out.path("sweep.svg"), [([r.s for r in positive], [r.total for r in positive],
                                             fam.label())], title="E_s against s")
    write_csv(out.path("sweep_fit.csv"), "sweep_fit/v1",
              ["family", "slope", "intercept", "r_squared", "s_min", "s_max", "predicted"], fit_rows)
    return EXIT_OK


def cmd_gap(cfg, out):
    params = material(cfg)
    pinch = family_from(cfg, params, _pinch_kind(cfg.dim))
    bypass = make_family(_bypass_kind(cfg.dim), params)
    svals = s_values(cfg, DEFAULT_S_2D if cfg.dim == 2 else DEFAULT_S_3D)
    rep = gap_report(pinch, bypass, svals, params, quad_spec(cfg))
    write_csv(out.path("gap.csv"), "gap/v1", ["s", "E_pinch", "E_bypass", "ratio"],
              [[r.s, r.e_pinch, r.e_bypass, r.ratio] for r in rep.rows])
    svg_loglog(out.path("gap.svg"), [
        ([r.s for r in rep.rows], [r.e_pinch for r in rep.rows], pinch.label()),
        ([r.s for r in rep.rows], [r.e_bypass for r in rep.rows], bypass.label()),
    ], title="pinch and bypass energies")
    print("ratio decreasing on the finest four points:", rep.decreasing_tail())
    return EXIT_OK


def cmd_cn(cfg, out):
    params = material(cfg)
    if cfg.family in (None, "all"):
        kinds = [Kind.BOUNDARY_DATUM, _pinch_kind(cfg.dim), _bypass_kind(cfg.dim)]
        fams = [make_family(k, params, dim=cfg.dim) for k in kinds]
    else:
        fams = [family_from(cfg, params, None)]
    rows = []
    for s in s_values(cfg, [0.25]):
        dom = make_domain(cfg.dim, s)
        h = cfg.h if cfg.h else (s / 64 if cfg.dim == 2 else s / 8)
        for fam in fams:
            r = cn_check(fam, dom, params, h, quad_spec(cfg))
            rows.append([fam.kind.value, s, h, r.bulk_integral, r.image_measure_lower,
                         r.image_measure_upper, r.verdict])
            print(f"{fam.kind.value} s={s:g}: bulk {r.bulk_integral:.6f}, image in "
                  f"[{r.image_measure_lower:.6f}, {r.image_measure_upper:.6f}] -> {r.verdict}")
    write_csv(out.path("cn.csv"), "cn/v1",
              ["family", "s", "h", "bulk", "img_lo", "img_hi", "verdict"], rows)
    return EXIT_OK


def cmd_distortion(cfg, out):
    params = material(cfg)
    fam = family_from(cfg, params, _pinch_kind(cfg.dim))
    s = s_values(cfg, [0.25])[0]
    dom = make_domain(cfg.dim, s)
    etas = cfg.eta_list or [0.5, 0.9, 1.0]
    rows = []
    spec = quad_spec(cfg)
    for eta in etas:
        rep = distortion_integral(fam, dom, eta, spec)
        for level, est in enumerate(rep.integral_estimates, start=spec.grading_levels):
            rows.append([eta, level, est, rep.flag])
        print(f"eta={eta:g}: {rep.flag} ({rep.value:.6g})")
    write_csv(out.path("distortion.csv"), "distortion/v1", ["eta", "level", "estimate", "flag"], rows)
    eta_star, _ = distortion_threshold(fam, dom, spec=spec)
    pred = predicted_distortion_threshold(fam) if fam.kind is Kind.CROSS_PINCH_2D else math.nan
    write_csv(out.path("distortion_threshold.csv"), "distortion_threshold/v1",
              ["family", "located", "predicted"], [[fam.label(), eta_star, pred]])
    print(f"located threshold {eta_star:.4f}, predicted {pred:.4f}")
    return EXIT_OK


def cmd_intersect(cfg, out):
    if cfg.dim != 3:
        raise ParameterError("intersect works on the 3D domain; pass --dim 3")
    params = material(cfg)
    fam = family_from(cfg, params, Kind.CROSS_PINCH_3D)
    s = s_values(cfg, [0.25])[0]
    dom = make_domain(3, s)
    sigma = cfg.sigma if cfg.sigma is not None else 0.1 * s
    w = find_self_intersection(fam, dom, sigma, grid_n=cfg.grid_n)
    if w is None:
        row = [sigma, False] + [math.nan] * 6 + [math.nan]
        print("no self-intersection found")
    else:
        row = [sigma, True] + list(w.x) + list(w.x_prime) + [w.mismatch]
        print(f"witness x={w.x}, x'={w.x_prime}, |y(x)-y(x')|={w.mismatch:.3g}")
    write_csv(out.path("intersect.csv"), "intersect/v1",
              ["sigma", "found", "x1", "x2", "x3", "xp1", "xp2", "xp3", "mismatch"], [row])
    return EXIT_OK


def cmd_minimize(cfg, out):
    params = material(cfg)
    fam = family_from(cfg, params, _bypass_kind(cfg.dim))
    s = s_values(cfg, [2.0**-6])[0]
    dom = make_domain(cfg.dim, s)
    g = discretize(fam, dom, cfg.resolution)
    res = minimize(g, params, MinimizeOptions(max_iterations=cfg.max_iterations))
    write_csv(out.path("minimize.csv"), "minimize/v1", ["iter", "energy", "grad_norm"], res.trace)
    write_checkpoint(res.state, out.path("checkpoint.csv"))
    curves = []
    for X, y in physical_positions(res.state):
        curves.append((_mesh_outline(res.state, y), {"closed": True, "fill": "#9ecae1"}))
    if cfg.dim == 2:
        svg_polylines(out.path("minimize.svg"), curves,
                      title=f"minimised from {fam.label()}, s={s:g}")
    print(f"energy {res.trace[0][1]:.6g} -> {res.energy:.6g} in {res.iterations} iterations"
          f" (barrier {res.barrier:.3g}, converged={res.converged}, stalled={res.stalled})")
    return EXIT_OK


def _mesh_outline(g, y):
    """Boundary node loop of a 2D strip mesh (row-major node numbering)."""
    st = g.strips[0]
    n0, n1 = st.shape[:2]
    grid = np.arange(n0 * n1).reshape(n0, n1)
    loop = np.concatenate([grid[:, 0], grid[-1, 1:], grid[-2::-1, -1], grid[0, -2:0:-1]])
    return y[loop, :2]


# --- plots ----------------------------------------------------------------------

def _outline_params(domain, n):
    """Boundary of the canonical box, counter-clockwise, as parameter points (2D)."""
    h = domain.half_widths()
    t = np.linspace(-1, 1, n)
    u = np.linspace(-1, 1, max(n // 4, 8))
    bottom = np.stack([t * h[0], np.full_like(t, -h[1])], axis=1)
    right = np.stack([np.full_like(u, h[0]), u * h[1]], axis=1)
    top = bottom[::-1] * [1, -1]
    left = right[::-1] * [-1, 1]
    return np.concatenate([bottom, right, top, left])


def _deformed_outlines(fam, domain, n):
    z = _outline_params(domain, n)
    curves = []
    for comp, color in ((1, "#1f4e79"), (2, "#b03a2e")):
        x = z if comp == 1 else pushforward(z, domain)
        y = evaluate(fam, x, domain).y
        curves.append((y, {"closed": True, "fill": color, "color": color}))
    return curves


def cmd_plot(cfg, out):
    if cfg.dim != 2:
        raise ParameterError("plots of the configurations are drawn in 2D")
    params = material(cfg)
    s = s_values(cfg, [0.25])[0]
    dom = make_domain(2, s)
    n = cfg.svg_samples
    z = _outline_params(dom, n)
    ref = [(z, {"closed": True, "fill": "#1f4e79", "color": "#1f4e79"}),
           (pushforward(z, dom), {"closed": True, "fill": "#b03a2e", "color": "#b03a2e"})]
    svg_polylines(out.path("reference.svg"), ref, title=f"reference configuration, s={s:g}")
    datum = make_family(Kind.BOUNDARY_DATUM, params, dim=2)
    svg_polylines(out.path("datum.svg"), _deformed_outlines(datum, dom, n),
                  title="boundary datum: the two images overlap")
    pinch = family_from(cfg, params, Kind.CROSS_PINCH_2D)
    if not pinch.kind.is_pinch:
        pinch = make_family(Kind.CROSS_PINCH_2D, params)
    svg_polylines(out.path("cross.svg"), _deformed_outlines(pinch, dom, n),
                  title=f"{pinch.label()}: both centres pinched to the origin")
    byp = make_family(Kind.BYPASS_2D, params)
    svg_polylines(out.path("bypass.svg"), _deformed_outlines(byp, dom, n),
                  title="bypass competitor: S2 wraps around S1")
    return EXIT_OK


HANDLERS = {
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "gap": cmd_gap,
    "cn": cmd_cn,
    "distortion": cmd_distortion,
    "intersect": cmd_intersect,
    "minimize": cmd_minimize,
    "plot": cmd_plot,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="lavlab", description=__doc__.split("\n\n")[0].strip())
    ap.add_argument("--version", action="version", version=f"lavlab {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="flat key = value file")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--dim", type=int, choices=(2, 3))
    ap.add_argument("--p", type=float)
    ap.add_argument("--q", type=float)
    ap.add_argument("--alpha", type=float)
    ap.add_argument("--beta", type=float)
    ap.add_argument("--s-list", dest="s_list", help='widths, e.g. "0.0625 0.03125"')
    ap.add_argument("--family", choices=[k.value for k in Kind] + ["all"])
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override any config key")
    return ap


def resolve_config(args):
    cfg = RunConfig(command=args.command)
    if args.config:
        load_config(args.config, cfg)
    for key in ("out", "seed", "dim", "p", "q", "alpha", "beta", "family"):
        v = getattr(args, key)
        if v is not None:
            set_field(cfg, key, v)
    if args.s_list is not None:
        set_field(cfg, "s_list", args.s_list, where="--s-list")
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        set_field(cfg, k, v, where="--set")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    cfg.seed = cfg.seed % 2**32  # numpy seeds accept any size; keep reports compact
    if cfg.dim not in (2, 3):
        raise ConfigError("dim must be 2 or 3")
    # validate the material early so errors surface before any computation
    material(cfg)
    quad_spec(cfg)
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LavlabError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return EXIT_PARAMETER
    out = Outputs(cfg.out)
    try:
        return HANDLERS[cfg.command](cfg, out)
    except BaseException as exc:
        out.cleanup()
        if isinstance(exc, ConstraintError):
            code, label = EXIT_CONSTRAINT, "constraint error"
        elif isinstance(exc, ConfigError):
            code, label = EXIT_CONFIG, "config error"
        elif isinstance(exc, DomainError):
            code, label = EXIT_DOMAIN, "domain error"
        elif isinstance(exc, ParameterError):
            code, label = EXIT_PARAMETER, "parameter error"
        elif isinstance(exc, NumericalError):
            code, label = EXIT_NUMERICAL, "numerical error"
        elif isinstance(exc, (KeyboardInterrupt, SystemExit)):
            raise
        else:
            code, label = EXIT_INTERNAL, "internal error"
        print(f"{label}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
