"""Experiment kinds driven by an ExperimentConfig.

Each runner returns an ``Outcome``: the CSV rows (one per sweep point), a
summary of headline numbers, and the arrays the plots need.  Columns are
declared next to the runner so the emitted schema and the rows cannot drift
apart.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import SolverError, WeightSpec
from .config import ConfigError, ExperimentConfig, _floats
from .geometry import (GAMMA0, GAMMA1, WHOLE, GeometryError, PolygonalDomain, build_ellipse_domain,
                       build_fourier_domain, build_rectangle_domain, build_sector_domain, triangulate)

STATUS = ("status", "str", "ok, or the error that stopped this sweep point")


@dataclass
class Outcome:
    rows: list[dict]
    summary: dict
    plot_data: dict = field(default_factory=dict)
    errors: list[dict] = field(default_factory=list)


# -- domains ------------------------------------------------------------------

def _dom_float(cfg: ExperimentConfig, key: str, default=None) -> float:
    return cfg.get_float("domain", key, default)


def _dom_list(cfg: ExperimentConfig, key: str) -> list[float]:
    if key not in cfg.domain:
        return []
    return _floats(cfg.domain[key], cfg.where("domain", key), f"[domain] {key}")


def _n_around(length: float, h: float) -> int:
    return max(8, int(math.ceil(length / h)))


def fourier_coefficients(cfg: ExperimentConfig, eps: float | None = None) -> list[float]:
    cos = _dom_list(cfg, "cos")
    if eps is not None:
        mode = int(_dom_float(cfg, "mode", 3))
        if mode < 1:
            raise ConfigError(f"{cfg.where('domain', 'mode')}: [domain] mode: must be at least 1")
        cos = cos + [0.0] * max(0, mode - len(cos))
        cos[mode - 1] = eps
    return cos


def build_domain(cfg: ExperimentConfig, eps: float | None = None) -> PolygonalDomain:
    """The configured domain; ``eps`` overrides the amplitude of the Fourier mode ``mode``."""
    dtype = cfg.domain["type"].strip()
    h = cfg.h
    try:
        if dtype == "fourier":
            R = _dom_float(cfg, "base_radius", 1.0)
            return build_fourier_domain(R, fourier_coefficients(cfg, eps), _dom_list(cfg, "sin"),
                                        n_boundary=_n_around(2 * math.pi * R, h))
        if dtype == "ellipse":
            a, b = _dom_float(cfg, "a"), _dom_float(cfg, "b")
            return build_ellipse_domain(a, b, n_boundary=_n_around(math.pi * (a + b), h))
        if dtype == "rectangle":
            w, ht = _dom_float(cfg, "width", 1.0), _dom_float(cfg, "height", 1.0)
            return build_rectangle_domain(w, ht, n_per_side=max(1, int(math.ceil(max(w, ht) / h))))
        if dtype == "sector":
            from .cone import ellipse_radius

            angle = _dom_float(cfg, "angle")
            radius = _dom_float(cfg, "radius", 1.0)
            rfun = None
            if "ellipse_a" in cfg.domain or "ellipse_b" in cfg.domain:
                rfun = ellipse_radius(_dom_float(cfg, "ellipse_a"), _dom_float(cfg, "ellipse_b"))
            return build_sector_domain(angle, radius, n_arc=max(4, int(math.ceil(angle * radius / h))),
                                       n_side=max(2, int(math.ceil(radius / h))), boundary_radius=rfun)
        if dtype == "polygon":
            return read_polygon_file(cfg.domain.get("file", ""), cfg.where("domain", "file"))
    except GeometryError as exc:
        raise ConfigError(f"{cfg.where('domain', 'type')}: [domain]: {exc}") from None
    raise ConfigError(f"{cfg.where('domain', 'type')}: [domain] type: unknown domain type {dtype!r}")


def read_polygon_file(path: str, where: str = "") -> PolygonalDomain:
    """Polygon file: one ``x y [label]`` vertex per line, counterclockwise; '#' comments.

    Optional header lines ``origin x y`` and ``cone_vertex x y``.
    """
    if not path:
        raise ConfigError(f"{where}: [domain] file: missing polygon file")
    pts, labels, origin, cone = [], [], None, None
    try:
        text = open(path).read()
    except OSError as exc:
        raise ConfigError(f"{where}: [domain] file: cannot read {path} ({exc.strerror})") from None
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.split("#", 1)[0].split()
        if not s:
            continue
        try:
            if s[0] in ("origin", "cone_vertex"):
                p = (float(s[1]), float(s[2]))
                origin, cone = (p, cone) if s[0] == "origin" else (origin, p)
                continue
            pts.append((float(s[0]), float(s[1])))
            labels.append(s[2] if len(s) > 2 else WHOLE)
        except (ValueError, IndexError):
            raise ConfigError(f"{path}:{no}: expected 'x y [label]'") from None
    try:
        return PolygonalDomain(np.array(pts), tuple(labels), origin=origin, cone_vertex=cone, name="polygon")
    except GeometryError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _guarded(fn, key):
    """Run one sweep point, turning solver/geometry failures into an error record."""
    try:
        return fn(), None
    except (SolverError, GeometryError, np.linalg.LinAlgError) as exc:
        return None, {"point": key, "error": f"{type(exc).__name__}: {exc}"}


def _error_row(columns, key_values: dict, message: str) -> dict:
    row = {name: float("nan") for name, _, _ in columns}
    row.update(key_values)
    row["status"] = message
    return row


# -- stability sweep ------------------------------------------------------------

STABILITY_COLUMNS = [
    ("eps", "float", "amplitude of the Fourier boundary mode"),
    ("M_minus_1", "float", "max boundary |grad u| minus 1"),
    ("D", "float", "isoperimetric deficit"),
    ("F", "float", "Fraenkel asymmetry"),
    ("ratio", "float", "F / sqrt(M - 1)"),
    ("A", "float", "strong asymmetry at the Fraenkel-optimal center"),
    ("mean_flux", "float", "boundary mean of |grad u| (1 by normalization)"),
    ("gate_passed", "bool", "M - 1 <= 1/4"),
    ("chain_passed", "bool", "every scalar inequality of the N = 2 chain holds at (D, M)"),
    ("n_vertices", "int", "mesh vertex count"),
    STATUS,
]


def run_stability_sweep(cfg: ExperimentConfig) -> Outcome:
    from .functionals import stability_report
    from .singular import solve_punctured

    if cfg.domain["type"].strip() != "fourier":
        raise ConfigError(f"{cfg.where('domain', 'type')}: [domain] type: stability_sweep needs a fourier domain")
    eps_list = cfg.get_list("eps")
    slack = cfg.get_float("sweep", "slack", 0.1)
    domains = [build_domain(cfg, eps) for eps in eps_list]

    def point(dom):
        mesh = triangulate(dom, cfg.h)
        rep = stability_report(solve_punctured(mesh), slack=slack)
        return mesh, rep

    with ThreadPoolExecutor() as pool:
        results = list(pool.map(lambda a: _guarded(lambda: point(a[1]), a[0]), zip(eps_list, domains)))
    rows, errors, outlines, scatter = [], [], [], []
    for eps, dom, (res, err) in zip(eps_list, domains, results):
        outlines.append((f"eps = {eps:g}", dom.boundary_vertices))
        if err:
            errors.append(err)
            rows.append(_error_row(STABILITY_COLUMNS, {"eps": eps}, err["error"]))
            continue
        mesh, rep = res
        chain = [v for k, v in rep.chain_verdicts.items() if not k.startswith("gate")]
        rows.append({
            "eps": eps, "M_minus_1": rep.M_minus_1, "D": rep.deficit_D, "F": rep.asymmetry_F,
            "ratio": rep.empirical_ratio, "A": rep.asymmetry_A, "mean_flux": rep.mean_flux,
            "gate_passed": rep.chain_verdicts["gate_M_minus_1_le_quarter"]["passed"],
            "chain_passed": all(v["passed"] for v in chain), "n_vertices": mesh.n_vertices, "status": "ok",
        })
        scatter.append((rep.M_minus_1, rep.deficit_D))
    ok = [r for r in rows if r["status"] == "ok"]
    summary = {
        "max_ratio": max((r["ratio"] for r in ok), default=float("nan")),
        "all_gates_passed": all(r["gate_passed"] for r in ok),
        "all_chains_passed": all(r["chain_passed"] for r in ok),
    }
    return Outcome(rows, summary, {"outlines": outlines, "scatter": scatter}, errors)


# -- cone experiments -------------------------------------------------------------

def _sector_mesh(cfg: ExperimentConfig):
    if cfg.domain["type"].strip() != "sector":
        raise ConfigError(f"{cfg.where('domain', 'type')}: [domain] type: {cfg.kind} needs a sector domain")
    return triangulate(build_domain(cfg), cfg.h)


def _harmonic_data(cfg: ExperimentConfig):
    from .cone import polar_harmonic

    angle = _dom_float(cfg, "angle")
    order = cfg.get_float("sweep", "harmonic_order", math.pi / angle)
    return order, polar_harmonic(order)


MEAN_VALUE_COLUMNS = [
    ("k", "int", "radius index, 1-based"),
    ("r", "float", "radius of the cap around the apex"),
    ("psi", "float", "mean of v over the spherical cap"),
    ("solid_mean", "float", "mean of v over the solid sector of radius r"),
    ("cap_dev", "float", "|psi(r) - v(x0)| / sup|f|"),
    ("solid_dev", "float", "|solid mean - v(x0)| / sup|f|"),
    STATUS,
]


def run_mean_value(cfg: ExperimentConfig) -> Outcome:
    from .cone import ConeExperiment, default_radius_grid, mean_value_residuals, solve_harmonic, solve_torsion

    mesh = _sector_mesh(cfg)
    order, f = _harmonic_data(cfg)
    n_radii = int(cfg.get_float("sweep", "n_radii", 10))
    v = solve_harmonic(mesh, f)
    exp = ConeExperiment(mesh, v, solve_torsion(mesh), default_radius_grid(mesh, n_radii))
    g0 = mesh.boundary_vertex_indices(GAMMA0)
    sup = float(np.max(np.abs(v.values[g0]))) or 1.0
    res = mean_value_residuals(exp)
    v0 = res["apex_value"]
    rows = [{"k": i + 1, "r": t["r"], "psi": t["psi"], "solid_mean": t["solid_mean"],
             "cap_dev": abs(t["psi"] - v0) / sup, "solid_dev": abs(t["solid_mean"] - v0) / sup, "status": "ok"}
            for i, t in enumerate(res["table"])]
    summary = {"max_cap_dev": res["max_cap_dev"] / sup, "solid_mean_dev": res["solid_mean_dev"] / sup,
               "apex_value": v0, "f_sup": sup, "harmonic_order": order, "n_vertices": mesh.n_vertices}
    plot = {"outlines": [("sector", mesh.vertices[mesh.edges_of(WHOLE)[:, 0]])],
            "psi": ([t["r"] for t in res["table"]], [t["psi"] for t in res["table"]],
                    [t["solid_mean"] for t in res["table"]], v0)}
    return Outcome(rows, summary, plot)


DUALITY_COLUMNS = [
    ("data", "str", "Dirichlet data of the harmonic test field h"),
    ("mean_match_dev", "float", "|volume mean of h - Gamma0 mean of h| / sup|h|"),
    ("identity_residual", "float", "|LHS - RHS| of the torsion duality identity / (|Omega| sup|h|)"),
    ("uflux_const_dev", "float", "(max - min) / mean of the torsion flux on Gamma0 (same for every row)"),
    STATUS,
]


def _duality_data(name: str, cfg: ExperimentConfig, rng: np.random.Generator):
    from .cone import bump_on_gamma0, polar_harmonic

    angle = _dom_float(cfg, "angle")
    if name == "one":
        return 1.0
    if name == "harmonic":
        return polar_harmonic(math.pi / angle)
    if name == "bump":
        c = rng.uniform(0.35, 0.65) * angle
        return bump_on_gamma0(c, 0.25 * angle, amplitude=1.0)
    raise ConfigError(f"{cfg.where('sweep', 'data')}: [sweep] data: unknown data {name!r} (one, harmonic, bump)")


def run_cone_duality(cfg: ExperimentConfig) -> Outcome:
    from .cone import (ConeExperiment, cone_angles, cone_poincare_check, default_radius_grid, duality_check,
                       solve_h_fields, solve_torsion, torsion_flux_balance)
    from .assembly import boundary_flux

    mesh = _sector_mesh(cfg)
    names = [s.strip() for s in cfg.sweep.get("data", "one, harmonic, bump").split(",") if s.strip()]
    rng = np.random.default_rng(cfg.seed)
    data = [_duality_data(n, cfg, rng) for n in names]
    fields = solve_h_fields(mesh, data)
    u = solve_torsion(mesh)
    exp = ConeExperiment(mesh, fields[min(1, len(fields) - 1)], u, default_radius_grid(mesh, 10))
    out = duality_check(exp, fields)
    flux_int, flux_exact = torsion_flux_balance(u)
    poinc = cone_poincare_check(exp)
    rows = [{"data": n, "mean_match_dev": m, "identity_residual": r, "uflux_const_dev": out["uflux_const_dev"],
             "status": "ok"} for n, m, r in zip(names, out["mean_match_dev"], out["identity47_residual"])]
    e = mesh.edges_of(GAMMA0)
    mid = 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]]) - mesh.vertices[mesh.apex_index]
    a0, _ = cone_angles(mesh)
    phi = np.mod(np.arctan2(mid[:, 1], mid[:, 0]) - a0, 2 * math.pi)
    summary = {"uflux_const_dev": out["uflux_const_dev"], "mean_flux": out["mean_flux"],
               "torsion_flux_balance": abs(flux_int - flux_exact) / flux_exact,
               "max_identity_residual": max(out["identity47_residual"]),
               "max_mean_match_dev": max(out["mean_match_dev"]),
               "cone_poincare_ratio": poinc["ratio"], "n_vertices": mesh.n_vertices}
    plot = {"outlines": [("sector", mesh.vertices[mesh.edges_of(WHOLE)[:, 0]])],
            "flux": (phi, boundary_flux(u, GAMMA0))}
    return Outcome(rows, summary, plot)


# -- Poincaré constants and audits --------------------------------------------------

POINCARE_COLUMNS = [
    ("alpha", "float", "exponent of the distance weight"),
    ("quantity", "str", "scalar (mean-zero Poincaré) or trace (whole boundary)"),
    ("constant", "float", "inverse-convention constant, eigenvalue^(-1/2) (trace: eigenvalue^(1/2))"),
    ("eigenvalue", "float", "extreme eigenvalue of the constrained pencil"),
    ("rayleigh_residual", "float", "relative mismatch of the minimizer's Rayleigh quotient"),
    STATUS,
]


def run_poincare_constants(cfg: ExperimentConfig) -> Outcome:
    from .poincare import estimate_scalar_constant, estimate_trace_constant

    mesh = triangulate(build_domain(cfg), cfg.h)
    alphas = cfg.get_list("alpha")
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise ConfigError(f"{cfg.where('sweep', 'alpha')}: [sweep] alpha: {a} outside [0, 1]")
    quantities = [s.strip() for s in cfg.sweep.get("quantities", "scalar").split(",") if s.strip()]
    for q in quantities:
        if q not in ("scalar", "trace"):
            raise ConfigError(f"{cfg.where('sweep', 'quantities')}: [sweep] quantities: unknown {q!r}")
    jobs = [(a, q) for a in alphas for q in quantities if not (q == "trace" and a >= 0.5)]

    def point(job):
        a, q = job
        w = WeightSpec(a, WHOLE)
        return estimate_scalar_constant(mesh, w) if q == "scalar" else estimate_trace_constant(mesh, WHOLE, w)

    rows, errors = [], []
    for job in jobs:
        est, err = _guarded(lambda: point(job), {"alpha": job[0], "quantity": job[1]})
        if err:
            errors.append(err)
            rows.append(_error_row(POINCARE_COLUMNS, {"alpha": job[0], "quantity": job[1]}, err["error"]))
            continue
        rows.append({"alpha": job[0], "quantity": job[1], "constant": est.constant, "eigenvalue": est.eigenvalue,
                     "rayleigh_residual": est.rayleigh_residual, "status": "ok"})
    summary = {"n_vertices": mesh.n_vertices, "mesh_fingerprint": mesh.fingerprint()}
    plot = {"outlines": [(cfg.domain["type"], mesh.vertices[mesh.edges_of(WHOLE)[:, 0]])],
            "constants": [(r["quantity"], r["alpha"], r["constant"]) for r in rows if r["status"] == "ok"]}
    return Outcome(rows, summary, plot, errors)


AUDIT_COLUMNS = [
    ("check", "str", "audited inequality"),
    ("trials", "int", "number of randomized trials"),
    ("violations", "int", "trials where the inequality failed"),
    ("worst_ratio", "float", "max lhs/rhs over trials (implied constant for the self-calibrated row)"),
    ("passed", "bool", "zero violations"),
    STATUS,
]


def run_inequality_audit(cfg: ExperimentConfig) -> Outcome:
    from .poincare import inequality_audit_section3

    mesh = triangulate(build_domain(cfg), cfg.h)
    trials = int(cfg.get_float("sweep", "trials"))
    if trials < 100:
        raise ConfigError(f"{cfg.where('sweep', 'trials')}: [sweep] trials: at least 100 required")
    alpha = cfg.get_float("sweep", "alpha", 0.25)
    table = inequality_audit_section3(mesh, trials=trials, seed=cfg.seed, alpha=alpha)
    rows = [{**r, "status": "ok"} for r in table]
    summary = {"all_passed": all(r["passed"] for r in table), "n_vertices": mesh.n_vertices}
    plot = {"outlines": [(cfg.domain["type"], mesh.vertices[mesh.edges_of(WHOLE)[:, 0]])]}
    return Outcome(rows, summary, plot)


IDENTITY_COLUMNS = [
    ("case", "str", "N2:<domain> for the planar identities, N3:R=<radius> for the ball"),
    ("quantity", "str", "which residual"),
    ("value", "float", "residual value"),
    STATUS,
]


def run_identity_checks(cfg: ExperimentConfig) -> Outcome:
    from .pfunction import ball_chain_N3, p_ball_checks_N3, x_field_identities_2d
    from .singular import solve_punctured

    rows = []
    mesh = triangulate(build_domain(cfg), cfg.h)
    case = f"N2:{cfg.domain['type'].strip()}"
    res, err = _guarded(lambda: x_field_identities_2d(solve_punctured(mesh)), case)
    errors = []
    if err:
        errors.append(err)
        rows.append({"case": case, "quantity": "flux_square_identity", "value": float("nan"), "status": err["error"]})
    else:
        for q in ("flux_square_identity", "deficit_relation", "divergence_interior"):
            rows.append({"case": case, "quantity": q, "value": getattr(res, q), "status": "ok"})
    n_radii = int(cfg.get_float("sweep", "n_radii", 20))
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for R in np.sort(rng.uniform(0.2, 5.0, size=n_radii)):
        p = p_ball_checks_N3(float(R))
        ch = ball_chain_N3(float(R))
        for q, v in (("p_constant_gap", p["p_constant_gap"]), ("integral_identity_gap", p["integral_identity_gap"]),
                     ("chain_gap", ch["intermedia_gap"]), ("mean_gap_identity", ch["mean_gap_identity"])):
            rows.append({"case": f"N3:R={R:.6f}", "quantity": q, "value": v, "status": "ok"})
            worst = max(worst, v)
    summary = {"n3_worst_residual": worst}
    if res is not None:
        summary.update(flux_square_identity=res.flux_square_identity, deficit_relation=res.deficit_relation,
                       divergence_interior=res.divergence_interior)
    plot = {"outlines": [(cfg.domain["type"], mesh.vertices[mesh.edges_of(WHOLE)[:, 0]])]}
    return Outcome(rows, summary, plot, errors)


RUNNERS = {
    "stability_sweep": (run_stability_sweep, STABILITY_COLUMNS, ("eps",)),
    "mean_value": (run_mean_value, MEAN_VALUE_COLUMNS, ("k",)),
    "cone_duality": (run_cone_duality, DUALITY_COLUMNS, ("data",)),
    "poincare_constants": (run_poincare_constants, POINCARE_COLUMNS, ("alpha", "quantity")),
    "inequality_audit": (run_inequality_audit, AUDIT_COLUMNS, ("check",)),
    "identity_checks": (run_identity_checks, IDENTITY_COLUMNS, ("case", "quantity")),
}

# relative tolerances used by ``compare`` when flagging metric differences
COMPARE_TOLERANCE = 1e-9
