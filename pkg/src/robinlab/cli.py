"""Command-line front end: ``robinlab <command> [config.yaml]``.

Exit codes: 0 success, 1 configuration or I/O error, 2 solver failure,
3 acceptance failure.
"""

import argparse
import os
import sys

import numpy as np

from . import __version__
from .exceptions import ConfigError, RobinLabError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ACCEPTANCE = 0, 1, 2, 3


def _check_writable(path):
    """Create ``path`` and prove it is writable before any computation starts."""
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write_probe")
        with open(probe, "w", encoding="ascii") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise OSError(f"output directory {path} is not writable: {exc.strerror or exc}") from None


def _load(args):
    from .config import default_config, load_config
    cfg = load_config(args.config) if args.config else default_config()
    out = args.out or cfg.output
    _check_writable(out)
    return cfg, out


def _build_mesh(cfg, n_radial, n_angular):
    from .geometry import build_annular_mesh
    return build_annular_mesh(cfg.domain(), n_radial, n_angular, cfg.metric_tensor())


def _spectral_oracle(cfg, problem):
    """Exact solution for concentric circles, Euclidean metric, constant q and f = 0."""
    import numbers
    from .spectral import FourierSeries, solve_modes
    domain = cfg.domain()
    if not (domain.is_concentric_circles and cfg.metric.kind == "identity" and problem.absorption == 0
            and problem.source == 0 and isinstance(problem.q_S, numbers.Real)
            and isinstance(problem.q_gamma, numbers.Real)):
        return None

    def series(spec):
        return spec if isinstance(spec, FourierSeries) else FourierSeries.constant(float(spec))

    return solve_modes(series(problem.flux_S), series(problem.flux_gamma), domain.inner.radius,
                       domain.outer.radius, problem.q_S, problem.q_gamma)


def run_forward(cfg, out):
    from .fem import extract_cauchy, forward_solve, h1_seminorm_error, l2_error
    from .reporting import write_cauchy_csv, write_rows, write_solution_csv
    from .spectral import spectral_field, spectral_gradient
    problem = cfg.robin_problem()
    d = cfg.discretization
    modes = _spectral_oracle(cfg, problem)
    cx, cy = cfg.domain().center
    rows = []
    sol = None
    for level in range(d.refinement_levels):
        mesh = _build_mesh(cfg, d.n_radial * 2 ** level, d.n_angular * 2 ** level)
        sol = forward_solve(problem, mesh, tol=d.solver_tol)
        row = [level, mesh.h, mesh.n_vertices, sol.energy]
        if modes is not None:
            def exact(x, y):
                return spectral_field(modes, np.hypot(x - cx, y - cy), np.arctan2(y - cy, x - cx), clip=True)
            row += [l2_error(sol.nodal_values, sol.mesh, exact),
                    h1_seminorm_error(sol.nodal_values, sol.mesh, lambda x, y: spectral_gradient(modes, x, y, (cx, cy)))]
        rows.append(row)
    write_solution_csv(sol, os.path.join(out, "solution.csv"))
    write_cauchy_csv(extract_cauchy(sol), os.path.join(out, "cauchy.csv"))
    if d.refinement_levels > 1:
        header = ["level", "h", "n_vertices", "energy"]
        if modes is not None:
            header += ["l2_error", "h1_error"]
        write_rows(os.path.join(out, "convergence.csv"), header, rows)
    return EXIT_OK


def run_invert_flux(cfg, out):
    from .boundary import l2_norm
    from .fem import extract_cauchy, forward_solve
    from .inverse import add_noise, assemble_forward_map, invert_flux
    from .reporting import read_cauchy_csv, write_field_csv, write_history_csv, write_key_values
    from .config import spec_to_series
    c = cfg.invert_flux
    domain = cfg.domain()
    problem = cfg.robin_problem()
    mesh = None
    if c.backend == "fem":
        mesh = _build_mesh(cfg, cfg.discretization.n_radial, cfg.discretization.n_angular)
    fmap = assemble_forward_map(c.cutoff, domain, problem.q_S, problem.q_gamma, backend=c.backend,
                                metric=cfg.metric_tensor(), mesh=mesh, n_gamma=c.n_gamma)
    truth = None
    if c.data_file:
        data = read_cauchy_csv(c.data_file, domain.outer, metric=cfg.metric_tensor()).resample(fmap.loop)
    elif c.truth is not None:
        flux = spec_to_series(c.truth)
        truth = fmap.basis.loop.field(flux)
        if _spectral_oracle(cfg, problem.with_(source=0.0)) is not None:
            # exact series data, independent of any inversion mesh
            from .spectral import FourierSeries, spectral_forward
            data = spectral_forward(flux, FourierSeries(boundary="GAMMA"), domain.inner.radius,
                                    domain.outer.radius, problem.q_S, problem.q_gamma).sample(fmap.loop)
        else:
            if c.data_refinement == 1:
                raise ConfigError("invert_flux.data_refinement: synthetic data on the inversion mesh "
                                  "is an inverse crime; use a factor >= 2")
            k = c.data_refinement
            fine = _build_mesh(cfg, cfg.discretization.n_radial * k, cfg.discretization.n_angular * k)
            sol = forward_solve(problem.with_(flux_S=flux, flux_gamma=0.0, source=0.0), fine)
            data = extract_cauchy(sol).resample(fmap.loop)
    else:
        raise ConfigError("invert_flux: provide either data_file or truth")
    data = add_noise(data, c.noise, seed=c.seed)
    res = invert_flux(data, fmap, alpha=c.alpha)
    write_field_csv(res.estimate, os.path.join(out, "estimate.csv"))
    write_history_csv(res, os.path.join(out, "iterations.csv"))
    summary = {"residual": res.residual, "sigma_min": res.sigma_min, "cond": res.cond,
               "basis_size": fmap.size, "cutoff": c.cutoff, "noise": c.noise, "seed": c.seed}
    if truth is not None:
        summary["relative_error"] = l2_norm(res.estimate - truth) / l2_norm(truth)
    write_key_values(os.path.join(out, "summary.csv"), summary)
    return EXIT_OK


def run_invert_robin(cfg, out):
    from .boundary import l2_norm
    from .inverse import add_noise, invert_robin, synthesize_data
    from .reporting import read_cauchy_csv, write_field_csv, write_history_csv, write_key_values
    from .config import spec_to_series
    c = cfg.invert_robin
    problem = cfg.robin_problem()
    inv_mesh = _build_mesh(cfg, c.n_radial, c.n_angular)
    truth = None
    if c.data_file:
        data = read_cauchy_csv(c.data_file, cfg.domain().outer, metric=cfg.metric_tensor())
    elif c.truth is not None:
        if c.data_refinement == 1:
            raise ConfigError("invert_robin.data_refinement: synthetic data on the inversion mesh is an "
                              "inverse crime; use a factor >= 2")
        k = c.data_refinement
        fine = _build_mesh(cfg, c.n_radial * k, c.n_angular * k)
        truth = spec_to_series(c.truth)
        data = synthesize_data(problem, fine, q_S=truth)
    else:
        raise ConfigError("invert_robin: provide either data_file or truth")
    data = add_noise(data, c.noise, seed=c.seed)
    res = invert_robin(data, problem, inv_mesh, cutoff=c.cutoff, kappa=cfg.problem.kappa,
                       max_iter=c.max_iter, alpha=c.alpha)
    write_field_csv(res.estimate, os.path.join(out, "estimate.csv"))
    write_history_csv(res, os.path.join(out, "iterations.csv"))
    summary = {"iterations": res.iterations, "converged": res.converged, "relative_mismatch": res.residual,
               "boundary_contact": res.boundary_contact, "constraint_ratio": res.constraint_ratio,
               "sqrt_cutoff": float(np.sqrt(c.cutoff)), "noise": c.noise, "seed": c.seed}
    if truth is not None:
        ref = res.estimate.loop.field(truth)
        summary["relative_error"] = l2_norm(res.estimate - ref) / l2_norm(ref)
    write_key_values(os.path.join(out, "summary.csv"), summary)
    return EXIT_OK


def run_stability_cmd(cfg, out):
    from .stability import run_stability, write_report
    s = cfg.stability
    domain = cfg.domain()
    problem = cfg.robin_problem()
    mesh = None
    if s.backend == "fem":
        mesh = _build_mesh(cfg, cfg.discretization.n_radial, cfg.discretization.n_angular)
    audit_mesh = _build_mesh(cfg, cfg.discretization.n_radial, cfg.discretization.n_angular) if s.audits else None
    report = run_stability(domain, s.grid, eta=s.eta, q_S=problem.q_S, q_gamma=problem.q_gamma,
                           family_orders=s.family, backend=s.backend, mesh=mesh, audit_mesh=audit_mesh,
                           lipschitz_cutoff=s.lipschitz_cutoff, lipschitz_samples=s.lipschitz_samples,
                           seed=s.seed)
    write_report(report, out)
    return EXIT_OK


def run_validate(out):
    from .acceptance import run_acceptance
    results = run_acceptance(out)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_ACCEPTANCE if failed else EXIT_OK


def run_defaults(path):
    from .config import default_config, dump_config
    text = dump_config(default_config())
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="robinlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"robinlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("forward", "solve the forward Robin problem"),
                           ("invert-flux", "recover a flux on S from Cauchy data"),
                           ("invert-robin", "recover the Robin coefficient on S"),
                           ("stability", "singular-value sweep, modulus fit and audits")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", nargs="?", help="YAML config (defaults when omitted)")
        p.add_argument("--out", help="output directory (overrides the config)")
    p = sub.add_parser("validate", help="run the acceptance suite")
    p.add_argument("--out", default="validate_report", help="directory for acceptance.csv")
    p = sub.add_parser("defaults", help="print the default config")
    p.add_argument("--write", metavar="PATH", help="write to a file instead of stdout")
    return parser


COMMANDS = {"forward": run_forward, "invert-flux": run_invert_flux, "invert-robin": run_invert_robin,
            "stability": run_stability_cmd}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "defaults":
            return run_defaults(args.write)
        if args.command == "validate":
            _check_writable(args.out)
            return run_validate(args.out)
        cfg, out = _load(args)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"robinlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FileNotFoundError) as exc:
        print(f"robinlab: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RobinLabError as exc:
        print(f"robinlab: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
