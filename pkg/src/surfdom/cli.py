"""``surfdom`` command line.

Exit codes: ``dominate`` returns 0 (StrictlyDominated), 1 (NotDominated) or
2 (Inconclusive); ``verify`` returns 1 when a check fails.  Every command
returns 64 for usage errors, 65 for unreadable or invalid input files and 70
when a computation fails.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_SOFTWARE = 70
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")

log = logging.getLogger("surfdom")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--genus", type=int, default=2, help="genus for named representation families")
    p.add_argument("--radius", type=int, default=6, help="word-ball radius for length spectra")
    p.add_argument("--edge", type=float, default=0.2, help="mesh target edge length")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="surfdom", description="Domination of surface group representations.")
    ap.add_argument("--output-dir", help="output directory (default: $SURFDOM_OUTPUT_DIR or ./surfdom-out)")
    ap.add_argument("--threads", type=int, default=None, help="cap on worker threads of the linear algebra backend")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("rep-info", help="relator residual, Euler class, generator types, parabolic detection")
    p.add_argument("rep", help="representation file or family (trivial, elliptic:.., axis:.., fn:.., sigma-fn:..)")
    p.add_argument("--genus", type=int, default=2)
    p.add_argument("--allow-residual", action="store_true")

    p = sub.add_parser("dominate", help="verdict on strict domination of rho by j")
    p.add_argument("j")
    p.add_argument("rho")
    _common(p)
    p.add_argument("--alpha", type=float, default=1.0, help="target metric divided by alpha^2 (alpha >= 1)")
    p.add_argument("--allow-residual", action="store_true")

    p = sub.add_parser("psi", help="forward map or its inverse (minimiser of F)")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--forward", action="store_true", help="Psi_rho(X) from --X")
    mode.add_argument("--inverse", action="store_true", help="argmin of F_{j0, rho} from --j0")
    p.add_argument("--X", help="FN coordinates 'l1,l2,l3/t1,t2,t3' (forward input)")
    p.add_argument("--j0", help="Fuchsian representation (inverse input)")
    p.add_argument("--init", help="FN coordinates of the starting point (inverse)")
    p.add_argument("--rho", default=None)
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--genus", type=int, default=2)
    p.add_argument("--edge", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)

    p = sub.add_parser("thurston", help="bounds on the asymmetric Lipschitz distance")
    p.add_argument("j")
    p.add_argument("j2")
    _common(p)

    p = sub.add_parser("harmonic", help="solve for the equivariant harmonic map")
    p.add_argument("j", help="holonomy of the domain surface")
    p.add_argument("rho")
    _common(p)
    p.add_argument("--mesh", help="read the domain mesh from a file instead of building it")
    p.add_argument("--tol", type=float, default=1e-8)

    p = sub.add_parser("verify", help="run an invariant battery")
    from .verify import SUITES

    p.add_argument("suite", choices=SUITES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mesh", help="mesh file checked by the energy suite")
    p.add_argument("--edge", type=float, default=None)

    p = sub.add_parser("continuity", help="Lipschitz bounds along a path of representations")
    p.add_argument("j", nargs="?")
    p.add_argument("path", nargs="*", help="representations along the path")
    _common(p)
    p.add_argument("--config", help="experiment config with j0 and a path")
    p.add_argument("--minimizer", action="store_true", help="also track the argmin of F along the path")
    p.add_argument("--init", help="FN start for --minimizer")
    return ap


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    if n < 1:
        raise UsageError("--threads must be at least 1")
    for v in THREAD_VARS:
        os.environ[v] = str(n)


def _rep(spec: str, genus: int, allow_residual: bool = False):
    from .io import rep_from_spec

    return rep_from_spec(spec, genus, allow_residual)


def _print_table(header, rows) -> None:
    rows = [[f"{x:.6g}" if isinstance(x, float) else str(x) for x in r] for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)))


def cmd_rep_info(args, out: Path) -> int:
    from .hyperbolic import classify
    from .io import write_json
    from .surface import RelatorViolation, detect_parabolic, euler_class, relator_residual

    rep = _rep(args.rep, args.genus, args.allow_residual)
    res = relator_residual(rep)
    try:
        e = euler_class(rep)
    except RelatorViolation:
        # the relator fails, so the Euler class is not defined
        e = None
    types = {rep.group.generator_name(k + 1): classify(g).name.capitalize() for k, g in enumerate(rep.images)}
    data = detect_parabolic(rep)
    par = None
    if data is not None:
        par = {"kind": data.kind, "boundary": data.is_boundary, "morphism": list(map(float, data.morphism))}
    print(f"genus            {rep.genus}")
    print(f"relator residual {res:.3e}")
    print(f"euler class      {'undefined' if e is None else e}")
    for name, t in types.items():
        print(f"{name:<16} {t}")
    print(f"parabolic        {'none' if par is None else par['kind']}")
    write_json(out / "rep_info.json", "rep-info", {"genus": rep.genus, "relator_residual": res, "euler_class": e,
                                                   "generators": types, "parabolic": par})
    return 0


def cmd_dominate(args, out: Path) -> int:
    from .io import write_json
    from .lipschitz import check_domination

    j = _rep(args.j, args.genus, args.allow_residual)
    rho = _rep(args.rho, args.genus, args.allow_residual)
    v = check_domination(j, rho, radius=args.radius, alpha=args.alpha, target_edge=args.edge)
    print(f"verdict {v.kind.value}")
    print(f"lower   {v.lower:.10g}")
    print(f"upper   {v.upper:.10g}")
    if v.witness_word is not None:
        print(f"witness {v.witness_word}")
    write_json(out / "dominate.json", "dominate", {
        "verdict": v.kind.value, "lower": v.lower, "upper": v.upper, "margin": v.margin,
        "witness_word": v.witness_word, "radius": args.radius, "target_edge": args.edge, "alpha": args.alpha,
        "exit_code": v.exit_code})
    return v.exit_code


def cmd_psi(args, out: Path) -> int:
    from .io import format_fn, parse_fn, read_config, write_csv, write_json
    from .psi import PsiOptions, minimize_F, psi_forward_report

    cfg = read_config(args.config) if args.config else None
    edge = args.edge or (cfg.target_edge if cfg else 0.3)
    tol = args.tol or (cfg.tol if cfg else 1e-6)
    rho_spec = args.rho or (cfg.rho if cfg else None)
    if rho_spec is None:
        raise UsageError("--rho is required")
    genus = cfg.genus if cfg else args.genus
    rho = _rep(rho_spec, genus)
    opts = PsiOptions(target_edge=edge, tol=tol)
    if args.forward:
        X_text = args.X or (cfg.fn_init if cfg else None)
        if X_text is None:
            raise UsageError("--forward needs --X")
        X = parse_fn(X_text)
        Y, rep = psi_forward_report(X, rho, opts)
        print(f"psi {format_fn(Y)}")
        print(f"projected residual {rep.projected_residual:.3e} after {rep.iterations} iterations")
        write_json(out / "psi.json", "psi", {
            "mode": "forward", "X": format_fn(X), "result": format_fn(Y), "iterations": rep.iterations,
            "projected_residual": rep.projected_residual, "full_residual": rep.full_residual,
            "target_norm": rep.target_norm, "target_edge": edge})
        return 0
    j0_spec = args.j0 or (cfg.j0 if cfg else None)
    init_text = args.init or (cfg.fn_init if cfg else None)
    if j0_spec is None or init_text is None:
        raise UsageError("--inverse needs --j0 and --init")
    j0 = _rep(j0_spec, genus)
    res = minimize_F(j0, rho, parse_fn(init_text), opts)
    print(f"argmin {format_fn(res.argmin)}")
    print(f"F      {res.F_min:.12g}")
    print(f"|grad| {res.grad_norm_at_exit:.3e} after {res.iterations} iterations")
    write_json(out / "psi.json", "psi", {
        "mode": "inverse", "argmin": format_fn(res.argmin), "F_min": res.F_min,
        "grad_norm_at_exit": res.grad_norm_at_exit, "iterations": res.iterations, "target_edge": edge})
    write_csv(out / "psi_iterations.csv", ["step", "E_j0", "E_rho", "F", *[f"x{i}" for i in range(len(res.argmin.as_vector()))]],
              [[k, e.E_j0, e.E_rho, e.F, *map(float, e.X.as_vector())] for k, e in enumerate(res.path)], kind="psi-path")
    return 0


def cmd_thurston(args, out: Path) -> int:
    from .io import write_json
    from .lipschitz import thurston_distance

    j = _rep(args.j, args.genus)
    j2 = _rep(args.j2, args.genus)
    lo, up = thurston_distance(j, j2, args.radius, target_edge=args.edge)
    print(f"ln lower {lo:.10g}")
    print(f"ln upper {up:.10g}")
    write_json(out / "thurston.json", "thurston", {"ln_lower": lo, "ln_upper": up, "radius": args.radius,
                                                  "target_edge": args.edge})
    return 0


def cmd_harmonic(args, out: Path) -> int:
    from .harmonic import solve_any, total_energy
    from .io import read_mesh, write_iterations, write_json, write_map, write_mesh
    from .teichmuller.mesh import build_mesh

    j = _rep(args.j, args.genus)
    rho = _rep(args.rho, args.genus)
    mesh = read_mesh(args.mesh) if args.mesh else build_mesh(j, args.edge)
    emap, rep = solve_any(mesh, rho, tol=args.tol)
    write_mesh(out / "mesh.txt", mesh)
    write_map(out / "map.txt", emap)
    write_iterations(out / "iterations.csv", rep.history)
    total = total_energy(emap, mesh).total if not emap.target.is_line else rep.total
    print(f"energy        {total:.12g}")
    print(f"gradient norm {rep.gradient_norm:.3e}")
    print(f"iterations    {rep.iterations}")
    write_json(out / "harmonic.json", "harmonic", {
        "energy": total, "gradient_norm": rep.gradient_norm, "iterations": rep.iterations,
        "converged": rep.converged, "faces": mesh.n_faces, "vertices": mesh.n_vertices,
        "target": emap.target.kind.value})
    return 0


def cmd_verify(args, out: Path) -> int:
    from .io import read_mesh, write_csv, write_json
    from .verify import run_suite

    kw = {}
    if args.mesh:
        kw["mesh"] = read_mesh(args.mesh)
    if args.edge:
        kw["target_edge"] = args.edge
    checks = run_suite(args.suite, seed=args.seed, **kw)
    header = ["suite", "check", "result", "value", "threshold"]
    _print_table(header, [c.row() for c in checks])
    write_csv(out / f"verify_{args.suite}.csv", header, [c.row() for c in checks], kind="verify")
    ok = all(c.passed for c in checks)
    write_json(out / f"verify_{args.suite}.json", "verify", {"suite": args.suite, "passed": ok, "seed": args.seed,
                                                             "checks": [dict(zip(header, c.row())) for c in checks]})
    return 0 if ok else 1


def cmd_continuity(args, out: Path) -> int:
    from .io import parse_fn, read_config, write_csv, write_json
    from .lipschitz import lip_continuity_probe
    from .psi import PsiOptions, minimizer_continuity_experiment
    from .teichmuller.mesh import build_mesh

    cfg = read_config(args.config) if args.config else None
    j_spec = args.j or (cfg.j0 if cfg else None)
    path_specs = args.path or (cfg.path if cfg else [])
    if j_spec is None or len(path_specs) < 2:
        raise UsageError("continuity needs j and at least two representations on the path")
    genus = cfg.genus if cfg else args.genus
    radius = cfg.radius if cfg else args.radius
    edge = cfg.target_edge if cfg else args.edge
    j = _rep(j_spec, genus)
    path = [_rep(s, genus) for s in path_specs]
    rows, jl, ju = lip_continuity_probe(j, path, radius, build_mesh(j, edge))
    _print_table(["step", "lower", "upper"], [[r.step, r.lower, r.upper] for r in rows])
    print(f"largest jump: lower {jl:.3e}, upper {ju:.3e}")
    write_csv(out / "continuity.csv", ["step", "lower", "upper"], [[r.step, r.lower, r.upper] for r in rows], kind="continuity")
    payload = {"jump_lower": jl, "jump_upper": ju, "radius": radius, "target_edge": edge, "steps": len(rows)}
    if args.minimizer:
        init_text = args.init or (cfg.fn_init if cfg else None)
        if init_text is None:
            raise UsageError("--minimizer needs --init")
        steps = minimizer_continuity_experiment([(j, r) for r in path], parse_fn(init_text), PsiOptions(target_edge=edge))
        write_csv(out / "minimizer_path.csv", ["step", "F_min", "displacement"],
                  [[s.step, s.F_min, s.displacement] for s in steps], kind="minimizer-path")
        payload["max_displacement"] = max(s.displacement for s in steps)
    write_json(out / "continuity.json", "continuity", payload)
    return 0


COMMANDS = {
    "rep-info": cmd_rep_info,
    "dominate": cmd_dominate,
    "psi": cmd_psi,
    "thurston": cmd_thurston,
    "harmonic": cmd_harmonic,
    "verify": cmd_verify,
    "continuity": cmd_continuity,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        _set_threads(args.threads)
        from .io import output_dir

        out = output_dir(args.output_dir)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"surfdom: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        # parse errors, relator violations and invalid parameters
        print(f"surfdom: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RuntimeError as exc:
        print(f"surfdom: computation failed: {exc}", file=sys.stderr)
        return EXIT_SOFTWARE


if __name__ == "__main__":
    sys.exit(main())
