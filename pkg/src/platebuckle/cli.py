"""Command line driver.

Subcommands: solve | variations | psi | payne | oracle | acceptance.
Exit status contract: 0 success, 1 acceptance or pipeline failure,
2 input error, 3 mathematical gate refusal.

Heavy imports happen inside the command handlers so that
``--single-thread`` can pin the BLAS thread pools before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2
EXIT_GATE = 3

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def _load_config(args):
    from .config import RunConfig, load_config
    cfg = load_config(args.config) if args.config else RunConfig().validate()
    if args.levels is not None:
        cfg.levels = args.levels
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg.validate()


def _outdir(cfg):
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg.out_dir


def _finest(cfg, curve):
    from . import shape_calculus as sc
    return sc.solve_domain(curve, h=cfg.h, penalty=cfg.penalty,
                           refinements=cfg.levels - 1)


def cmd_solve(args):
    from . import report
    from . import shape_calculus as sc
    from .config import build_curve
    from .disc_oracle import disc_buckling

    cfg = _load_config(args)
    out = _outdir(cfg)
    curve = build_curve(cfg)

    rows = []
    last = None
    for r in range(cfg.levels):
        ds = sc.solve_domain(curve, h=cfg.h, penalty=cfg.penalty, refinements=r)
        lam2_pair = [p.value for p in ds.dirichlet
                     if p.cluster == ds.dirichlet[1].cluster]
        rows.append([r, ds.space.ndof, ds.mesh.h, ds.lam,
                     ds.dirichlet[0].value, lam2_pair[0],
                     max(p.residual for p in ds.buckling)])
        last = ds
        print("level %d: ndof=%d lam=%.8f" % (r, ds.space.ndof, ds.lam))

    crit = sc.criticality_report(last)
    lam, lam2, gap, gap_rel = sc.payne_check(last)
    payload = {
        "curve": cfg.curve,
        "levels": cfg.levels,
        "lam": last.lam,
        "lam1": last.dirichlet[0].value,
        "lam2": lam2,
        "area": last.area,
        "max_residual": max(p.residual for p in last.buckling),
        "criticality": {
            "c0": crit.c0, "trace_mean": crit.trace_mean,
            "trace_dev": crit.trace_dev, "mean_error": crit.mean_error,
            "rel_value": crit.rel_value, "rel_error": crit.rel_error,
            "w_residual": crit.w_residual,
            "w_residual_rel": crit.w_residual_rel,
            "critical": crit.critical,
        },
        "payne": {"lam": lam, "lam2": lam2, "gap": gap, "gap_rel": gap_rel},
    }
    report.write_json(os.path.join(out, "solve.json"), payload, cfg)
    report.write_csv(os.path.join(out, "convergence.csv"),
                     ["level", "ndof", "h", "lam", "lam1", "lam2", "residual"],
                     rows)
    series = [{"x": [r[0] for r in rows], "y": [r[3] for r in rows],
               "label": "lam_h", "markers": True}]
    if cfg.curve == "disc":
        exact = disc_buckling(cfg.radius).eigenvalue
        series.append({"x": [rows[0][0], rows[-1][0]], "y": [exact, exact],
                       "label": "analytic"})
    report.write_svg(os.path.join(out, "convergence.svg"), series,
                     title="buckling eigenvalue by refinement level",
                     xlabel="level", ylabel="lam")
    print("reports written to %s" % out)
    return EXIT_OK


def cmd_variations(args):
    import numpy as np

    from . import report
    from . import shape_calculus as sc
    from .config import build_curve, build_field

    cfg = _load_config(args)
    out = _outdir(cfg)
    curve = build_curve(cfg)
    fld = build_field(cfg, curve)
    ds = _finest(cfg, curve)

    try:
        rep = sc.variation_check(ds, fld, step=cfg.fd_step, second=True)
    except sc.GateError as exc:
        payload = {"gate": "criticality gate refused: %s" % exc,
                   "curve": cfg.curve, "field": cfg.field_kind}
        report.write_json(os.path.join(out, "variations.json"), payload, cfg)
        print("refused: %s" % exc, file=sys.stderr)
        return EXIT_GATE

    flags = []
    if abs(rep.first_formula) <= 0.02 * ds.lam and abs(rep.first_fd) <= 0.02 * ds.lam:
        flags.append("first:kernel")
    if abs(rep.second_formula) <= 0.02 * ds.lam and abs(rep.second_fd) <= 0.02 * ds.lam:
        flags.append("second:kernel")
    payload = {
        "curve": cfg.curve, "field": cfg.field_kind, "mode": cfg.mode,
        "step": rep.step,
        "first_formula": rep.first_formula, "first_fd": rep.first_fd,
        "second_formula": rep.second_formula, "second_fd": rep.second_fd,
        "lam": ds.lam, "flags": flags,
    }
    report.write_json(os.path.join(out, "variations.json"), payload, cfg)

    # sampled eigenvalue curve against the predicted tangent and parabola
    h0 = ds.mesh.h * 2 ** ds.refinements
    ts = np.linspace(-cfg.fd_step, cfg.fd_step, 5)
    sampled = [sc.lambda_of_t(curve, fld, t, h=h0, n_rings=ds.n_rings,
                              refinements=ds.refinements, penalty=ds.penalty)
               if t else ds.lam for t in ts]
    dense = np.linspace(ts[0], ts[-1], 41)
    tangent = ds.lam + dense * rep.first_formula
    parab = tangent + 0.5 * dense ** 2 * rep.second_formula
    report.write_svg(
        os.path.join(out, "variations.svg"),
        [{"x": list(ts), "y": sampled, "label": "lam(t) remeshed", "markers": True},
         {"x": list(dense), "y": list(tangent), "label": "tangent"},
         {"x": list(dense), "y": list(parab), "label": "parabola"}],
        title="domain variation of the buckling eigenvalue",
        xlabel="t", ylabel="lam")
    print("first: formula %.6f vs FD %.6f" % (rep.first_formula, rep.first_fd))
    print("second: formula %.6f vs FD %.6f" % (rep.second_formula, rep.second_fd))
    if flags:
        print("flags: %s" % ",".join(flags))
    print("reports written to %s" % out)
    return EXIT_OK


def cmd_psi(args):
    from . import report
    from . import shape_calculus as sc
    from .config import build_curve

    cfg = _load_config(args)
    out = _outdir(cfg)
    ds = _finest(cfg, build_curve(cfg))
    rep = sc.build_psi(ds)
    member = sc.z_membership(ds, rep.field)
    quad_f, closed_f = sc.psi_energy_identity(ds, force_t=0.5)
    payload = {
        "curve": cfg.curve,
        "t": rep.t, "c": rep.c,
        "lam": ds.lam, "lam1": rep.lam1, "lam2": rep.lam2,
        "mean_u1": rep.mean1, "mean_u2": rep.mean2,
        "energy_quadrature": rep.quadrature,
        "energy_closed_form": rep.closed_form,
        "membership": {
            "member": member.member, "flux": member.flux,
            "normal_mass": member.normal_mass,
            "grad_product": member.grad_product,
        },
        "forced_t_half": {"quadrature": quad_f, "closed_form": closed_f},
    }
    report.write_json(os.path.join(out, "psi.json"), payload, cfg)
    print("t=%.9f c=%.3e E(psi)=%.6f (closed %.6f)"
          % (rep.t, rep.c, rep.quadrature, rep.closed_form))
    print("reports written to %s" % out)
    return EXIT_OK


def cmd_payne(args):
    from . import report
    from . import shape_calculus as sc
    from .config import build_curve

    cfg = _load_config(args)
    out = _outdir(cfg)
    ds = _finest(cfg, build_curve(cfg))
    lam, lam2, gap, gap_rel = sc.payne_check(ds)
    payload = {"curve": cfg.curve, "lam": lam, "lam2": lam2,
               "gap": gap, "gap_rel": gap_rel,
               "strict": bool(gap_rel > 0.02)}
    report.write_json(os.path.join(out, "payne.json"), payload, cfg)
    print("lam=%.8f lam2=%.8f gap/lam=%.4f%%" % (lam, lam2, 100 * gap_rel))
    print("reports written to %s" % out)
    return EXIT_OK


def cmd_oracle(args):
    from . import report
    from .disc_oracle import reference_table

    cfg = _load_config(args)
    out = _outdir(cfg)
    table = reference_table(cfg.radius)
    report.write_json(os.path.join(out, "oracle.json"), table, cfg)
    for key, val in table.items():
        print("%-36s %.18g" % (key, val) if isinstance(val, float)
              else "%-36s %s" % (key, val))
    return EXIT_OK


def cmd_acceptance(args):
    from . import acceptance, report

    if args.list:
        for ident, title in acceptance.list_ids():
            print("%-3s %s" % (ident, title))
        return EXIT_OK

    cfg = _load_config(args)
    out = _outdir(cfg)

    def progress(res):
        print("criterion %s: %s (%.1fs)"
              % (res.ident, "PASS" if res.passed else "FAIL", res.seconds))

    results = acceptance.run_suite(tighten=args.tighten,
                                   ids=args.only, progress=progress)
    print()
    print(acceptance.format_table(results, verbose=args.verbose))
    report.write_json(os.path.join(out, "acceptance.json"),
                      acceptance.to_payload(results, args.tighten), cfg)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="config file (key=value lines or a JSON object)")
    common.add_argument("--out", metavar="DIR", help="report output directory")
    common.add_argument("--levels", type=int, metavar="N",
                        help="number of refinement levels")
    common.add_argument("--seed", type=int, metavar="N", help="random seed")
    common.add_argument("--single-thread", action="store_true",
                        help="pin BLAS pools to one thread for bit-equal reruns")

    parser = argparse.ArgumentParser(
        prog="platebuckle",
        description="shape calculus for the clamped-plate buckling eigenvalue")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common],
                       help="eigensolve across refinement levels")
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("variations", parents=[common],
                       help="first and second domain variation checks")
    p.set_defaults(func=cmd_variations)
    p = sub.add_parser("psi", parents=[common],
                       help="build the Payne test function and its energy")
    p.set_defaults(func=cmd_psi)
    p = sub.add_parser("payne", parents=[common],
                       help="buckling vs second Dirichlet eigenvalue gap")
    p.set_defaults(func=cmd_payne)
    p = sub.add_parser("oracle", parents=[common],
                       help="print analytic disc reference values")
    p.set_defaults(func=cmd_oracle)
    p = sub.add_parser("acceptance", parents=[common],
                       help="run the acceptance criteria suite")
    p.add_argument("--list", action="store_true",
                   help="print criterion ids without running")
    p.add_argument("--tighten", type=float, default=1.0, metavar="F",
                   help="multiply every tolerance by F (diagnostic)")
    p.add_argument("--only", nargs="*", metavar="ID",
                   help="run only the named criteria")
    p.add_argument("--verbose", action="store_true",
                   help="show passing checks too")
    p.set_defaults(func=cmd_acceptance)
    return parser


def _classify(exc):
    from .config import ConfigError
    from .geometry import CurveError
    from .mesher import MeshError
    from .shape_calculus import GateError, PsiError
    if isinstance(exc, (GateError, PsiError)):
        return EXIT_GATE, "gate refusal"
    if isinstance(exc, (ConfigError, CurveError, MeshError, OSError)):
        return EXIT_INPUT, "input error"
    return EXIT_FAIL, "pipeline error"


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.single_thread:
        for var in _THREAD_VARS:
            os.environ[var] = "1"
    try:
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:
        code, kind = _classify(exc)
        diag = {"error": str(exc), "kind": kind,
                "type": type(exc).__name__, "exit": code}
        print("%s: %s" % (kind, exc), file=sys.stderr)
        try:
            outdir = args.out or "runs"
            os.makedirs(outdir, exist_ok=True)
            with open(os.path.join(outdir, "error.json"), "w",
                      encoding="utf-8") as fh:
                json.dump(diag, fh, indent=2, sort_keys=True)
        except OSError:
            pass
        return code


if __name__ == "__main__":
    sys.exit(main())
