"""Command-line front end: ``hardy-bvp <command> --config PATH``.

Exit codes: 0 success, 1 configuration or data error, 2 boundary problem
not well posed, 3 coefficients not accretive, 4 internal error.
"""
from __future__ import annotations

import argparse
import contextlib
import os
import sys
import traceback
from math import comb
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import bvp_engine as be
from . import discrete_calculus as dc
from . import forms as fm
from . import io
from .coefficients import (accretivity_report, classify, hat_transform,
                           identity, random_coefficients)
from .errors import ConfigError, HardyBVPError, NotAccretive, WellPosednessFailure
from .lattice import FrequencyLattice
from .selftest import run_selftest
from .symbol_solver import wp_scan

EXIT_OK, EXIT_CONFIG, EXIT_WP, EXIT_ACCRETIVE, EXIT_INTERNAL = 0, 1, 2, 3, 4


class Context:
    def __init__(self, args, cfg, base):
        self.args = args
        self.cfg = cfg
        self.base = base
        self.seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        self.out = io.ensure_dir(args.out or cfg.get("out", "hardy_bvp_out"))
        self.quiet = args.quiet

    def say(self, msg):
        if not self.quiet:
            print(msg)

    def which(self, default):
        return self.args.which or self.cfg.get("which", default)

    def write_report(self, name, body):
        body = dict(body)
        body["seed"] = self.seed
        body["command"] = self.args.command
        body["version"] = __version__
        io.write_json(self.out / name, body)


def _identities(A, N):
    """Residuals of the transform involution and, for n = 1, the similarity."""
    out = {}
    hh = hat_transform(hat_transform(A)).entries
    out["involution"] = float(np.max(np.abs(hh - A.entries)) / max(np.max(np.abs(A.entries)), 1e-300))
    if A.n == 1:
        out["similarity"] = dc.assemble_TA(A.on_grid(N)).similarity_residual()
    return out


def _grid_size(ctx, A, default=64):
    N = ctx.cfg.get("N")
    if N is None:
        N = A.N if A.kind == "grid" else default
    return int(N)


def _coefficients(ctx, key="coefficients", required=True):
    spec = ctx.cfg.get(key)
    if spec is None:
        if required:
            raise ConfigError(f"config needs '{key}'")
        return None
    return io.parse_coefficients(spec, ctx.base)


def cmd_check(ctx):
    A = _coefficients(ctx)
    N = _grid_size(ctx, A, 16)
    lat = FrequencyLattice(A.n, N) if A.kind == "constant" else None
    rep = accretivity_report(A, lat, gate=False)
    cls = classify(A)
    body = {"accretivity": rep.to_dict(), "classification": cls.to_dict(),
            "residuals": _identities(A, N), "n": A.n, "m": A.m, "kind": A.kind, "N": N}
    accretive = rep.kappa_curlfree > 0 and rep.kappa_hat > 0
    body["accretive"] = accretive
    ctx.write_report("report.json", body)
    ctx.say(f"kappa={rep.kappa_curlfree:.6g} omega={rep.omega_hat:.6g} "
            f"flags={[k for k, v in cls.to_dict().items() if v]}")
    if not accretive:
        raise NotAccretive(f"curl-free accretivity constant {rep.kappa_curlfree:.3e} is not positive")
    return EXIT_OK


def _t_levels(ctx):
    t = ctx.cfg.get("t_levels", [0.0, 0.5, 1.0, 2.0])
    if any(float(v) < 0 for v in t):
        raise ConfigError("t_levels must be nonnegative")
    return tuple(float(v) for v in t)


def _tag(t):
    return f"{t:g}".replace(".", "p")


def _dump_fields(ctx, lat, rep, with_potentials=True):
    io.write_field_csv(ctx.out / "trace.csv", rep.trace, lat)
    norms = []
    for t in rep.t_levels:
        io.write_field_csv(ctx.out / f"field_t{_tag(t)}.csv", rep.fields[t], lat)
        if with_potentials and t in rep.potentials:
            io.write_field_csv(ctx.out / f"potential_t{_tag(t)}.csv", rep.potentials[t], lat)
        norms.append(lat.l2_norm(rep.fields[t]))
    io.write_two_column(ctx.out / "norm_curve.dat", rep.t_levels, norms, "t  L2 norm of F_t")


def cmd_solve(ctx):
    which = ctx.which("dir")
    if which in ("tan", "nor"):
        return cmd_forms(ctx)
    A = _coefficients(ctx)
    io.check_tolerances(ctx.cfg)
    accretivity_report(A, FrequencyLattice(A.n, 16) if A.kind == "constant" else None)
    N = _grid_size(ctx, A)
    lat = FrequencyLattice(A.n, N)
    kind = ctx.cfg.get("data_kind", "potential")
    comps = A.n * A.m if (which == "reg" and kind == "gradient") else A.m
    data = io.parse_data(ctx.cfg.get("data"), lat, comps, ctx.base)
    spec = be.BVPSpec(A, which, data, N, _t_levels(ctx), kind, ctx.cfg.get("engine", "auto"),
                      compute_norms=bool(ctx.cfg.get("norms", True)))
    rep = be.solve_bvp(spec)
    rep.residuals.update(_identities(A, N))
    body = rep.to_dict()
    extra = ctx.cfg.get("checks", {})
    if extra.get("variational") and A.n == 1 and which in ("neu", "dir", "reg"):
        cls = classify(A)
        covered = cls.hermitean or cls.block or cls.constant
        if covered or extra.get("assume_connected"):
            body["variational"] = be.uniqueness_compare(spec, K=int(extra.get("K", 256)))
            body["variational"]["class_assumed"] = not covered
        else:
            # agreement is only expected on the component of well-posed A containing I
            body["variational"] = {"skipped": "coefficients are not Hermitean, block or constant; "
                                              "set checks.assume_connected to compare anyway"}
    if extra.get("double_layer") and A.n == 1 and which in ("neu", "dir", "reg"):
        frame = dc.hardy_frame(dc.assemble_TA(A.on_grid(N)))
        f_dl, iters, normK = be.solve_double_layer(frame, which, data, kind)
        f = frame.op.to_coeffs(rep.trace)
        body["double_layer"] = {"iterations": iters, "norm_K": normK,
                                "trace_difference": float(np.linalg.norm(f_dl - f) / np.linalg.norm(f))}
    ctx.write_report("report.json", body)
    _dump_fields(ctx, lat, rep)
    ctx.say(f"{which}: cond={rep.cond:.6g} boundary residual={rep.residuals['boundary']:.3g}")
    return EXIT_OK


def _lambdas(spec):
    if isinstance(spec, dict):
        return list(np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["count"])))
    return [float(v) for v in spec]


def cmd_scan_wp(ctx):
    fam = ctx.cfg.get("family")
    if not fam:
        raise ConfigError("scan-wp needs a 'family' with 'base', 'direction', 'lambdas'")
    base = io.parse_coefficients(fam["base"], ctx.base)
    direction = io.parse_coefficients(fam["direction"], ctx.base)
    if base.kind != "constant" or direction.kind != "constant":
        raise ConfigError("scan-wp works on constant coefficient families")
    lambdas = _lambdas(fam.get("lambdas", {"start": 0, "stop": 1, "count": 11}))
    which = ctx.which("neu")
    rows = wp_scan(lambda lam: base + direction.scaled(lam), lambdas, which,
                   int(ctx.cfg.get("directions", 512)))
    with open(ctx.out / "scan.csv", "w") as fh:
        fh.write("lambda,sup_cond,global_cond,status\n")
        for r in rows:
            fh.write(f"{r['lambda']:.10g},{r['sup_cond']:.10g},{r['global_cond']:.10g},{r['status']}\n")
    io.write_two_column(ctx.out / "scan.dat", [r["lambda"] for r in rows],
                        [r["sup_cond"] for r in rows], f"lambda  sup condition ({which})")
    ctx.write_report("report.json", {"which": which, "rows": rows})
    bad = [r for r in rows if r["status"] != "ok"]
    ctx.say(f"scanned {len(rows)} values, {len(bad)} not well posed")
    return EXIT_OK


def cmd_perturb(ctx):
    A = _coefficients(ctx, required=False) or identity(1)
    if A.n != 1:
        raise ConfigError("perturb is implemented for n = 1")
    N = _grid_size(ctx, A)
    lat = FrequencyLattice(1, N)
    rng = np.random.default_rng(ctx.seed)
    eps = [float(e) for e in ctx.cfg.get("epsilons", [1e-3, 5e-4])]
    count = int(ctx.cfg.get("directions", 5))
    norm = ctx.cfg.get("norm", "sup")
    x = lat.points.reshape(-1)
    if "data" in ctx.cfg:
        f = io.parse_data(ctx.cfg["data"], lat, 2 * A.m, ctx.base)
    else:
        f = np.concatenate([np.cos(x)[None].repeat(A.m, 0), np.sin(2 * x)[None].repeat(A.m, 0)])
    rows = []
    for j in range(count):
        B = random_coefficients(rng, 1, A.m, "grid", N, kappa=0.0, amplitude=1.0)
        B = B.scaled(1.0 / B.sup_norm())
        for e in eps:
            ratio, _ = dc.lipschitz_probe(A.on_grid(N), A.on_grid(N) + B.scaled(e), f, norm, N)
            rows.append({"direction": j, "epsilon": e, "ratio": ratio})
    ratios = np.array([r["ratio"] for r in rows])
    body = {"norm": norm, "rows": rows, "ratio_min": float(ratios.min()),
            "ratio_max": float(ratios.max()), "spread": float(ratios.max() / ratios.min())}
    op_cfg = ctx.cfg.get("openness")
    if op_cfg:
        kappa = accretivity_report(A.on_grid(N)).kappa_curlfree
        size = float(op_cfg.get("relative_size", 0.05)) * kappa
        perts = []
        for _ in range(int(op_cfg.get("count", 20))):
            B = random_coefficients(rng, 1, A.m, "grid", N, kappa=0.0, amplitude=1.0)
            perts.append(B.scaled(size / B.sup_norm()))
        body["openness"] = be.openness_witness(A, perts, N, tuple(op_cfg.get("which", ["neu", "reg", "dir"])))
    with open(ctx.out / "perturb.csv", "w") as fh:
        fh.write("direction,epsilon,ratio\n")
        for r in rows:
            fh.write(f"{r['direction']},{r['epsilon']:.10g},{r['ratio']:.10g}\n")
    ctx.write_report("report.json", body)
    ctx.say(f"Lipschitz ratios in [{ratios.min():.6g}, {ratios.max():.6g}]")
    return EXIT_OK


def cmd_rellich(ctx):
    A = _coefficients(ctx)
    if A.n != 1:
        raise ConfigError("rellich is implemented for n = 1")
    N = _grid_size(ctx, A)
    accretivity_report(A.on_grid(N))
    frame = dc.hardy_frame(dc.assemble_TA(A.on_grid(N)))
    body = {"rellich": be.rellich_residual(frame), "residuals": _identities(A, N)}
    if classify(A).block:
        body["block"] = be.block_structure_check(frame)
    ctx.write_report("report.json", body)
    ctx.say(f"max Rellich residual {body['rellich']['max_residual']:.3g}")
    return EXIT_OK


def _forms_matrix(spec, d):
    if spec in (None, "identity"):
        return np.eye(d, dtype=complex)
    from .coefficients import complex_array
    return complex_array(spec, (d, d))


def cmd_forms(ctx):
    cfg = ctx.cfg.get("forms", ctx.cfg)
    n, k = int(cfg.get("n", 2)), int(cfg.get("k", 1))
    d = comb(n + 1, k)
    B = _forms_matrix(cfg.get("B"), d)
    which = ctx.args.which if ctx.args.which in ("tan", "nor") else cfg.get("which", "tan")
    N = int(cfg.get("N", 8))
    lat = FrequencyLattice(n, N)
    comps = comb(n, k) if which == "tan" else comb(n, k - 1)
    data = io.parse_data(cfg.get("data"), lat, comps, ctx.base)
    rep = fm.solve_forms_constant(B, k, which, data, N, tuple(float(t) for t in cfg.get("t_levels", [0.0, 1.0])))
    rng = np.random.default_rng(ctx.seed)
    checks = {"dirac_square": max(fm.dirac_square_residual(rng.normal(size=n), k) for _ in range(10)),
              "anticommutators": fm.anticommutators(rng.normal(size=n + 1), rng.normal(size=n + 1), n, k)}
    body = rep.to_dict()
    body["checks"] = checks
    body["tangential_masks"] = fm.tangential_data_masks(n, k)
    body["normal_masks"] = fm.normal_data_masks(n, k)
    ctx.write_report("report.json", body)
    io.write_field_csv(ctx.out / "trace.csv", rep.trace, lat)
    for t in rep.t_levels:
        io.write_field_csv(ctx.out / f"field_t{_tag(t)}.csv", rep.fields[t], lat)
    ctx.say(f"forms {which}, k={k}: cond={rep.cond:.6g}")
    return EXIT_OK


def cmd_selftest(ctx):
    echo = None if ctx.quiet else print
    with threadpool_limits(limits=1):
        passed, report, elapsed = run_selftest(ctx.seed, echo)
    ctx.write_report("selftest.json", report)
    if not ctx.quiet:
        print(f"{'all checks passed' if passed else 'FAILURES'} in {elapsed:.1f} s")
    return EXIT_OK if passed else EXIT_INTERNAL


COMMANDS = {"check": cmd_check, "solve": cmd_solve, "scan-wp": cmd_scan_wp, "perturb": cmd_perturb,
            "rellich": cmd_rellich, "forms": cmd_forms, "selftest": cmd_selftest}


def build_parser():
    p = argparse.ArgumentParser(prog="hardy-bvp", description="Hardy-space boundary value solver")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="seed for randomized parts (recorded in reports)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--which", choices=io.WHICH_CHOICES)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--version", action="version", version=__version__)
    return p


def _threads():
    val = os.environ.get("HARDY_BVP_THREADS")
    if not val:
        return None
    try:
        n = int(val)
    except ValueError:
        raise ConfigError("HARDY_BVP_THREADS must be a positive integer") from None
    if n < 1:
        raise ConfigError("HARDY_BVP_THREADS must be a positive integer")
    return n


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("seed must be nonnegative")
        cfg, base = {}, Path(".")
        if args.config:
            cfg = io.load_json(args.config)
            base = Path(args.config).resolve().parent
        elif args.command not in ("selftest", "perturb"):
            raise ConfigError(f"'{args.command}' needs --config")
        ctx = Context(args, cfg, base)
        threads = _threads()
        limiter = threadpool_limits(limits=threads) if threads else contextlib.nullcontext()
        with limiter:
            return COMMANDS[args.command](ctx)
    except WellPosednessFailure as exc:
        _err(args, exc)
        return EXIT_WP
    except NotAccretive as exc:
        _err(args, exc)
        return EXIT_ACCRETIVE
    except HardyBVPError as exc:
        _err(args, exc)
        return EXIT_CONFIG
    except Exception as exc:  # anything else is a bug
        _err(args, exc)
        if not args.quiet:
            traceback.print_exc()
        return EXIT_INTERNAL


def _err(args, exc):
    print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
