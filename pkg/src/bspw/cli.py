"""Command-line entry point: ``bspw <subcommand> [options]``.

Subcommands write plot-ready CSV or JSON tables into ``--out`` together with a
``manifest.json`` recording the config hash, seed and tool version.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, presets
from .harness import (
    PT_COLUMNS,
    ExperimentConfig,
    emit_results,
    run_doa_experiment,
    run_phase_transition,
    run_robustness_table,
    run_statdim_sweep,
)
from .model import ModelError, PriorModel1, expand_lambda, load_model, validate_partition
from .recovery import MeasurementSystem, SolverConfig, solve_mmv, solve_weighted
from .statdim import empirical_statdim, expected_bound_model1, expected_bound_model2, statdim_bound
from .weights import robustness_constant, solve_model1, solve_model2, weight_residual


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc}") from exc


def read_array(path) -> np.ndarray:
    """Load a matrix or vector from ``.npy`` (shape stored in the header) or CSV.

    CSV cells may hold complex numbers in Python syntax, e.g. ``1.5-2j``.
    """
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path, allow_pickle=False)
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    except ValueError:
        arr = np.loadtxt(path, delimiter=",", dtype=complex, ndmin=2, converters=lambda s: complex(s.strip()))
    if arr.shape[1] == 1:
        arr = arr[:, 0]
    return arr


def _manifest(args, config: dict, extra: dict | None = None) -> dict:
    cfg_blob = json.dumps(config, sort_keys=True, default=str)
    out = {
        "config": config,
        "config_sha256": hashlib.sha256(cfg_blob.encode()).hexdigest(),
        "seed": getattr(args, "seed", None),
    }
    out.update(extra or {})
    return out


def cmd_weights(args) -> int:
    cfg = _read_json(args.config)
    model = load_model(cfg)
    part = model["partition"]
    tables = {}
    if "prior" in model:
        prior = model["prior"]
        w = solve_model1(prior, part)
        rows = []
        for b in range(part.q):
            p, k = float(prior.p[b]), int(part.sizes[b])
            rows.append({
                "block": b, "k": k, "p": p, "w": float(w[b]),
                "residual": float(weight_residual(w[b], p, k)),
                "c": robustness_constant(k, p, h=float(w[b])),
            })
        tables["model1"] = rows
    if "prior2" in model:
        if not part.equal_size:
            raise ModelError("set weights need equal block sizes")
        k = int(part.sizes[0]) * (2 if cfg.get("complex") else 1)
        pr2 = model["prior2"]
        lam = solve_model2(pr2, k)
        tables["model2"] = [
            {"set": i, "size": int(pr2.set_sizes[i]), "alpha": float(pr2.alphas[i]), "lambda": float(lam[i])}
            for i in range(pr2.L)
        ]
    emit_results("weights", tables, args.out, args.format, manifest=_manifest(args, cfg))
    return 0


def cmd_statdim(args) -> int:
    if args.sweep:
        rows = run_statdim_sweep(args.sweep, args.samples, args.seed)
        emit_results("statdim", {"sweep": rows}, args.out, args.format,
                     manifest=_manifest(args, {"sweep": args.sweep, "samples": args.samples}))
        return 0
    if args.config is None:
        raise ModelError("statdim needs --config or --sweep")
    cfg = _read_json(args.config)
    model = load_model(cfg)
    part = model["partition"]
    cplx = bool(cfg.get("complex"))
    if "weights" in cfg:
        w = np.asarray(cfg["weights"], dtype=float)
    elif "prior" in model:
        w = solve_model1(model["prior"], part)
    elif "prior2" in model:
        k = int(part.sizes[0]) * (2 if cplx else 1)
        w = expand_lambda(model["prior2"], solve_model2(model["prior2"], k))
    else:
        raise ModelError("statdim needs 'weights' or a prior")
    out = {"weights": w.tolist()}
    if "support" in cfg:
        res = statdim_bound(part, cfg["support"], w, is_complex=cplx)
        out.update(bound=res.bound, t_star=res.t_star, attained=res.attained)
        if args.samples > 0:
            mean, se = empirical_statdim(part, cfg["support"], w, args.samples, seed=args.seed)
            out.update(empirical_mean=mean, empirical_stderr=se)
    elif "prior" in model:
        res = expected_bound_model1(part, model["prior"], w, is_complex=cplx, full=True)
        out.update(bound=res.bound, t_star=res.t_star, attained=res.attained)
    else:
        lam = np.asarray(cfg["lambda"]) if "lambda" in cfg else solve_model2(
            model["prior2"], int(part.sizes[0]) * (2 if cplx else 1))
        out.update(bound=expected_bound_model2(part, model["prior2"], lam, is_complex=cplx))
    emit_results("statdim", {"result": [out]}, args.out, "json", manifest=_manifest(args, cfg))
    return 0


def cmd_recover(args) -> int:
    A = read_array(args.matrix)
    y = read_array(args.measurements)
    cfg = _read_json(args.config)
    n = A.shape[1]
    sizes = cfg.get("block_sizes")
    if sizes is None:
        if y.ndim == 1:
            raise ModelError("vector recovery needs 'block_sizes' in the config")
        sizes = [1] * n
    part = validate_partition(int(cfg.get("n", n)), sizes)
    if "weights" in cfg:
        w = np.asarray(cfg["weights"], dtype=float)
    elif "p" in cfg:
        w = solve_model1(PriorModel1(cfg["p"]), part)
    else:
        raise ModelError("recover needs 'weights' or block probabilities 'p' in the config")
    solver = SolverConfig(**cfg.get("solver", {}))
    if y.ndim == 2:
        res = solve_mmv(A, y, w, args.eta, solver, partition=part, record=True)
    else:
        res = solve_weighted(part, w, MeasurementSystem(A, y, args.eta), solver, record=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    x = res.x_hat.reshape(res.x_hat.shape[0], -1)
    if np.iscomplexobj(x):
        lines = [",".join(repr(complex(v)) for v in row) for row in x]
        (out / "solution.csv").write_text("\n".join(lines) + "\n")
    else:
        np.savetxt(out / "solution.csv", x, delimiter=",", fmt="%.17g")
    report = {
        "iterations": res.iterations, "converged": res.converged, "objective": res.objective,
        "primal_residual": res.primal_residual, "dual_residual": res.dual_residual,
        "history": [{"primal": r, "dual": d, "rho": rho} for r, d, rho in res.history],
        "eta": args.eta, "tool_version": __version__,
    }
    (out / "convergence.json").write_text(json.dumps(report, indent=2) + "\n")
    if not res.converged:
        print("bspw: warning: solver hit max_iters before converging", file=sys.stderr)
        return 3
    return 0


def cmd_doa(args) -> int:
    cfg = _read_json(args.config) if args.config else {}
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.trials is not None:
        cfg["seeds"] = args.trials
    full = {**presets.doa(), **cfg}
    out = run_doa_experiment(full)
    tables = {s: rows for s, rows in out["spectra"].items()}
    emit_results("doa", tables, args.out, args.format,
                 columns={s: ["grid_index", "angle_deg", "power", "scheme"] for s in tables},
                 manifest=_manifest(args, full, {"lambdas": out["lambdas"], "truth": out["truth"]}))
    peaks = {s: [r for r in out["summary"] if r["scheme"] == s] for s in full["schemes"]}
    Path(args.out, "doa_peaks.json").write_text(json.dumps(peaks, indent=2) + "\n")
    for s, rows in peaks.items():
        clean = sum(r["spurious"] == 0 and r["missed"] == 0 for r in rows)
        print(f"{s:9s} clean seeds {clean}/{len(rows)}")
    return 0


def cmd_phase_transition(args) -> int:
    d = _read_json(args.config) if args.config else presets.phase_transition(args.preset)
    if args.seed is not None:
        d["seed"] = args.seed
    if args.trials is not None:
        d["trials"] = args.trials
    cfg = ExperimentConfig.from_dict(d)
    out = run_phase_transition(cfg)
    tables = {s: [r for r in out["rows"] if r["scheme"] == s] for s in cfg.schemes}
    emit_results("phase_transition", tables, args.out, args.format,
                 columns={s: PT_COLUMNS for s in tables},
                 manifest={"config": cfg.to_dict(), "config_sha256": cfg.digest(), "seed": cfg.seed,
                           "eps": cfg.eps, "crossover": out["crossover"]})
    for s in cfg.schemes:
        print(f"{s:9s} 50% crossover m = {out['crossover'][s]:.1f}  predicted {out['predicted'][s]:.1f}")
    return 0


def cmd_robustness(args) -> int:
    rows = run_robustness_table(args.k, dp=args.dp)
    emit_results("robustness", {"table": rows}, args.out, args.format,
                 manifest=_manifest(args, {"k": args.k, "dp": args.dp}))
    bad = sum(r["violation"] for r in rows)
    print(f"{bad} of {len(rows)} rows exceed c(k,p) * dp")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bspw", description="Prior-weighted block-sparse recovery tools")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="JSON config file")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        return p

    p = common(sub.add_parser("weights", help="optimal block or set weights"), config_required=True)
    p.set_defaults(func=cmd_weights)

    p = common(sub.add_parser("statdim", help="statistical-dimension bound and Monte-Carlo check"))
    p.add_argument("--samples", type=int, default=0, help="Monte-Carlo samples (0 skips)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sweep", type=int, default=0, metavar="N", help="run N random validation instances")
    p.set_defaults(func=cmd_statdim)

    p = sub.add_parser("recover", help="solve weighted l1,2 recovery")
    p.add_argument("--matrix", required=True, help="A as .npy or CSV")
    p.add_argument("--measurements", required=True, help="y (vector) or Y (matrix) as .npy or CSV")
    p.add_argument("--config", required=True, help="JSON with n, block_sizes and weights (or p)")
    p.add_argument("--eta", type=float, default=0.0, help="noise bound (default 0: equality)")
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_recover)

    p = common(sub.add_parser("doa", help="broadband DOA comparison"))
    p.add_argument("--seed", type=int, default=None, help="first seed")
    p.add_argument("--trials", type=int, default=None, help="number of seeds")
    p.set_defaults(func=cmd_doa)

    p = common(sub.add_parser("phase-transition", help="success rate against m"))
    p.add_argument("--preset", choices=("full", "small"), default="small")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(func=cmd_phase_transition)

    p = common(sub.add_parser("robustness", help="weight sensitivity table"))
    p.add_argument("--k", type=int, nargs="+", default=[1, 5, 10])
    p.add_argument("--dp", type=float, default=1e-3)
    p.set_defaults(func=cmd_robustness)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ModelError, OSError, ValueError) as exc:
        print(f"bspw: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
