"""Command-line front end: dataset generation, solving, certification,
training, and table aggregation.

Subcommands: gen, solve, certify, train-pinn, train-op, report. Every
command takes an optional JSON config (--config) with flat key=value
overrides (--set); the fully resolved config is echoed into the output
directory for provenance. Exit codes: 0 success, 1 numeric failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .certify import CertifyConfig, bound_metrics, certify_direct
from .dataio import append_arrays, read_dataset, save_checkpoint, write_dataset
from .errors import AstralError, ParameterError
from .field import ScalarField, TensorGrid, restrict
from .majorant import SAFE
from .norms import energy_norm
from .problems import (
    FAMILIES_1D,
    FAMILIES_2D,
    gen_convdiff,
    gen_elliptic_1d,
    gen_elliptic_2d,
    gen_pinn_problem,
)
from .solver import reference_solution, solve_elliptic

GEN_FAMILIES = FAMILIES_2D + FAMILIES_1D + ("pinn", "convdiff")

CSV_COLUMNS = (
    "equation",
    "n_train",
    "e_train",
    "e_test",
    "e_ub_train",
    "e_ub_test",
    "r_ub_train",
    "r_ub_test",
    "corr_train",
    "corr_test",
)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.8e" % float(x)


def write_csv(path: str, columns, rows) -> None:
    """Deterministic CSV: fixed column order, 9 significant digits, LF endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(c)) for c in columns) + "\n")


def read_csv(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = lines[0].split(",")
    return [dict(zip(header, ln.split(","))) for ln in lines[1:]]


def _load_config(args) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            cfg.update(json.load(fh))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ParameterError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        try:
            cfg[key] = json.loads(val)
        except json.JSONDecodeError:
            cfg[key] = val
    return cfg


def _echo_config(out_dir: str, command: str, resolved: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump({"command": command, "config": resolved}, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _check_keys(cfg: dict, allowed: set, command: str) -> None:
    unknown = set(cfg) - allowed
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Commands


def cmd_gen(args) -> int:
    cfg = _load_config(args)
    _check_keys(cfg, {"time_extent", "n_modes"}, "gen")
    family = args.family
    if family not in GEN_FAMILIES:
        raise UsageError(f"unknown family {family!r}; choose from {GEN_FAMILIES}")
    J = args.J
    n = args.n
    seed = args.seed
    problems = []
    if family == "convdiff":
        T = float(cfg.get("time_extent", 1.0))
        N = int(cfg.get("n_modes", 150))
        grid = TensorGrid(dim=1, level=J, space_time=True, time_extent=T)
        problems = [gen_convdiff(seed + 1000 * i, grid, N=N) for i in range(n)]
    elif family == "pinn":
        grid = TensorGrid(dim=2, level=J)
        problems = [gen_pinn_problem(seed + 1000 * i, grid) for i in range(n)]
    elif family in FAMILIES_2D:
        grid = TensorGrid(dim=2, level=J)
        problems = [gen_elliptic_2d(family, seed, grid, sample_index=i) for i in range(n)]
    else:
        fam_id = int(family.split("_")[1])
        grid = TensorGrid(dim=1, level=J)
        problems = [gen_elliptic_1d(fam_id, seed, grid, sample_index=i) for i in range(n)]
    write_dataset(args.out, problems, master_seed=seed)
    resolved = {"family": family, "J": J, "n": n, "seed": seed, **cfg}
    _echo_config(args.out, "gen", resolved)
    print(f"wrote {n} problems to {args.out}")
    return 0


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    _check_keys(cfg, {"j_ref", "tol"}, "solve")
    j_ref = int(cfg.get("j_ref", args.j_ref))
    tol = float(cfg.get("tol", 1e-10))
    problems, _, manifest = read_dataset(args.data)
    if manifest.family == "convdiff":
        raise UsageError("convection-diffusion problems carry exact solutions; nothing to solve")
    u_coarse = np.stack([solve_elliptic(p, tol=tol).values for p in problems])
    u_ref = np.stack([reference_solution(p, J_ref=j_ref, tol=tol).values for p in problems])
    append_arrays(args.data, {"u_coarse": u_coarse, "u_ref": u_ref})
    _echo_config(args.data, "solve", {"j_ref": j_ref, "tol": tol})
    print(f"solved {len(problems)} problems (coarse + reference at J={j_ref})")
    return 0


def cmd_certify(args) -> int:
    cfg = _load_config(args)
    _check_keys(cfg, {"max_outer_iters", "constant_mode", "beta_solver", "y_solver"}, "certify")
    problems, arrays, manifest = read_dataset(args.data)
    if "u_coarse" not in arrays or "u_ref" not in arrays:
        raise UsageError("dataset has no solutions; run `astral solve` first")
    ccfg = CertifyConfig(
        max_outer_iters=int(cfg.get("max_outer_iters", 20)),
        constant_mode=cfg.get("constant_mode", SAFE),
        beta_solver=cfg.get("beta_solver", "closed_form"),
        y_solver=cfg.get("y_solver", "quadratic"),
    )
    dim = problems[0].grid.dim if problems else 0
    errors, bounds, betas = [], [], []
    y_arrays = None
    rows = []
    for i, p in enumerate(problems):
        v = ScalarField(p.grid, arrays["u_coarse"][i])
        u_ref = ScalarField(p.grid, arrays["u_ref"][i])
        res = certify_direct(v, p, ccfg)
        err = energy_norm(ScalarField(p.grid, v.values - u_ref.values), p.a, p.b_sq)
        bound = float(np.sqrt(res.report.total))
        errors.append(err)
        bounds.append(bound)
        betas.append(res.certificate.beta)
        if y_arrays is None:
            y_arrays = [np.zeros((len(problems),) + p.grid.shape) for _ in range(dim)]
        for ax in range(dim):
            y_arrays[ax][i] = res.certificate.y[ax].values
        rows.append(
            {
                "equation": manifest.family,
                "n_train": len(problems),
                "e_train": err,
                "e_ub_train": bound,
                "r_ub_train": bound / err if err > 0 else float("inf"),
            }
        )
    new_arrays = {"cert_beta": np.asarray(betas)}
    for ax in range(dim):
        new_arrays[f"cert_y{ax + 1}"] = y_arrays[ax]
    append_arrays(args.data, new_arrays)
    bm = bound_metrics(np.asarray(errors), np.asarray(bounds))
    summary = {
        "equation": manifest.family,
        "n_train": len(problems),
        "e_train": float(np.mean(errors)),
        "e_ub_train": float(np.mean(bounds)),
        "r_ub_train": bm.mean_ratio,
        "corr_train": bm.correlation,
    }
    write_csv(os.path.join(args.data, "certify_metrics.csv"), CSV_COLUMNS, rows + [summary])
    _echo_config(args.data, "certify", {"max_outer_iters": ccfg.max_outer_iters, "constant_mode": ccfg.constant_mode})
    print(f"certified {len(problems)} samples; mean ratio {bm.mean_ratio:.3f}")
    return 0


def cmd_train_pinn(args) -> int:
    import torch

    from .nn import TrainConfig, train_pinn
    from .nn.optim import OptimizerConfig

    cfg = _load_config(args)
    allowed = {
        "loss", "epochs", "J", "log_period", "gauss_n", "collocation_points",
        "mc_points", "lam", "learn_beta", "optimizer", "lr", "weight_decay",
        "decay_factor", "decay_period", "problem", "time_extent", "n_modes",
    }
    _check_keys(cfg, allowed, "train-pinn")
    J = int(cfg.get("J", 6))
    problem_kind = cfg.get("problem", "pinn")
    if problem_kind == "convdiff":
        grid = TensorGrid(dim=1, level=J, space_time=True, time_extent=float(cfg.get("time_extent", 1.0)))
        problem = gen_convdiff(args.seed, grid, N=int(cfg.get("n_modes", 150)))
    else:
        problem = gen_pinn_problem(args.seed, TensorGrid(dim=2, level=J))
    opt = OptimizerConfig(
        kind=cfg.get("optimizer", "lion"),
        lr=float(cfg.get("lr", 1e-3)),
        beta1=0.9,
        beta2=0.99 if cfg.get("optimizer", "lion") == "lion" else 0.999,
        weight_decay=float(cfg.get("weight_decay", 0.0)),
        decay_factor=float(cfg.get("decay_factor", 0.5)),
        decay_period=int(cfg.get("decay_period", 1000)),
    )
    tcfg = TrainConfig(
        loss=cfg.get("loss", "astral"),
        optimizer=opt,
        epochs=int(cfg.get("epochs", 2000)),
        gauss_n=int(cfg.get("gauss_n", 16)),
        mc_points=int(cfg.get("mc_points", 4096)),
        collocation_points=int(cfg.get("collocation_points", 1024)),
        seed=args.seed,
        log_period=int(cfg.get("log_period", 100)),
        lam=float(cfg.get("lam", 1.0)),
    )
    result = train_pinn(problem, tcfg)
    os.makedirs(args.out, exist_ok=True)
    trace_cols = ("epoch", "loss", "bound", "energy_error", "rel_energy_error")
    write_csv(os.path.join(args.out, "trace.csv"), trace_cols, result.trace)
    final = result.final
    write_csv(
        os.path.join(args.out, "metrics.csv"),
        CSV_COLUMNS,
        [{"equation": problem_kind, "n_train": 1, "e_train": final["rel_energy_error"],
          "e_ub_train": (final["bound"] or 0.0)}],
    )
    modules = {k: m for k, m in result.nets.items() if isinstance(m, (torch.nn.Module, torch.Tensor))}
    save_checkpoint(os.path.join(args.out, "checkpoint"), modules, {"train_pinn": cfg, "seed": args.seed})
    _echo_config(args.out, "train-pinn", {"seed": args.seed, **cfg})
    print(f"final rel energy error {final['rel_energy_error']:.4f}")
    return 0


def cmd_train_op(args) -> int:
    import torch

    from .nn import OperatorSample, OperatorTrainConfig, train_operator
    from .nn.optim import OptimizerConfig

    cfg = _load_config(args)
    allowed = {
        "scheme", "epochs", "lam", "beta", "width", "depth", "activation",
        "lr", "weight_decay", "decay_factor", "decay_period", "decay_start",
        "certify_iters", "n2_epochs",
    }
    _check_keys(cfg, allowed, "train-op")

    def load_samples(path):
        problems, arrays, manifest = read_dataset(path)
        refs = arrays.get("u_ref")
        samples = []
        for i, p in enumerate(problems):
            u_ref = ScalarField(p.grid, refs[i]) if refs is not None else None
            if u_ref is None and p.exact_solution is not None:
                u_ref = p.exact_solution
            samples.append(OperatorSample(problem=p, u_ref=u_ref))
        return samples, manifest

    train_samples, manifest = load_samples(args.train)
    test_samples, _ = load_samples(args.test)
    if any(s.u_ref is None for s in train_samples + test_samples):
        raise UsageError("datasets need reference solutions; run `astral solve` first")

    defaults = OperatorTrainConfig()
    opt = OptimizerConfig(
        kind="adam",
        lr=float(cfg.get("lr", defaults.optimizer.lr)),
        weight_decay=float(cfg.get("weight_decay", defaults.optimizer.weight_decay)),
        decay_factor=float(cfg.get("decay_factor", defaults.optimizer.decay_factor)),
        decay_period=int(cfg.get("decay_period", defaults.optimizer.decay_period)),
        decay_start=int(cfg.get("decay_start", defaults.optimizer.decay_start)),
    )
    ocfg = OperatorTrainConfig(
        scheme=cfg.get("scheme", args.scheme),
        epochs=int(cfg.get("epochs", defaults.epochs)),
        optimizer=opt,
        width=int(cfg.get("width", defaults.width)),
        depth=int(cfg.get("depth", defaults.depth)),
        activation=cfg.get("activation", defaults.activation),
        lam=float(cfg.get("lam", defaults.lam)),
        beta=float(cfg.get("beta", defaults.beta)),
        seed=args.seed,
        certify_iters=int(cfg.get("certify_iters", defaults.certify_iters)),
    )
    result = train_operator(train_samples, test_samples, ocfg)
    m = result.metrics
    os.makedirs(args.out, exist_ok=True)
    row = {
        "equation": manifest.family,
        "n_train": len(train_samples),
        "e_train": m.e_train,
        "e_test": m.e_test,
        "e_ub_train": m.e_ub_train,
        "e_ub_test": m.e_ub_test,
        "r_ub_train": m.ratio_train,
        "r_ub_test": m.ratio_test,
        "corr_train": m.corr_train,
        "corr_test": m.corr_test,
    }
    write_csv(os.path.join(args.out, "metrics.csv"), CSV_COLUMNS, [row])
    per_sample = [
        {"equation": manifest.family, "n_train": len(train_samples),
         "e_test": e, "e_ub_test": b, "r_ub_test": b / e if e > 0 else float("inf")}
        for e, b in zip(m.test_errors, m.test_bounds)
    ]
    write_csv(os.path.join(args.out, "per_sample.csv"), CSV_COLUMNS, per_sample)
    modules = {k: v for k, v in result.nets.items() if isinstance(v, (torch.nn.Module, torch.Tensor))}
    save_checkpoint(os.path.join(args.out, "checkpoint"), modules, {"train_op": cfg, "seed": args.seed})
    _echo_config(args.out, "train-op", {"seed": args.seed, "scheme": ocfg.scheme, **cfg})
    print(
        f"scheme {ocfg.scheme}: E_test {m.e_test:.4f}, mean ratio {m.ratio_test:.3f}, "
        f"corr {m.corr_test if m.corr_test is not None else 'n/a'}"
    )
    return 0


def cmd_report(args) -> int:
    rows = []
    for path in args.inputs:
        rows.extend(read_csv(path))
    def sort_key(r):
        return (r.get("equation", ""), int(r["n_train"]) if r.get("n_train") else 0)
    rows.sort(key=sort_key)
    out_rows = [{c: r.get(c, "") for c in CSV_COLUMNS} for r in rows]

    def as_is(x):
        return x

    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in out_rows:
            fh.write(",".join(str(r[c]) for c in CSV_COLUMNS) + "\n")
    print(f"aggregated {len(rows)} rows into {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="astral", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a problem dataset")
    p.add_argument("--family", required=True)
    p.add_argument("--J", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--set", action="append")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("solve", help="append coarse and reference solutions")
    p.add_argument("--data", required=True)
    p.add_argument("--j-ref", type=int, default=7)
    p.add_argument("--config")
    p.add_argument("--set", action="append")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("certify", help="optimize certificates for stored solutions")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--set", action="append")
    p.set_defaults(fn=cmd_certify)

    p = sub.add_parser("train-pinn", help="physics-informed training on one problem")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--set", action="append")
    p.set_defaults(fn=cmd_train_pinn)

    p = sub.add_parser("train-op", help="operator training on a dataset")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--scheme", default="unsupervised")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--set", action="append")
    p.set_defaults(fn=cmd_train_op)

    p = sub.add_parser("report", help="aggregate metrics CSVs into one table")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (AstralError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
