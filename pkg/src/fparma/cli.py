"""Command line entry points.

Usage: ``fparma <command> --config <path.json> [--seed N] [--out DIR]``.

Commands: validate, simulate, covariance, estimate, rates, decay,
example42. Configs are JSON objects; unknown fields are rejected so typos
fail loudly. Every experiment command writes delimited data plus a figure
into the output directory. Exit codes: 0 success, 1 usage or config
trouble, 2 model or assumption violation, 3 numerical failure.

Sweeps fan out over per-task random streams derived from the master
seed, so results are byte-identical for a fixed seed no matter how many
workers run (``FPARMA_THREADS`` caps the worker count).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import report as figures
from .estimate import (
    RegularizationConfig,
    end_to_end_fit,
    result_to_dict,
    submatrices,
)
from .hilbert import hs_distance
from .model import (
    AssumptionViolation,
    cycle_matrix,
    load_model,
    model_from_dict,
    validate,
)
from .presets import benchmark_cycle_closed_form, benchmark_model
from .probe import (
    NumericalFailure,
    check_stationarity,
    default_burn_in,
    m_approx_decay,
    model_covariances,
)
from .sim import RngStream, read_path_csv, simulate, write_path_csv

__all__ = ["main", "run_rates", "run_decay", "run_example42"]


class UsageError(Exception):
    """Bad invocation or config; maps to exit code 1."""


_ALLOWED_FIELDS = {
    "validate": {"model"},
    "simulate": {"model", "n_cycles", "n_steps", "burn_in", "master_seed"},
    "covariance": {"model", "h_max"},
    "estimate": {"model", "n_cycles", "master_seed", "path_csv", "regularization"},
    "rates": {"model", "n_grid", "n_seeds", "regularization", "master_seed"},
    "decay": {"model", "m_values", "n_paths", "tau", "horizon", "master_seed"},
    "example42": {
        "d", "beta", "scale", "c11", "c21", "c13", "c22",
        "distribution", "with_rates", "n_grid", "n_seeds", "master_seed",
    },
}

_REG_FIELDS = {"theta_yw", "K_yw", "theta_m", "K_m"}


def _load_config(path, command):
    if path is None:
        cfg = {}
    else:
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(cfg) - _ALLOWED_FIELDS[command]
    if unknown:
        raise UsageError(
            f"unknown config fields for {command}: {sorted(unknown)}; "
            f"allowed: {sorted(_ALLOWED_FIELDS[command])}"
        )
    return cfg


def _model_from_config(cfg):
    if "model" not in cfg:
        raise UsageError("config needs a 'model' field (inline object or file path)")
    doc = cfg["model"]
    try:
        if isinstance(doc, str):
            return load_model(doc)
        return model_from_dict(doc)
    except (OSError, ValueError) as exc:
        raise UsageError(f"bad model document: {exc}") from exc


def _master_seed(cfg, args):
    seed = args.seed if args.seed is not None else cfg.get("master_seed")
    if seed is None:
        raise UsageError("a master seed is required: set 'master_seed' or pass --seed")
    return int(seed)


def _reg_from_config(cfg):
    doc = cfg.get("regularization")
    if doc is None:
        return RegularizationConfig()
    if not isinstance(doc, dict):
        raise UsageError("'regularization' must be a JSON object")
    unknown = set(doc) - _REG_FIELDS
    if unknown:
        raise UsageError(f"unknown regularization fields: {sorted(unknown)}")

    def table(v):
        if isinstance(v, dict):
            return {int(k): float(x) for k, x in v.items()}
        return v

    return RegularizationConfig(
        theta_yw=doc.get("theta_yw"),
        K_yw=doc.get("K_yw"),
        theta_m=table(doc.get("theta_m")),
        K_m=table(doc.get("K_m")),
    )


def _thread_count(n_jobs):
    env = os.environ.get("FPARMA_THREADS", "").strip()
    if env:
        try:
            cap = int(env)
        except ValueError as exc:
            raise UsageError(f"FPARMA_THREADS must be an integer, got {env!r}") from exc
        if cap < 1:
            raise UsageError("FPARMA_THREADS must be >= 1")
    else:
        cap = min(4, os.cpu_count() or 1)
    return max(1, min(cap, n_jobs))


def _run_jobs(fn, keys):
    """Run fn(key) for every key; results keyed, order-independent."""
    workers = _thread_count(len(keys))
    if workers == 1:
        return {key: fn(key) for key in keys}
    out = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {key: pool.submit(fn, key) for key in keys}
        for key, fut in futures.items():
            out[key] = fut.result()
    return out


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")
    print(f"wrote {path}")


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    print(f"wrote {path}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_validate(cfg, args, out_dir):
    model = _model_from_config(cfg)
    problems = validate(model)
    _write_json({"valid": not problems, "violations": problems},
                os.path.join(out_dir, "validation.json"))
    if problems:
        for line in problems:
            print(f"violation: {line}", file=sys.stderr)
        return 2
    print("model is structurally valid")
    return 0


def _cmd_simulate(cfg, args, out_dir):
    model = _model_from_config(cfg)
    if ("n_steps" in cfg) == ("n_cycles" in cfg):
        raise UsageError("set exactly one of 'n_steps' or 'n_cycles'")
    n_steps = int(cfg["n_steps"]) if "n_steps" in cfg else int(cfg["n_cycles"]) * model.P
    seed = _master_seed(cfg, args)
    path = simulate(
        model, n_steps, RngStream(seed, 0),
        burn_in=cfg.get("burn_in"),
    )
    csv_path = os.path.join(out_dir, "path.csv")
    write_path_csv(path, csv_path)
    print(f"wrote {csv_path}")
    _write_json(
        {
            "master_seed": seed,
            "stream_id": 0,
            "n_steps": n_steps,
            "P": model.P,
            "d": model.d,
            "burn_in": path.burn_in,
        },
        os.path.join(out_dir, "simulate_meta.json"),
    )
    figures.save_path_figure(path.values, model.P, os.path.join(out_dir, "path.png"))
    print(f"wrote {os.path.join(out_dir, 'path.png')}")
    return 0


def _cmd_covariance(cfg, args, out_dir):
    model = _model_from_config(cfg)
    h_max = int(cfg.get("h_max", 3))
    rep, covset = model_covariances(model, h_max=h_max)
    _write_json(rep.to_dict(), os.path.join(out_dir, "stationarity.json"))
    flat = covset.C.flat()
    dim = flat.shape[0]
    _write_csv(
        os.path.join(out_dir, "covariance_lag0.csv"),
        [f"c_{i}" for i in range(1, dim + 1)],
        flat,
    )
    norm_rows = [(h, float(np.linalg.norm(covset.lag(h).flat())))
                 for h in range(-h_max, h_max + 1)]
    _write_csv(os.path.join(out_dir, "lagged_norms.csv"), ["h", "hs_norm"], norm_rows)
    figures.save_covariance_figure(
        flat, model.P, model.d, os.path.join(out_dir, "covariance.png")
    )
    print(f"wrote {os.path.join(out_dir, 'covariance.png')}")
    return 0


def _cmd_estimate(cfg, args, out_dir):
    model = _model_from_config(cfg)
    reg = _reg_from_config(cfg)
    truth = model if model.q == 0 else None
    if "path_csv" in cfg:
        ks, seasons, values = read_path_csv(cfg["path_csv"])
        if values.shape[1] != model.d:
            raise UsageError(
                f"path has d={values.shape[1]} but the model has d={model.d}"
            )
        expected = (ks - 1) % model.P + 1
        if not np.array_equal(seasons, expected):
            raise UsageError("season column does not match the model period")
        n_full = values.shape[0] // model.P
        if n_full < 3:
            raise UsageError("path too short: need at least 3 full cycles")
        cycles = values[: n_full * model.P].reshape(n_full, model.P * model.d)
        result = end_to_end_fit(cycles, reg, truth=truth, P=model.P)
    else:
        if "n_cycles" not in cfg:
            raise UsageError("set 'n_cycles' (to simulate) or 'path_csv' (to load)")
        seed = _master_seed(cfg, args)
        path = simulate(model, int(cfg["n_cycles"]) * model.P, RngStream(seed, 0))
        result = end_to_end_fit(path, reg, truth=truth)
    _write_json(result_to_dict(result), os.path.join(out_dir, "estimate.json"))
    marks = {m: v["theta"] for m, v in result.regularization.items()}
    figures.save_spectra_figure(
        result.gram_eigenvalues, os.path.join(out_dir, "gram_spectra.png"), marks=marks
    )
    print(f"wrote {os.path.join(out_dir, 'gram_spectra.png')}")
    return 0


def run_rates(model, n_grid, n_seeds, master_seed, out_dir, reg=None):
    """Error-versus-sample-size sweep; writes errors.csv, medians.csv,
    slopes.json and rates.png, and returns (rows, medians, slopes).

    One simulation plus fit per (n, seed) pair, each on its own random
    stream, so the sweep is reproducible for a fixed master seed and
    independent of the worker count.
    """
    if model.q != 0:
        raise AssumptionViolation("the rate experiment needs a pure AR model")
    if reg is None:
        reg = RegularizationConfig()
    n_grid = [int(n) for n in n_grid]
    if not n_grid or any(n < 3 for n in n_grid):
        raise UsageError("n_grid must be a nonempty list of cycle counts >= 3")
    if n_seeds < 1:
        raise UsageError("n_seeds must be >= 1")
    rep = check_stationarity(cycle_matrix(model))
    if rep.j0 is None:
        raise AssumptionViolation("cycle operator is not stable")
    burn = default_burn_in(rep, model.P)

    keys = [(ni, seed) for ni in range(len(n_grid)) for seed in range(n_seeds)]

    def job(key):
        ni, seed = key
        n = n_grid[ni]
        stream = RngStream(master_seed, ni * n_seeds + seed + 1)
        path = simulate(model, n * model.P, stream, burn_in=burn)
        result = end_to_end_fit(path, reg, truth=model)
        e = result.errors
        return (n, seed, e["max_err_row1"], e["max_err_rest"], e["err_cycle"])

    results = _run_jobs(job, keys)
    rows = [results[key] for key in sorted(results)]
    _write_csv(
        os.path.join(out_dir, "errors.csv"),
        ["n", "seed", "max_err_row1", "max_err_rest", "err_Phi"],
        rows,
    )

    medians = {}
    for ni, n in enumerate(n_grid):
        chunk = np.array([r[2:] for r in rows if r[0] == n])
        medians[n] = [float(v) for v in np.median(chunk, axis=0)]
    _write_csv(
        os.path.join(out_dir, "medians.csv"),
        ["n", "med_max_err_row1", "med_max_err_rest", "med_err_Phi"],
        [(n, *medians[n]) for n in n_grid],
    )

    log_n = np.log(np.array(n_grid, dtype=float))
    slopes = {}
    for idx, name in enumerate(["max_err_row1", "max_err_rest", "err_Phi"]):
        med = np.array([medians[n][idx] for n in n_grid])
        slopes[name] = float(np.polyfit(log_n, np.log(med), 1)[0])
    _write_json(slopes, os.path.join(out_dir, "slopes.json"))
    figures.save_rates_figure(rows, medians, os.path.join(out_dir, "rates.png"))
    print(f"wrote {os.path.join(out_dir, 'rates.png')}")
    return rows, medians, slopes


def _cmd_rates(cfg, args, out_dir):
    model = _model_from_config(cfg)
    run_rates(
        model,
        cfg.get("n_grid", [500, 1000, 2000, 4000]),
        int(cfg.get("n_seeds", 50)),
        _master_seed(cfg, args),
        out_dir,
        reg=_reg_from_config(cfg),
    )
    return 0


def run_decay(model, m_values, n_paths, master_seed, out_dir, tau=2, horizon=None):
    """Dependence-decay experiment; writes decay.csv, decay_fit.json and
    decay.png, and returns the decay report."""
    rep = m_approx_decay(
        model, m_values, n_paths, RngStream(master_seed, 0), tau=tau, horizon=horizon
    )
    _write_csv(
        os.path.join(out_dir, "decay.csv"),
        ["m", "nu_hat"],
        list(zip(rep.m_values, rep.nu_hat)),
    )
    _write_json(rep.to_dict(), os.path.join(out_dir, "decay_fit.json"))
    figures.save_decay_figure(rep, os.path.join(out_dir, "decay.png"))
    print(f"wrote {os.path.join(out_dir, 'decay.png')}")
    return rep


def _cmd_decay(cfg, args, out_dir):
    model = _model_from_config(cfg)
    run_decay(
        model,
        cfg.get("m_values", list(range(2, 13))),
        int(cfg.get("n_paths", 2000)),
        _master_seed(cfg, args),
        out_dir,
        tau=int(cfg.get("tau", 2)),
        horizon=cfg.get("horizon"),
    )
    return 0


def run_example42(out_dir, d=8, beta=1.0, scale=0.5, c11=0.6, c21=0.6, c13=0.5,
                  c22=0.6, distribution="gaussian", with_rates=False,
                  n_grid=None, n_seeds=10, master_seed=None):
    """Structural benchmark checks; writes example42.json and a figure.

    Verifies that the companion product matches the closed-form cycle
    operator to 1e-12 and that the adjoint corner sub-block used by the
    season solver is injective (it is exactly singular when c22 = 0).
    Optionally runs the rate sweep on the same model.
    """
    params = {
        "d": d, "beta": beta, "scale": scale,
        "c11": c11, "c21": c21, "c13": c13, "c22": c22,
    }
    model = benchmark_model(d, beta, scale, c11, c21, c13, c22, distribution)
    built = cycle_matrix(model)
    closed = benchmark_cycle_closed_form(d, beta, scale, c11, c21, c13, c22)
    gap = hs_distance(built, closed)

    corner, _ = submatrices(built, 3)
    svals = np.linalg.svd(corner.adjoint().flat(), compute_uv=False)
    sigma_min = float(svals.min())

    degenerate = benchmark_model(d, beta, scale, c11, c21, c13, 0.0, distribution)
    corner0, _ = submatrices(cycle_matrix(degenerate), 3)
    sigma_min_degenerate = float(
        np.linalg.svd(corner0.adjoint().flat(), compute_uv=False).min()
    )

    rep = check_stationarity(built)
    structure_ok = gap <= 1e-12
    injective = sigma_min > 1e-12
    doc = {
        "parameters": params,
        "closed_form_hs_gap": gap,
        "structure_ok": structure_ok,
        "corner_adjoint_sigma_min": sigma_min,
        "corner_adjoint_sigma_min_if_c22_zero": sigma_min_degenerate,
        "injective": injective,
        "stationarity": rep.to_dict(),
    }
    _write_json(doc, os.path.join(out_dir, "example42.json"))
    figures.save_structure_figure(
        built.flat(), closed.flat(), 3, d, os.path.join(out_dir, "example42.png")
    )
    print(f"wrote {os.path.join(out_dir, 'example42.png')}")

    if with_rates:
        if master_seed is None:
            raise UsageError("with_rates needs a master seed")
        run_rates(model, n_grid or [500, 1000, 2000, 4000], n_seeds, master_seed, out_dir)

    if not structure_ok:
        raise NumericalFailure(
            f"companion product deviates from the closed form by {gap:.3e}"
        )
    if not injective:
        raise AssumptionViolation(
            "corner sub-block is not injective; the season solver is "
            "unidentified (need c21, c22 nonzero and an injective base operator)"
        )
    print(f"structure gap {gap:.3e}, corner sigma_min {sigma_min:.3e}")
    return doc


def _cmd_example42(cfg, args, out_dir):
    seed = args.seed if args.seed is not None else cfg.get("master_seed")
    run_example42(
        out_dir,
        d=int(cfg.get("d", 8)),
        beta=float(cfg.get("beta", 1.0)),
        scale=float(cfg.get("scale", 0.5)),
        c11=float(cfg.get("c11", 0.6)),
        c21=float(cfg.get("c21", 0.6)),
        c13=float(cfg.get("c13", 0.5)),
        c22=float(cfg.get("c22", 0.6)),
        distribution=str(cfg.get("distribution", "gaussian")),
        with_rates=bool(cfg.get("with_rates", False)),
        n_grid=cfg.get("n_grid"),
        n_seeds=int(cfg.get("n_seeds", 10)),
        master_seed=seed,
    )
    return 0


_HANDLERS = {
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "covariance": _cmd_covariance,
    "estimate": _cmd_estimate,
    "rates": _cmd_rates,
    "decay": _cmd_decay,
    "example42": _cmd_example42,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="fparma", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _HANDLERS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides config)")
        p.add_argument("--out", default=".", help="output directory")
    return parser


def main(argv=None):
    try:
        args = _build_parser().parse_args(argv)
        cfg = _load_config(args.config, args.command)
        out_dir = args.out
        os.makedirs(out_dir, exist_ok=True)
        return _HANDLERS[args.command](cfg, args, out_dir)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except AssumptionViolation as exc:
        print(f"model violation: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
