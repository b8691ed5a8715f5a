"""Command-line front end: experiments in, CSV/JSON reports out.

Subcommands: classify, spectrum, synth, identify, reconstruct. Every
command accepts --config (a JSON experiment config; flags override it),
--seed, --output-dir and --threads. Exit codes: 0 for any completed
scientific verdict, 2 for configuration errors, 3 for numerical
failures. Outputs are deterministic: the same config and seed produce
byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from typing import Any, Sequence

import numpy as np

from . import basis as basis_mod
from . import spectral, stability, sysid
from .config import ExperimentConfig, config_from_dict, load_config
from .errors import ConfigError, DomainError, NumericalError, StructuralError
from .generators import parse_generator
from .kernels import KernelSpec, spec_from_config, truncate


def _fmt(x: Any) -> str:
    """Shortest round-trip decimal for floats; plain str otherwise."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _out_path(output_dir: str | None, name: str) -> str:
    base = output_dir or "."
    os.makedirs(base, exist_ok=True)
    path = os.path.normpath(os.path.join(base, name))
    if os.path.relpath(path, base).startswith(".."):
        raise ConfigError(f"output file {name!r} escapes the output directory")
    return path


def _write_csv(path: str, header: Sequence[str],
               rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _write_json(path: str, payload: dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _kernel_config_from_params(params: dict[str, Any]) -> dict[str, Any]:
    """Translate CLI kernel params into a kernel config dict."""
    family = params.get("kernel", "stable-spline")
    if family == "stable-spline":
        return {"family": family, "alpha": float(params.get("alpha", 0.95))}
    if family == "gaussian":
        return {"family": family, "width": float(params.get("width", 1.0))}
    if family == "translation-invariant":
        if "h" not in params:
            raise ConfigError("translation-invariant kernel requires 'h'")
        return {"family": family, "h": params["h"]}
    if family == "rank-one":
        if "v" not in params:
            raise ConfigError("rank-one kernel requires 'v'")
        return {"family": family, "v": params["v"]}
    if family == "diagonal":
        if "g" not in params:
            raise ConfigError("diagonal kernel requires 'g'")
        return {"family": family, "g": params["g"]}
    if family == "mercer":
        for key in ("basis", "count", "window", "eigenvalues"):
            if key not in params:
                raise ConfigError(f"mercer kernel requires {key!r}")
        cfg = {"family": "mercer", "basis": params["basis"],
               "count": int(params["count"]), "window": int(params["window"]),
               "eigenvalues": params["eigenvalues"]}
        if "pole" in params:
            cfg["pole"] = float(params["pole"])
        return cfg
    raise ConfigError(f"unknown kernel family {family!r}")


def _build_kernel(params: dict[str, Any]) -> KernelSpec:
    return spec_from_config(_kernel_config_from_params(params))


def _parse_grid(value: Any) -> list[int]:
    """Either a list of ints or a "start:stop:step" string."""
    if isinstance(value, str):
        parts = value.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid string must be start:stop:step, got {value!r}")
        start, stop, step = (int(p) for p in parts)
        if step <= 0 or stop < start:
            raise ConfigError(f"bad grid range {value!r}")
        return list(range(start, stop + 1, step))
    return [int(d) for d in value]


def _parse_track(value: Any) -> list[int]:
    """Either a list of ints or a "1-5,100" style string."""
    if isinstance(value, str):
        out: list[int] = []
        for chunk in value.split(","):
            chunk = chunk.strip()
            if "-" in chunk:
                lo, _, hi = chunk.partition("-")
                out.extend(range(int(lo), int(hi) + 1))
            elif chunk:
                out.append(int(chunk))
        if not out:
            raise ConfigError(f"empty track specification {value!r}")
        return out
    return [int(i) for i in value]


# --------------------------------------------------------------------------
# Command handlers

def _cmd_classify(config: ExperimentConfig) -> int:
    spec = _build_kernel(config.params)
    budget = stability.Budget(seed=config.seed or 0)
    report = stability.classify(spec, budget)
    sys.stdout.write(report.to_json())
    if config.output_dir is not None:
        _write_json(_out_path(config.output_dir, "classify_report.json"),
                    report.to_dict())
        _write_csv(_out_path(config.output_dir, "classify_series.csv"),
                   ["test", "d", "value"], report.series_rows())
    return 0


def _cmd_spectrum(config: ExperimentConfig) -> int:
    params = dict(config.params)
    spec = _build_kernel(params)
    grid = _parse_grid(params.get("grid", "200:2000:200"))
    track = _parse_track(params.get("track", "1-5,100"))
    trace = spectral.convergence_scan(spec, grid, track,
                                      threads=config.threads)
    cols = [f"eig_{i}" for i in trace.tracked]
    _write_csv(_out_path(config.output_dir, "eigenvalue_paths.csv"),
               ["d", *cols],
               [[d, *(trace.eigenvalue_paths[i][g] for i in trace.tracked)]
                for g, d in enumerate(trace.grid)])
    _write_csv(_out_path(config.output_dir, "discrepancies.csv"),
               ["d_from", "d_to", *(f"disc_{i}" for i in trace.tracked)],
               [[trace.grid[g], trace.grid[g + 1],
                 *(trace.discrepancies[i][g] for i in trace.tracked)]
                for g in range(len(trace.grid) - 1)])
    final = spectral.eigendecompose(truncate(spec, trace.grid[-1]))
    _write_csv(_out_path(config.output_dir, "eigenvectors.csv"),
               ["t", *(f"rho_{i}" for i in trace.tracked)],
               [[t + 1, *(final.eigenvectors[t, i - 1] for i in trace.tracked)]
                for t in range(final.d)])
    _write_json(_out_path(config.output_dir, "spectrum_summary.json"), {
        "config": config.to_dict(),
        "grid": list(trace.grid),
        "tracked": list(trace.tracked),
        "unreliable_tracked": sorted(trace.unreliable),
        "min_adjacent_gaps": {str(d): g for d, g in trace.min_gaps.items()},
    })
    return 0


def _build_model(params: dict[str, Any]) -> basis_mod.MercerModel:
    for key in ("basis", "count", "window", "eigenvalues"):
        if key not in params:
            raise ConfigError(f"synth requires {key!r}")
    kind = params["basis"]
    count, window = int(params["count"]), int(params["window"])
    if kind == "canonical":
        b = basis_mod.canonical_basis(count, window)
    elif kind == "laguerre":
        if "pole" not in params:
            raise ConfigError("laguerre basis requires 'pole'")
        b = basis_mod.laguerre_basis(float(params["pole"]), count, window)
    elif kind == "random":
        b = basis_mod.random_orthogonal_basis(int(params.get("seed", 0)),
                                              count, window)
    else:
        raise ConfigError(f"unknown basis kind {kind!r}")
    return basis_mod.MercerModel(basis=b,
                                 eigenvalue_law=parse_generator(
                                     params["eigenvalues"]))


def _cmd_synth(config: ExperimentConfig) -> int:
    model = _build_model(config.params)
    cert = basis_mod.sufficient_stability_test(model)
    profile = basis_mod.l1_profile(model.basis)
    payload: dict[str, Any] = {
        "config": config.to_dict(),
        "model": model.to_config(),
        "l1_profile": {"norms": list(profile.norms),
                       "max_ratio": profile.max_ratio,
                       "slope": profile.slope},
        "certification": cert.to_dict(),
    }
    if "bound" in config.params:
        result = basis_mod.bounded_l1_test(model, float(config.params["bound"]))
        payload["bounded_l1"] = result.to_dict()
    sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if config.output_dir is not None:
        _write_json(_out_path(config.output_dir, "synth_report.json"), payload)
    return 0


def _cmd_identify(config: ExperimentConfig) -> int:
    if config.seed is None:
        raise ConfigError("identify requires a seed (noise realizations must "
                          "be reproducible)")
    params = dict(config.params)
    alpha = float(params.get("alpha", 0.95))
    n = int(params.get("n", 200))
    sigma = float(params.get("sigma", 0.1))
    gamma = float(params.get("gamma", 100.0))
    window = int(params.get("window", 600))
    input_kind = params.get("input", "white")
    coeffs = [float(c) for c in params.get("truth_coeffs", [4.0, -3.0])]
    poles = [float(p) for p in params.get("truth_poles", [0.9, 0.8])]
    truth = sysid.decaying_exponential_mix(coeffs, poles, window)
    problem, f0 = sysid.simulate(truth, input_kind, n, sigma,
                                 seed=config.seed, window=window)

    kernel = spec_from_config({"family": "stable-spline", "alpha": alpha})
    spectrum = spectral.eigendecompose(truncate(kernel, window))
    rank = spectrum.rank()
    rels = sysid.rels_estimate(problem, kernel, gamma)
    full = sysid.trunc_mercer_estimate(problem, spectrum, gamma, rank)
    scale = max(float(np.linalg.norm(rels.impulse_response)), 1e-300)
    equivalence_gap = float(np.linalg.norm(
        full.impulse_response - rels.impulse_response)) / scale

    default_orders = [d for d in (5, 10, 20, 50, 100, 200) if d < rank]
    orders = [int(d) for d in params.get("orders", default_orders)]
    orders = sorted(set(d for d in orders if 1 <= d <= rank)) + [rank]
    sweep = sysid.sweep_d(problem, spectrum, gamma, orders, reference=rels)

    lsq_basis = basis_mod.canonical_basis(window)
    selection = sysid.select_order(problem, lsq_basis,
                                   [2, 5, 10, 20, 50], criterion="aic")
    lsq = sysid.ls_estimate(problem, lsq_basis, selection.order)

    summary = {
        "config": config.to_dict(),
        "problem": {"n": n, "sigma": sigma, "gamma": gamma, "window": window,
                    "input": input_kind, "alpha": alpha},
        "equivalence_gap_full_rank": equivalence_gap,
        "spectral_rank": rank,
        "fits": {
            "rels": sysid.fit_percent(f0, rels.impulse_response),
            "trunc_mercer_full": sysid.fit_percent(f0, full.impulse_response),
            "ls_aic": sysid.fit_percent(f0, lsq.impulse_response),
        },
        "ls_selected_order": selection.order,
        "rss": {"rels": rels.rss, "trunc_mercer_full": full.rss,
                "ls_aic": lsq.rss},
    }
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write_json(_out_path(config.output_dir, "identify_summary.json"), summary)
    _write_csv(_out_path(config.output_dir, "sweep.csv"),
               ["d", "l2_gap_to_rels", "seminorm_gap", "cost_proxy"],
               [[r.order, r.l2_gap, r.seminorm_gap, r.cost_proxy]
                for r in sweep])
    gammas = [float(g) for g in params.get("gammas",
                                           [10.0 ** e for e in range(-2, 7)])]
    gamma_rows = []
    for g in sorted(set(gammas)):
        est = sysid.rels_estimate(problem, kernel, g)
        gamma_rows.append([g, est.rss, est.diagnostics["rkhs_norm_sq"],
                           sysid.fit_percent(f0, est.impulse_response)])
    _write_csv(_out_path(config.output_dir, "gamma_path.csv"),
               ["gamma", "rss", "rkhs_norm_sq", "fit_percent"], gamma_rows)
    best_tm = sysid.trunc_mercer_estimate(problem, spectrum, gamma,
                                          min(20, rank))
    _write_csv(_out_path(config.output_dir, "impulse_responses.csv"),
               ["t", "truth", "ls_aic", "rels", "trunc_mercer_20"],
               [[t + 1, f0[t], lsq.impulse_response[t],
                 rels.impulse_response[t], best_tm.impulse_response[t]]
                for t in range(window)])
    return 0


def _cmd_reconstruct(config: ExperimentConfig) -> int:
    params = dict(config.params)
    spec = _build_kernel(params)
    d = int(params.get("d", 500))
    kernel = truncate(spec, d)
    spectrum = spectral.eigendecompose(kernel)
    ranks = [int(r) for r in params.get("ranks", [0, 1, 2, 5, 10, 20, 50, d])]
    rows = []
    for r in sorted(set(min(r, d) for r in ranks)):
        _, err, tail = spectral.mercer_reconstruct(spectrum, r, reference=kernel)
        rows.append([r, err, tail])
    _write_csv(_out_path(config.output_dir, "reconstruction.csv"),
               ["rank", "frobenius_error", "tail_energy_ratio"], rows)
    return 0


HANDLERS = {
    "classify": _cmd_classify,
    "spectrum": _cmd_spectrum,
    "synth": _cmd_synth,
    "identify": _cmd_identify,
    "reconstruct": _cmd_reconstruct,
}

#: Flags that feed the params block, per command.
_PARAM_FLAGS = {
    "classify": ["kernel", "alpha", "width", "h", "v", "g", "basis", "pole",
                 "count", "window", "eigenvalues"],
    "spectrum": ["kernel", "alpha", "width", "h", "v", "g", "basis", "pole",
                 "count", "window", "eigenvalues", "grid", "track"],
    "synth": ["basis", "pole", "count", "window", "eigenvalues", "bound"],
    "identify": ["alpha", "input", "n", "sigma", "gamma", "window"],
    "reconstruct": ["kernel", "alpha", "width", "h", "v", "g", "basis",
                    "pole", "count", "window", "eigenvalues", "d"],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stablerkhs",
        description="Kernel stability diagnostics, truncated spectra and "
                    "regularized identification over the natural numbers.")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in HANDLERS:
        p = sub.add_parser(command)
        p.add_argument("--config", help="JSON experiment config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--output-dir", default=None)
        p.add_argument("--threads", type=int, default=None)
        flags = _PARAM_FLAGS[command]
        if "kernel" in flags:
            p.add_argument("--kernel", default=None,
                           help="stable-spline | gaussian | "
                                "translation-invariant | rank-one | diagonal "
                                "| mercer")
        for name, typ in (("alpha", float), ("width", float), ("pole", float),
                          ("sigma", float), ("gamma", float), ("bound", float),
                          ("count", int), ("window", int), ("n", int),
                          ("d", int)):
            if name in flags:
                p.add_argument(f"--{name}", type=typ, default=None)
        for name in ("h", "v", "g", "eigenvalues", "basis", "grid", "track",
                     "input"):
            if name in flags:
                p.add_argument(f"--{name}", default=None)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge a config file (if any) with command-line overrides."""
    if args.config:
        base = load_config(args.config)
        if base.command != args.command:
            raise ConfigError(f"config file is for {base.command!r}, invoked "
                              f"as {args.command!r}")
        raw = base.to_dict()
    else:
        raw = {"schema_version": 1, "command": args.command, "seed": None,
               "output_dir": None, "threads": 1, "params": {}}
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.output_dir is not None:
        raw["output_dir"] = args.output_dir
    if args.threads is not None:
        raw["threads"] = args.threads
    for name in _PARAM_FLAGS[args.command]:
        value = getattr(args, name, None)
        if value is not None:
            raw["params"][name] = value
    return config_from_dict(raw)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
        return HANDLERS[config.command](config)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, StructuralError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":   # pragma: no cover
    sys.exit(main())
