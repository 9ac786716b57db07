"""Command-line interface: ``msfa simulate | fit | connectivity | test | bench | defaults``.

Every command writes its outputs atomically plus a ``manifest.json`` with the
resolved configuration, input digests, seed and timestamps. Exit codes: 0 ok,
2 validation failure, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import secrets
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BenchConfig, run_benchmark
from .exceptions import NumericalError, ValidationError
from .global_factor import (
    cov_to_corr, fit_from_dict, fit_global, fit_to_dict, whole_network_cov,
)
from .io import (
    atomic_write_text, file_digest, read_layout, read_panel, write_json, write_layout,
    write_matrix,
)
from .layout import center_panel, standardize_panel
from .local_factor import BIC, Fixed, VarianceThreshold, selection_to_dict
from .rv import rv_matrix, rv_test
from .simulate import (
    SimulationSpec, build_modular_var, ground_truth, benchmark_spec, simulate_series, write_model,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

FIT_FILE = "fit.json"
MANIFEST_FILE = "manifest.json"


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _resolve_seed(seed):
    if seed is not None:
        return int(seed)
    seed = secrets.randbelow(2**32)
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from exc


def _manifest(out: Path, command, config, inputs, outputs, seed, started):
    write_json(out / MANIFEST_FILE, {
        "command": command,
        "version": __version__,
        "config": config,
        "seed": seed,
        "inputs": {str(p): file_digest(p) for p in inputs},
        "outputs": {name: file_digest(out / name) for name in outputs},
        "started": started,
        "finished": _now(),
    })


# -- simulate -----------------------------------------------------------------


def simulation_seeds(seed: int):
    """``(model seed, panel seed)`` derived from the single master seed."""
    model = int(np.random.SeedSequence(seed, spawn_key=(0,)).generate_state(1)[0])
    return model, np.random.SeedSequence(seed, spawn_key=(1,))


def cmd_simulate(args) -> int:
    started = _now()
    seed = _resolve_seed(args.seed)
    base = SimulationSpec.from_dict(_read_json(args.spec)) if args.spec else benchmark_spec()
    model_seed, panel_seed = simulation_seeds(seed)
    spec = SimulationSpec(**{**base.__dict__, "seed": model_seed}).validate()
    model = build_modular_var(spec)
    panel = simulate_series(model, args.T, burn_in=args.burn_in, seed=panel_seed)
    truth = ground_truth(model)
    out = Path(args.out)
    ext = ".bin" if args.binary else ".csv"
    files = {
        "panel" + ext: panel.data,
        "true_cov" + ext: truth.cov,
        "true_corr" + ext: truth.corr,
        "true_rv_clusters" + ext: truth.rv_clusters,
        "true_rv_networks" + ext: truth.rv_networks,
    }
    for name, A in files.items():
        write_matrix(out / name, A)
    model_files = write_model(out, model)
    write_layout(out / "layout.json", spec.layout)
    write_json(out / "spec.json", spec.to_dict())
    config = {"spec": spec.to_dict(), "T": args.T, "burn_in": args.burn_in}
    _manifest(out, "simulate", config, [args.spec] if args.spec else [],
              [*files, *model_files, "layout.json", "spec.json"], seed, started)
    return EXIT_OK


# -- fit ----------------------------------------------------------------------


def _selection_from_args(args):
    if args.fixed_m is not None:
        return Fixed(args.fixed_m)
    if args.bic:
        return BIC(args.max_factors)
    return VarianceThreshold(0.5 if args.tau is None else args.tau, args.max_factors)


def prepare_panel(panel, *, center=True, standardize=False):
    if standardize:
        return standardize_panel(panel)
    if center:
        return center_panel(panel)
    return panel


def cmd_fit(args) -> int:
    started = _now()
    panel = read_panel(args.panel)
    layout = read_layout(args.layout)
    selection = _selection_from_args(args)
    Y = prepare_panel(panel, center=not args.no_center, standardize=args.standardize)
    fit = fit_global(Y, layout, selection, n_jobs=args.n_jobs)
    out = Path(args.out)
    doc = fit_to_dict(fit)
    doc["selection"] = selection_to_dict(selection)
    doc["preprocessing"] = {"center": not args.no_center, "standardize": args.standardize}
    write_json(out / FIT_FILE, doc)
    ext = ".bin" if args.binary else ".csv"
    mats = {"factor_cov": fit.factor_cov, "factors": fit.factors,
            "noise_var": fit.noise_var()[None, :]}
    if layout.num_nodes <= args.max_dense_nodes:
        S = whole_network_cov(fit, max_nodes=args.max_dense_nodes)
        mats.update(cov=S, corr=cov_to_corr(S))
    else:
        print(f"N={layout.num_nodes} exceeds --max-dense-nodes; skipping cov/corr",
              file=sys.stderr)
    outputs = [FIT_FILE]
    for name, A in mats.items():
        write_matrix(out / (name + ext), A)
        outputs.append(name + ext)
    print("factors per cluster: " + " ".join(str(m) for m in fit.factors_per_cluster))
    config = {"selection": doc["selection"], "preprocessing": doc["preprocessing"],
              "max_dense_nodes": args.max_dense_nodes, "binary": args.binary}
    _manifest(out, "fit", config, [args.panel, args.layout], outputs, None, started)
    return EXIT_OK


# -- connectivity / test ------------------------------------------------------


def load_fit(fit_dir):
    path = Path(fit_dir) / FIT_FILE
    doc = _read_json(path)
    try:
        return fit_from_dict(doc), path
    except ValidationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: corrupt fit document ({exc!r})") from exc


def cmd_connectivity(args) -> int:
    started = _now()
    fit, path = load_fit(args.fit)
    rv = rv_matrix(fit, args.level)
    out = Path(args.out or args.fit)
    csv_name, json_name = f"rv_{args.level}.csv", f"rv_{args.level}.json"
    write_matrix(out / csv_name, rv.values, header=rv.names)
    write_json(out / json_name, {"level": rv.level, "names": list(rv.names),
                                 "values": rv.values.tolist()})
    _manifest(out, "connectivity", {"level": args.level}, [path], [csv_name, json_name],
              None, started)
    return EXIT_OK


def edge_list_csv(results, names) -> str:
    lines = ["i,j,name_i,name_j,rv,z,significant"]
    for r in results:
        lines.append(f"{r.i},{r.j},{names[r.i]},{names[r.j]},{r.rv!r},{r.z!r},"
                     f"{str(r.significant).lower()}")
    return "\n".join(lines) + "\n"


def cmd_test(args) -> int:
    started = _now()
    fit, path = load_fit(args.fit)
    results = rv_test(fit, args.level, args.alpha, args.d_override, tau_form=args.tau_form)
    names = (fit.layout.cluster_names if args.level == "cluster"
             else fit.layout.network_names)
    out = Path(args.out or args.fit)
    n_sig = sum(r.significant for r in results)
    summary = {"level": args.level, "alpha": args.alpha,
               "n_tests": args.d_override if args.d_override is not None else len(results),
               "n_pairs": len(results), "n_significant": n_sig}
    csv_name, json_name = f"test_{args.level}.csv", f"test_{args.level}.json"
    atomic_write_text(out / csv_name, edge_list_csv(results, names))
    write_json(out / json_name, {"summary": summary, "results": [r.to_dict() for r in results]})
    print(f"{n_sig} of {len(results)} pairs significant at alpha={args.alpha}")
    config = {"level": args.level, "alpha": args.alpha, "d_override": args.d_override,
              "tau_form": args.tau_form}
    _manifest(out, "test", config, [path], [csv_name, json_name], None, started)
    return EXIT_OK


# -- bench --------------------------------------------------------------------


def load_bench_config(path, seed=None) -> BenchConfig:
    doc = _read_json(path)
    if "spec" not in doc:
        doc["spec"] = benchmark_spec().to_dict()
    if seed is not None:
        doc["master_seed"] = seed
    return BenchConfig.from_dict(doc).validate()


def cmd_bench(args) -> int:
    started = _now()
    doc = _read_json(args.config)
    seed = args.seed if args.seed is not None else doc.get("master_seed")
    seed = _resolve_seed(seed)
    config = load_bench_config(args.config, seed)
    result = run_benchmark(config, n_jobs=args.n_jobs)
    out = Path(args.out)
    atomic_write_text(out / "bench.csv", result.to_csv())
    write_json(out / "bench.json", result.to_dict())
    write_json(out / "timings.json", result.timings)
    print(result.to_csv(), end="")
    _manifest(out, "bench", config.to_dict(), [args.config],
              ["bench.csv", "bench.json", "timings.json"], seed, started)
    return EXIT_OK


def cmd_defaults(args) -> int:
    if args.what == "spec":
        doc = benchmark_spec().to_dict()
    else:
        doc = BenchConfig(spec=benchmark_spec()).to_dict()
    print(json.dumps(doc, indent=2))
    return EXIT_OK


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msfa", description="Multi-scale factor analysis toolkit")
    p.add_argument("--version", action="version", version=f"msfa {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw a modular VAR(1) model and simulate a panel")
    s.add_argument("--spec", help="simulation spec JSON (default: 5 clusters of 25 nodes)")
    s.add_argument("--T", type=int, required=True, help="number of time points")
    s.add_argument("--burn-in", type=int, default=500)
    s.add_argument("--seed", type=int)
    s.add_argument("--binary", action="store_true", help="write .bin matrices instead of CSV")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit the multi-scale factor model")
    f.add_argument("--panel", required=True, help="T x N panel (CSV or .bin)")
    f.add_argument("--layout", required=True, help="layout JSON")
    g = f.add_mutually_exclusive_group()
    g.add_argument("--tau", type=float, help="explained-variance threshold (default 0.5)")
    g.add_argument("--fixed-m", type=int, help="factors per cluster")
    g.add_argument("--bic", action="store_true", help="select factor counts by BIC")
    f.add_argument("--max-factors", type=int)
    f.add_argument("--no-center", action="store_true")
    f.add_argument("--standardize", action="store_true")
    f.add_argument("--max-dense-nodes", type=int, default=20000)
    f.add_argument("--n-jobs", type=int)
    f.add_argument("--binary", action="store_true", help="write .bin matrices instead of CSV")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("connectivity", help="RV matrix from a fit directory")
    c.add_argument("--fit", required=True, help="directory written by 'msfa fit'")
    c.add_argument("--level", choices=("cluster", "network"), default="cluster")
    c.add_argument("--out", help="output directory (default: the fit directory)")
    c.set_defaults(func=cmd_connectivity)

    t = sub.add_parser("test", help="pairwise RV significance tests")
    t.add_argument("--fit", required=True)
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--level", choices=("cluster", "network"), default="cluster")
    t.add_argument("--d-override", type=int, help="Bonferroni test count (default: pairs)")
    t.add_argument("--tau-form", choices=("observation", "printed"), default="observation")
    t.add_argument("--out")
    t.set_defaults(func=cmd_test)

    b = sub.add_parser("bench", help="Monte-Carlo estimator comparison")
    b.add_argument("--config", required=True, help="bench config JSON")
    b.add_argument("--seed", type=int, help="master seed (overrides the config)")
    b.add_argument("--n-jobs", type=int)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    d = sub.add_parser("defaults", help="print a default config as JSON")
    d.add_argument("what", choices=("spec", "bench"))
    d.set_defaults(func=cmd_defaults)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
