"""Command-line interface.

Every subcommand reads an optional YAML config (``--config``), applies
``--set key=value`` overrides, then applies its own flags; each flag is
shorthand for one config key (listed in its help text).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from metarep import io
from metarep.errors import MetarepError
from metarep.harness import config as cfg
from metarep.harness.config import ExperimentConfig, ExperimentKind
from metarep.harness.pipeline import fit_and_score, make_fewshot_task, recovery_metrics
from metarep.harness.records import aggregate, read_records_csv, summary_to_csv
from metarep.harness.report import emit_report
from metarep.harness.sweep import RECORDS_FILE, run_sweep
from metarep.linalg import derive_seed, sym_eig
from metarep.moments import glm_population_M, moment_estimator
from metarep.subspace import DegenerateGapWarning, spectral_norm, subspace_from_eigen
from metarep.tasks import (
    Representation,
    export_csv,
    load_meta_dataset,
    load_task_data,
    make_meta_dataset,
    save_meta_dataset,
)

log = logging.getLogger("metarep")

KIND_ALIASES = {
    "glm": ExperimentKind.SUBSPACE_RECOVERY_GLM.value,
    "glm_logistic": ExperimentKind.SUBSPACE_RECOVERY_GLM.value,
    "relu": ExperimentKind.SUBSPACE_RECOVERY_RELU.value,
    "relu_net": ExperimentKind.SUBSPACE_RECOVERY_RELU.value,
}


def _int_list(text: str) -> list[int]:
    """``"1,2,5"`` or a half-open range ``"0:10"`` (optionally ``"8:57:8"``)."""
    if ":" in text:
        return list(range(*(int(p) for p in text.split(":"))))
    return [int(p) for p in text.split(",") if p.strip()]


def _float(text: str) -> float:
    return float(text)


class _ConfigFlags:
    """Registers flags that map onto config keys and collects their overrides."""

    def __init__(self, parser: argparse.ArgumentParser):
        self.parser = parser
        self.mapping: list = []
        parser.set_defaults(_flags=self)

    def add(self, *names, key: str, scalar_to_list: bool = False, **kw):
        dest = "cfg__" + key.replace(".", "__")
        kw.setdefault("help", "")
        kw["help"] = f"{kw['help']} [config key: {key}]".strip()
        self.parser.add_argument(*names, dest=dest, default=None, **kw)
        self.mapping.append((dest, key, scalar_to_list))
        return self

    def overrides(self, args) -> dict:
        out = {}
        for dest, key, as_list in self.mapping:
            value = getattr(args, dest)
            if value is None:
                continue
            if as_list and not isinstance(value, list):
                value = [value]
            out[key] = value
        return out


def _common(p: argparse.ArgumentParser):
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (dotted for sections, e.g. fewshot.a=5)")
    return _ConfigFlags(p)


def _set_key(values: dict, key: str, value):
    parts = key.split(".")
    for part in parts[:-1]:
        values = values.setdefault(part, {})
    values[parts[-1]] = value


def resolve_config(args, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Base (preset or default) <- config file <- ``--set`` <- explicit flags."""
    if getattr(args, "config", None):
        config = cfg.load_config(args.config)
    else:
        config = base or ExperimentConfig()
    config = cfg.apply_overrides(config, args.set)
    values = config.to_dict()
    for key, value in args._flags.overrides(args).items():
        if key == "kind":
            value = KIND_ALIASES.get(value, value)
        _set_key(values, key, value)
    return cfg.config_from_dict(values)


# -- subcommands -----------------------------------------------------------

def cmd_gen(args) -> int:
    config = resolve_config(args)
    if not config.out:
        raise SystemExit("gen: --out is required")
    kind = "relu_net" if config.kind is ExperimentKind.SUBSPACE_RECOVERY_RELU else "glm_logistic"
    ds = make_meta_dataset(
        config.master_seed, d=config.d, r=int(config.r_grid[0]), k=int(config.k_grid[0]),
        n=int(config.n_grid[0]), kind=kind, theta_norm_max=config.task.theta_norm_max,
        hidden=config.task.hidden, noise_std=config.task.noise_std,
    )
    out = save_meta_dataset(ds, config.out)
    if config.export_csv:
        export_csv(ds, out / "samples.csv")
    print(f"wrote {ds.k} {kind} tasks (d={config.d}, r={ds.representation.r}) to {out}")
    return 0


def cmd_meta(args) -> int:
    config = resolve_config(args)
    if not config.data:
        raise SystemExit("meta: --data is required")
    data_dir = Path(config.data)
    out = Path(config.out or data_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = load_task_data(data_dir)
    moment = moment_estimator(tasks)
    eig = sym_eig(moment.M)
    r = int(config.r_grid[0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateGapWarning)
        sub = subspace_from_eigen(eig, r)
    io.write_matrix(out / "M_hat.bin", moment.M)
    io.write_matrix_csv(out / "M_hat.csv", moment.M)
    io.write_matrix(out / "U_r.bin", sub.U_r)
    io.write_matrix(out / "eigenvalues.bin", eig.eigenvalues)
    summary = {"k": moment.k_used, "d": moment.d, "r": r, "spectral_gap": sub.spectral_gap,
               "degenerate": sub.degenerate, "top_eigenvalues": [float(v) for v in sub.eigenvalues]}
    if (data_dir / "W.bin").exists():
        ds = load_meta_dataset(data_dir)
        if ds.representation.r == r:
            summary.update(recovery_metrics(sub, ds.representation))
        if ds.kind == "glm_logistic":
            oracle = glm_population_M(ds.specs, ds.representation)
            summary["moment_error_spectral"] = spectral_norm(moment.M - oracle.M)
    io.write_json(out / "meta.json", summary)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_fewshot(args) -> int:
    config = resolve_config(args)
    if not config.data:
        raise SystemExit("fewshot: --data is required (a dataset directory with W.bin)")
    rep = Representation(io.read_matrix(Path(config.data) / "W.bin"))
    P = io.read_matrix(config.subspace).T if config.subspace else np.eye(rep.d)
    seed = derive_seed(int(config.master_seed), "fewshot-cli")
    task = make_fewshot_task(rep, seed, config.fewshot.eval_n, config.fewshot.theta_norm_max)
    results = []
    for n in config.fewshot.n_grid:
        X, y = task.train_set(int(n))
        model, scores = fit_and_score(P, X, y, task, config,
                                      seed if config.mc_samples >= 10_000 else None)
        row = {"n": int(n), "accuracy": scores["accuracy"], **model.to_dict()}
        if "excess_risk" in scores:
            row["excess_risk"], row["excess_risk_stderr"] = scores["excess_risk"]
        results.append(row)
    payload = {"representation": "subspace" if config.subspace else "identity", "results": results}
    if config.out:
        Path(config.out).mkdir(parents=True, exist_ok=True)
        io.write_json(Path(config.out) / "fewshot.json", payload)
    print(json.dumps([{k: r[k] for k in ("n", "accuracy", "converged", "iterations")} for r in results]))
    return 0


def _progress(done, total):
    log.info("%d/%d grid points", done, total)


def cmd_sweep(args) -> int:
    base = cfg.load_preset(args.preset) if args.preset else None
    config = resolve_config(args, base)
    if not config.out:
        raise SystemExit("sweep: --out is required")
    records = run_sweep(config, config.out, workers=config.workers, progress=_progress)
    (Path(config.out) / "summary.csv").write_text(summary_to_csv(aggregate(records)))
    errors = sum(r.is_error for r in records)
    print(f"{len(records)} records ({errors} errors) in {Path(config.out) / RECORDS_FILE}")
    return 1 if errors else 0


def cmd_report(args) -> int:
    config = resolve_config(args)
    if not config.out:
        raise SystemExit("report: --in is required")
    records = read_records_csv(Path(config.out) / RECORDS_FILE)
    for path in emit_report(records, config.out, config.report_format):
        print(path)
    return 0


def cmd_mnist(args) -> int:
    config = resolve_config(args, cfg.load_preset("fig3b"))
    if not config.mnist.mnist_dir:
        raise SystemExit("mnist: --mnist-dir is required")
    if config.data:
        from metarep.mnist import build_digit_pair_tasks, load_mnist, save_digit_pair_tasks

        images, labels = load_mnist(config.mnist.mnist_dir)
        tasks = build_digit_pair_tasks(images, labels, config.mnist.pairs, config.mnist.per_class,
                                       seed=config.mnist.meta_seed)
        save_digit_pair_tasks(tasks, config.data, seed=config.mnist.meta_seed)
        print(f"wrote {tasks.k} digit-pair tasks to {config.data}")
    if not config.out:
        return 0
    records = run_sweep(config, config.out, workers=config.workers, progress=_progress)
    summaries = aggregate(records)
    (Path(config.out) / "summary.csv").write_text(summary_to_csv(summaries))
    for s in summaries:
        print(f"n={s.n:3d} {s.metric:18s} r={s.r:4d} mean={s.mean:.4f} stderr={s.stderr:.4f}")
    return 1 if any(r.is_error for r in records) else 0


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="metarep", description="Subspace meta-learning experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic meta-training dataset")
    f = _common(p)
    f.add("--out", key="out", help="dataset directory")
    f.add("--seed", key="master_seed", type=int)
    f.add("--d", key="d", type=int)
    f.add("--r", key="r_grid", type=int, scalar_to_list=True)
    f.add("--k", key="k_grid", type=int, scalar_to_list=True)
    f.add("--n", key="n_grid", type=int, scalar_to_list=True, help="samples per task (even)")
    f.add("--kind", key="kind", choices=sorted(KIND_ALIASES))
    f.add("--theta-norm-max", key="task.theta_norm_max", type=_float)
    f.add("--hidden", key="task.hidden", type=int)
    f.add("--noise-std", key="task.noise_std", type=_float)
    f.add("--csv", key="export_csv", action="store_const", const=True, help="also write samples.csv")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("meta", help="moment estimate and top-r subspace of a dataset")
    f = _common(p)
    f.add("--data", key="data", help="dataset directory")
    f.add("--r", key="r_grid", type=int, scalar_to_list=True)
    f.add("--out", key="out", help="output directory (default: the dataset directory)")
    p.set_defaults(func=cmd_meta)

    p = sub.add_parser("fewshot", help="fit and evaluate a new task inside a subspace")
    f = _common(p)
    f.add("--data", key="data", help="dataset directory providing W")
    f.add("--subspace", key="subspace", help="U_r.bin from `meta` (omit for P = I)")
    f.add("--seed", key="master_seed", type=int)
    f.add("--n", key="fewshot.n_grid", type=_int_list, help="few-shot sizes, e.g. 5,10,20")
    f.add("--eval-n", key="fewshot.eval_n", type=int)
    f.add("--a", key="fewshot.a", type=_float, help="norm budget")
    f.add("--theta-norm-max", key="fewshot.theta_norm_max", type=_float)
    f.add("--step", key="fewshot.step", type=_float)
    f.add("--max-iter", key="fewshot.max_iter", type=int)
    f.add("--tol", key="fewshot.tol", type=_float)
    f.add("--mc-samples", key="mc_samples", type=int)
    f.add("--out", key="out")
    p.set_defaults(func=cmd_fewshot)

    p = sub.add_parser("sweep", help="run an experiment grid")
    p.add_argument("--preset", choices=cfg.PRESETS)
    f = _common(p)
    f.add("--out", key="out")
    f.add("--master-seed", key="master_seed", type=int)
    f.add("--seeds", key="seeds", type=_int_list, help="e.g. 0:10 or 0,1,2")
    f.add("--workers", key="workers", type=int, help="pool size (capped by METAREP_THREADS)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render records.csv as CSV summaries or SVG charts")
    f = _common(p)
    f.add("--in", key="out", help="sweep output directory")
    f.add("--format", key="report_format", choices=("csv", "svg"))
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("mnist", help="MNIST digit-pair meta-training and 1-vs-9 few-shot sweep")
    f = _common(p)
    f.add("--mnist-dir", key="mnist.mnist_dir", help="directory with the IDX files")
    f.add("--out", key="out")
    f.add("--export", key="data", help="also write the digit-pair tasks as a dataset directory")
    f.add("--r-grid", key="r_grid", type=_int_list)
    f.add("--n-grid", key="fewshot.n_grid", type=_int_list)
    f.add("--seeds", key="seeds", type=_int_list)
    f.add("--eval-n", key="fewshot.eval_n", type=int)
    f.add("--per-class", key="mnist.per_class", type=int)
    f.add("--workers", key="workers", type=int)
    p.set_defaults(func=cmd_mnist)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MetarepError, ValueError, FileNotFoundError) as exc:
        print(f"metarep {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
