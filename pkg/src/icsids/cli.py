"""Command-line entry point: ``icsids {simulate,ingest,train,eval,sweep,compare}``.

Every file written carries a ``#`` header with the master seed and the
pipeline config hash. Failures print one line, ``error: <Code>: <message>``,
and exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from . import __version__, metrics
from .dataset import Dataset, SplitPlan, stratified_split
from .ensemble import METHODS, FUSION_MODES, EnsembleModel, PipelineConfig, evaluate, run_experiment, train_pipeline
from .errors import ConfigParse, IcsIdsError
from .ingest import load_any
from .simulator import generate_dataset, load_scenario, reference_scenario_path

DEFAULT_RATIOS = tuple(round(0.1 * i, 1) for i in range(1, 11))
METRICS = ("acc", "prec", "rec", "f1")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigParse(message)


@dataclass
class RunConfig:
    """Everything a run needs besides the data source."""

    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    split: SplitPlan = field(default_factory=SplitPlan)
    ratios: tuple[float, ...] = DEFAULT_RATIOS
    methods: tuple[str, ...] = METHODS


def load_run_config(path: str | None) -> RunConfig:
    """YAML file: PipelineConfig keys at top level, plus optional
    ``split`` (test_fraction, repetitions, kfold), ``ratios`` and ``methods``."""
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except yaml.YAMLError as exc:
        raise ConfigParse(f"{path}: {exc}".replace("\n", " ")) from None
    if not isinstance(raw, dict):
        raise ConfigParse(f"{path}: top level must be a mapping")
    split = raw.pop("split", {}) or {}
    ratios = tuple(float(r) for r in raw.pop("ratios", DEFAULT_RATIOS))
    methods = tuple(raw.pop("methods", METHODS))
    unknown = set(split) - {"test_fraction", "repetitions", "kfold"}
    if unknown:
        raise ConfigParse(f"unknown split keys {sorted(unknown)}")
    try:
        return RunConfig(PipelineConfig.from_dict(raw), SplitPlan(**split), ratios, methods)
    except TypeError as exc:
        raise ConfigParse(str(exc)) from None


def _csv_list(text: str, conv=str) -> tuple:
    try:
        return tuple(conv(v.strip()) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigParse(f"bad list {text!r}: {exc}") from None


def _resolve(args) -> RunConfig:
    rc = load_run_config(getattr(args, "config", None))
    pipe, split = rc.pipeline, rc.split
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
        split = replace(split, seed=args.seed)
    for flag, key in (("branches", "k"), ("fusion_mode", "fusion_mode"), ("workers", "workers"),
                      ("epochs", "epochs")):
        if getattr(args, flag, None) is not None:
            overrides[key] = getattr(args, flag)
    if getattr(args, "partition_attacks", False):
        overrides["partition_attacks"] = True
    pipe = replace(pipe, **overrides)
    if getattr(args, "repetitions", None) is not None:
        split = replace(split, repetitions=args.repetitions)
    if getattr(args, "kfold", False):
        split = replace(split, kfold=True)
    ratios = _csv_list(args.ratios, float) if getattr(args, "ratios", None) else rc.ratios
    methods = _csv_list(args.methods) if getattr(args, "methods", None) else rc.methods
    return RunConfig(pipe, split, ratios, methods)


def _scenario(ref: str):
    p = Path(ref)
    return load_scenario(p if p.suffix in (".yaml", ".yml") or p.exists() else reference_scenario_path(ref))


def _load_data(args) -> tuple[Dataset, str]:
    if bool(args.dataset) == bool(args.scenario):
        raise ConfigParse("give exactly one of --dataset or --scenario")
    if args.scenario:
        sc = _scenario(args.scenario)
        return generate_dataset(sc), f"scenario={sc.name or args.scenario} scenario_seed={sc.seed}"
    kw = {"drop_missing": args.drop_missing, "drop_columns": _csv_list(args.drop_columns or "")}
    if args.label_column:
        kw["label_column"] = args.label_column
    if args.positive_label:
        kw["positive_label"] = args.positive_label
    return load_any(args.dataset, **kw), f"dataset={Path(args.dataset).name}"


def _header(cmd: str, seed, cfg_hash: str, *extra: str) -> str:
    parts = [f"icsids {__version__} {cmd}", f"seed={seed}", f"config_hash={cfg_hash}", *extra]
    return "\n".join("# " + p for p in parts) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _fmt_table(head: list[str], rows: list[list]) -> str:
    cells = [head] + [[r[0] if isinstance(r[0], str) else f"{r[0]:g}"] + [f"{v:.4f}" for v in r[1:]] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(head))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells) + "\n"


# -- commands -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    sc = _scenario(args.scenario)
    seed = sc.seed if args.seed is None else args.seed
    data = generate_dataset(sc, args.horizon, seed)
    head = _header("simulate", seed, "-", f"scenario={sc.name or args.scenario}", f"rows={data.n_samples}",
                   f"attack_rows={data.n_attack}", f"fingerprint={data.fingerprint()}")
    _write(Path(args.out), head + data.to_delimited())
    print(f"wrote {data.n_samples} rows ({data.n_attack} attack) to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    data, source = _load_data(args)
    head = _header("ingest", "-", "-", source, f"rows={data.n_samples}", f"fingerprint={data.fingerprint()}")
    _write(Path(args.out), head + data.to_delimited())
    print(f"wrote {data.n_samples} rows x {data.n_features} features to {args.out}")
    return 0


def cmd_train(args) -> int:
    rc = _resolve(args)
    data, source = _load_data(args)
    rep = args.repetition
    train, test = stratified_split(data, rc.split, rep)
    cfg = replace(rc.pipeline, seed=rc.pipeline.seed + rep)
    model = train_pipeline(train, cfg)
    model.provenance.update({
        "split_seed": rc.split.seed,
        "test_fraction": rc.split.test_fraction,
        "repetitions": rc.split.repetitions,
        "kfold": rc.split.kfold,
        "repetition": rep,
        "dataset_fingerprint": data.fingerprint(),
    })
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "model.json")
    report = evaluate(model, test, method="proposed", ratio=1.0, repetition=rep)
    text = _report_text("train", cfg, rc.split.seed, source, rep, report)
    _write(out / "report.csv", text)
    sys.stdout.write(text)
    return 0


def _report_text(cmd, cfg, split_seed, source, rep, report) -> str:
    head = _header(cmd, cfg.seed, cfg.hash(), source, f"split_seed={split_seed}", f"repetition={rep}")
    row = metrics.score_row("proposed", 1.0, rep, metrics.Scores(*(report.mean[m] for m in METRICS)))
    return metrics.rows_to_csv([row], header=head.replace("# ", "").rstrip("\n"))


def cmd_eval(args) -> int:
    model = EnsembleModel.load(args.model)
    data, source = _load_data(args)
    prov = model.provenance
    if "split_seed" in prov:
        if prov.get("dataset_fingerprint") not in (None, data.fingerprint()):
            raise ConfigParse("dataset differs from the one the model was trained on")
        plan = SplitPlan(prov["split_seed"], prov["test_fraction"], prov["repetitions"], prov["kfold"])
        rep = prov["repetition"]
        _, test = stratified_split(data, plan, rep)
    else:
        plan, rep, test = None, 0, data
    report = evaluate(model, test, method="proposed")
    text = _report_text("eval", model.config, plan.seed if plan else "-", source, rep, report)
    if args.out:
        _write(Path(args.out), text)
    sys.stdout.write(text)
    return 0


def _experiment(args, ratios=None):
    rc = _resolve(args)
    data, source = _load_data(args)
    ratios = rc.ratios if ratios is None else ratios
    progress = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    rep = run_experiment(data, rc.split, rc.pipeline, ratios, rc.methods, progress)
    head = _header(args.cmd, rc.pipeline.seed, rc.pipeline.hash(), source,
                   f"repetitions={rc.split.repetitions}", f"kfold={rc.split.kfold}")
    return rc, rep, head


def cmd_sweep(args) -> int:
    rc, rep, head = _experiment(args)
    out = Path(args.out) if args.out else None
    for m in METRICS:
        means, stds = rep.table(m, "mean"), rep.table(m, "std")
        lines = ["ratio," + ",".join(f"{x}_mean,{x}_std" for x in rep.methods)]
        for rm, rs in zip(means, stds):
            lines.append(",".join([repr(rm[0])] + [f"{a!r},{b!r}" for a, b in zip(rm[1:], rs[1:])]))
        if out:
            _write(out / f"{m}.csv", head + "\n".join(lines) + "\n")
        print(f"[{m}] mean over {rep.repetitions} repetitions")
        sys.stdout.write(_fmt_table(["ratio", *rep.methods], means))
    if out:
        _write(out / "rows.csv", metrics.rows_to_csv(rep.rows, header=head.replace("# ", "").rstrip("\n")))
        _write(out / "rows.json", metrics.rows_to_json(rep.rows, **rep.meta, config=rc.pipeline.to_dict()))
    return 0


def cmd_compare(args) -> int:
    rc, rep, head = _experiment(args, ratios=(1.0,))
    mean_rows = [[m, *(rep.mean(m, 1.0, k) for k in METRICS)] for m in rep.methods]
    std_rows = [[m, *(rep.std(m, 1.0, k) for k in METRICS)] for m in rep.methods]
    lines = ["method," + ",".join(f"{k}_mean,{k}_std" for k in METRICS)]
    for a, b in zip(mean_rows, std_rows):
        lines.append(",".join([a[0]] + [f"{x!r},{y!r}" for x, y in zip(a[1:], b[1:])]))
    if args.out:
        out = Path(args.out)
        _write(out / "compare.csv", head + "\n".join(lines) + "\n")
        _write(out / "rows.csv", metrics.rows_to_csv(rep.rows, header=head.replace("# ", "").rstrip("\n")))
    sys.stdout.write(_fmt_table(["method", "Acc", "Prec", "Rec", "F1"], mean_rows))
    return 0


# -- parser -------------------------------------------------------------------


def _data_args(p):
    p.add_argument("--dataset", help="ARFF or delimited file")
    p.add_argument("--scenario", help="scenario YAML path or committed scenario name")
    p.add_argument("--label-column")
    p.add_argument("--positive-label")
    p.add_argument("--drop-columns", help="comma-separated columns to ignore")
    p.add_argument("--drop-missing", action="store_true", help="drop rows with missing values")


def _run_args(p, experiment=False):
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int, help="master seed (pipeline and split)")
    p.add_argument("--branches", type=int, help="number of balanced branches k")
    p.add_argument("--fusion-mode", choices=FUSION_MODES)
    p.add_argument("--partition-attacks", action="store_true")
    p.add_argument("--epochs", type=int)
    p.add_argument("--workers", type=int, help="threads for branch training")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--kfold", action="store_true", help="k-fold instead of repeated random splits")
    if experiment:
        p.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
        p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="icsids", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate labelled telemetry from a scenario")
    p.add_argument("--scenario", default="simics-a")
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ingest", help="convert ARFF/CSV to the canonical CSV form")
    _data_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the ensemble on one split")
    _data_args(p)
    _run_args(p)
    p.add_argument("--repetition", type=int, default=0, help="which split to train on")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("eval", help="score a saved model on its held-out split")
    _data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="report file")

    p = sub.add_parser("sweep", help="metrics vs attack-subsampling ratio")
    _data_args(p)
    _run_args(p, experiment=True)
    p.add_argument("--ratios", help="comma-separated ratios in (0, 1]")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("compare", help="all methods at the full attack ratio")
    _data_args(p)
    _run_args(p, experiment=True)
    p.add_argument("--out", help="output directory")
    return ap


COMMANDS = {
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.cmd](args)
    except IcsIdsError as exc:
        msg, code = str(exc), exc.code
    except FileNotFoundError as exc:
        msg, code = f"{exc.filename or exc}", "FileNotFound"
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        msg, code = str(exc), type(exc).__name__
    print(f"error: {code}: {' '.join(msg.split())}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
