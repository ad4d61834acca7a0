"""Command-line orchestration: build datasets, sweep the probe matrix,
plot figures, and write reports.

Results are stored as append-only JSONL, one file per (model, task), so
parallel sweep workers never contend on a shared file; figures and reports
are pure functions of those record files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import encoder, metrics, synth, tasks, training
from .corpus import bundled_relation_map, load_documents, load_tree_interchange, parse_dis, RelationMap, binarize
from .encoder import FeatureCache, register_model
from .metrics import ScoreMatrix, aggregate, load_ordering_details, save_ordering_details
from .tasks import ALL_TASKS, DatasetSplit
from .training import RunRecord, append_records, load_records


@dataclass
class ExperimentConfig:
    """The sweep configuration; see README for a worked example."""

    models: list[str] = field(default_factory=lambda: ["bert"])
    tasks: list[str] = field(default_factory=lambda: list(ALL_TASKS))
    layers: list[int] | None = None
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3])
    datasets: dict[str, str] = field(default_factory=dict)
    out_dir: str = "runs"
    cache_dir: str | None = "feature_cache"
    registry: str | None = None
    pooling: dict[str, str] = field(default_factory=dict)
    decode_mode: str = "assignment"
    context_pooling: str = "whole"
    batch_size: int = 32
    train: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise SystemExit(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def _load_trees(path):
    """Trees from an interchange file or a directory of .dis files."""
    path = Path(path)
    if path.is_dir():
        trees = []
        for fp in sorted(path.glob("*.dis")):
            trees.append(parse_dis(fp.read_text(encoding="utf-8")))
        if not trees:
            raise SystemExit(f"no .dis files under {path}")
        return trees
    return load_tree_interchange(path)


# ---------------------------------------------------------------------------
# build
# ---------------------------------------------------------------------------

def cmd_build(args) -> int:
    cfg = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    seed = args.seed
    task = args.task
    corpus = Path(args.corpus)
    if not corpus.exists():
        print(f"error: corpus not found: {corpus}", file=sys.stderr)
        return 1

    try:
        if task == tasks.TASK_NSP:
            docs = load_documents(corpus, cfg.get("corpus_format", "jsonl"))
            counts = {int(k): v for k, v in cfg.get("counts_per_context_size", {}).items()} or None
            split = tasks.build_nsp(docs, counts, cfg.get("distractors_per_instance", 3),
                                    seed, cfg.get("split_fractions", tasks.DEFAULT_SPLIT_FRACTIONS))
        elif task == tasks.TASK_ORDERING:
            docs = load_documents(corpus, cfg.get("corpus_format", "jsonl"))
            counts = {int(k): v for k, v in cfg.get("counts_per_n", {}).items()} or None
            split = tasks.build_ordering(docs, counts, seed,
                                         cfg.get("split_fractions", tasks.DEFAULT_SPLIT_FRACTIONS))
        elif task == tasks.TASK_CONNECTIVE:
            pairs = tasks.read_connective_pairs(corpus)
            split = tasks.build_connectives(pairs, cfg.get("min_frequency", 12), seed,
                                            cfg.get("split_fractions", tasks.DEFAULT_SPLIT_FRACTIONS))
        elif task in (tasks.TASK_NUCLEARITY, tasks.TASK_RELATION):
            trees = [binarize(t) for t in _load_trees(corpus)]
            rmap = (RelationMap.from_tsv(cfg["relation_map"]) if "relation_map" in cfg
                    else bundled_relation_map(cfg.get("language", "en")))
            nuc, rel = tasks.build_rst_pairs(trees, rmap, seed,
                                             cfg.get("split_fractions", tasks.DEFAULT_SPLIT_FRACTIONS))
            split = nuc if task == tasks.TASK_NUCLEARITY else rel
        elif task == tasks.TASK_SEGMENTATION:
            trees = _load_trees(corpus)
            if "tokenizer_model" in cfg:
                tokenize = encoder.subword_tokenizer(register_model(cfg["tokenizer_model"]))
            else:
                tokenize = str.split
            split = tasks.build_edu_segmentation(trees, tokenize, cfg.get("max_tokens", 512),
                                                 seed, cfg.get("split_fractions", tasks.DEFAULT_SPLIT_FRACTIONS))
        elif task == tasks.TASK_CLOZE:
            dev = tasks.read_cloze_csv(corpus)
            test = tasks.read_cloze_csv(cfg["test_corpus"]) if "test_corpus" in cfg else []
            split = tasks.build_cloze(dev, test, cfg.get("train_fraction", 0.9), seed)
        else:
            print(f"error: unknown task {task!r}", file=sys.stderr)
            return 1
    except Exception as exc:
        print(f"error building {task}: {exc}", file=sys.stderr)
        return 1

    split.save(args.out)
    print(f"{task}: wrote {split.sizes[0]}/{split.sizes[1]}/{split.sizes[2]} instances to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _record_path(out_dir: Path, model: str, task: str) -> Path:
    return out_dir / f"{model}__{task}.jsonl"


def _existing_cells(path: Path) -> set[tuple[int, int]]:
    if not path.exists():
        return set()
    return {(r.layer, r.seed) for r in load_records(path)}


def cmd_sweep(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    if args.model:
        cfg.models = [args.model]
    if args.task:
        cfg.tasks = [args.task]
    if args.layers:
        cfg.layers = [int(x) for x in args.layers.split(",")]
    if args.seeds:
        cfg.seeds = [int(x) for x in args.seeds.split(",")]
    if args.out:
        cfg.out_dir = args.out

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = FeatureCache(cfg.cache_dir) if cfg.cache_dir else None
    failures = 0

    for model_name in cfg.models:
        try:
            spec = register_model(model_name, encoder.load_registry(cfg.registry))
        except Exception as exc:
            print(f"error: cannot register {model_name}: {exc}", file=sys.stderr)
            failures += 1
            continue
        layers = cfg.layers or list(range(1, spec.num_layers + 1))
        pooling = cfg.pooling.get(model_name)
        for task in cfg.tasks:
            if task not in cfg.datasets:
                print(f"skip {model_name}/{task}: no dataset configured", file=sys.stderr)
                continue
            rec_path = _record_path(out_dir, model_name, task)
            done = _existing_cells(rec_path)
            todo_layers = [l for l in layers if any((l, s) not in done for s in cfg.seeds)]
            if not todo_layers:
                print(f"{model_name}/{task}: complete, skipping")
                continue
            try:
                split = DatasetSplit.load(cfg.datasets[task])
                parts = training.featurize_task(task, split, spec, todo_layers,
                                                pooling, cache, cfg.batch_size)
            except Exception as exc:
                print(f"error featurizing {model_name}/{task}: {exc}", file=sys.stderr)
                failures += 1
                continue
            for layer in todo_layers:
                for seed in cfg.seeds:
                    if (layer, seed) in done:
                        continue
                    try:
                        record, details, history = _run_cell(task, parts, layer, seed, spec, cfg)
                    except Exception as exc:
                        print(f"error on {model_name}/{task} layer {layer} seed {seed}: {exc}",
                              file=sys.stderr)
                        failures += 1
                        continue
                    append_records(rec_path, [record])
                    history_dir = out_dir / "history"
                    history_dir.mkdir(exist_ok=True)
                    training.write_history_csv(
                        history_dir / f"{model_name}__{task}__layer{layer}__seed{seed}.csv",
                        history)
                    if details:
                        save_ordering_details(out_dir / f"{model_name}__ordering_detail.jsonl", details)
                    print(f"{model_name}/{task} layer {layer} seed {seed}: "
                          f"{record.metric_name}={record.value:.4f} ({record.epochs_trained} epochs)")
    return 1 if failures else 0


def _run_cell(task, parts, layer, seed, spec, cfg: ExperimentConfig):
    train_data = parts["train"][layer]
    dev_data = parts["dev"][layer]
    test_data = parts["test"][layer]
    for name, data in (("train", train_data), ("dev", dev_data), ("test", test_data)):
        if data is None:
            raise training.TrainingError(f"{task} has an empty {name} split")
    pc = training.probe_config_for(task, train_data, seed)
    tc = training.train_config_for_task(task, **cfg.train)
    result = training.train_probe(train_data, dev_data, pc, tc,
                                  cfg.decode_mode, spec.name, layer)
    record, details = training.evaluate(result.head, test_data, spec.name, layer,
                                        seed, cfg.decode_mode)
    record = RunRecord(record.model, record.layer, record.task, record.seed,
                       record.metric_name, record.value,
                       result.record.epochs_trained, result.record.wall_time_s,
                       layer_kind=spec.layer_kind(layer))
    return record, details, result.history


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------

def _collect_records(records_path) -> list[RunRecord]:
    path = Path(records_path)
    if path.is_dir():
        records = []
        for fp in sorted(path.glob("*__*.jsonl")):
            if "detail" not in fp.name:
                records.extend(load_records(fp))
        return records
    return load_records(path)


def _matrix_from_args(args) -> ScoreMatrix:
    path = Path(args.records)
    if path.suffix == ".csv":
        return ScoreMatrix.from_csv(path)
    return ScoreMatrix.from_records(_collect_records(path))


_TASK_TITLES = {
    tasks.TASK_NSP: "Next sentence prediction",
    tasks.TASK_ORDERING: "Sentence ordering",
    tasks.TASK_CONNECTIVE: "Discourse connectives",
    tasks.TASK_NUCLEARITY: "Nuclearity",
    tasks.TASK_RELATION: "Relations",
    tasks.TASK_SEGMENTATION: "EDU segmentation",
    tasks.TASK_CLOZE: "Cloze story test",
}


def plot_curves(matrix: ScoreMatrix, out_base: Path, models: list[str] | None = None,
                with_average: bool = True) -> list[Path]:
    """Per-task score-vs-layer curves (plus the normalized average panel)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    task_list = [t for t in _TASK_TITLES if t in matrix.scores]
    panels = len(task_list) + (1 if with_average else 0)
    ncols = 4
    nrows = (panels + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(4 * ncols, 3 * nrows), squeeze=False)
    flat = [ax for row in axes for ax in row]
    for ax in flat[panels:]:
        ax.axis("off")

    model_list = models or matrix.models
    for ax, task in zip(flat, task_list):
        frame = matrix.scores[task]
        sd = matrix.sds.get(task)
        for model in model_list:
            if model not in frame.index:
                continue
            xs = list(frame.columns)
            ys = frame.loc[model].values
            err = sd.loc[model].values if sd is not None and model in sd.index else None
            ax.errorbar(xs, ys, yerr=err, marker="o", markersize=3, capsize=2, label=model)
        ax.set_title(_TASK_TITLES[task])
        ax.set_xlabel("layer")
    if with_average:
        ax = flat[len(task_list)]
        avg = aggregate(matrix)
        for model in model_list:
            if model in avg.index:
                ax.plot(list(avg.columns), avg.loc[model].values, marker="o", markersize=3, label=model)
        ax.set_title("Normalized average")
        ax.set_xlabel("layer")
    flat[0].legend(fontsize=7)
    fig.tight_layout()
    return _save_figure(fig, out_base)


def plot_average(matrix: ScoreMatrix, out_base: Path) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    avg = aggregate(matrix)
    fig, ax = plt.subplots(figsize=(6, 4))
    for model in avg.index:
        ax.plot(list(avg.columns), avg.loc[model].values, marker="o", markersize=3, label=model)
    ax.set_xlabel("layer")
    ax.set_ylabel("min-max normalized average")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save_figure(fig, out_base)


def plot_breakdown(details_by_model: dict[str, list], out_base: Path) -> list[Path]:
    """Mean ordering rho per sentence count at each model's best layer."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for model, details in sorted(details_by_model.items()):
        _, best_layer, by_n = metrics.ordering_breakdown(details, model)
        ns = sorted(by_n)
        ax.plot(ns, [by_n[n] for n in ns], marker="o", label=f"{model} (layer {best_layer})")
    ax.set_xlabel("sentences to reorder")
    ax.set_ylabel("mean Spearman rho")
    ax.set_xticks(sorted({x.n for d in details_by_model.values() for x in d}))
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save_figure(fig, out_base)


def _save_figure(fig, out_base: Path) -> list[Path]:
    out_base.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for ext in ("svg", "png"):
        p = out_base.with_suffix(f".{ext}")
        fig.savefig(p, dpi=150)
        paths.append(p)
    import matplotlib.pyplot as plt
    plt.close(fig)
    return paths


def cmd_plot(args) -> int:
    out = Path(args.out)
    try:
        if args.kind == "breakdown":
            path = Path(args.records)
            files = sorted(path.glob("*__ordering_detail.jsonl")) if path.is_dir() else [path]
            if not files:
                print("error: no ordering detail files found", file=sys.stderr)
                return 1
            details = {}
            for fp in files:
                model = fp.name.split("__")[0]
                details.setdefault(model, []).extend(load_ordering_details(fp))
            written = plot_breakdown(details, out / "ordering_breakdown")
        else:
            matrix = _matrix_from_args(args)
            if args.kind == "curves":
                written = plot_curves(matrix, out / "task_curves")
            elif args.kind == "average":
                written = plot_average(matrix, out / "normalized_average")
            elif args.kind == "models":
                # per-task comparison only: the model subset may not cover
                # every task, which the normalized average would reject
                models = args.model.split(",") if args.model else None
                written = plot_curves(matrix, out / "model_comparison",
                                      models=models, with_average=False)
            else:
                print(f"error: unknown plot kind {args.kind!r}", file=sys.stderr)
                return 1
    except metrics.MetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for p in written:
        print(f"wrote {p}")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def build_report(matrix: ScoreMatrix) -> str:
    """Markdown report: per-task best layers and the normalized-average ranking."""
    lines = ["# Probing report", ""]
    if not matrix.scores:
        return "# Probing report\n\nNo records found.\n"
    lines.append("## Best layer per task")
    lines.append("")
    lines.append("| model | " + " | ".join(matrix.tasks) + " |")
    lines.append("|---" * (len(matrix.tasks) + 1) + "|")
    for model in matrix.models:
        cells = []
        for task in matrix.tasks:
            frame = matrix.scores[task]
            if model in frame.index:
                layer = frame.loc[model].idxmax()
                cells.append(f"{int(layer)} ({frame.loc[model, layer]:.2f})")
            else:
                cells.append("-")
        lines.append(f"| {model} | " + " | ".join(cells) + " |")
    lines.append("")

    avg = aggregate(matrix)
    lines.append("## Normalized average")
    lines.append("")
    ranking = avg.mean(axis=1).sort_values(ascending=False)
    lines.append("| model | mean over layers | best layer |")
    lines.append("|---|---|---|")
    for model, value in ranking.items():
        best = avg.loc[model].idxmax()
        lines.append(f"| {model} | {value:.3f} | {int(best)} ({avg.loc[model, best]:.3f}) |")
    gmodel = avg.max(axis=1).idxmax()
    glayer = avg.loc[gmodel].idxmax()
    lines.append("")
    lines.append(f"Global maximum of the normalized average: {gmodel} layer {int(glayer)} "
                 f"({avg.loc[gmodel, glayer]:.3f}).")
    lines.append("")
    return "\n".join(lines)


def cmd_report(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        matrix = _matrix_from_args(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not matrix.scores:
        print("warning: no records; writing an empty report", file=sys.stderr)
    (out / "report.md").write_text(build_report(matrix), encoding="utf-8")
    matrix.to_csv(out / "scores.csv")
    if matrix.scores:
        aggregate(matrix).to_csv(out / "normalized_average.csv")
    print(f"wrote {out / 'report.md'}")
    return 0


# ---------------------------------------------------------------------------
# synth (demo corpora)
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    docs = synth.synthetic_documents(args.docs, seed=args.seed)
    with open(out, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps({"id": d.id, "sentences": list(d.sentences)}) + "\n")
    print(f"wrote {len(docs)} documents to {out}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="discoprobe",
                                     description="Layer-wise discourse probing harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a probing dataset from a corpus")
    p.add_argument("--task", required=True, choices=ALL_TASKS)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--config", help="JSON with builder options")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("sweep", help="train probes over models x layers x tasks x seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--model")
    p.add_argument("--task", choices=ALL_TASKS)
    p.add_argument("--layers", help="comma-separated layer indices")
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render figures from run records")
    p.add_argument("--records", required=True, help="records dir, JSONL, or scores CSV")
    p.add_argument("--kind", default="curves",
                   choices=["curves", "average", "breakdown", "models"])
    p.add_argument("--model", help="comma-separated models for kind=models")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("report", help="write a markdown/CSV summary")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="generate a synthetic demo corpus")
    p.add_argument("--docs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
