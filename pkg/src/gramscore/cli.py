"""Command-line pipeline: extract features, calibrate, transform, train,
evaluate, and aggregate reports.

Every stage persists its output with the content hashes of the inputs it
was derived from, and ``report`` refuses to aggregate artifacts whose
hashes disagree. Re-running a stage with identical inputs and seed writes
byte-identical output.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import error_features as ef
from . import irt as irt_mod
from . import profiler as profiler_mod
from .embeddings import read_embeddings
from .evaluation import EvaluationReport, HarnessConfig, PipelineData, cross_validate
from .scorer import (
    TrainConfig,
    build_model,
    save_model,
    standardize_abilities,
    train as train_model,
)
from .tables import file_sha256, read_table, write_table
from .weighting import TransformSpec, apply_transform


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract is 1
        raise UsageError(message)


def _hash_inputs(**paths: str | None) -> dict[str, str]:
    return {name: file_sha256(p) for name, p in paths.items() if p is not None}


def _mapping_from_args(args) -> corpus_mod.ColumnMapping:
    return corpus_mod.ColumnMapping(
        essay_id=args.col_id,
        prompt_id=args.col_prompt,
        text=args.col_text,
        score=args.col_score,
        grammar_score=args.col_grammar,
    )


def _add_corpus_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", required=True, help="tab-separated corpus file")
    p.add_argument("--col-id", default="essay_id")
    p.add_argument("--col-prompt", default="essay_set")
    p.add_argument("--col-text", default="essay")
    p.add_argument("--col-score", default="domain1_score")
    p.add_argument("--col-grammar", default=None, help="grammar-score column, if any")


def _load_corpus_for_prompt(args) -> list[corpus_mod.Essay]:
    essays = corpus_mod.load_corpus(args.corpus, _mapping_from_args(args))
    prompts = sorted({e.prompt_id for e in essays})
    wanted = getattr(args, "prompt", None)
    if wanted is not None:
        essays = [e for e in essays if e.prompt_id == wanted]
        if not essays:
            raise ValueError(f"no essays for prompt {wanted} in {args.corpus}")
    elif len(prompts) > 1:
        raise ValueError(f"corpus holds prompts {prompts}; select one with --prompt")
    return essays


def _cmd_extract_pf(args) -> int:
    essays = _load_corpus_for_prompt(args)
    if args.catalog:
        catalog = profiler_mod.compile_catalog(args.catalog, args.lexicon)
    else:
        catalog = profiler_mod.default_catalog()
    rows = []
    for essay in essays:
        counts = profiler_mod.count_items(essay.tokens, catalog)
        rows.append(counts if args.counts else profiler_mod.binarize(counts).values)
    meta = {
        "kind": "pf_counts" if args.counts else "pf_binary",
        "catalog_sha256": catalog.content_hash,
        **{f"input_{k}_sha256": v for k, v in _hash_inputs(corpus=args.corpus, catalog=args.catalog, lexicon=args.lexicon).items()},
    }
    write_table(
        args.out,
        [e.essay_id for e in essays],
        np.array(rows, dtype=np.float64),
        [f"g{j}" for j in range(catalog.size)],
        meta,
    )
    print(f"extract-pf: {len(essays)} essays x {catalog.size} items -> {args.out}")
    return 0


def _cmd_extract_nf(args) -> int:
    essays = _load_corpus_for_prompt(args)
    vocab = ef.load_vocabulary(args.vocab) if args.vocab else ef.default_vocabulary()
    blocks = ef.parse_m2(args.m2)
    grouped = ef.edits_by_essay(blocks, [e.essay_id for e in essays])
    dropped: Counter = Counter()
    rows = []
    for essay in essays:
        edits = grouped.get(essay.essay_id, [])
        rows.append(ef.extract_nf(edits, essay.word_count, vocab, dropped).values)
    if dropped:
        print(
            f"warning: dropped {sum(dropped.values())} edits with tags outside "
            f"the vocabulary: {dict(dropped)}",
            file=sys.stderr,
        )
    meta = {
        "kind": "nf_rates",
        **{f"input_{k}_sha256": v for k, v in _hash_inputs(corpus=args.corpus, m2=args.m2, vocab=args.vocab).items()},
    }
    write_table(
        args.out,
        [e.essay_id for e in essays],
        np.array(rows, dtype=np.float64),
        [f"e{t}" for t in range(len(vocab))],
        meta,
    )
    print(f"extract-nf: {len(essays)} essays x {len(vocab)} tags -> {args.out}")
    return 0


def _cmd_fit_irt(args) -> int:
    ids, matrix, _, pf_meta = read_table(args.pf)
    if not np.isin(matrix, (0.0, 1.0)).all():
        raise ValueError(f"{args.pf}: IRT calibration needs a binary PF table")
    config = irt_mod.IrtConfig(
        D=args.d_scale,
        n_nodes=args.nodes,
        node_range=args.node_range,
        max_iterations=args.max_iterations,
        tolerance=args.tolerance,
    )
    response = irt_mod.ResponseMatrix(
        data=matrix.astype(np.int8),
        row_ids=tuple(ids),
        col_ids=tuple(range(matrix.shape[1])),
    )
    fit = irt_mod.fit_2pl(response, config)
    inputs = _hash_inputs(pf=args.pf)
    doc = {
        "config": {
            "D": config.D,
            "n_nodes": config.n_nodes,
            "node_range": config.node_range,
            "max_iterations": config.max_iterations,
            "tolerance": config.tolerance,
            "a_min": config.a_min,
            "a_max": config.a_max,
        },
        "inputs": {f"{k}_sha256": v for k, v in inputs.items()},
        "catalog_sha256": pf_meta.get("catalog_sha256"),
        "converged": fit.converged,
        "n_iterations": fit.n_iterations,
        "trace": fit.trace,
        "items": [
            {"item_id": it.item_id, "a": it.a, "b": it.b, "status": it.status}
            for it in fit.items
        ],
    }
    Path(args.out).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", "utf-8")
    if args.abilities:
        estimates = irt_mod.estimate_abilities(response, fit.items, config)
        write_table(
            args.abilities,
            list(ids),
            np.array([[e.theta, e.posterior_sd] for e in estimates]),
            ["theta", "posterior_sd"],
            {"kind": "abilities", "input_pf_sha256": inputs["pf"]},
        )
    n_cal = sum(1 for it in fit.items if it.calibrated)
    print(
        f"fit-irt: {len(ids)} writers, {n_cal}/{len(fit.items)} items calibrated, "
        f"converged={fit.converged} ({fit.n_iterations} iterations) -> {args.out}"
    )
    return 0


def _read_items(path: str) -> list[irt_mod.ItemParameters]:
    doc = json.loads(Path(path).read_text("utf-8"))
    return [
        irt_mod.ItemParameters(
            item_id=e["item_id"], a=e["a"], b=e["b"], status=e["status"]
        )
        for e in doc["items"]
    ]


def _cmd_transform(args) -> int:
    ids, matrix, _, pf_meta = read_table(args.pf)
    items = _read_items(args.items) if args.items else None
    spec = TransformSpec(mode=args.mode, alpha=args.alpha, D=args.d_scale)
    thetas: dict[str, float] = {}
    if args.abilities:
        a_ids, a_matrix, a_cols, _ = read_table(args.abilities)
        thetas = {eid: a_matrix[i, a_cols.index("theta")] for i, eid in enumerate(a_ids)}
    rows = []
    for i, eid in enumerate(ids):
        g = profiler_mod.PFVector(values=matrix[i], binary=True)
        theta = None
        if spec.mode in ("prob", "multiply_prob", "add_prob"):
            if eid not in thetas:
                raise ValueError(
                    f"mode '{spec.mode}' needs an ability for every essay; none for '{eid}' "
                    f"(pass --abilities)"
                )
            theta = irt_mod.AbilityEstimate(theta=float(thetas[eid]), posterior_sd=1.0)
        rows.append(apply_transform(g, items, theta, spec))
    meta = {
        "kind": f"pf_{spec.mode}",
        "mode": spec.mode,
        "alpha": repr(spec.alpha),
        "D": repr(spec.D),
        "catalog_sha256": pf_meta.get("catalog_sha256", "unknown"),
        **{f"input_{k}_sha256": v for k, v in _hash_inputs(pf=args.pf, items=args.items, abilities=args.abilities).items()},
    }
    write_table(args.out, list(ids), np.array(rows), [f"g{j}" for j in range(matrix.shape[1])], meta)
    print(f"transform: mode={spec.mode} alpha={spec.alpha} -> {args.out}")
    return 0


def _assemble_pipeline_data(args, need_aux: bool) -> tuple[PipelineData, list, dict]:
    essays = _load_corpus_for_prompt(args)
    prompt = essays[0].prompt_id
    scales = corpus_mod.load_scales(args.scales)
    if prompt not in scales:
        raise ValueError(f"no score scale configured for prompt {prompt}")
    scale = scales[prompt]
    folds = corpus_mod.load_folds(args.folds)
    corpus_mod.validate_folds(folds, {e.essay_id for e in essays})

    feat_ids, feat_matrix, _, feat_meta = read_table(args.features)
    feat_index = {eid: i for i, eid in enumerate(feat_ids)}
    table = read_embeddings(args.embeddings)
    missing_f = [e.essay_id for e in essays if e.essay_id not in feat_index]
    if missing_f:
        raise ValueError(f"feature table lacks essays, e.g. {missing_f[:3]}")
    features = np.array([feat_matrix[feat_index[e.essay_id]] for e in essays])
    embeddings = np.array([table.row_for(e.essay_id) for e in essays], dtype=np.float64)
    raw_scores = np.array([e.raw_score for e in essays], dtype=np.int64)
    for e in essays:
        corpus_mod.normalize_score(e.raw_score, scale)  # range check up front

    aux_targets = aux_raw = aux_scale = None
    if need_aux:
        if args.aux == "human":
            if args.grammar_scales is None:
                raise ValueError("--aux human needs --grammar-scales")
            g_scales = corpus_mod.load_scales(args.grammar_scales)
            if prompt not in g_scales:
                raise ValueError(f"no grammar scale configured for prompt {prompt}")
            aux_scale = g_scales[prompt]
            missing = [e.essay_id for e in essays if e.grammar_score is None]
            if missing:
                raise ValueError(
                    f"--aux human needs a grammar score for every essay; "
                    f"missing for {missing[:3]} (set --col-grammar)"
                )
            aux_raw = np.array([e.grammar_score for e in essays], dtype=np.int64)
            aux_targets = np.array(
                [corpus_mod.normalize_score(int(s), aux_scale) for s in aux_raw]
            )
        elif args.aux == "irt":
            if args.abilities is None:
                raise ValueError("--aux irt needs --abilities")
            a_ids, a_matrix, a_cols, _ = read_table(args.abilities)
            col = a_cols.index("theta")
            theta_by_id = {eid: a_matrix[i, col] for i, eid in enumerate(a_ids)}
            missing = [e.essay_id for e in essays if e.essay_id not in theta_by_id]
            if missing:
                raise ValueError(f"abilities table lacks essays, e.g. {missing[:3]}")
            standardized = standardize_abilities(a_matrix[:, col])
            std_by_id = dict(zip(a_ids, standardized))
            aux_targets = np.array([std_by_id[e.essay_id] for e in essays])
        else:
            raise ValueError(f"architecture '{args.arch}' needs --aux human or --aux irt")

    data = PipelineData(
        essay_ids=tuple(e.essay_id for e in essays),
        embeddings=embeddings,
        features=features,
        raw_scores=raw_scores,
        scale=scale,
        aux_targets=aux_targets,
        aux_raw_scores=aux_raw,
        aux_scale=aux_scale,
    )
    inputs = _hash_inputs(
        corpus=args.corpus,
        scales=args.scales,
        folds=args.folds,
        features=args.features,
        embeddings=args.embeddings,
        grammar_scales=getattr(args, "grammar_scales", None),
        abilities=getattr(args, "abilities", None),
    )
    inputs["features_kind"] = feat_meta.get("kind", "unknown")
    return data, folds, inputs


def _cmd_train(args) -> int:
    from .evaluation import subset_dataset

    need_aux = args.arch in ("multi", "dual")
    data, folds, inputs = _assemble_pipeline_data(args, need_aux)
    fold = next((f for f in folds if f.fold_index == args.fold), None)
    if fold is None:
        raise ValueError(f"fold {args.fold} not present in {args.folds}")
    model = build_model(
        args.arch,
        embedding_dim=data.embeddings.shape[1],
        feature_dim=data.features.shape[1],
        top_width=args.top_width,
        top_depth=args.top_depth,
        dropout_rate=args.dropout,
        seed=args.seed,
    )
    config = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        main_loss_weight=args.main_loss_weight if need_aux else 1.0,
        seed=args.seed,
    )
    history = train_model(
        model,
        subset_dataset(data, fold.train),
        config,
        dev_set=subset_dataset(data, fold.dev),
        scale=data.scale,
    )
    run_config = {
        "architecture": args.arch,
        "aux": args.aux,
        "fold": args.fold,
        "seed": args.seed,
        "batch_size": args.batch_size,
        "epochs": args.epochs,
        "learning_rate": args.lr,
        "main_loss_weight": config.main_loss_weight,
        "top_width": args.top_width,
        "top_depth": model.top_depth,
        "dropout": args.dropout,
    }
    header_extra = {
        "inputs": {f"{k}_sha256" if not k.endswith("kind") else k: v for k, v in inputs.items()},
        "run_config": run_config,
    }
    save_model(model, args.out, header_extra)
    if args.history:
        doc = {"run_config": run_config, "inputs": header_extra["inputs"], "epochs": history}
        Path(args.history).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", "utf-8")
    print(
        f"train: arch={args.arch} fold={args.fold} seed={args.seed} "
        f"batch={args.batch_size} final dev QWK {history[-1]['dev_qwk']:.4f} -> {args.out}"
    )
    return 0


def _cmd_evaluate(args) -> int:
    need_aux = args.arch in ("multi", "dual")
    data, folds, inputs = _assemble_pipeline_data(args, need_aux)
    config = HarnessConfig(
        architecture=args.arch,
        batch_sizes=tuple(int(b) for b in args.batch_sizes.split(",")),
        seeds=tuple(int(s) for s in args.seeds.split(",")),
        base_train=TrainConfig(
            learning_rate=args.lr,
            epochs=args.epochs,
            main_loss_weight=args.main_loss_weight if need_aux else 1.0,
        ),
        top_width=args.top_width,
        top_depth=args.top_depth,
        dropout_rate=args.dropout,
        use_aux=need_aux,
        jobs=args.jobs,
    )
    report = cross_validate(data, folds, config)
    doc = {
        "architecture": args.arch,
        "aux": args.aux,
        "inputs": {f"{k}_sha256" if not k.endswith("kind") else k: v for k, v in inputs.items()},
        "harness": {
            "batch_sizes": list(config.batch_sizes),
            "seeds": list(config.seeds),
            "epochs": args.epochs,
            "learning_rate": args.lr,
            "main_loss_weight": config.base_train.main_loss_weight,
            "top_width": args.top_width,
            "top_depth": args.top_depth,
            "dropout": args.dropout,
        },
        "report": report.to_dict(),
    }
    Path(args.out).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", "utf-8")
    if args.confusion_tsv:
        _write_confusion_tsv(args.confusion_tsv, report, data.scale.min_score)
    agg = report.aggregate
    print(
        f"evaluate: arch={args.arch} cells={agg.get('n_cells')} "
        f"mean test QWK {agg.get('mean_test_qwk', float('nan')):.4f} -> {args.out}"
    )
    return 0


def _write_confusion_tsv(path: str, report: EvaluationReport, min_score: int) -> None:
    m = report.confusion_total.shape[0]
    labels = [str(min_score + i) for i in range(m)]
    lines = ["\t".join(["ref\\hyp", *labels])]
    for i, row in enumerate(report.confusion_total):
        lines.append("\t".join([labels[i], *(str(int(v)) for v in row)]))
    Path(path).write_text("\n".join(lines) + "\n", "utf-8")


def _cmd_report(args) -> int:
    docs = []
    for path in args.inputs:
        docs.append((path, json.loads(Path(path).read_text("utf-8"))))
    shared: dict[str, str] = {}
    for path, doc in docs:
        for key, value in doc.get("inputs", {}).items():
            if not key.endswith("_sha256"):
                continue
            if key in shared and shared[key] != value:
                raise ValueError(
                    f"refusing to aggregate: {path} was built from a different "
                    f"'{key.removesuffix('_sha256')}' input (hash mismatch)"
                )
            shared.setdefault(key, value)
    summary = {"inputs": shared, "runs": []}
    total = None
    for path, doc in docs:
        rep = doc["report"]
        summary["runs"].append(
            {
                "path": path,
                "architecture": doc.get("architecture"),
                "aux": doc.get("aux"),
                "aggregate": rep["aggregate"],
            }
        )
        grid = np.array(rep["confusion_total"], dtype=np.int64)
        if total is None:
            total = grid
        elif grid.shape == total.shape:
            total = total + grid
        else:
            raise ValueError(f"{path}: confusion matrix shape {grid.shape} differs")
    summary["confusion_total"] = total.tolist() if total is not None else []
    Path(args.out).write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n", "utf-8")
    print(f"report: aggregated {len(docs)} run(s) -> {args.out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="gramscore", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-pf", help="positive grammatical-item features")
    _add_corpus_flags(p)
    p.add_argument("--prompt", type=int, default=None)
    p.add_argument("--catalog", default=None, help="catalog JSON (default: built-in demo)")
    p.add_argument("--lexicon", default=None, help="closed-class lexicon JSON")
    p.add_argument("--counts", action="store_true", help="write raw counts instead of indicators")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract_pf)

    p = sub.add_parser("extract-nf", help="error rates per 100 words from M2 annotations")
    _add_corpus_flags(p)
    p.add_argument("--prompt", type=int, default=None)
    p.add_argument("--m2", required=True)
    p.add_argument("--vocab", default=None, help="error-tag vocabulary JSON (default: err54)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract_nf)

    p = sub.add_parser("fit-irt", help="calibrate the 2PL model on a binary PF table")
    p.add_argument("--pf", required=True)
    p.add_argument("--out", required=True, help="items JSON")
    p.add_argument("--abilities", default=None, help="per-writer ability TSV")
    p.add_argument("--d-scale", type=float, default=1.0)
    p.add_argument("--nodes", type=int, default=61)
    p.add_argument("--node-range", type=float, default=6.0)
    p.add_argument("--max-iterations", type=int, default=200)
    p.add_argument("--tolerance", type=float, default=1e-7)
    p.set_defaults(func=_cmd_fit_irt)

    p = sub.add_parser("transform", help="weight PF vectors with IRT parameters")
    p.add_argument("--pf", required=True)
    p.add_argument("--items", default=None)
    p.add_argument("--abilities", default=None)
    p.add_argument("--mode", default="identity", choices=["identity", "multiply_b", "prob", "multiply_prob", "add_prob"])
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--d-scale", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_transform)

    for name in ("train", "evaluate"):
        p = sub.add_parser(name)
        _add_corpus_flags(p)
        p.add_argument("--prompt", type=int, default=None)
        p.add_argument("--scales", required=True)
        p.add_argument("--grammar-scales", default=None)
        p.add_argument("--folds", required=True)
        p.add_argument("--features", required=True)
        p.add_argument("--embeddings", required=True)
        p.add_argument("--abilities", default=None)
        p.add_argument("--arch", required=True, choices=["baseline", "cat", "net", "multi", "dual"])
        p.add_argument("--aux", default="none", choices=["none", "human", "irt"])
        p.add_argument("--lr", type=float, default=1e-5)
        p.add_argument("--epochs", type=int, default=10)
        p.add_argument("--main-loss-weight", type=float, default=0.8)
        p.add_argument("--top-width", type=int, default=512)
        p.add_argument("--top-depth", type=int, default=None)
        p.add_argument("--dropout", type=float, default=0.2)
        if name == "train":
            p.add_argument("--fold", type=int, default=0)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--batch-size", type=int, default=8)
            p.add_argument("--out", required=True, help="model file")
            p.add_argument("--history", default=None, help="per-epoch history JSON")
            p.set_defaults(func=_cmd_train)
        else:
            p.add_argument("--batch-sizes", default="4,8,16,32")
            p.add_argument("--seeds", default="1,2,3")
            p.add_argument("--jobs", type=int, default=1)
            p.add_argument("--out", required=True, help="report JSON")
            p.add_argument("--confusion-tsv", default=None)
            p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="aggregate evaluation reports")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    parser.sub_by_name = {name: sp for name, sp in sub.choices.items()}
    return parser


def _apply_config_file(parser: _Parser, argv: list[str]) -> list[str]:
    """--config run.json sets defaults; explicit flags still win.

    Defaults must land on the subcommand's parser: argparse subparsers
    parse into a fresh namespace, so main-parser defaults would be
    clobbered.
    """
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise UsageError("--config needs a file argument")
    config_path = argv[idx + 1]
    argv = argv[:idx] + argv[idx + 2 :]
    overrides = json.loads(Path(config_path).read_text("utf-8"))
    if not isinstance(overrides, dict):
        raise UsageError(f"{config_path}: config must be a JSON object")
    defaults = {k.replace("-", "_"): v for k, v in overrides.items()}
    parser.set_defaults(**defaults)
    if argv and argv[0] in getattr(parser, "sub_by_name", {}):
        parser.sub_by_name[argv[0]].set_defaults(**defaults)
    return argv


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, RuntimeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
