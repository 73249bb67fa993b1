"""Quadratic weighted kappa, confusion matrices, and the cross-validation
harness with dev-set batch-size selection."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import FoldAssignment, ScoreScale, denormalize_prediction, normalize_score
from .scorer import (
    ScoringDataset,
    TrainConfig,
    build_model,
    forward,
    predict,
    train,
)


def _check_pair(reference, hypothesis, min_score: int, max_score: int):
    ref = np.asarray(reference, dtype=np.int64)
    hyp = np.asarray(hypothesis, dtype=np.int64)
    if ref.ndim != 1 or ref.shape != hyp.shape:
        raise ValueError(f"reference and hypothesis must match: {ref.shape} vs {hyp.shape}")
    if ref.size == 0:
        raise ValueError("need at least one pair")
    for name, arr in (("reference", ref), ("hypothesis", hyp)):
        if arr.min() < min_score or arr.max() > max_score:
            raise ValueError(f"{name} contains values outside [{min_score}, {max_score}]")
    return ref, hyp


def confusion_matrix(reference, hypothesis, min_score: int, max_score: int) -> np.ndarray:
    """Count matrix with reference on rows and hypothesis on columns."""
    ref, hyp = _check_pair(reference, hypothesis, min_score, max_score)
    m = max_score - min_score + 1
    counts = np.zeros((m, m), dtype=np.int64)
    np.add.at(counts, (ref - min_score, hyp - min_score), 1)
    return counts


def qwk(reference, hypothesis, min_score: int, max_score: int) -> float:
    """Quadratic weighted kappa over an integer score range.

    Observed and expected matrices are both normalized to total mass 1 (the
    ratio is identical to the raw-count form, but better conditioned).
    Perfect agreement returns exactly 1; a fully degenerate expected matrix
    is defined as 0.
    """
    ref, hyp = _check_pair(reference, hypothesis, min_score, max_score)
    if np.array_equal(ref, hyp):
        return 1.0
    m = max_score - min_score + 1
    observed = confusion_matrix(ref, hyp, min_score, max_score) / ref.size
    grid = np.arange(m, dtype=np.float64)
    weights = (grid[:, None] - grid[None, :]) ** 2 / (m - 1) ** 2
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0))
    denom = float((weights * expected).sum())
    if denom == 0.0:
        return 0.0
    return 1.0 - float((weights * observed).sum()) / denom


@dataclass(frozen=True)
class PipelineData:
    """Everything one prompt's experiment needs, aligned by position."""

    essay_ids: tuple[str, ...]
    embeddings: np.ndarray  # (N, d)
    features: np.ndarray  # (N, K)
    raw_scores: np.ndarray  # (N,) integers
    scale: ScoreScale
    aux_targets: np.ndarray | None = None  # (N,) normalized aux labels
    aux_raw_scores: np.ndarray | None = None  # (N,) integer grammar scores
    aux_scale: ScoreScale | None = None

    def index_of(self) -> dict[str, int]:
        return {eid: i for i, eid in enumerate(self.essay_ids)}


def subset_dataset(data: PipelineData, ids: frozenset[str]) -> ScoringDataset:
    """Slice one split out of the pipeline data, keeping corpus order."""
    index = data.index_of()
    missing = [i for i in ids if i not in index]
    if missing:
        raise ValueError(f"fold references unknown essay ids, e.g. {missing[:3]}")
    rows = sorted(index[i] for i in ids)
    targets = np.array([normalize_score(int(s), data.scale) for s in data.raw_scores[rows]])
    return ScoringDataset(
        essay_ids=[data.essay_ids[r] for r in rows],
        embeddings=data.embeddings[rows],
        features=data.features[rows],
        targets=targets,
        aux_targets=None if data.aux_targets is None else data.aux_targets[rows],
    )


@dataclass(frozen=True)
class HarnessConfig:
    architecture: str
    batch_sizes: tuple[int, ...] = (4, 8, 16, 32)
    seeds: tuple[int, ...] = (1, 2, 3)
    base_train: TrainConfig = field(default_factory=TrainConfig)
    top_width: int = 512
    top_depth: int | None = None
    dropout_rate: float = 0.2
    use_aux: bool = False
    jobs: int = 1


@dataclass
class EvaluationReport:
    architecture: str
    cells: list[dict]
    aggregate: dict
    confusion_total: np.ndarray

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "cells": self.cells,
            "aggregate": self.aggregate,
            "confusion_total": self.confusion_total.tolist(),
        }


def _run_cell(args) -> dict:
    """Train one (fold, seed, batch size) candidate and score the dev set."""
    data, config, fold, seed, batch_size = args
    train_set = subset_dataset(data, fold.train)
    dev_set = subset_dataset(data, fold.dev)
    use_aux = config.use_aux and data.aux_targets is not None
    model = build_model(
        config.architecture,
        embedding_dim=data.embeddings.shape[1],
        feature_dim=data.features.shape[1],
        top_width=config.top_width,
        top_depth=config.top_depth,
        dropout_rate=config.dropout_rate,
        seed=seed,
    )
    if not use_aux and model.has_aux:
        raise ValueError(
            f"architecture '{config.architecture}' needs auxiliary labels; none supplied"
        )
    train_config = replace(config.base_train, batch_size=batch_size, seed=seed)
    if not model.has_aux:
        train_config = replace(train_config, main_loss_weight=1.0)
    history = train(model, train_set, train_config, dev_set=dev_set, scale=data.scale)
    return {
        "fold": fold.fold_index,
        "seed": seed,
        "batch_size": batch_size,
        "dev_qwk": history[-1]["dev_qwk"],
        "history": history,
        "model": model,
    }


def _evaluate_on_test(data: PipelineData, fold: FoldAssignment, cell: dict) -> dict:
    test_set = subset_dataset(data, fold.test)
    model = cell["model"]
    refs = []
    preds = []
    index = data.index_of()
    for eid, emb, feats in zip(test_set.essay_ids, test_set.embeddings, test_set.features):
        refs.append(int(data.raw_scores[index[eid]]))
        preds.append(predict(model, emb, feats, data.scale))
    result = {
        "fold": cell["fold"],
        "seed": cell["seed"],
        "batch_size": cell["batch_size"],
        "dev_qwk": cell["dev_qwk"],
        "test_qwk": qwk(refs, preds, data.scale.min_score, data.scale.max_score),
        "confusion": confusion_matrix(
            refs, preds, data.scale.min_score, data.scale.max_score
        ).tolist(),
        "history": cell["history"],
    }
    if model.has_aux and data.aux_raw_scores is not None and data.aux_scale is not None:
        aux_refs = []
        aux_preds = []
        for eid, emb, feats in zip(test_set.essay_ids, test_set.embeddings, test_set.features):
            aux_refs.append(int(data.aux_raw_scores[index[eid]]))
            _, aux, _ = forward(model, emb, feats, train=False)
            aux_preds.append(denormalize_prediction(float(aux[0]), data.aux_scale))
        result["aux_qwk"] = qwk(
            aux_refs, aux_preds, data.aux_scale.min_score, data.aux_scale.max_score
        )
    return result


def cross_validate(
    data: PipelineData, folds: list[FoldAssignment], config: HarnessConfig
) -> EvaluationReport:
    """Batch-size selection on dev QWK, then test evaluation, per fold and
    seed; ties go to the smallest batch size.

    Training failures mark their cell failed and the sweep continues. Cells
    run in parallel when ``config.jobs`` > 1; the merge is a deterministic
    ordered reduction, so job count never changes the report.
    """
    jobs = []
    for fold in folds:
        for seed in config.seeds:
            for batch_size in sorted(config.batch_sizes):
                jobs.append((data, config, fold, seed, batch_size))
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            raw = list(pool.map(_run_cell_safe, jobs))
    else:
        raw = [_run_cell_safe(j) for j in jobs]

    by_fold = {f.fold_index: f for f in folds}
    grouped: dict[tuple[int, int], list[dict]] = {}
    for cell in raw:
        grouped.setdefault((cell["fold"], cell["seed"]), []).append(cell)

    cells = []
    scale = data.scale
    m = scale.max_score - scale.min_score + 1
    confusion_total = np.zeros((m, m), dtype=np.int64)
    for key in sorted(grouped):
        candidates = [c for c in grouped[key] if "error" not in c]
        failed = [c for c in grouped[key] if "error" in c]
        if not candidates:
            cells.append(
                {
                    "fold": key[0],
                    "seed": key[1],
                    "failed": True,
                    "errors": [c["error"] for c in failed],
                }
            )
            continue
        best = max(candidates, key=lambda c: (c["dev_qwk"], -c["batch_size"]))
        result = _evaluate_on_test(data, by_fold[key[0]], best)
        if failed:
            result["errors"] = [c["error"] for c in failed]
        confusion_total += np.array(result["confusion"], dtype=np.int64)
        cells.append(result)

    ok = [c for c in cells if not c.get("failed")]
    aggregate: dict = {"n_cells": len(cells), "n_failed": len(cells) - len(ok)}
    if ok:
        aggregate["mean_dev_qwk"] = float(np.mean([c["dev_qwk"] for c in ok]))
        aggregate["mean_test_qwk"] = float(np.mean([c["test_qwk"] for c in ok]))
        if all("aux_qwk" in c for c in ok):
            aggregate["mean_aux_qwk"] = float(np.mean([c["aux_qwk"] for c in ok]))
        per_seed = {}
        for seed in config.seeds:
            seed_cells = [c for c in ok if c["seed"] == seed]
            if seed_cells:
                per_seed[str(seed)] = float(np.mean([c["test_qwk"] for c in seed_cells]))
        aggregate["test_qwk_by_seed"] = per_seed
        chosen = [c["batch_size"] for c in ok]
        aggregate["batch_size_majority"] = int(
            max(sorted(set(chosen)), key=lambda b: (chosen.count(b), -b))
        )
    return EvaluationReport(
        architecture=config.architecture,
        cells=cells,
        aggregate=aggregate,
        confusion_total=confusion_total,
    )


def _run_cell_safe(args) -> dict:
    data, config, fold, seed, batch_size = args
    try:
        return _run_cell(args)
    except Exception as exc:  # training failures must not kill the sweep
        return {
            "fold": fold.fold_index,
            "seed": seed,
            "batch_size": batch_size,
            "error": f"{type(exc).__name__}: {exc}",
        }
