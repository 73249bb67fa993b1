"""Feed-forward scoring networks, trained from scratch with Adam.

Five architectures share the same building blocks:

    baseline  top tower on the essay embedding alone
    cat       top tower on [embedding ; grammatical features]
    net       features pass through their own tower first, then
              top tower on [embedding ; grammar-tower output]
    multi     net trunk + auxiliary head on the top-tower output
    dual      net trunk + auxiliary head on the grammar-tower output

Both heads are single linear units trained against targets normalized to
[-1, 1] with mean squared error; the combined loss weights the main task
by lambda and the auxiliary task by (1 - lambda). All forward/backward
arithmetic is plain float64 numpy so gradients can be checked against
finite differences exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import ScoreScale, denormalize_prediction

ARCHITECTURES = ("baseline", "cat", "net", "multi", "dual")
DEFAULT_TOP_DEPTH = {"baseline": 1, "cat": 2, "net": 2, "multi": 3, "dual": 3}


class ShapeError(ValueError):
    """Input dimensions do not match the tower that received them."""


class TrainingError(RuntimeError):
    """Non-finite loss or inconsistent training data."""


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"  # or "linear"
    dropout_rate: float = 0.0

    def forward(self, x: np.ndarray, train: bool, rng) -> tuple[np.ndarray, dict]:
        z = x @ self.weights.T + self.bias
        h = np.maximum(z, 0.0) if self.activation == "relu" else z
        mask = None
        if train and self.dropout_rate > 0.0:
            keep = 1.0 - self.dropout_rate
            mask = (rng.random(h.shape) < keep) / keep  # inverted dropout
            h = h * mask
        return h, {"x": x, "z": z, "mask": mask}

    def backward(self, d_out: np.ndarray, cache: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if cache["mask"] is not None:
            d_out = d_out * cache["mask"]
        if self.activation == "relu":
            d_out = d_out * (cache["z"] > 0.0)
        d_w = d_out.T @ cache["x"]
        d_b = d_out.sum(axis=0)
        d_x = d_out @ self.weights
        return d_x, d_w, d_b


def _he_uniform(rng, out_dim: int, in_dim: int) -> np.ndarray:
    limit = np.sqrt(6.0 / in_dim)
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


def _make_tower(rng, in_dim: int, widths: list[int], dropout: float) -> list[DenseLayer]:
    layers = []
    prev = in_dim
    for width in widths:
        layers.append(
            DenseLayer(
                weights=_he_uniform(rng, width, prev),
                bias=np.zeros(width),
                activation="relu",
                dropout_rate=dropout,
            )
        )
        prev = width
    return layers


def _linear_head(rng, in_dim: int) -> DenseLayer:
    return DenseLayer(
        weights=_he_uniform(rng, 1, in_dim),
        bias=np.zeros(1),
        activation="linear",
        dropout_rate=0.0,
    )


@dataclass
class ScoringModel:
    architecture: str
    embedding_dim: int
    feature_dim: int
    top_width: int
    top_depth: int
    dropout_rate: float
    grammar_tower: list[DenseLayer] = field(default_factory=list)
    top_tower: list[DenseLayer] = field(default_factory=list)
    main_head: DenseLayer | None = None
    aux_head: DenseLayer | None = None

    @property
    def has_aux(self) -> bool:
        return self.aux_head is not None

    def parameter_arrays(self) -> list[np.ndarray]:
        """All parameters in the documented order: grammar tower, top
        tower, then heads, each layer contributing weights then bias."""
        arrays = []
        for layer in [*self.grammar_tower, *self.top_tower, self.main_head]:
            arrays.extend([layer.weights, layer.bias])
        if self.aux_head is not None:
            arrays.extend([self.aux_head.weights, self.aux_head.bias])
        return arrays

    def get_flat_parameters(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.parameter_arrays()])

    def set_flat_parameters(self, flat: np.ndarray) -> None:
        offset = 0
        for arr in self.parameter_arrays():
            arr[...] = flat[offset : offset + arr.size].reshape(arr.shape)
            offset += arr.size
        if offset != flat.size:
            raise ShapeError(f"parameter vector has {flat.size} entries, model needs {offset}")


def build_model(
    architecture: str,
    embedding_dim: int,
    feature_dim: int,
    top_width: int = 512,
    top_depth: int | None = None,
    dropout_rate: float = 0.2,
    seed: int = 0,
) -> ScoringModel:
    """Construct and initialize a scoring network.

    The grammar tower always has 3 hidden layers of width
    feature_dim // 2; the top-tower depth defaults per architecture to the
    dev-selected values (baseline 1, cat 2, net 2, multi 3, dual 3).
    """
    if architecture not in ARCHITECTURES:
        raise ValueError(f"unknown architecture '{architecture}'")
    if top_depth is None:
        top_depth = DEFAULT_TOP_DEPTH[architecture]
    rng = np.random.default_rng(seed)
    model = ScoringModel(
        architecture=architecture,
        embedding_dim=embedding_dim,
        feature_dim=feature_dim,
        top_width=top_width,
        top_depth=top_depth,
        dropout_rate=dropout_rate,
    )
    uses_grammar_tower = architecture in ("net", "multi", "dual")
    if uses_grammar_tower:
        width = max(1, feature_dim // 2)
        model.grammar_tower = _make_tower(rng, feature_dim, [width] * 3, dropout_rate)
        top_in = embedding_dim + width
    elif architecture == "cat":
        top_in = embedding_dim + feature_dim
    else:
        top_in = embedding_dim
    model.top_tower = _make_tower(rng, top_in, [top_width] * top_depth, dropout_rate)
    model.main_head = _linear_head(rng, top_width)
    if architecture == "multi":
        model.aux_head = _linear_head(rng, top_width)
    elif architecture == "dual":
        model.aux_head = _linear_head(rng, max(1, feature_dim // 2))
    return model


def _run_tower(layers, x, train, rng):
    caches = []
    for layer in layers:
        x, cache = layer.forward(x, train, rng)
        caches.append(cache)
    return x, caches


def forward(
    model: ScoringModel,
    embedding: np.ndarray,
    features: np.ndarray | None,
    train: bool = False,
    rng=None,
) -> tuple[np.ndarray, np.ndarray | None, dict]:
    """Run a batch through the network.

    Returns (main, aux, cache); predictions have shape (batch,). The cache
    feeds :func:`backward`. Eval mode disables dropout and needs no rng.
    """
    embedding = np.atleast_2d(np.asarray(embedding, dtype=np.float64))
    if embedding.shape[1] != model.embedding_dim:
        raise ShapeError(
            f"top tower expects embeddings of width {model.embedding_dim}, "
            f"got {embedding.shape[1]}"
        )
    if train and rng is None:
        raise ValueError("training-mode forward needs an rng for dropout")
    cache: dict = {}
    if model.architecture == "baseline":
        top_in = embedding
    else:
        if features is None:
            raise ShapeError(f"architecture '{model.architecture}' requires features")
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if features.shape[1] != model.feature_dim:
            raise ShapeError(
                f"grammar tower expects features of width {model.feature_dim}, "
                f"got {features.shape[1]}"
            )
        if model.architecture == "cat":
            top_in = np.concatenate([embedding, features], axis=1)
        else:
            g_out, g_caches = _run_tower(model.grammar_tower, features, train, rng)
            cache["grammar"] = g_caches
            cache["grammar_out"] = g_out
            top_in = np.concatenate([embedding, g_out], axis=1)
    top_out, top_caches = _run_tower(model.top_tower, top_in, train, rng)
    cache["top"] = top_caches
    main, main_cache = model.main_head.forward(top_out, train, rng)
    cache["main_head"] = main_cache
    aux = None
    if model.aux_head is not None:
        aux_in = top_out if model.architecture == "multi" else cache["grammar_out"]
        aux, aux_cache = model.aux_head.forward(aux_in, train, rng)
        cache["aux_head"] = aux_cache
        aux = aux[:, 0]
    return main[:, 0], aux, cache


def loss(
    main_pred: np.ndarray,
    main_target: np.ndarray,
    aux_pred: np.ndarray | None = None,
    aux_target: np.ndarray | None = None,
    main_weight: float = 1.0,
) -> float:
    """Batch-mean MSE, multi-task weighted when an auxiliary task is given."""
    main_mse = float(np.mean((main_pred - main_target) ** 2))
    if aux_pred is None:
        return main_mse
    if aux_target is None:
        raise ValueError("auxiliary predictions given without auxiliary targets")
    aux_mse = float(np.mean((aux_pred - aux_target) ** 2))
    return main_weight * main_mse + (1.0 - main_weight) * aux_mse


@dataclass
class Gradients:
    arrays: list[np.ndarray]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])


def backward(
    model: ScoringModel,
    cache: dict,
    main_pred: np.ndarray,
    main_target: np.ndarray,
    aux_pred: np.ndarray | None = None,
    aux_target: np.ndarray | None = None,
    main_weight: float = 1.0,
) -> Gradients:
    """Exact gradients of the weighted MSE loss for every parameter.

    Returned arrays follow the same order as
    :meth:`ScoringModel.parameter_arrays`.
    """
    batch = main_pred.shape[0]
    d_main = main_weight * 2.0 * (main_pred - main_target)[:, None] / batch
    grads_by_layer: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    d_top_out, d_w, d_b = model.main_head.backward(d_main, cache["main_head"])
    grads_by_layer[id(model.main_head)] = (d_w, d_b)

    d_grammar_out_extra = None
    if model.aux_head is not None:
        if aux_pred is None or aux_target is None:
            raise ValueError("model has an auxiliary head but no auxiliary batch was given")
        d_aux = (1.0 - main_weight) * 2.0 * (aux_pred - aux_target)[:, None] / batch
        d_aux_in, d_w, d_b = model.aux_head.backward(d_aux, cache["aux_head"])
        grads_by_layer[id(model.aux_head)] = (d_w, d_b)
        if model.architecture == "multi":
            d_top_out = d_top_out + d_aux_in
        else:
            d_grammar_out_extra = d_aux_in

    d = d_top_out
    for layer, layer_cache in zip(reversed(model.top_tower), reversed(cache["top"])):
        d, d_w, d_b = layer.backward(d, layer_cache)
        grads_by_layer[id(layer)] = (d_w, d_b)

    if model.architecture in ("net", "multi", "dual"):
        d_grammar = d[:, model.embedding_dim :]
        if d_grammar_out_extra is not None:
            d_grammar = d_grammar + d_grammar_out_extra
        for layer, layer_cache in zip(reversed(model.grammar_tower), reversed(cache["grammar"])):
            d_grammar, d_w, d_b = layer.backward(d_grammar, layer_cache)
            grads_by_layer[id(layer)] = (d_w, d_b)

    arrays = []
    for layer in [*model.grammar_tower, *model.top_tower, model.main_head]:
        d_w, d_b = grads_by_layer[id(layer)]
        arrays.extend([d_w, d_b])
    if model.aux_head is not None:
        d_w, d_b = grads_by_layer[id(model.aux_head)]
        arrays.extend([d_w, d_b])
    return Gradients(arrays=arrays)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    epochs: int = 10
    batch_size: int = 8
    main_loss_weight: float = 0.8
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if not 0.0 < self.main_loss_weight <= 1.0:
            raise ValueError("main_loss_weight must be in (0, 1]")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")


@dataclass(frozen=True)
class AuxLabelSource:
    """Auxiliary-task targets: normalized human grammar scores, or writer
    abilities standardized over the calibration population (no human
    labels required)."""

    mode: str  # "human" | "irt"
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.mode not in ("human", "irt"):
            raise ValueError(f"unknown auxiliary label mode '{self.mode}'")
        if not np.isfinite(self.values).all():
            raise ValueError("auxiliary labels must be finite")


def standardize_abilities(thetas: np.ndarray) -> np.ndarray:
    """Map ability estimates into [-1, 1]: z-score over the population,
    clip to [-3, 3], divide by 3."""
    thetas = np.asarray(thetas, dtype=np.float64)
    sd = thetas.std()
    if sd == 0.0:
        return np.zeros_like(thetas)
    z = (thetas - thetas.mean()) / sd
    return np.clip(z, -3.0, 3.0) / 3.0


@dataclass
class ScoringDataset:
    essay_ids: list[str]
    embeddings: np.ndarray  # (N, d)
    features: np.ndarray  # (N, K)
    targets: np.ndarray  # (N,) normalized main scores
    aux_targets: np.ndarray | None = None  # (N,) normalized aux labels

    def __post_init__(self) -> None:
        n = len(self.essay_ids)
        sizes = [self.embeddings.shape[0], self.features.shape[0], self.targets.shape[0]]
        if self.aux_targets is not None:
            sizes.append(self.aux_targets.shape[0])
        if any(s != n for s in sizes):
            raise TrainingError(f"dataset arrays disagree on size: {sizes} vs {n} ids")

    def __len__(self) -> int:
        return len(self.essay_ids)


class AdamState:
    """Adam with bias correction, operating on the flat parameter vector."""

    def __init__(self, size: int, config: TrainConfig):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.config = config

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        c = self.config
        self.t += 1
        self.m = c.adam_beta1 * self.m + (1.0 - c.adam_beta1) * grads
        self.v = c.adam_beta2 * self.v + (1.0 - c.adam_beta2) * grads**2
        m_hat = self.m / (1.0 - c.adam_beta1**self.t)
        v_hat = self.v / (1.0 - c.adam_beta2**self.t)
        return params - c.learning_rate * m_hat / (np.sqrt(v_hat) + c.adam_epsilon)


def train(
    model: ScoringModel,
    dataset: ScoringDataset,
    config: TrainConfig,
    dev_set: ScoringDataset | None = None,
    scale: ScoreScale | None = None,
) -> list[dict]:
    """Train in place; returns per-epoch history.

    Each epoch reshuffles with the seeded rng and records the mean train
    loss; when a dev set and scale are given, the epoch's dev QWK on
    denormalized scores is recorded too. Runs are bit-reproducible for a
    fixed config.
    """
    if model.has_aux and dataset.aux_targets is None:
        raise TrainingError("model has an auxiliary head but the dataset has no aux targets")
    rng = np.random.default_rng(config.seed)
    adam = AdamState(model.get_flat_parameters().size, config)
    history = []
    n = len(dataset)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            emb = dataset.embeddings[idx]
            feats = dataset.features[idx]
            target = dataset.targets[idx]
            aux_target = dataset.aux_targets[idx] if model.has_aux else None
            main_pred, aux_pred, cache = forward(model, emb, feats, train=True, rng=rng)
            weight = config.main_loss_weight if model.has_aux else 1.0
            batch_loss = loss(main_pred, target, aux_pred, aux_target, weight)
            if not np.isfinite(batch_loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            grads = backward(model, cache, main_pred, target, aux_pred, aux_target, weight)
            model.set_flat_parameters(adam.step(model.get_flat_parameters(), grads.flat()))
            epoch_losses.append(batch_loss)
        record = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses))}
        if dev_set is not None and scale is not None:
            from .evaluation import qwk  # local import to avoid a module cycle

            preds = [predict(model, e, f, scale) for e, f in zip(dev_set.embeddings, dev_set.features)]
            refs = [denormalize_prediction(t, scale) for t in dev_set.targets]
            record["dev_qwk"] = qwk(refs, preds, scale.min_score, scale.max_score)
        history.append(record)
    return history


def predict(
    model: ScoringModel, embedding: np.ndarray, features: np.ndarray | None, scale: ScoreScale
) -> int:
    """Eval-mode forward of one essay, denormalized to an integer score."""
    main, _, _ = forward(model, embedding, features, train=False)
    return denormalize_prediction(float(main[0]), scale)


MODEL_FORMAT = "gramscore-model"


def save_model(model: ScoringModel, path: str | Path, extra_header: dict | None = None) -> None:
    """Write the model: one JSON header line, then float64 LE parameters in
    :meth:`ScoringModel.parameter_arrays` order."""
    flat = model.get_flat_parameters().astype("<f8")
    header = {
        "format": MODEL_FORMAT,
        "version": 1,
        "architecture": model.architecture,
        "embedding_dim": model.embedding_dim,
        "feature_dim": model.feature_dim,
        "top_width": model.top_width,
        "top_depth": model.top_depth,
        "dropout_rate": model.dropout_rate,
        "param_count": int(flat.size),
        "dtype": "<f8",
    }
    if extra_header:
        header.update(extra_header)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(flat.tobytes())


def load_model(path: str | Path) -> tuple[ScoringModel, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        payload = fh.read()
    if header.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a scoring-model file")
    model = build_model(
        architecture=header["architecture"],
        embedding_dim=header["embedding_dim"],
        feature_dim=header["feature_dim"],
        top_width=header["top_width"],
        top_depth=header["top_depth"],
        dropout_rate=header["dropout_rate"],
    )
    flat = np.frombuffer(payload, dtype="<f8")
    if flat.size != header["param_count"]:
        raise ValueError(
            f"{path}: expected {header['param_count']} parameters, found {flat.size}"
        )
    model.set_flat_parameters(flat.astype(np.float64))
    return model, header
