"""Shared test utilities: finite-difference gradient checking."""

import numpy as np

from gramscore.scorer import backward, build_model, forward, loss


def build_toy_problem(architecture, seed, embedding_dim=16, feature_dim=12, width=8, batch=6):
    """Small model plus a batch and a dropout seed, resampled until no
    pre-activation sits near a relu kink under that exact dropout stream,
    so central differences at h=1e-5 are valid."""
    for attempt in range(50):
        data_rng = np.random.default_rng(10_000 + 97 * seed + attempt)
        forward_seed = 555 + 1000 * seed + attempt
        model = build_model(
            architecture,
            embedding_dim=embedding_dim,
            feature_dim=feature_dim,
            top_width=width,
            dropout_rate=0.2,
            seed=seed,
        )
        emb = data_rng.normal(size=(batch, embedding_dim))
        feats = data_rng.normal(size=(batch, feature_dim))
        target = data_rng.uniform(-1, 1, size=batch)
        aux_target = data_rng.uniform(-1, 1, size=batch) if model.has_aux else None
        _, _, cache = forward(
            model, emb, feats, train=True, rng=np.random.default_rng(forward_seed)
        )
        min_abs_z = min(
            float(np.abs(c["z"]).min())
            for key in ("grammar", "top")
            if key in cache
            for c in cache[key]
        )
        if min_abs_z > 1e-3:
            return model, emb, feats, target, aux_target, forward_seed
    raise RuntimeError("could not sample a kink-free working point")


def gradcheck(architecture, seed, main_weight=0.8, h=1e-5):
    """Max relative error between analytic and central-difference gradients.

    Dropout stays active: every evaluation reseeds the forward rng with the
    same value, so the masks are identical and the loss is a deterministic
    function of the parameters.
    """
    model, emb, feats, target, aux_target, forward_seed = build_toy_problem(architecture, seed)
    weight = main_weight if model.has_aux else 1.0

    def eval_loss():
        rng = np.random.default_rng(forward_seed)
        main, aux, cache = forward(model, emb, feats, train=True, rng=rng)
        return loss(main, target, aux, aux_target, weight), (main, aux, cache)

    _, (main, aux, cache) = eval_loss()
    analytic = backward(model, cache, main, target, aux, aux_target, weight).flat()

    params = model.get_flat_parameters()
    numeric = np.empty_like(params)
    for i in range(params.size):
        original = params[i]
        params[i] = original + h
        model.set_flat_parameters(params)
        up, _ = eval_loss()
        params[i] = original - h
        model.set_flat_parameters(params)
        down, _ = eval_loss()
        params[i] = original
        numeric[i] = (up - down) / (2 * h)
    model.set_flat_parameters(params)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-5)
    return float(np.max(np.abs(analytic - numeric) / denom))
