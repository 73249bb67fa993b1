"""Two-parameter logistic calibration of the binary grammar-usage matrix.

The item response function for writer ability theta and item (a, b) is

    P(theta) = 1 / (1 + exp(-D * a * (theta - b)))

Item parameters are estimated by marginal maximum likelihood: an EM loop
that integrates writer ability out against a standard-normal prior on a
fixed quadrature grid. The E-step computes posterior node weights per
writer; the M-step refits each item by a damped Newton solve of the
node-weighted logistic regression, accepting a step only when it improves
that item's expected log-likelihood, which keeps the marginal likelihood
nondecreasing (a generalized EM). Writer abilities are expected a
posteriori (EAP) means on the same grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CALIBRATED = "calibrated"
DEGENERATE = "degenerate-dropped"


class CalibrationError(RuntimeError):
    """No usable items or writers to calibrate on."""


@dataclass(frozen=True)
class ItemParameters:
    item_id: int
    a: float
    b: float
    status: str = CALIBRATED

    @property
    def calibrated(self) -> bool:
        return self.status == CALIBRATED


@dataclass(frozen=True)
class AbilityEstimate:
    theta: float
    posterior_sd: float


@dataclass(frozen=True)
class IrtConfig:
    D: float = 1.0
    n_nodes: int = 61
    node_range: float = 6.0
    max_iterations: int = 200
    tolerance: float = 1e-7  # relative change of marginal log-likelihood
    a_min: float = 0.05
    a_max: float = 5.0

    def __post_init__(self) -> None:
        if self.n_nodes < 11 or self.n_nodes % 2 == 0:
            raise ValueError("quadrature node count must be odd and >= 11")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")

    def nodes_and_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Equally spaced nodes with normalized standard-normal weights."""
        nodes = np.linspace(-self.node_range, self.node_range, self.n_nodes)
        w = np.exp(-0.5 * nodes**2)
        return nodes, w / w.sum()


@dataclass(frozen=True)
class ResponseMatrix:
    """Binary writers x items matrix with id maps for both axes."""

    data: np.ndarray
    row_ids: tuple[str, ...]
    col_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.data.ndim != 2:
            raise ValueError("response matrix must be 2-dimensional")
        if self.data.shape != (len(self.row_ids), len(self.col_ids)):
            raise ValueError("id maps do not match matrix shape")
        if len(set(self.row_ids)) != len(self.row_ids) or len(set(self.col_ids)) != len(
            self.col_ids
        ):
            raise ValueError("row and column ids must be unique")
        if not np.isin(self.data, (0, 1)).all():
            raise ValueError("entries must be binary")


@dataclass
class FitResult:
    items: list[ItemParameters]
    trace: list[float] = field(default_factory=list)
    converged: bool = False
    n_iterations: int = 0


def irf(theta, item: ItemParameters | None = None, D: float = 1.0, a=None, b=None):
    """Probability of correct use; Eq. form 1/(1+exp(-D*a*(theta-b))).

    Accepts either an ItemParameters or explicit a/b; broadcasts over
    arrays. Computed branch-wise so large |theta - b| cannot overflow, and
    clipped into the open interval (0, 1).
    """
    if item is not None:
        a, b = item.a, item.b
    z = np.asarray(D * a * (np.asarray(theta, dtype=np.float64) - b))
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    out = np.clip(out, 5e-324, 1.0 - 1e-16)
    return out if out.ndim else float(out)


def _log_irf_tables(alpha: np.ndarray, beta: np.ndarray, nodes: np.ndarray):
    """log P and log (1-P) at every node for every item.

    Parameterized as eta = alpha*theta + beta with alpha = D*a and
    beta = -D*a*b; both logs come from the stable log1p(exp(-|eta|)) form.
    """
    eta = nodes[:, None] * alpha[None, :] + beta[None, :]
    softplus_neg = np.where(eta > 0, np.log1p(np.exp(-np.abs(eta))), -eta + np.log1p(np.exp(-np.abs(eta))))
    log_p = -softplus_neg
    log_q = log_p - eta
    return log_p, log_q


def _posterior_weights(
    g: np.ndarray, alpha: np.ndarray, beta: np.ndarray, nodes: np.ndarray, log_prior: np.ndarray
):
    """Posterior node weights per writer and the marginal log-likelihood."""
    log_p, log_q = _log_irf_tables(alpha, beta, nodes)
    # (N x Q): log prior + sum_j [g log P + (1-g) log(1-P)]
    log_post = log_prior[None, :] + g @ log_p.T + (1.0 - g) @ log_q.T
    m = log_post.max(axis=1, keepdims=True)
    post = np.exp(log_post - m)
    norm = post.sum(axis=1, keepdims=True)
    marginal = float((m[:, 0] + np.log(norm[:, 0])).sum())
    return post / norm, marginal


def _item_objective(alpha: float, beta: float, nodes, r, n) -> float:
    eta = alpha * nodes + beta
    # r*eta - n*log(1+exp(eta)), stable for either sign of eta
    softplus = np.where(eta > 0, eta + np.log1p(np.exp(-eta)), np.log1p(np.exp(eta)))
    return float((r * eta - n * softplus).sum())


def _fit_item(
    alpha: float, beta: float, nodes, r, n, config: IrtConfig, newton_iters: int = 30
) -> tuple[float, float]:
    """Damped Newton ascent of one item's expected log-likelihood.

    Returns the starting point unchanged when no improving step exists, so
    the enclosing EM never loses likelihood.
    """
    alpha_lo, alpha_hi = config.D * config.a_min, config.D * config.a_max
    best = _item_objective(alpha, beta, nodes, r, n)
    for _ in range(newton_iters):
        eta = alpha * nodes + beta
        mu = 1.0 / (1.0 + np.exp(-np.clip(eta, -700, 700)))
        resid = r - n * mu
        g0 = float((resid * nodes).sum())
        g1 = float(resid.sum())
        w = n * mu * (1.0 - mu)
        h00 = float((w * nodes * nodes).sum())
        h01 = float((w * nodes).sum())
        h11 = float(w.sum())
        det = h00 * h11 - h01 * h01
        if det <= 1e-12:
            break
        da = (h11 * g0 - h01 * g1) / det
        db = (h00 * g1 - h01 * g0) / det
        step = 1.0
        improved = False
        for _ in range(12):
            cand_a = min(max(alpha + step * da, alpha_lo), alpha_hi)
            cand_b = beta + step * db
            val = _item_objective(cand_a, cand_b, nodes, r, n)
            if val > best:
                alpha, beta, best = cand_a, cand_b, val
                improved = True
                break
            step *= 0.5
        if not improved or abs(g0) + abs(g1) < 1e-10:
            break
    return alpha, beta


def fit_2pl(matrix: ResponseMatrix, config: IrtConfig | None = None) -> FitResult:
    """Marginal maximum likelihood estimation of all item parameters.

    Constant columns carry no information about discrimination or
    difficulty; they are flagged degenerate-dropped, excluded from the
    likelihood, and given neutral placeholder parameters.
    """
    config = config or IrtConfig()
    g_all = matrix.data.astype(np.float64)
    n_writers, n_items = g_all.shape
    col_mean = g_all.mean(axis=0) if n_writers else np.zeros(n_items)
    live = [j for j in range(n_items) if 0.0 < col_mean[j] < 1.0]
    if len(live) < 2 or n_writers < 2:
        raise CalibrationError(
            f"need at least 2 writers and 2 informative items, have "
            f"{n_writers} writers and {len(live)} items"
        )
    g = g_all[:, live]
    nodes, prior = config.nodes_and_weights()
    log_prior = np.log(prior)

    p = g.mean(axis=0)
    alpha = np.full(len(live), config.D)
    beta = np.clip(np.log(p / (1.0 - p)), -4.0, 4.0)

    trace: list[float] = []
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iterations + 1):
        post, marginal = _posterior_weights(g, alpha, beta, nodes, log_prior)
        n_q = post.sum(axis=0)
        r = post.T @ g  # (Q x K_live) expected correct counts per node
        for k in range(len(live)):
            alpha[k], beta[k] = _fit_item(alpha[k], beta[k], nodes, r[:, k], n_q, config)
        _, marginal_new = _posterior_weights(g, alpha, beta, nodes, log_prior)
        trace.append(marginal_new)
        if iteration > 1 and abs(marginal_new - marginal) <= config.tolerance * (
            abs(marginal) + 1.0
        ):
            converged = True
            break

    items = []
    live_pos = {j: k for k, j in enumerate(live)}
    for j, col_id in enumerate(matrix.col_ids):
        if j in live_pos:
            k = live_pos[j]
            a = alpha[k] / config.D
            b = -beta[k] / alpha[k]
            items.append(ItemParameters(item_id=col_id, a=a, b=b, status=CALIBRATED))
        else:
            items.append(ItemParameters(item_id=col_id, a=1.0, b=0.0, status=DEGENERATE))
    return FitResult(items=items, trace=trace, converged=converged, n_iterations=iteration)


def estimate_ability(
    responses: np.ndarray, items: list[ItemParameters], config: IrtConfig | None = None
) -> AbilityEstimate:
    """EAP ability for one writer given calibrated item parameters."""
    config = config or IrtConfig()
    live = [k for k, item in enumerate(items) if item.calibrated]
    if not live:
        raise ValueError("no calibrated items to estimate ability from")
    responses = np.asarray(responses, dtype=np.float64)
    if responses.shape != (len(items),):
        raise ValueError(
            f"expected a response per item ({len(items)}), got shape {responses.shape}"
        )
    g = responses[live][None, :]
    alpha = np.array([config.D * items[k].a for k in live])
    beta = np.array([-config.D * items[k].a * items[k].b for k in live])
    nodes, prior = config.nodes_and_weights()
    post, _ = _posterior_weights(g, alpha, beta, nodes, np.log(prior))
    theta = float(post[0] @ nodes)
    var = float(post[0] @ (nodes - theta) ** 2)
    return AbilityEstimate(theta=theta, posterior_sd=math.sqrt(max(var, 1e-300)))


def estimate_abilities(
    matrix: ResponseMatrix, items: list[ItemParameters], config: IrtConfig | None = None
) -> list[AbilityEstimate]:
    """Vectorized EAP for every writer in the matrix (same grid as fit)."""
    config = config or IrtConfig()
    live = [k for k, item in enumerate(items) if item.calibrated]
    if not live:
        raise ValueError("no calibrated items to estimate ability from")
    g = matrix.data.astype(np.float64)[:, live]
    alpha = np.array([config.D * items[k].a for k in live])
    beta = np.array([-config.D * items[k].a * items[k].b for k in live])
    nodes, prior = config.nodes_and_weights()
    post, _ = _posterior_weights(g, alpha, beta, nodes, np.log(prior))
    thetas = post @ nodes
    var = (post * (nodes[None, :] - thetas[:, None]) ** 2).sum(axis=1)
    return [
        AbilityEstimate(theta=float(t), posterior_sd=float(math.sqrt(max(v, 1e-300))))
        for t, v in zip(thetas, var)
    ]


def marginal_log_likelihood(
    matrix: ResponseMatrix, items: list[ItemParameters], config: IrtConfig | None = None
) -> float:
    """Quadrature-approximated log-likelihood of the matrix under the items.

    Only calibrated items enter; an empty matrix contributes 0.
    """
    config = config or IrtConfig()
    if matrix.data.size == 0:
        return 0.0
    live = [k for k, item in enumerate(items) if item.calibrated]
    if not live:
        return 0.0
    g = matrix.data.astype(np.float64)[:, live]
    alpha = np.array([config.D * items[k].a for k in live])
    beta = np.array([-config.D * items[k].a * items[k].b for k in live])
    nodes, prior = config.nodes_and_weights()
    _, marginal = _posterior_weights(g, alpha, beta, nodes, np.log(prior))
    return marginal
