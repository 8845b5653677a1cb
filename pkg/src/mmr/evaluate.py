"""Frozen-encoder probing and embedding diagnostics.

Folds are grouped by user (no user ever spans folds) and stratified on
the positive count; probes are a class-reweighted logistic regression
trained by full-batch gradient descent on the autodiff module, or a
closed-form ridge for regression. Metric implementations are rank-based
AUROC, MAE, F1, silhouette and a power-iteration 2-D PCA.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import tensor as T
from .errors import ConfigError, ContractError, UndefinedMetric
from .tensor import Tensor

PROBE_ITERS = 500
PROBE_LR = 0.1
PROBE_L2 = 1e-3
RIDGE_LAMBDA = 1e-3


@dataclass
class FoldPlan:
    fold_of_user: dict[str, int]
    k: int
    warnings: list[str] = field(default_factory=list)

    def fold_of(self, user_ids) -> np.ndarray:
        return np.array([self.fold_of_user[u] for u in user_ids])


@dataclass
class ProbeReport:
    metric: str                  # "auroc" | "mae" | "f1"
    per_fold: list[float]
    mean: float
    min: float
    max: float
    skipped_folds: list[int] = field(default_factory=list)

    @classmethod
    def from_folds(cls, metric: str, values: list[float],
                   skipped: list[int] | None = None) -> "ProbeReport":
        return cls(metric, values, float(np.mean(values)),
                   float(np.min(values)), float(np.max(values)),
                   skipped or [])


def make_folds(user_ids, labels, k: int = 5, seed: int | None = None) -> FoldPlan:
    """Grouped stratified folds: every user lands in exactly one fold.

    Users are sorted by (positive count desc, user_id) and greedily sent
    to the fold with the largest positive deficit (ties: fewest segments,
    then lowest index). Fully deterministic; seed kept for API stability.
    """
    user_ids = np.asarray(user_ids)
    labels = np.asarray(labels, dtype=float)
    users = sorted(set(user_ids))
    if len(users) < k:
        raise ConfigError(f"need at least {k} users for {k} folds, got {len(users)}")
    pos = {u: float(labels[user_ids == u].sum()) for u in users}
    count = {u: int((user_ids == u).sum()) for u in users}
    total_pos = sum(pos.values())
    total_n = sum(count.values())
    order = sorted(users, key=lambda u: (-pos[u], u))
    fold_pos = np.zeros(k)
    fold_n = np.zeros(k)
    plan: dict[str, int] = {}
    for u in order:
        deficit = total_pos / k - fold_pos
        size_deficit = total_n / k - fold_n
        if pos[u] > 0:
            key = lambda f: (deficit[f], size_deficit[f], -f)
        else:
            # a user with no positives cannot repay a positive deficit;
            # place it by size so negatives spread instead of piling up
            key = lambda f: (size_deficit[f], deficit[f], -f)
        best = max(range(k), key=key)
        plan[u] = best
        fold_pos[best] += pos[u]
        fold_n[best] += count[u]
    warns = []
    n_pos_users = sum(1 for u in users if pos[u] > 0)
    if 0 < n_pos_users < k:
        warns.append(f"only {n_pos_users} users carry positives; "
                     f"{k - n_pos_users} folds have none")
    return FoldPlan(plan, k, warns)


def auroc(scores, labels) -> float:
    """Rank-based AUROC: P(score+ > score-) + 0.5 P(tie)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("AUROC needs both classes present")
    ranks = rankdata(scores)  # average ranks on ties
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def mae(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.size == 0 or pred.shape != truth.shape:
        raise ContractError("mae needs matching non-empty inputs")
    return float(np.mean(np.abs(pred - truth)))


def f1(pred_labels, truth) -> float:
    """F1 of the positive class."""
    pred_labels = np.asarray(pred_labels, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred_labels.size == 0 or pred_labels.shape != truth.shape:
        raise ContractError("f1 needs matching non-empty inputs")
    tp = float(((pred_labels == 1) & (truth == 1)).sum())
    fp = float(((pred_labels == 1) & (truth == 0)).sum())
    fn = float(((pred_labels == 0) & (truth == 1)).sum())
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def _standardize(train_x: np.ndarray, test_x: np.ndarray):
    mu = train_x.mean(axis=0)
    sd = train_x.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    return (train_x - mu) / sd, (test_x - mu) / sd


def logistic_probe(train_x: np.ndarray, train_y: np.ndarray,
                   test_x: np.ndarray, iters: int = PROBE_ITERS,
                   lr: float = PROBE_LR, l2: float = PROBE_L2) -> np.ndarray:
    """Class-reweighted L2 logistic regression by full-batch descent.

    Returns P(class 1) on the test rows.
    """
    n, d = train_x.shape
    n_pos = train_y.sum()
    w_pos = n / (2.0 * n_pos)
    w_neg = n / (2.0 * (n - n_pos))
    sample_w = np.where(train_y == 1, w_pos, w_neg)
    sample_w = sample_w / sample_w.sum()
    w = Tensor(np.zeros((d, 1)), requires_grad=True)
    b = Tensor(np.zeros(1), requires_grad=True)
    xs = Tensor(train_x)
    yv = train_y.reshape(-1, 1)
    wv = sample_w.reshape(-1, 1)
    for _ in range(iters):
        z = T.matmul(xs, w) + b
        # weighted BCE from logits: softplus(z) - y z, summed with weights
        nll = T.tsum((T.softplus(z) - Tensor(yv) * z) * wv)
        loss = nll + T.tsum(w * w) * l2
        loss.backward()
        w.data -= lr * w.grad
        b.data -= lr * b.grad
        w.zero_grad()
        b.zero_grad()
    z_test = test_x @ w.data.ravel() + b.data[0]
    return 1.0 / (1.0 + np.exp(-z_test))


def ridge_probe(train_x: np.ndarray, train_y: np.ndarray,
                test_x: np.ndarray, lam: float = RIDGE_LAMBDA) -> np.ndarray:
    """Closed-form ridge via the normal equations, intercept by centering."""
    x_mu = train_x.mean(axis=0)
    y_mu = train_y.mean()
    xc = train_x - x_mu
    yc = train_y - y_mu
    d = xc.shape[1]
    w = np.linalg.solve(xc.T @ xc + lam * np.eye(d), xc.T @ yc)
    return (test_x - x_mu) @ w + y_mu


def probe(embeddings, labels, user_ids, task: str, folds: FoldPlan,
          metric: str | None = None, seed: int = 0) -> ProbeReport:
    """Per-fold train/score with user-level leakage asserted away.

    task "classification" scores AUROC (or F1 at threshold 0.5 when
    metric="f1"); task "regression" scores MAE via ridge.
    """
    embeddings = np.asarray(embeddings, dtype=float)
    labels = np.asarray(labels, dtype=float)
    user_ids = np.asarray(user_ids)
    if not np.all(np.isfinite(embeddings)):
        raise ContractError("embeddings must be finite")
    if task not in ("classification", "regression"):
        raise ConfigError(f"task must be classification or regression, got {task}")
    if metric is None:
        metric = "auroc" if task == "classification" else "mae"
    fold_ids = folds.fold_of(user_ids)
    values: list[float] = []
    skipped: list[int] = []
    for f in range(folds.k):
        test_mask = fold_ids == f
        train_mask = ~test_mask
        train_users = set(user_ids[train_mask])
        test_users = set(user_ids[test_mask])
        if train_users & test_users:
            raise ContractError(f"user leakage between folds: "
                                f"{sorted(train_users & test_users)[:3]}")
        if not test_mask.any() or not train_mask.any():
            skipped.append(f)
            warnings.warn(f"fold {f} empty on one side; skipped")
            continue
        train_y = labels[train_mask]
        test_y = labels[test_mask]
        if task == "classification" and (
                len(np.unique(train_y)) < 2 or len(np.unique(test_y)) < 2):
            skipped.append(f)
            warnings.warn(f"fold {f} single-class; skipped")
            continue
        train_x, test_x = _standardize(embeddings[train_mask],
                                       embeddings[test_mask])
        if task == "classification":
            prob = logistic_probe(train_x, train_y, test_x)
            if metric == "f1":
                values.append(f1((prob >= 0.5).astype(float), test_y))
            else:
                values.append(auroc(prob, test_y))
        else:
            pred = ridge_probe(train_x, train_y, test_x)
            values.append(mae(pred, test_y))
    if not values:
        raise ConfigError("every fold was skipped; probe result undefined")
    return ProbeReport.from_folds(metric, values, skipped)


def silhouette(embeddings, groups) -> float:
    """Mean silhouette (b - a) / max(a, b) with Euclidean distances.

    Points in singleton groups are excluded with a warning.
    """
    x = np.asarray(embeddings, dtype=float)
    groups = np.asarray(groups)
    uniq, counts = np.unique(groups, return_counts=True)
    if len(uniq) < 2:
        raise ConfigError("silhouette needs at least 2 groups")
    usable = np.isin(groups, uniq[counts >= 2])
    if not np.all(usable):
        warnings.warn(f"{int((~usable).sum())} points in singleton groups excluded")
    keep_groups = uniq[counts >= 2]
    if len(keep_groups) < 2:
        raise ConfigError("fewer than 2 groups with >= 2 members")
    d = np.sqrt(np.maximum(
        ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1), 0.0))
    scores = []
    for i in np.flatnonzero(usable):
        own = (groups == groups[i]) & usable
        a = d[i, own & (np.arange(len(x)) != i)].mean()
        b = min(d[i, (groups == g) & usable].mean()
                for g in keep_groups if g != groups[i])
        scores.append((b - a) / max(a, b))
    return float(np.mean(scores))


def pairwise_user_distances(embeddings, user_ids):
    """Mean embedding per user, then all-pairs Euclidean distances."""
    x = np.asarray(embeddings, dtype=float)
    user_ids = np.asarray(user_ids)
    users = sorted(set(user_ids))
    if len(users) < 2:
        raise ConfigError("need at least 2 users")
    means = np.stack([x[user_ids == u].mean(axis=0) for u in users])
    dists = []
    pairs = []
    for i in range(len(users)):
        for j in range(i + 1, len(users)):
            dists.append(float(np.linalg.norm(means[i] - means[j])))
            pairs.append((users[i], users[j]))
    dists = np.array(dists)
    summary = {
        "n_users": len(users),
        "n_pairs": len(dists),
        "mean": float(dists.mean()),
        "std": float(dists.std()),
        "min": float(dists.min()),
        "max": float(dists.max()),
    }
    return dists, pairs, summary


def _power_iteration(mat: np.ndarray, iters: int = 500,
                     tol: float = 1e-12) -> tuple[float, np.ndarray]:
    d = mat.shape[0]
    v = np.ones(d) + 1e-3 * np.arange(d)  # deterministic, rarely orthogonal
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        nxt = mat @ v
        norm = np.linalg.norm(nxt)
        if norm < 1e-300:
            return 0.0, v
        nxt /= norm
        new_lam = float(nxt @ mat @ nxt)
        if abs(new_lam - lam) < tol * max(1.0, abs(new_lam)):
            v = nxt
            lam = new_lam
            break
        v, lam = nxt, new_lam
    return lam, v


def pca2(embeddings) -> tuple[np.ndarray, tuple[float, float]]:
    """Top-2 principal projection by power iteration with deflation."""
    x = np.asarray(embeddings, dtype=float)
    if x.shape[0] < 3 or x.shape[1] < 2:
        raise ConfigError("pca2 needs >= 3 points of dimension >= 2")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (x.shape[0] - 1)
    lam1, v1 = _power_iteration(cov)
    deflated = cov - lam1 * np.outer(v1, v1)
    lam2, v2 = _power_iteration(deflated)
    v2 = v2 - (v2 @ v1) * v1
    n2 = np.linalg.norm(v2)
    if n2 > 1e-12:
        v2 /= n2
    lam2 = max(lam2, 0.0)
    coords = np.stack([xc @ v1, xc @ v2], axis=1)
    return coords, (float(lam1), float(lam2))


def stat_features(samples: np.ndarray) -> np.ndarray:
    """Per-segment summary vector: mean, std, p25, p50, p75, min, max."""
    x = np.asarray(samples, dtype=float)
    return np.array([x.mean(), x.std(),
                     np.percentile(x, 25), np.percentile(x, 50),
                     np.percentile(x, 75), x.min(), x.max()])
