"""Clustering over score matrices: k-means, agglomerative, Gaussian mixtures,
and silhouette validation.

All fits are deterministic for fixed (data, k, seed) and record their
per-iteration progress (inertia / log-likelihood) so monotonicity can be
checked from the outside.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    EmptyData,
    KTooLarge,
    SingleCluster,
    SingularCovariance,
)

KMEANS = "kmeans"
AGGLOMERATIVE = "agglomerative"
GMM = "gmm"
LINKAGES = ("ward", "average", "complete")


@dataclass(eq=False)
class Mixture:
    weights: np.ndarray  # (k,), sums to 1
    means: np.ndarray  # (k, d)
    covariances: np.ndarray  # (k, d, d)
    responsibilities: np.ndarray  # (n, k), rows sum to 1


@dataclass(eq=False)
class ClusterResult:
    labels: np.ndarray
    k: int
    algorithm: str
    silhouette: float | None = None
    inertia: float | None = None
    centroids: np.ndarray | None = None
    inertia_history: list[float] = field(default_factory=list)
    merge_history: list[tuple[int, int, float]] = field(default_factory=list)
    mixture: Mixture | None = None
    log_likelihood_history: list[float] = field(default_factory=list)
    seed: int | None = None
    converged: bool | None = None


def _as_matrix(data) -> np.ndarray:
    X = np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyData("clustering needs a non-empty samples x features matrix")
    return X


def _check_k(k: int, n: int):
    if k < 1:
        raise KTooLarge(f"k must be >= 1, got {k}")
    if k > n:
        raise KTooLarge(f"k={k} exceeds sample count {n}")


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, samples x centroids."""
    d = X[:, None, :] - C[None, :, :]
    return np.einsum("nkd,nkd->nk", d, d)


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(X, X[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # All remaining points coincide with a centroid; take the first
            # index not yet chosen (pure tie-break, any point is equivalent).
            remaining = [i for i in range(n) if i not in set(chosen)]
            idx = remaining[0] if remaining else chosen[0]
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(X, X[[idx]])[:, 0])
    return X[chosen].copy()


def kmeans_fit(
    data,
    k: int,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-8,
) -> ClusterResult:
    """Lloyd iterations from k-means++ seeding.

    Stops when the largest centroid shift drops below tol or after max_iter
    iterations. Inertia is recorded after every assignment step and is
    non-increasing by construction of the algorithm.
    """
    X = _as_matrix(data)
    n = X.shape[0]
    _check_k(k, n)
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(X, k, rng)
    labels = np.zeros(n, dtype=np.intp)
    history: list[float] = []
    converged = False

    for _ in range(max_iter):
        d2 = _sq_dists(X, centroids)
        labels = np.argmin(d2, axis=1)

        # Repopulate empty clusters with the currently worst-fit points,
        # never stealing from a singleton (which would just move the hole).
        while True:
            counts = np.bincount(labels, minlength=k)
            empties = np.flatnonzero(counts == 0)
            if empties.size == 0:
                break
            empty = int(empties[0])
            costs = d2[np.arange(n), labels]
            for cand in np.argsort(-costs):
                if counts[labels[cand]] > 1:
                    worst = int(cand)
                    break
            centroids[empty] = X[worst]
            labels[worst] = empty
            d2[:, empty] = _sq_dists(X, centroids[[empty]])[:, 0]

        history.append(float(d2[np.arange(n), labels].sum()))

        new_centroids = centroids.copy()
        for j in range(k):
            mask = labels == j
            if mask.any():
                new_centroids[j] = X[mask].mean(axis=0)
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if shift < tol:
            converged = True
            break

    # Final assignment against the last centroid update.
    d2 = _sq_dists(X, centroids)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), labels].sum())
    history.append(inertia)

    return ClusterResult(
        labels=labels,
        k=k,
        algorithm=KMEANS,
        silhouette=_maybe_silhouette(X, labels),
        inertia=inertia,
        centroids=centroids,
        inertia_history=history,
        seed=seed,
        converged=converged,
    )


# --- agglomerative ----------------------------------------------------------


def _lance_williams_update(linkage, d_ik, d_jk, d_ij, n_i, n_j, n_k):
    if linkage == "average":
        return (n_i * d_ik + n_j * d_jk) / (n_i + n_j)
    if linkage == "complete":
        return np.maximum(d_ik, d_jk)
    # ward, on Euclidean distances
    n_t = n_i + n_j + n_k
    return np.sqrt(
        ((n_i + n_k) * d_ik**2 + (n_j + n_k) * d_jk**2 - n_k * d_ij**2) / n_t
    )


def agglomerative_fit(data, k: int, linkage: str = "ward") -> ClusterResult:
    """Bottom-up merging under the chosen linkage; labels cut the merge tree
    at k clusters.

    Follows the usual id scheme: original points are clusters 0..n-1 and the
    merge at step t creates cluster n+t. Ties in the closest pair break on
    the lexicographically smallest (id_a, id_b).
    """
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}")
    X = _as_matrix(data)
    n = X.shape[0]
    _check_k(k, n)

    # Active-cluster distance matrix, keyed by creation id.
    diff = X[:, None, :] - X[None, :, :]
    dist = np.sqrt(np.einsum("ijd,ijd->ij", diff, diff))
    np.fill_diagonal(dist, np.inf)

    size = {i: 1 for i in range(n)}
    active = set(range(n))
    index = {cid: cid for cid in range(n)}  # cluster id -> row in dist
    owner = {row: row for row in range(n)}  # row in dist -> cluster id
    merges: list[tuple[int, int, float]] = []
    next_id = n

    # Rows of merged-away clusters are retired to inf; the new cluster reuses
    # the first member's row, so the matrix never grows.
    while len(active) > 1:
        flat = int(np.argmin(dist))
        ra, rb = divmod(flat, n)
        height = float(dist[ra, rb])
        a, b = sorted((owner[ra], owner[rb]))
        ra, rb = index[a], index[b]
        merges.append((a, b, height))

        others = [c for c in active if c != a and c != b]
        if others:
            rows = np.array([index[c] for c in others])
            sizes_k = np.array([size[c] for c in others], dtype=np.float64)
            d_new = _lance_williams_update(
                linkage, dist[ra, rows], dist[rb, rows], height,
                float(size[a]), float(size[b]), sizes_k,
            )
            dist[ra, rows] = d_new
            dist[rows, ra] = d_new
        dist[rb, :] = np.inf
        dist[:, rb] = np.inf

        size[next_id] = size[a] + size[b]
        index[next_id] = ra
        owner[ra] = next_id
        active.discard(a)
        active.discard(b)
        active.add(next_id)
        next_id += 1

    labels = _cut_merges(n, merges, k)
    return ClusterResult(
        labels=labels,
        k=k,
        algorithm=AGGLOMERATIVE,
        silhouette=_maybe_silhouette(X, labels),
        merge_history=merges,
    )


def _cut_merges(n: int, merges, k: int) -> np.ndarray:
    """Replay the first n-k merges; components become clusters 0..k-1 ordered
    by their smallest member index."""
    parent = list(range(n + len(merges)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for t, (a, b, _) in enumerate(merges[: n - k]):
        new = n + t
        parent[find(a)] = new
        parent[find(b)] = new

    roots: dict[int, list[int]] = {}
    for i in range(n):
        roots.setdefault(find(i), []).append(i)
    components = sorted(roots.values(), key=min)
    labels = np.empty(n, dtype=np.intp)
    for lab, comp in enumerate(components):
        labels[comp] = lab
    return labels


# --- Gaussian mixture ---------------------------------------------------------


def _log_gaussian(X: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    d = X.shape[1]
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularCovariance(
            "covariance not positive definite (regularization disabled?)"
        ) from None
    diff = X - mean
    z = solve_triangular(L, diff.T, lower=True).T
    logdet = 2.0 * np.log(np.diag(L)).sum()
    return -0.5 * (d * np.log(2.0 * np.pi) + logdet + (z**2).sum(axis=1))


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def gmm_fit(
    data,
    k: int,
    seed: int = 0,
    max_iter: int = 200,
    tol: float = 1e-6,
    reg: float = 1e-6,
) -> ClusterResult:
    """EM for a full-covariance Gaussian mixture, initialized from k-means.

    Every covariance gets reg * I added on the diagonal, which keeps EM
    defined on degenerate inputs. Per-iteration log-likelihood is recorded;
    it is non-decreasing up to the (second-order) effect of regularization.
    """
    X = _as_matrix(data)
    n, d = X.shape
    _check_k(k, n)

    init = kmeans_fit(X, k, seed=seed)
    means = init.centroids.copy()
    weights = np.bincount(init.labels, minlength=k).astype(np.float64) / n
    covariances = np.empty((k, d, d))
    for j in range(k):
        mask = init.labels == j
        diff = X[mask] - means[j]
        covariances[j] = (diff.T @ diff) / max(int(mask.sum()), 1) + reg * np.eye(d)

    ll_history: list[float] = []
    resp = np.full((n, k), 1.0 / k)
    converged = False

    for _ in range(max_iter):
        # E step
        log_prob = np.empty((n, k))
        for j in range(k):
            log_prob[:, j] = np.log(max(weights[j], 1e-300)) + _log_gaussian(
                X, means[j], covariances[j]
            )
        norm = _logsumexp(log_prob, axis=1)
        ll = float(norm.sum())
        resp = np.exp(log_prob - norm[:, None])

        if ll_history and abs(ll - ll_history[-1]) < tol:
            ll_history.append(ll)
            converged = True
            break
        ll_history.append(ll)

        # M step
        nk = resp.sum(axis=0)
        weights = nk / n
        for j in range(k):
            if nk[j] <= 0:
                continue
            means[j] = resp[:, j] @ X / nk[j]
            diff = X - means[j]
            covariances[j] = (resp[:, j] * diff.T) @ diff / nk[j] + reg * np.eye(d)

    labels = np.argmax(resp, axis=1)
    return ClusterResult(
        labels=labels,
        k=k,
        algorithm=GMM,
        silhouette=_maybe_silhouette(X, labels),
        mixture=Mixture(
            weights=weights,
            means=means,
            covariances=covariances,
            responsibilities=resp,
        ),
        log_likelihood_history=ll_history,
        seed=seed,
        converged=converged,
    )


# --- silhouette ---------------------------------------------------------------


def silhouette(data, labels) -> tuple[float, np.ndarray]:
    """Mean silhouette score and per-sample scores, Euclidean distance.

    s(i) = (b(i) - a(i)) / max(a(i), b(i)) with a(i) the mean distance to
    same-cluster points and b(i) the smallest mean distance to another
    cluster. Singleton-cluster points score 0 by convention.
    """
    X = _as_matrix(data)
    labels = np.asarray(labels)
    if labels.shape[0] != X.shape[0]:
        raise ValueError("labels length must match sample count")
    values = np.unique(labels)
    if values.size < 2:
        raise SingleCluster("silhouette needs at least two clusters")

    diff = X[:, None, :] - X[None, :, :]
    dist = np.sqrt(np.einsum("ijd,ijd->ij", diff, diff))
    masks = {v: labels == v for v in values}
    sizes = {v: int(m.sum()) for v, m in masks.items()}

    n = X.shape[0]
    scores = np.zeros(n)
    for i in range(n):
        own = labels[i]
        if sizes[own] == 1:
            continue  # singleton: s = 0
        a = dist[i, masks[own]].sum() / (sizes[own] - 1)
        b = min(
            dist[i, masks[v]].mean() for v in values if v != own
        )
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean()), scores


def _maybe_silhouette(X: np.ndarray, labels: np.ndarray) -> float | None:
    if np.unique(labels).size < 2:
        return None
    overall, _ = silhouette(X, labels)
    return overall


def silhouette_table_csv(rows: list[tuple[str, str, float]]) -> str:
    """Rows of (algorithm, signal, silhouette)."""
    lines = ["algorithm,signal,silhouette"]
    for algo, signal, score in rows:
        lines.append(f"{algo},{signal},{score!r}")
    return "\n".join(lines) + "\n"


def labels_csv(ids: list[str], labels) -> str:
    lines = ["participant_id,cluster"]
    for pid, lab in zip(ids, labels):
        lines.append(f"{pid},{int(lab)}")
    return "\n".join(lines) + "\n"
