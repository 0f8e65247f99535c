"""Principal component analysis with explained-variance accounting.

Fitting uses an SVD of the centered data (numerically stable, no explicit
covariance matrix). Component signs are fixed so the largest-magnitude entry
of each component is positive, making fits deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, KOutOfRange


@dataclass(eq=False)
class PCAModel:
    mean: np.ndarray
    components: np.ndarray  # rows are components, orthonormal
    explained_variance: np.ndarray  # descending, 1/(n-1) convention
    explained_variance_ratio: np.ndarray
    n_samples: int
    degenerate: bool = False  # all rows identical: zero variance, zero ratios

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def fit_pca(data) -> PCAModel:
    """Fit a PCA model on a samples x features matrix."""
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("expected a 2-D samples x features matrix")
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 samples")
    if d < 1:
        raise ValueError("PCA needs at least 1 feature")
    if not np.isfinite(X).all():
        raise ValueError("input contains non-finite entries")

    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)

    explained = s**2 / (n - 1)
    total = explained.sum()
    degenerate = total == 0.0
    ratios = np.zeros_like(explained) if degenerate else explained / total

    # Deterministic sign: largest-magnitude entry of each component positive.
    for i in range(vt.shape[0]):
        j = np.argmax(np.abs(vt[i]))
        if vt[i, j] < 0:
            vt[i] = -vt[i]

    return PCAModel(
        mean=mean,
        components=vt,
        explained_variance=explained,
        explained_variance_ratio=ratios,
        n_samples=n,
        degenerate=degenerate,
    )


def pca_transform(model: PCAModel, data, k: int) -> np.ndarray:
    """Project data onto the first k components."""
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.mean.size:
        raise DimensionMismatch(
            f"data has {X.shape[-1] if X.ndim else 0} features, "
            f"model expects {model.mean.size}"
        )
    if not 1 <= k <= model.n_components:
        raise KOutOfRange(f"k={k} outside [1, {model.n_components}]")
    return (X - model.mean) @ model.components[:k].T


def components_for_variance(model: PCAModel, threshold: float) -> int:
    """Smallest k whose cumulative explained-variance ratio reaches threshold."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    cum = np.cumsum(model.explained_variance_ratio)
    # Guard against cumulative sums landing just below the threshold in floats.
    k = int(np.searchsorted(cum, threshold - 1e-12)) + 1
    return min(k, model.n_components)


def explained_variance_csv(model: PCAModel) -> str:
    """Cumulative-variance table (component_index is 1-based)."""
    lines = ["component_index,ratio,cumulative_ratio"]
    cum = 0.0
    for i, r in enumerate(model.explained_variance_ratio, start=1):
        cum += float(r)
        lines.append(f"{i},{float(r)!r},{cum!r}")
    return "\n".join(lines) + "\n"
