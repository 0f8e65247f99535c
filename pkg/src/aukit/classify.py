"""Time-series classification of participant recordings.

The pipeline is: build per-participant channel series (emotion or AU signals
resampled to a common length), split train/test, extract random-kernel
features, scale them on the training rows only, then fit a linear decision
rule -- either ridge regression with exact leave-one-out alpha selection or
logistic regression trained by full-batch gradient descent with backtracking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .emotions import EmotionDefinition
from .errors import (
    BadFraction,
    ClassTooSmall,
    DimensionMismatch,
    EmptyTest,
    NonFiniteLoss,
    SingleClass,
)
from .ingest import DEPRESSED, Cohort
from .rocket import RocketTransform, rocket_apply, rocket_init
from .stats import resample_series, signal_values

RIDGE_CV = "ridge_cv"
LOGISTIC = "logistic"

DEFAULT_ALPHAS = tuple(np.logspace(-3.0, 3.0, 10))


@dataclass(eq=False)
class Scaler:
    mode: str  # minmax | zscore
    offset: np.ndarray
    scale: np.ndarray  # reciprocal span/sd; 0 for constant features

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.offset.size:
            raise DimensionMismatch(
                f"{X.shape[-1]} features, scaler expects {self.offset.size}"
            )
        return (X - self.offset) * self.scale


@dataclass(eq=False)
class LinearModel:
    weights: np.ndarray
    intercept: float
    kind: str
    scaler: Scaler | None
    positive_label: object
    negative_label: object
    chosen_alpha: float | None = None
    loo_mse: dict[float, float] | None = None
    loss_history: list[float] = field(default_factory=list)

    def decision_function(self, features: np.ndarray) -> np.ndarray:
        X = np.asarray(features, dtype=np.float64)
        if self.scaler is not None:
            X = self.scaler.apply(X)
        return X @ self.weights + self.intercept

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        """P(positive class). Calibrated for logistic; for ridge this is a
        logistic squash of the decision value and is only a ranking score."""
        z = self.decision_function(features)
        p = 1.0 / (1.0 + np.exp(-z))
        return np.clip(p, 1e-12, 1.0 - 1e-12)


@dataclass(eq=False)
class EvalReport:
    method: str
    accuracy: float
    confusion: dict[str, int]  # tp, fp, fn, tn; positive = positive_label
    probabilities: list[tuple[str, object, float]]  # (id, true_label, p_pos)
    calibrated: bool
    positive_label: object


def scale_features(train, test, mode: str = "minmax"):
    """Fit scaling on train only, apply to both. Constant features map to 0."""
    train = np.asarray(train, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if train.ndim != 2 or train.shape[0] < 1:
        raise ValueError("train must be a non-empty 2-D matrix")
    if test.ndim != 2 or test.shape[1] != train.shape[1]:
        raise DimensionMismatch(
            f"test has {test.shape[-1]} features, train has {train.shape[1]}"
        )
    if mode == "minmax":
        offset = train.min(axis=0)
        span = train.max(axis=0) - offset
        scale = np.where(span > 0, 1.0 / np.where(span > 0, span, 1.0), 0.0)
    elif mode == "zscore":
        offset = train.mean(axis=0)
        sd = train.std(axis=0)
        scale = np.where(sd > 0, 1.0 / np.where(sd > 0, sd, 1.0), 0.0)
    else:
        raise ValueError(f"unknown scaling mode {mode!r}")
    scaler = Scaler(mode=mode, offset=offset, scale=scale)
    return scaler.apply(train), scaler.apply(test), scaler


def stratified_split(
    labels,
    test_frac: float,
    seed: int = 0,
    mode: str = "stratified",
) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint, exhaustive (train, test) index split.

    stratified keeps per-class test counts at round(test_frac * n_class),
    within one sample of exact proportionality; random rounds globally.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if not 0.0 < test_frac < 1.0:
        raise BadFraction(f"test_frac must be in (0, 1), got {test_frac}")
    if mode not in ("stratified", "random"):
        raise ValueError(f"unknown split mode {mode!r}")

    rng = np.random.default_rng(seed)
    if mode == "random":
        order = rng.permutation(n)
        n_test = int(round(test_frac * n))
        test_idx = np.sort(order[:n_test])
        train_idx = np.sort(order[n_test:])
        return train_idx, test_idx

    test_parts = []
    train_parts = []
    for value in np.unique(labels):
        idx = np.flatnonzero(labels == value)
        if idx.size < 1:
            raise ClassTooSmall(f"class {value!r} has no samples")
        n_test = int(round(test_frac * idx.size))
        if n_test >= idx.size:
            raise ClassTooSmall(
                f"class {value!r} ({idx.size} samples) would have no "
                f"training samples at test_frac={test_frac}"
            )
        order = rng.permutation(idx.size)
        test_parts.append(idx[order[:n_test]])
        train_parts.append(idx[order[n_test:]])
    test_idx = np.sort(np.concatenate(test_parts))
    train_idx = np.sort(np.concatenate(train_parts))
    return train_idx, test_idx


def _encode_labels(labels, positive_label):
    labels = np.asarray(labels, dtype=object)
    classes = sorted(set(labels.tolist()), key=str)
    if len(classes) != 2:
        raise SingleClass(f"need exactly 2 classes, got {classes}")
    if positive_label is None:
        positive_label = DEPRESSED if DEPRESSED in classes else classes[1]
    if positive_label not in classes:
        raise ValueError(f"positive label {positive_label!r} not in {classes}")
    negative_label = next(c for c in classes if c != positive_label)
    y = np.where(labels == positive_label, 1.0, -1.0)
    return y, positive_label, negative_label


def ridge_cv_train(
    features,
    labels,
    alphas=DEFAULT_ALPHAS,
    *,
    positive_label=None,
    scaler: Scaler | None = None,
) -> LinearModel:
    """Ridge classifier (labels encoded +/-1) with exact leave-one-out
    selection of the regularization strength.

    The intercept is fitted by centering and left unpenalized. LOO residuals
    come from the hat-matrix identity e_i = r_i / (1 - h_ii), evaluated per
    alpha on one SVD of the centered features.
    """
    X = np.asarray(features, dtype=np.float64)
    alphas = [float(a) for a in alphas]
    if not alphas or any(a <= 0 for a in alphas):
        raise ValueError("alphas must be non-empty and strictly positive")
    y, pos, neg = _encode_labels(labels, positive_label)

    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    uty = U.T @ yc
    n = X.shape[0]

    loo = {}
    for alpha in alphas:
        d = s**2 / (s**2 + alpha)
        fitted = U @ (d * uty)
        hat = 1.0 / n + (U**2) @ d
        resid = (yc - fitted) / (1.0 - hat)
        loo[alpha] = float((resid**2).mean())
    # Ties break toward stronger regularization.
    best = min(loo, key=lambda a: (loo[a], -a))

    coef = Vt.T @ ((s / (s**2 + best)) * uty)
    intercept = float(y_mean - x_mean @ coef)
    return LinearModel(
        weights=coef,
        intercept=intercept,
        kind=RIDGE_CV,
        scaler=scaler,
        positive_label=pos,
        negative_label=neg,
        chosen_alpha=best,
        loo_mse=loo,
    )


def logistic_loss_grad(weights, intercept, X, y, l2):
    """Mean L2-regularized negative log-likelihood and its gradient.

    y is +/-1; the intercept is not penalized. Exposed so the analytic
    gradient can be checked against finite differences.
    """
    z = X @ weights + intercept
    loss = float(np.logaddexp(0.0, -y * z).mean() + 0.5 * l2 * (weights @ weights))
    # sigma(-y z) = 1 - sigma(y z), the per-sample misfit weight
    w_mis = 1.0 / (1.0 + np.exp(y * z))
    grad_w = -(y * w_mis) @ X / X.shape[0] + l2 * weights
    grad_b = float(-(y * w_mis).mean())
    return loss, grad_w, grad_b


def logistic_train(
    features,
    labels,
    l2: float = 1e-4,
    learning_rate: float = 1.0,
    epochs: int = 300,
    *,
    positive_label=None,
    scaler: Scaler | None = None,
) -> LinearModel:
    """Full-batch gradient descent with backtracking line search.

    A step that would increase the loss halves the learning rate and retries,
    so the recorded loss history is non-increasing by construction.
    """
    X = np.asarray(features, dtype=np.float64)
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    y, pos, neg = _encode_labels(labels, positive_label)

    w = np.zeros(X.shape[1])
    b = 0.0
    lr = float(learning_rate)
    loss, gw, gb = logistic_loss_grad(w, b, X, y, l2)
    history = [loss]
    for _ in range(epochs):
        if not np.isfinite(loss):
            raise NonFiniteLoss("training loss is not finite")
        while True:
            w_new = w - lr * gw
            b_new = b - lr * gb
            new_loss, new_gw, new_gb = logistic_loss_grad(w_new, b_new, X, y, l2)
            if new_loss <= loss or lr <= 1e-12:
                break
            lr *= 0.5
        if new_loss > loss:
            break  # step size exhausted; keep the last good iterate
        w, b, loss, gw, gb = w_new, b_new, new_loss, new_gw, new_gb
        history.append(loss)

    return LinearModel(
        weights=w,
        intercept=float(b),
        kind=LOGISTIC,
        scaler=scaler,
        positive_label=pos,
        negative_label=neg,
        loss_history=history,
    )


def evaluate(
    model: LinearModel,
    transform: RocketTransform,
    test_series,
    test_labels,
    ids=None,
) -> EvalReport:
    """Accuracy, confusion counts, and per-true-class positive probabilities
    on a held-out set of raw series."""
    X = np.asarray(test_series, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[0] == 0:
        raise EmptyTest("test set is empty")
    labels = list(test_labels)
    if len(labels) != X.shape[0]:
        raise ValueError("labels length must match series count")
    if ids is None:
        ids = [str(i) for i in range(X.shape[0])]

    features = rocket_apply(transform, X)
    p_pos = model.predict_proba(features)
    predicted_pos = model.decision_function(features) > 0

    tp = fp = fn = tn = 0
    probabilities = []
    for pid, true, pred_pos, p in zip(ids, labels, predicted_pos, p_pos):
        actual_pos = true == model.positive_label
        if actual_pos and pred_pos:
            tp += 1
        elif actual_pos:
            fn += 1
        elif pred_pos:
            fp += 1
        else:
            tn += 1
        probabilities.append((pid, true, float(p)))

    return EvalReport(
        method=model.kind,
        accuracy=(tp + tn) / len(labels),
        confusion={"tp": tp, "fp": fp, "fn": fn, "tn": tn},
        probabilities=probabilities,
        calibrated=model.kind == LOGISTIC,
        positive_label=model.positive_label,
    )


# --- cohort-level pipeline -----------------------------------------------------


def build_channel_matrix(
    cohort: Cohort,
    signals: list[str],
    T: int,
    definitions: dict[str, EmotionDefinition] | None = None,
):
    """Per-participant concatenated channel rows (n, len(signals) * T), plus
    labels and participant ids, in cohort order."""
    rows, labels, ids = [], [], []
    for series, label in cohort.participants:
        channels = [
            resample_series(signal_values(series, sig, definitions), T)
            for sig in signals
        ]
        rows.append(np.concatenate(channels))
        labels.append(label)
        ids.append(series.participant_id)
    return np.stack(rows), labels, ids


def _derived_seeds(seed: int, n: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1)[0]) for c in children]


def classify_cohort(
    cohort: Cohort,
    signals: list[str] = ("Happiness", "Sadness"),
    T: int = 300,
    num_kernels: int = 10_000,
    classifiers: tuple[str, ...] = (LOGISTIC, RIDGE_CV),
    test_frac: float = 0.2,
    split_mode: str = "stratified",
    scale_mode: str = "minmax",
    seed: int = 0,
    alphas=DEFAULT_ALPHAS,
    l2: float = 1e-4,
    learning_rate: float = 1.0,
    epochs: int = 300,
    definitions: dict[str, EmotionDefinition] | None = None,
) -> dict[str, EvalReport]:
    """Full classification stage on a loaded cohort; deterministic in seed."""
    X, labels, ids = build_channel_matrix(cohort, list(signals), T, definitions)
    split_seed, kernel_seed = _derived_seeds(seed, 2)
    train_idx, test_idx = stratified_split(labels, test_frac, split_seed, split_mode)

    transform = rocket_init(num_kernels, T, kernel_seed, num_channels=len(signals))
    train_f = rocket_apply(transform, X[train_idx])
    test_f = rocket_apply(transform, X[test_idx])
    train_s, _, scaler = scale_features(train_f, test_f, scale_mode)
    train_labels = [labels[i] for i in train_idx]
    test_labels = [labels[i] for i in test_idx]
    test_ids = [ids[i] for i in test_idx]

    reports = {}
    for kind in classifiers:
        if kind == LOGISTIC:
            model = logistic_train(
                train_s, train_labels, l2=l2, learning_rate=learning_rate,
                epochs=epochs, scaler=scaler,
            )
        elif kind == RIDGE_CV:
            model = ridge_cv_train(train_s, train_labels, alphas, scaler=scaler)
        else:
            raise ValueError(f"unknown classifier {kind!r}")
        reports[kind] = evaluate(
            model, transform, X[test_idx], test_labels, ids=test_ids
        )
    return reports


# --- CSV emission ----------------------------------------------------------------

METHOD_NAMES = {LOGISTIC: "ROCKET+Logistic", RIDGE_CV: "ROCKET+Ridge"}


def accuracy_csv(reports: dict[str, EvalReport]) -> str:
    lines = ["method,accuracy"]
    for kind in (LOGISTIC, RIDGE_CV):
        if kind in reports:
            lines.append(f"{METHOD_NAMES[kind]},{reports[kind].accuracy!r}")
    return "\n".join(lines) + "\n"


def probabilities_csv(report: EvalReport) -> str:
    lines = ["participant_id,true_label,p_positive"]
    for pid, true, p in report.probabilities:
        lines.append(f"{pid},{true},{p!r}")
    return "\n".join(lines) + "\n"
