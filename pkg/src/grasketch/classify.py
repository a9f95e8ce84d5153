"""Classifiers over subspaces and their sketches: linear SVM trained directly in
the sketched feature space, kernel SVM on a precomputed Gram matrix, and a
nearest-subspace rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from grasketch.kernels_exact import GramMatrix
from grasketch.sketch import BitSketch, RealSketch

KKT_TOL = 1e-3
MAX_DUAL_PASSES = 1000


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Samples (subspaces or sketches) with small-integer class labels."""

    samples: list
    labels: np.ndarray
    class_count: int

    def __post_init__(self) -> None:
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        if len(self.samples) != labels.size:
            raise ValueError(
                f"{len(self.samples)} samples but {labels.size} labels"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ValueError("labels must lie in [0, class_count)")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.samples)


def feature_matrix(samples) -> np.ndarray:
    """Stack sketches into an (N, m) design matrix; BitSketches enter as +-1."""
    if isinstance(samples, np.ndarray):
        return samples
    rows = []
    for s in samples:
        if isinstance(s, RealSketch):
            rows.append(s.values)
        elif isinstance(s, BitSketch):
            rows.append(s.pm1())
        else:
            raise TypeError(f"cannot build features from {type(s).__name__}")
    mat = np.stack(rows)
    return mat


@dataclass(frozen=True, eq=False)
class LinearSvmModel:
    """One-vs-rest hinge classifiers over the m-dimensional sketched feature space."""

    weights: np.ndarray  # (class_count, m)
    bias: np.ndarray  # (class_count,)
    lam: float
    epochs: int

    def decision(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights.T + self.bias

    def predict(self, samples) -> np.ndarray:
        x = feature_matrix(samples)
        if x.shape[1] != self.weights.shape[1]:
            raise ValueError(
                f"feature length {x.shape[1]} does not match model ({self.weights.shape[1]})"
            )
        return np.argmax(self.decision(x), axis=1)


def train_linear_svm(
    data: LabeledDataset,
    lam: float | None = None,
    epochs: int = 20,
    shuffle_seed: int = 0,
    fit_bias: bool = True,
) -> LinearSvmModel:
    """Averaged stochastic subgradient descent with step 1/(lam * t) per class.

    The averaged iterate is accumulated in closed form over the violating steps,
    so each update touches O(m) memory only when the hinge is active.
    """
    x = feature_matrix(data.samples)
    count, m = x.shape
    if data.class_count < 2:
        raise ValueError("need at least 2 classes")
    if len(np.unique(data.labels)) < 2:
        raise ValueError("training data contains a single class")
    if lam is None:
        lam = 1.0 / count
    if fit_bias:
        x = np.hstack([x, np.ones((count, 1))])
    total_steps = epochs * count
    harmonic = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, total_steps + 1))])
    rng = np.random.default_rng(shuffle_seed)
    weights = np.zeros((data.class_count, x.shape[1]))
    for cls in range(data.class_count):
        y = np.where(data.labels == cls, 1.0, -1.0)
        u = np.zeros(x.shape[1])  # unscaled sum of violating y_s * x_s
        viol_steps: list[int] = []
        viol_idx: list[int] = []
        t = 0
        for _ in range(epochs):
            for i in rng.permutation(count):
                t += 1
                # w_t = u / (lam * (t - 1)); margin check with w_1 = 0
                margin = 0.0 if t == 1 else y[i] * (u @ x[i]) / (lam * (t - 1))
                if margin < 1.0:
                    u += y[i] * x[i]
                    viol_steps.append(t)
                    viol_idx.append(i)
        # averaged iterate: (1 / (lam T)) * sum_s y_s x_s (H_T - H_{s-1})
        steps = np.asarray(viol_steps)
        coefs = (harmonic[total_steps] - harmonic[steps - 1]) / (lam * total_steps)
        weights[cls] = (coefs * y[viol_idx]) @ x[viol_idx]
    if fit_bias:
        return LinearSvmModel(weights[:, :-1], weights[:, -1], lam, epochs)
    return LinearSvmModel(weights, np.zeros(data.class_count), lam, epochs)


@dataclass(frozen=True, eq=False)
class KernelSvmModel:
    """One-vs-rest dual coefficients over the training set of a precomputed Gram."""

    coef: np.ndarray  # (class_count, N): alpha_i * y_i per class
    bias: np.ndarray  # (class_count,)
    gram: GramMatrix

    def decision(self, cross: np.ndarray) -> np.ndarray:
        """Scores from a (N_test, N_train) cross-kernel matrix."""
        if cross.shape[1] != self.coef.shape[1]:
            raise ValueError(
                f"cross-kernel has {cross.shape[1]} columns, expected {self.coef.shape[1]}"
            )
        return cross @ self.coef.T + self.bias

    def predict(self, cross: np.ndarray) -> np.ndarray:
        return np.argmax(self.decision(cross), axis=1)


def train_kernel_svm(gram: GramMatrix, labels, c: float = 1.0) -> KernelSvmModel:
    """Dual coordinate descent on the one-vs-rest hinge dual.

    Converged when the maximum KKT violation drops below 1e-3, or at the pass
    cap. A Gram with eigen-mass below -1e-6 is lifted by adding eps*I.
    """
    labels = np.asarray(labels, dtype=np.int64)
    kmat = np.array(gram.values)
    if kmat.shape[0] != labels.size:
        raise ValueError("label count does not match Gram size")
    class_count = int(labels.max()) + 1
    if class_count < 2 or len(np.unique(labels)) < 2:
        raise ValueError("need at least 2 classes")
    min_eig = float(np.linalg.eigvalsh((kmat + kmat.T) / 2).min())
    if min_eig < -1e-6:
        kmat = kmat + (-min_eig + 1e-9) * np.eye(kmat.shape[0])
    diag = np.diag(kmat).copy()
    diag[diag <= 0] = 1e-12
    count = labels.size
    coef = np.zeros((class_count, count))
    for cls in range(class_count):
        y = np.where(labels == cls, 1.0, -1.0)
        alpha = np.zeros(count)
        f = np.zeros(count)  # f_i = sum_j alpha_j y_j K_ij
        for _ in range(MAX_DUAL_PASSES):
            worst = 0.0
            for i in range(count):
                grad = y[i] * f[i] - 1.0
                if alpha[i] <= 0:
                    viol = max(0.0, -grad)
                elif alpha[i] >= c:
                    viol = max(0.0, grad)
                else:
                    viol = abs(grad)
                worst = max(worst, viol)
                if viol > 0:
                    new = np.clip(alpha[i] - grad / diag[i], 0.0, c)
                    delta = new - alpha[i]
                    if delta != 0.0:
                        alpha[i] = new
                        f += delta * y[i] * kmat[:, i]
            if worst < KKT_TOL:
                break
        coef[cls] = alpha * y
    return KernelSvmModel(coef, np.zeros(class_count), gram)


@dataclass(frozen=True, eq=False)
class KernelSvmPredictor:
    """Bundles a kernel SVM with its training samples so it can score raw inputs."""

    model: KernelSvmModel
    train_samples: list
    kernel: "callable"

    def predict(self, samples) -> np.ndarray:
        cross = np.array(
            [[self.kernel(s, t) for t in self.train_samples] for s in samples]
        )
        return self.model.predict(cross)


def nearest_subspace_classify(train: LabeledDataset, sample, similarity) -> int:
    """Label of the training sample most similar to `sample`; ties go to the
    lowest training index."""
    if not train.samples:
        raise ValueError("empty training set")
    scores = np.array([similarity(sample, t) for t in train.samples])
    return int(train.labels[int(np.argmax(scores))])


@dataclass(frozen=True, eq=False)
class NearestSubspaceModel:
    train: LabeledDataset
    similarity: "callable"

    def predict(self, samples) -> np.ndarray:
        return np.array(
            [nearest_subspace_classify(self.train, s, self.similarity) for s in samples]
        )


def evaluate(model, test: LabeledDataset) -> dict:
    """Accuracy in [0, 1] plus the per-class confusion matrix (rows = truth)."""
    predictions = np.asarray(model.predict(test.samples))
    confusion = np.zeros((test.class_count, test.class_count), dtype=np.int64)
    for truth, pred in zip(test.labels, predictions):
        confusion[truth, pred] += 1
    accuracy = float(np.mean(predictions == test.labels)) if len(test) else 0.0
    return {
        "accuracy": accuracy,
        "confusion": confusion.tolist(),
        "count": len(test),
    }
