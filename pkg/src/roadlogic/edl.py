"""Evidential classification core.

A small classifier maps feature vectors to per-class evidence.  Evidence is
turned into a Dirichlet concentration vector via ``alpha = relu(raw) + 1``,
whose normalised form gives the expected class probabilities.  Training
minimises an expected squared residual plus an annealed KL regulariser that
pulls unwarranted evidence back toward the uniform Dirichlet.  Two
uncertainty measures fall out of the concentration: an aleatoric score
(negated top-class probability) and an epistemic score (class count over
total evidence).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import digamma, gammaln, polygamma

MODEL_FORMAT = "edl-v1"


@dataclass(frozen=True)
class DirichletPrediction:
    """Concentration vector plus the quantities derived from it."""

    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if not np.all(np.isfinite(alpha)):
            raise ValueError("non-finite concentration")
        if np.any(alpha <= 0):
            raise ValueError("concentration entries must be positive")
        object.__setattr__(self, "alpha", alpha)

    @property
    def num_classes(self) -> int:
        return self.alpha.shape[0]

    @property
    def total(self) -> float:
        return float(self.alpha.sum())

    @property
    def probabilities(self) -> np.ndarray:
        return self.alpha / self.total

    @property
    def u_alea(self) -> float:
        return -float(self.probabilities.max())

    @property
    def u_epis(self) -> float:
        return self.num_classes / self.total

    @property
    def label(self) -> int:
        return int(np.argmax(self.alpha))


def dirichlet_from_raw(raw) -> DirichletPrediction:
    """alpha = relu(raw) + 1, so zero evidence yields the uniform Dirichlet."""
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise ValueError("non-finite raw outputs")
    return DirichletPrediction(np.maximum(raw, 0.0) + 1.0)


def uncertainties(prediction: DirichletPrediction) -> tuple[float, float]:
    """(aleatoric, epistemic) = (-max_c p_c, C / sum(alpha))."""
    return prediction.u_alea, prediction.u_epis


def kl_to_uniform(alpha) -> float:
    """KL divergence from Dir(alpha) to the uniform Dirichlet, closed form."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError("concentration entries must be positive")
    total = alpha.sum()
    c = alpha.shape[0]
    return float(
        gammaln(total)
        - gammaln(alpha).sum()
        - gammaln(c)
        + ((alpha - 1.0) * (digamma(alpha) - digamma(total))).sum()
    )


def _kl_batch(alpha: np.ndarray) -> np.ndarray:
    total = alpha.sum(axis=1, keepdims=True)
    c = alpha.shape[1]
    return (
        gammaln(total[:, 0])
        - gammaln(alpha).sum(axis=1)
        - gammaln(c)
        + ((alpha - 1.0) * (digamma(alpha) - digamma(total))).sum(axis=1)
    )


def _kl_grad(alpha: np.ndarray) -> np.ndarray:
    """d KL(Dir(alpha) || uniform) / d alpha, row-wise."""
    total = alpha.sum(axis=1, keepdims=True)
    excess = (alpha - 1.0).sum(axis=1, keepdims=True)
    return (alpha - 1.0) * polygamma(1, alpha) - polygamma(1, total) * excess


@dataclass
class EvidentialModel:
    """One-hidden-layer classifier producing per-class raw evidence."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    config_hash: str = ""

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def num_classes(self) -> int:
        return self.w2.shape[1]

    @staticmethod
    def initialise(input_dim: int, hidden_dim: int, num_classes: int, seed: int) -> "EvidentialModel":
        rng = np.random.default_rng(seed)
        scale1 = 1.0 / np.sqrt(input_dim)
        scale2 = 1.0 / np.sqrt(hidden_dim)
        return EvidentialModel(
            w1=rng.normal(0.0, scale1, size=(input_dim, hidden_dim)),
            b1=np.zeros(hidden_dim),
            w2=rng.normal(0.0, scale2, size=(hidden_dim, num_classes)),
            # evidence outputs start slightly alive; a rectified head that is
            # born dead receives no gradient and never recovers
            b2=np.full(num_classes, 0.5),
        )

    def raw_outputs(self, features: np.ndarray) -> np.ndarray:
        hidden = np.tanh(features @ self.w1 + self.b1)
        return hidden @ self.w2 + self.b2

    def alphas(self, features: np.ndarray) -> np.ndarray:
        return np.maximum(self.raw_outputs(features), 0.0) + 1.0

    def predict(self, feature_vector: np.ndarray) -> DirichletPrediction:
        raw = self.raw_outputs(np.asarray(feature_vector, dtype=float)[None, :])[0]
        return dirichlet_from_raw(raw)

    def parameters(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def save(self, path) -> None:
        payload = {
            "version": MODEL_FORMAT,
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "num_classes": self.num_classes,
            "config_hash": self.config_hash,
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @staticmethod
    def load(path) -> "EvidentialModel":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("version") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {payload.get('version')!r}")
        return EvidentialModel(
            w1=np.array(payload["w1"], dtype=float),
            b1=np.array(payload["b1"], dtype=float),
            w2=np.array(payload["w2"], dtype=float),
            b2=np.array(payload["b2"], dtype=float),
            config_hash=payload.get("config_hash", ""),
        )


@dataclass
class TrainingSchedule:
    epochs: int = 40
    learning_rate: float = 0.05
    anneal_denominator: float = 10.0
    batch_size: int = 32
    seed: int = 0
    hidden_dim: int = 16
    loss_variant: str = "squared"  # "squared" or the sign-indefinite "literal"
    kl_target: str = "full"  # "full" alpha or the label-"adjusted" variant

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.loss_variant not in ("squared", "literal"):
            raise ValueError(f"unknown loss variant {self.loss_variant!r}")
        if self.kl_target not in ("full", "adjusted"):
            raise ValueError(f"unknown kl target {self.kl_target!r}")

    def lambda_at(self, t: float) -> float:
        return min(1.0, t)

    def hash(self) -> str:
        blob = json.dumps(self.__dict__, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class LossBreakdown:
    data_term: float
    kl_term: float
    lambda_t: float
    n_samples: int

    @property
    def total(self) -> float:
        return self.data_term + self.lambda_t * self.kl_term


def _loss_terms(alpha: np.ndarray, labels: np.ndarray, variant: str, kl_target: str):
    total = alpha.sum(axis=1, keepdims=True)
    probs = alpha / total
    if variant == "squared":
        residual = ((labels - probs) ** 2).sum(axis=1)
    else:
        residual = (labels - probs).sum(axis=1)
    variance = (probs * (1.0 - probs) / (total + 1.0)).sum(axis=1)
    if kl_target == "adjusted":
        kl_alpha = labels + (1.0 - labels) * alpha
    else:
        kl_alpha = alpha
    return residual + variance, _kl_batch(kl_alpha)


def edl_loss(features: np.ndarray, labels: np.ndarray, model: EvidentialModel, t: float,
             variant: str = "squared", kl_target: str = "full") -> LossBreakdown:
    """Loss over a batch of one-hot labelled feature rows; total adds the
    annealed KL with coefficient min(1, t)."""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if features.shape[0] == 0:
        raise ValueError("empty batch")
    if labels.shape != (features.shape[0], model.num_classes):
        raise ValueError("label shape mismatch")
    alpha = model.alphas(features)
    data, kl = _loss_terms(alpha, labels, variant, kl_target)
    return LossBreakdown(float(data.sum()), float(kl.sum()), min(1.0, t), features.shape[0])


def loss_gradient(features: np.ndarray, labels: np.ndarray, model: EvidentialModel, t: float,
                  variant: str = "squared", kl_target: str = "full") -> dict[str, np.ndarray]:
    """Analytic gradient of the total loss w.r.t. every model parameter."""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    lam = min(1.0, t)

    hidden = np.tanh(features @ model.w1 + model.b1)
    raw = hidden @ model.w2 + model.b2
    alpha = np.maximum(raw, 0.0) + 1.0
    total = alpha.sum(axis=1, keepdims=True)
    probs = alpha / total

    # data term: d/d p, then the within-simplex projection d p / d alpha,
    # plus the direct dependence of the variance denominator on sum(alpha)
    if variant == "squared":
        g_p = -2.0 * (labels - probs)
    else:
        g_p = -np.ones_like(probs)
    g_p = g_p + (1.0 - 2.0 * probs) / (total + 1.0)
    g_bar = (g_p * probs).sum(axis=1, keepdims=True)
    var_sum = (probs * (1.0 - probs)).sum(axis=1, keepdims=True)
    d_alpha = (g_p - g_bar) / total - var_sum / (total + 1.0) ** 2

    if kl_target == "adjusted":
        kl_alpha = labels + (1.0 - labels) * alpha
        d_alpha = d_alpha + lam * _kl_grad(kl_alpha) * (1.0 - labels)
    else:
        d_alpha = d_alpha + lam * _kl_grad(alpha)

    d_raw = d_alpha * (raw > 0.0)
    d_hidden = d_raw @ model.w2.T
    d_z1 = d_hidden * (1.0 - hidden ** 2)
    return {
        "w1": features.T @ d_z1,
        "b1": d_z1.sum(axis=0),
        "w2": hidden.T @ d_raw,
        "b2": d_raw.sum(axis=0),
    }


@dataclass
class TrainingHistory:
    losses: list[LossBreakdown] = field(default_factory=list)
    final_train_accuracy: float = 0.0


def train(features: np.ndarray, labels: np.ndarray, schedule: TrainingSchedule) -> tuple[EvidentialModel, TrainingHistory]:
    """Seeded mini-batch gradient descent; t advances as epoch / denominator."""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if features.shape[0] == 0:
        raise ValueError("empty dataset")
    class_counts = labels.sum(axis=0)
    if np.count_nonzero(class_counts) < 2:
        raise ValueError("training data covers a single class")

    n, input_dim = features.shape
    num_classes = labels.shape[1]
    model = EvidentialModel.initialise(input_dim, schedule.hidden_dim, num_classes, schedule.seed)
    model.config_hash = schedule.hash()
    rng = np.random.default_rng(schedule.seed)
    history = TrainingHistory()

    for epoch in range(schedule.epochs):
        t = epoch / schedule.anneal_denominator
        order = rng.permutation(n)
        for start in range(0, n, schedule.batch_size):
            idx = order[start : start + schedule.batch_size]
            grads = loss_gradient(
                features[idx], labels[idx], model, t,
                variant=schedule.loss_variant, kl_target=schedule.kl_target,
            )
            scale = schedule.learning_rate / len(idx)
            model.w1 -= scale * grads["w1"]
            model.b1 -= scale * grads["b1"]
            model.w2 -= scale * grads["w2"]
            model.b2 -= scale * grads["b2"]
        history.losses.append(
            edl_loss(features, labels, model, t, schedule.loss_variant, schedule.kl_target)
        )
    predicted = model.alphas(features).argmax(axis=1)
    history.final_train_accuracy = float((predicted == labels.argmax(axis=1)).mean())
    return model, history
