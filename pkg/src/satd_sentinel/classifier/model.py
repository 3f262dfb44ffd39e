"""L2-regularized logistic regression over comment n-grams.

Training is full-batch gradient descent from zero weights with a fixed step
derived from the data, so a (corpus, hyperparameters) pair always produces
the same model, bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import ModelError, TrainingError
from .features import FeatureVector, Vocabulary, featurize, tokenize

FORMAT_VERSION = 1
DEFAULT_THRESHOLD = 0.5


class Label(str, Enum):
    ON_HOLD = "OnHold"
    CROSS_REFERENCE = "CrossReference"


@dataclass(frozen=True)
class Hyper:
    l2: float = 1.0
    epochs: int = 400
    seed: int = 0
    n_max: int = 2
    min_df: int = 2
    calibrate: bool = False

    def __post_init__(self):
        if self.l2 < 0:
            raise TrainingError("l2 must be >= 0")
        if self.epochs < 1:
            raise TrainingError("epochs must be >= 1")


@dataclass
class LabeledCorpus:
    records: list[tuple[str, Label]]
    provenance: str = ""

    def __len__(self):
        return len(self.records)

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        for text, label in self.records:
            h.update(f"{Label(label).value}\t{text}\n".encode("utf-8"))
        return h.hexdigest()

    def labels(self) -> set[Label]:
        return {Label(label) for _, label in self.records}

    @classmethod
    def load(cls, path) -> "LabeledCorpus":
        path = Path(path)
        records = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            label, sep, text = line.partition("\t")
            if not sep:
                raise TrainingError(f"{path}:{lineno}: expected 'label<TAB>text'")
            try:
                records.append((text.replace("\\n", "\n"), Label(label.strip())))
            except ValueError:
                raise TrainingError(f"{path}:{lineno}: unknown label {label!r}") from None
        return cls(records, provenance=str(path))

    def dump(self, path) -> None:
        lines = [f"{Label(label).value}\t{text.replace(chr(10), chr(92) + 'n')}" for text, label in self.records]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def sigmoid(z):
    """Numerically stable logistic function for scalars or arrays."""
    if isinstance(z, np.ndarray):
        return np.exp(-np.logaddexp(0.0, -z))
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def loss_and_grad(weights, bias, X, y, l2):
    """Mean logistic loss plus ``l2 / (2n) * ||w||^2``; the bias is unpenalized.

    ``y`` holds 1 for OnHold and 0 otherwise.
    """
    n = X.shape[0]
    z = X @ weights + bias
    # log(1 + e^z) - y*z, stable for large |z|
    loss = float(np.sum(np.logaddexp(0.0, z) - y * z) / n + 0.5 * l2 * float(weights @ weights) / n)
    residual = sigmoid(z) - y
    grad_w = X.T @ residual / n + l2 * weights / n
    grad_b = float(np.sum(residual) / n)
    return loss, grad_w, grad_b


def design_matrix(token_lists, vocabulary: Vocabulary) -> np.ndarray:
    X = np.zeros((len(token_lists), len(vocabulary)), dtype=np.float64)
    for row, tokens in enumerate(token_lists):
        vec = featurize(tokens, vocabulary)
        if vec.indices:
            X[row, list(vec.indices)] = vec.values
    return X


@dataclass
class Model:
    vocabulary: Vocabulary
    weights: np.ndarray
    bias: float
    calibration: tuple[float, float] | None = None
    metadata: dict = field(default_factory=dict)
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (len(self.vocabulary),):
            raise ModelError(
                f"weights length {self.weights.shape} does not match vocabulary size {len(self.vocabulary)}"
            )

    @property
    def vocab_version(self) -> str:
        return self.vocabulary.version

    def featurize(self, body_text: str) -> FeatureVector:
        return featurize(tokenize(body_text), self.vocabulary)

    def decision(self, vector: FeatureVector) -> float:
        if vector.vocab_version != self.vocab_version:
            raise ModelError(
                f"feature vocabulary {vector.vocab_version} does not match model {self.vocab_version}"
            )
        z = self.bias
        for idx, value in zip(vector.indices, vector.values):
            z += float(self.weights[idx]) * value
        if self.calibration is not None:
            a, b = self.calibration
            z = a * z + b
        return z

    def predict_proba(self, body_text: str) -> float:
        return sigmoid(self.decision(self.featurize(body_text)))

    def predict(self, body_text: str) -> tuple[Label, float]:
        confidence = self.predict_proba(body_text)
        label = Label.ON_HOLD if confidence >= self.threshold else Label.CROSS_REFERENCE
        return label, confidence

    def to_bytes(self) -> bytes:
        doc = {
            "format_version": FORMAT_VERSION,
            "n_max": self.vocabulary.n_max,
            "vocabulary": list(self.vocabulary.terms),
            "vocab_version": self.vocab_version,
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "calibration": list(self.calibration) if self.calibration else None,
            "threshold": self.threshold,
            "metadata": self.metadata,
        }
        body = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return bytes([FORMAT_VERSION]) + body.encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes) -> "Model":
        if not data:
            raise ModelError("empty model file")
        if data[0] != FORMAT_VERSION:
            raise ModelError(f"unsupported model format version {data[0]}")
        try:
            doc = json.loads(data[1:].decode("utf-8"))
            vocabulary = Vocabulary(tuple(doc["vocabulary"]), doc["n_max"])
            model = cls(
                vocabulary=vocabulary,
                weights=np.array(doc["weights"], dtype=np.float64),
                bias=float(doc["bias"]),
                calibration=tuple(doc["calibration"]) if doc["calibration"] else None,
                metadata=doc["metadata"],
                threshold=float(doc["threshold"]),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise ModelError(f"corrupt model file: {exc}") from exc
        if doc.get("vocab_version") != vocabulary.version:
            raise ModelError("model vocabulary hash mismatch")
        return model

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Model":
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise ModelError(f"cannot read model {path}: {exc}") from exc
        return cls.from_bytes(data)


def step_size(X: np.ndarray, l2: float) -> float:
    """Inverse Lipschitz constant of the loss gradient (bias column included)."""
    n = X.shape[0]
    Xb = np.hstack([X, np.ones((n, 1))])
    sigma_max = float(np.linalg.norm(Xb, 2)) if Xb.size else 1.0
    return 1.0 / (sigma_max**2 / (4.0 * n) + l2 / n)


def fit_weights(X: np.ndarray, y: np.ndarray, l2: float, epochs: int):
    weights = np.zeros(X.shape[1], dtype=np.float64)
    bias = 0.0
    eta = step_size(X, l2)
    for _ in range(epochs):
        _, grad_w, grad_b = loss_and_grad(weights, bias, X, y, l2)
        weights -= eta * grad_w
        bias -= eta * grad_b
    return weights, bias


def fit_platt(scores: np.ndarray, y: np.ndarray, iterations: int = 50) -> tuple[float, float]:
    """Platt scaling fitted by Newton's method on smoothed targets."""
    n_pos = float(np.sum(y))
    n_neg = float(len(y) - n_pos)
    target = np.where(y > 0, (n_pos + 1) / (n_pos + 2), 1 / (n_neg + 2))
    a, b = 1.0, 0.0
    for _ in range(iterations):
        p = sigmoid(a * scores + b)
        r = p - target
        w = np.maximum(p * (1 - p), 1e-12)
        g = np.array([np.sum(r * scores), np.sum(r)])
        H = np.array([[np.sum(w * scores * scores), np.sum(w * scores)], [np.sum(w * scores), np.sum(w)]])
        H += 1e-9 * np.eye(2)
        da, db = np.linalg.solve(H, g)
        a, b = a - da, b - db
    return float(a), float(b)


def train(corpus: LabeledCorpus, hyper: Hyper | None = None, trained_at: str | None = None) -> Model:
    hyper = hyper or Hyper()
    if corpus.labels() != {Label.ON_HOLD, Label.CROSS_REFERENCE}:
        raise TrainingError("training corpus needs at least one OnHold and one CrossReference record")
    token_lists = [tokenize(text) for text, _ in corpus.records]
    vocabulary = Vocabulary.build(token_lists, n_max=hyper.n_max, min_df=hyper.min_df)
    if not len(vocabulary):
        raise TrainingError("training corpus produced an empty vocabulary")
    X = design_matrix(token_lists, vocabulary)
    y = np.array([1.0 if Label(label) is Label.ON_HOLD else 0.0 for _, label in corpus.records])
    weights, bias = fit_weights(X, y, hyper.l2, hyper.epochs)
    calibration = None
    if hyper.calibrate:
        calibration = fit_platt(X @ weights + bias, y)
    metadata = {
        "corpus_sha256": corpus.digest,
        "corpus_size": len(corpus),
        "trained_at": trained_at,
        "hyper": {
            "l2": hyper.l2,
            "epochs": hyper.epochs,
            "seed": hyper.seed,
            "n_max": hyper.n_max,
            "min_df": hyper.min_df,
            "calibrate": hyper.calibrate,
        },
    }
    return Model(vocabulary, weights, bias, calibration, metadata)


DESK_CORPUS = "desk_corpus.tsv"
DESK_MODEL = "desk_model.bin"


def data_path(name: str) -> Path:
    return Path(str(resources.files("satd_sentinel") / "data" / name))


def load_desk_corpus() -> LabeledCorpus:
    return LabeledCorpus.load(data_path(DESK_CORPUS))


def load_bundled_model() -> Model:
    return Model.load(data_path(DESK_MODEL))
