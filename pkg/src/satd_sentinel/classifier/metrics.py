"""Cross-validated evaluation: precision, recall, F-measure and rank-sum AUC."""

from __future__ import annotations

import logging
import random
from dataclasses import asdict, dataclass, field

from ..errors import TrainingError
from .model import Hyper, Label, LabeledCorpus, train

logger = logging.getLogger(__name__)


def auc_rank_sum(scores, labels) -> float:
    """Probability that a random positive outranks a random negative, ties count 0.5.

    Computed from average ranks (Mann-Whitney U) in O(n log n).
    """
    pairs = sorted(zip(scores, labels), key=lambda p: p[0])
    n_pos = sum(1 for _, l in pairs if l)
    n_neg = len(pairs) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    rank_sum = 0.0
    i = 0
    while i < len(pairs):
        j = i
        while j + 1 < len(pairs) and pairs[j + 1][0] == pairs[i][0]:
            j += 1
        avg_rank = (i + j) / 2.0 + 1.0
        rank_sum += avg_rank * sum(1 for k in range(i, j + 1) if pairs[k][1])
        i = j + 1
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass
class Confusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def add(self, predicted: bool, actual: bool) -> None:
        if predicted and actual:
            self.tp += 1
        elif predicted:
            self.fp += 1
        elif actual:
            self.fn += 1
        else:
            self.tn += 1

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f_measure(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass
class FoldResult:
    fold: int
    size: int
    precision: float
    recall: float
    f_measure: float
    auc: float
    confusion: dict
    scores: list[float] = field(default_factory=list, repr=False)
    labels: list[int] = field(default_factory=list, repr=False)


@dataclass
class EvalReport:
    folds: list[FoldResult]
    requested_folds: int
    seed: int

    @property
    def effective_folds(self) -> int:
        return len(self.folds)

    def _mean(self, attr):
        return sum(getattr(f, attr) for f in self.folds) / len(self.folds) if self.folds else 0.0

    @property
    def precision(self):
        return self._mean("precision")

    @property
    def recall(self):
        return self._mean("recall")

    @property
    def f_measure(self):
        return self._mean("f_measure")

    @property
    def auc(self):
        return self._mean("auc")

    @property
    def confusion(self) -> dict:
        total = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
        for f in self.folds:
            for k in total:
                total[k] += f.confusion[k]
        return total

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "requested_folds": self.requested_folds,
            "effective_folds": self.effective_folds,
            "seed": self.seed,
            "mean": {
                "precision": self.precision,
                "recall": self.recall,
                "f_measure": self.f_measure,
                "auc": self.auc,
            },
            "confusion": self.confusion,
            "folds": [
                {k: v for k, v in asdict(f).items() if k not in ("scores", "labels")} for f in self.folds
            ],
        }


def stratified_folds(labels, k: int, seed: int) -> list[list[int]]:
    """Seeded shuffle within each class, then round-robin into ``k`` folds."""
    if k < 2:
        raise TrainingError("folds must be >= 2")
    rng = random.Random(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for label in sorted({Label(l).value for l in labels}):
        members = [i for i, l in enumerate(labels) if Label(l).value == label]
        rng.shuffle(members)
        for j, idx in enumerate(members):
            folds[(offset + j) % k].append(idx)
        offset += len(members)
    return [sorted(f) for f in folds]


def model_fitter(hyper: Hyper | None = None):
    """Fit callback that trains a fresh model per fold and scores with it."""

    def fit(train_corpus: LabeledCorpus):
        return train(train_corpus, hyper).predict_proba

    return fit


def fixed_scorer(score):
    """Fit callback that ignores the training split (pre-trained model or baseline)."""

    def fit(_train_corpus):
        return score

    return fit


def majority_fitter():
    """Baseline that always predicts the training split's majority class (ties go to OnHold)."""

    def fit(train_corpus: LabeledCorpus):
        labels = [Label(l) for _, l in train_corpus.records]
        on_hold = sum(1 for l in labels if l is Label.ON_HOLD)
        value = 1.0 if on_hold * 2 >= len(labels) else 0.0
        return lambda _text: value

    return fit


def evaluate(corpus: LabeledCorpus, fit=None, folds: int = 5, seed: int = 0, threshold: float = 0.5) -> EvalReport:
    """k-fold evaluation; ``fit(train_corpus)`` returns ``score(text) -> P(OnHold)``."""
    if corpus.labels() != {Label.ON_HOLD, Label.CROSS_REFERENCE}:
        raise TrainingError("evaluation corpus needs both OnHold and CrossReference records")
    fit = fit or model_fitter()
    labels = [label for _, label in corpus.records]
    results = []
    for fold_no, test_idx in enumerate(stratified_folds(labels, folds, seed)):
        test_set = set(test_idx)
        test_labels = [Label(labels[i]) is Label.ON_HOLD for i in test_idx]
        if len(set(test_labels)) < 2:
            logger.warning("fold %d has a single class; skipped", fold_no)
            continue
        train_corpus = LabeledCorpus(
            [r for i, r in enumerate(corpus.records) if i not in test_set], corpus.provenance
        )
        score = fit(train_corpus)
        scores = [float(score(corpus.records[i][0])) for i in test_idx]
        confusion = Confusion()
        for s, actual in zip(scores, test_labels):
            confusion.add(s >= threshold, actual)
        results.append(
            FoldResult(
                fold=fold_no,
                size=len(test_idx),
                precision=confusion.precision,
                recall=confusion.recall,
                f_measure=confusion.f_measure,
                auc=auc_rank_sum(scores, test_labels),
                confusion=asdict(confusion),
                scores=scores,
                labels=[int(l) for l in test_labels],
            )
        )
    return EvalReport(results, folds, seed)
