"""Sentence-level causality detection with a class-weighted linear model.

Logistic regression over bag features: word unigrams, adjacent bigrams,
and hits from a small lexicon of causal connectives (counted as features,
not rules).  The loss upweights positive examples to counter the bias
towards the majority negative class.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .corpus import Corpus, Sentence
from .crf import EarlyStopper, TrainConfig
from .errors import DimensionMismatch, DivergenceError, SingleClassCorpus
from .features import FeatureMap


@dataclass(frozen=True)
class ClassWeights:
    positive_weight: float = 1.5
    negative_weight: float = 1.0

    def __post_init__(self):
        if self.positive_weight <= 0 or self.negative_weight <= 0:
            raise ValueError("class weights must be positive")


def load_signal_lexicon() -> list[str]:
    """Bundled causal connective phrases, lowercased, one per line."""
    text = (
        resources.files("causalspan.data").joinpath("signal_words.txt")
        .read_text(encoding="utf-8")
    )
    return [line.strip() for line in text.splitlines() if line.strip()]


def sentence_bag(sentence: Sentence,
                 signal_lexicon: Sequence[str]) -> dict[str, float]:
    words = [w.lower() for w in sentence.token_texts()]
    bag: dict[str, float] = {}
    for w in words:
        key = f"u={w}"
        bag[key] = bag.get(key, 0.0) + 1.0
    for a, b in zip(words, words[1:]):
        key = f"b={a}_{b}"
        bag[key] = bag.get(key, 0.0) + 1.0
    joined = " " + " ".join(words) + " "
    for phrase in signal_lexicon:
        hits = joined.count(f" {phrase} ")
        if hits:
            bag[f"sig={phrase}"] = float(hits)
    return bag


SparseVec = tuple[np.ndarray, np.ndarray]  # (feature ids, values)


def _vectorize(fm: FeatureMap, bag: dict[str, float]) -> SparseVec:
    ids, vals = [], []
    for template in sorted(bag):
        fid = fm.intern(template)
        if fid is not None:
            ids.append(fid)
            vals.append(bag[template])
    return np.asarray(ids, dtype=np.intp), np.asarray(vals)


@dataclass
class BinaryModel:
    feature_map: FeatureMap
    weights: np.ndarray
    bias: float
    class_weights: ClassWeights
    signal_lexicon: tuple[str, ...] = ()

    def score_vec(self, vec: SparseVec) -> float:
        ids, vals = vec
        z = self.bias + float(self.weights[ids] @ vals) if len(ids) else self.bias
        return _sigmoid(z)


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return float(e / (1.0 + e))


def _log_sigmoid(z: np.ndarray) -> np.ndarray:
    return np.minimum(z, 0.0) - np.log1p(np.exp(-np.abs(z)))


def fit_vectors(vectors: Sequence[SparseVec], labels: Sequence[bool],
                n_features: int, weights: ClassWeights, config: TrainConfig,
                dev: Optional[tuple[Sequence[SparseVec], Sequence[bool]]] = None,
                ) -> tuple[np.ndarray, float, list[dict]]:
    """Adam on the weighted cross entropy; early stop on dev F1."""
    y = np.asarray(labels, dtype=np.float64)
    if y.min() == y.max():
        raise SingleClassCorpus("training data contains a single class")
    w = np.zeros(n_features)
    b = 0.0
    sample_w = np.where(y > 0.5, weights.positive_weight, weights.negative_weight)
    m_w = np.zeros_like(w)
    v_w = np.zeros_like(w)
    m_b = v_b = 0.0
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    rng = np.random.default_rng(config.seed)
    stopper = EarlyStopper(config.patience)
    best = (w.copy(), b)
    history: list[dict] = []
    n = len(vectors)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = sorted(order[start : start + config.batch_size])
            z = np.array([
                b + (w[vectors[i][0]] @ vectors[i][1] if len(vectors[i][0]) else 0.0)
                for i in batch
            ])
            yb = y[batch]
            sw = sample_w[batch]
            p = 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))
            nll = -(yb * _log_sigmoid(z) + (1 - yb) * _log_sigmoid(-z))
            loss = float((sw * nll).sum()) + 0.5 * config.l2_lambda * float(w @ w)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            epoch_loss += loss
            gz = sw * (p - yb)
            g_w = np.zeros_like(w)
            for gi, i in enumerate(batch):
                ids, vals = vectors[i]
                if len(ids):
                    g_w[ids] += gz[gi] * vals
            g_w += config.l2_lambda * w
            g_b = float(gz.sum())
            step += 1
            bc1 = 1.0 - beta1 ** step
            bc2 = 1.0 - beta2 ** step
            m_w = beta1 * m_w + (1 - beta1) * g_w
            v_w = beta2 * v_w + (1 - beta2) * g_w * g_w
            w -= config.learning_rate * (m_w / bc1) / (np.sqrt(v_w / bc2) + eps)
            m_b = beta1 * m_b + (1 - beta1) * g_b
            v_b = beta2 * v_b + (1 - beta2) * g_b * g_b
            b -= config.learning_rate * (m_b / bc1) / (np.sqrt(v_b / bc2) + eps)
        dev_vecs, dev_y = dev if dev is not None else (vectors, labels)
        pred = [
            (b + (w[ids] @ vals if len(ids) else 0.0)) >= 0.0
            for ids, vals in dev_vecs
        ]
        f1 = binary_metrics(list(dev_y), pred)["f1"]
        improved = stopper.update(f1, epoch)
        if improved:
            best = (w.copy(), b)
        history.append(
            {"epoch": epoch, "train_loss": epoch_loss, "dev_f1": f1,
             "improved": improved}
        )
        if stopper.should_stop:
            break
    return best[0], best[1], history


@dataclass
class BinaryTrainResult:
    model: BinaryModel
    history: list[dict]


def train_binary(corpus: Corpus, weights: ClassWeights, config: TrainConfig,
                 dev_corpus: Optional[Corpus] = None,
                 signal_lexicon: Optional[Sequence[str]] = None,
                 ) -> BinaryTrainResult:
    """Fit the detector on a corpus; early stopping uses dev F1.

    Without a dev corpus the train split doubles as dev.
    """
    lexicon = tuple(signal_lexicon if signal_lexicon is not None
                    else load_signal_lexicon())
    fm = FeatureMap()
    vectors = [_vectorize(fm, sentence_bag(s, lexicon)) for s in corpus]
    labels = [s.is_causal for s in corpus]
    fm.freeze()
    dev = None
    if dev_corpus is not None:
        dev_vectors = [_vectorize(fm, sentence_bag(s, lexicon)) for s in dev_corpus]
        dev = (dev_vectors, [s.is_causal for s in dev_corpus])
    w, b, history = fit_vectors(vectors, labels, len(fm), weights, config, dev)
    model = BinaryModel(feature_map=fm, weights=w, bias=b,
                        class_weights=weights, signal_lexicon=lexicon)
    return BinaryTrainResult(model=model, history=history)


def predict_binary(model: BinaryModel, sentence: Sentence) -> tuple[bool, float]:
    """Label and positive-class probability; label is score >= 0.5."""
    lexicon = model.signal_lexicon or tuple(load_signal_lexicon())
    vec = _vectorize(model.feature_map, sentence_bag(sentence, lexicon))
    score = model.score_vec(vec)
    return score >= 0.5, score


def binary_metrics(gold: Sequence[bool], pred: Sequence[bool]) -> dict:
    """Positive-class precision/recall/F1 plus accuracy.

    Zero denominators yield 0 and the affected metric is listed under
    "undefined".
    """
    if len(gold) != len(pred):
        raise DimensionMismatch(f"{len(gold)} gold labels vs {len(pred)} predicted")
    tp = sum(1 for g, p in zip(gold, pred) if g and p)
    fp = sum(1 for g, p in zip(gold, pred) if not g and p)
    fn = sum(1 for g, p in zip(gold, pred) if g and not p)
    tn = len(gold) - tp - fp - fn
    undefined = []
    precision = recall = f1 = 0.0
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        undefined.append("precision")
    if tp + fn:
        recall = tp / (tp + fn)
    else:
        undefined.append("recall")
    if precision + recall:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        undefined.append("f1")
    accuracy = (tp + tn) / len(gold) if gold else 0.0
    if not gold:
        undefined.append("accuracy")
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "accuracy": accuracy,
        "undefined": undefined,
    }
