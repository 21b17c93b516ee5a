"""Linear-chain CRF over the stacked-label vocabulary.

Emission scores come from sparse binary token features (plus an optional
dense embedding channel); transitions, begin, and end scores are learned
per label pair.  All inference runs in log space with max-shifted
log-sum-exp, double precision throughout.  Training maximizes the exact
sequence likelihood with Adam and early-stops on dev span F1.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import evaluation
from .corpus import CausalRelation, Corpus, Sentence
from .dense import DenseStore
from .errors import (
    DimensionMismatch,
    DivergenceError,
    EmptyCorpus,
    NoFeasiblePath,
    OverlapError,
    UnknownLabel,
)
from .features import FeatureMap, FeatureVector, featurize_sentence
from .labeling import (
    LabelVocabulary,
    N_LAYERS,
    build_vocabulary,
    decode_stacked,
    join_layers,
    repair_layer,
    split_stacked,
    split_tag,
    stack_layers,
    truncate_relations,
)

logger = logging.getLogger(__name__)

NEG_INF = -np.inf


@dataclass
class TrainConfig:
    l2_lambda: float = 1e-4
    learning_rate: float = 1e-2
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 3
    seed: int = 0
    hard_constraints: bool = True

    def __post_init__(self):
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if min(self.batch_size, self.max_epochs, self.patience) < 1:
            raise ValueError("batch_size, max_epochs, patience must be >= 1")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")


@dataclass
class CrfParams:
    emission: np.ndarray        # [n_features, n_labels]
    dense_emission: np.ndarray  # [dense_dim, n_labels]
    transition: np.ndarray      # [n_labels, n_labels]
    begin: np.ndarray           # [n_labels]
    end: np.ndarray             # [n_labels]

    BLOCKS = ("emission", "dense_emission", "transition", "begin", "end")

    @classmethod
    def zeros(cls, n_features: int, n_labels: int, dense_dim: int = 0
              ) -> "CrfParams":
        return cls(
            emission=np.zeros((n_features, n_labels)),
            dense_emission=np.zeros((dense_dim, n_labels)),
            transition=np.zeros((n_labels, n_labels)),
            begin=np.zeros(n_labels),
            end=np.zeros(n_labels),
        )

    @property
    def n_labels(self) -> int:
        return self.transition.shape[0]

    def blocks(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in self.BLOCKS]

    def copy(self) -> "CrfParams":
        return CrfParams(*(b.copy() for b in self.blocks()))

    def sq_norm(self) -> float:
        return float(sum((b ** 2).sum() for b in self.blocks()))


@dataclass(frozen=True)
class ConstraintMask:
    """Admissible transitions/boundaries; True means allowed."""

    transition: np.ndarray  # [n_labels, n_labels] bool
    begin: np.ndarray       # [n_labels] bool
    end: np.ndarray         # [n_labels] bool


def _layer_pair_ok(a: str, b: str) -> bool:
    a_marker, a_role = split_tag(a)
    b_marker, b_role = split_tag(b)
    if a_marker in ("B", "I"):
        return b_marker in ("I", "L") and b_role == a_role
    # after L, U, or O the span is closed: only O or a fresh span start
    return b_marker in ("O", "B", "U")


def build_constraint_mask(vocab: LabelVocabulary) -> ConstraintMask:
    """Hard per-layer BILOU constraints over the stacked vocabulary."""
    k = len(vocab)
    layers = [split_stacked(label) for label in vocab.labels]
    transition = np.zeros((k, k), dtype=bool)
    for i in range(k):
        for j in range(k):
            transition[i, j] = all(
                _layer_pair_ok(layers[i][z], layers[j][z]) for z in range(N_LAYERS)
            )
    begin = np.array(
        [all(split_tag(t)[0] in ("O", "B", "U") for t in lab) for lab in layers]
    )
    end = np.array(
        [all(split_tag(t)[0] in ("O", "L", "U") for t in lab) for lab in layers]
    )
    return ConstraintMask(transition=transition, begin=begin, end=end)


def _logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.squeeze(m, axis=axis) + np.log(
            np.sum(np.exp(a - m), axis=axis)
        )


def emission_scores(params: CrfParams, feats: Sequence[FeatureVector]
                    ) -> np.ndarray:
    """Per-token label scores, shape [len(feats), n_labels]."""
    k = params.n_labels
    out = np.zeros((len(feats), k))
    dense_dim = params.dense_emission.shape[0]
    for t, fv in enumerate(feats):
        if fv.indices:
            out[t] += params.emission[list(fv.indices)].sum(axis=0)
        if fv.dense is not None:
            if len(fv.dense) != dense_dim:
                raise DimensionMismatch(
                    f"dense vector has dim {len(fv.dense)}, model expects "
                    f"{dense_dim}"
                )
            out[t] += fv.dense @ params.dense_emission
        elif dense_dim:
            raise DimensionMismatch("model has a dense channel but features "
                                    "carry no dense vectors")
    return out


def score_sequence(params: CrfParams, feats: Sequence[FeatureVector],
                   labels: Sequence[int]) -> float:
    if len(labels) != len(feats):
        raise DimensionMismatch(
            f"{len(feats)} feature vectors vs {len(labels)} labels"
        )
    if not labels:
        raise DimensionMismatch("empty sequence")
    em = emission_scores(params, feats)
    y = np.asarray(labels)
    score = params.begin[y[0]] + params.end[y[-1]] + em[np.arange(len(y)), y].sum()
    if len(y) > 1:
        score += params.transition[y[:-1], y[1:]].sum()
    return float(score)


def log_partition(params: CrfParams, feats: Sequence[FeatureVector]) -> float:
    if not feats:
        raise DimensionMismatch("empty sequence")
    em = emission_scores(params, feats)
    alpha = params.begin + em[0]
    for t in range(1, len(feats)):
        alpha = _logsumexp(alpha[:, None] + params.transition, axis=0) + em[t]
    return float(_logsumexp(alpha + params.end, axis=0))


def viterbi(params: CrfParams, feats: Sequence[FeatureVector],
            constraints: Optional[ConstraintMask] = None
            ) -> tuple[list[int], float]:
    """Highest-scoring label sequence among admitted paths.

    Ties resolve to the lowest label id at the latest differing position
    (argmax picks the first maximizer both in backpointers and at the end).
    """
    if not feats:
        raise DimensionMismatch("empty sequence")
    em = emission_scores(params, feats)
    k = params.n_labels
    if constraints is not None:
        begin = np.where(constraints.begin, params.begin, NEG_INF)
        end = np.where(constraints.end, params.end, NEG_INF)
        trans = np.where(constraints.transition, params.transition, NEG_INF)
    else:
        begin, end, trans = params.begin, params.end, params.transition
    delta = begin + em[0]
    backptr = np.zeros((len(feats), k), dtype=np.intp)
    for t in range(1, len(feats)):
        scores = delta[:, None] + trans
        backptr[t] = np.argmax(scores, axis=0)
        delta = scores[backptr[t], np.arange(k)] + em[t]
    final = delta + end
    last = int(np.argmax(final))
    if not np.isfinite(final[last]):
        raise NoFeasiblePath("the constraint mask admits no label sequence")
    path = [last]
    for t in range(len(feats) - 1, 0, -1):
        path.append(int(backptr[t][path[-1]]))
    path.reverse()
    return path, score_sequence(params, feats, path)


def forward_backward(params: CrfParams, feats: Sequence[FeatureVector]
                     ) -> tuple[np.ndarray, np.ndarray, float]:
    """Unary [L,K] and pairwise [L-1,K,K] marginals plus log partition."""
    if not feats:
        raise DimensionMismatch("empty sequence")
    em = emission_scores(params, feats)
    n = len(feats)
    k = params.n_labels
    alpha = np.zeros((n, k))
    alpha[0] = params.begin + em[0]
    for t in range(1, n):
        alpha[t] = _logsumexp(
            alpha[t - 1][:, None] + params.transition, axis=0
        ) + em[t]
    beta = np.zeros((n, k))
    beta[n - 1] = params.end
    for t in range(n - 2, -1, -1):
        beta[t] = _logsumexp(
            params.transition + em[t + 1][None, :] + beta[t + 1][None, :], axis=1
        )
    log_z = float(_logsumexp(alpha[n - 1] + params.end, axis=0))
    unary = np.exp(alpha + beta - log_z)
    pairwise = np.zeros((max(n - 1, 0), k, k))
    for t in range(n - 1):
        pairwise[t] = np.exp(
            alpha[t][:, None] + params.transition + em[t + 1][None, :]
            + beta[t + 1][None, :] - log_z
        )
    return unary, pairwise, log_z


def marginals(params: CrfParams, feats: Sequence[FeatureVector]
              ) -> tuple[np.ndarray, np.ndarray]:
    unary, pairwise, _ = forward_backward(params, feats)
    return unary, pairwise


Instance = tuple[list[FeatureVector], list[int]]


def nll_and_gradient(params: CrfParams, batch: Sequence[Instance],
                     l2_lambda: float) -> tuple[float, CrfParams]:
    """Summed negative log likelihood and its gradient over a batch.

    loss = sum(log Z - score(gold)) + (l2/2) * ||params||^2
    gradient = expected feature counts - empirical counts + l2 * params
    """
    k = params.n_labels
    grad = CrfParams.zeros(
        params.emission.shape[0], k, params.dense_emission.shape[0]
    )
    loss = 0.0
    for feats, labels in batch:
        if len(feats) != len(labels):
            raise DimensionMismatch(
                f"{len(feats)} feature vectors vs {len(labels)} labels"
            )
        y = np.asarray(labels)
        if y.size and (y.min() < 0 or y.max() >= k):
            raise UnknownLabel(f"label id outside vocabulary of size {k}")
        unary, pairwise, log_z = forward_backward(params, feats)
        loss += log_z - score_sequence(params, feats, labels)
        for t, fv in enumerate(feats):
            diff = unary[t].copy()
            diff[y[t]] -= 1.0
            if fv.indices:
                grad.emission[list(fv.indices)] += diff
            if fv.dense is not None:
                grad.dense_emission += np.outer(fv.dense, diff)
        if len(y) > 1:
            trans_grad = pairwise.sum(axis=0)
            np.add.at(trans_grad, (y[:-1], y[1:]), -1.0)
            grad.transition += trans_grad
        grad.begin += unary[0]
        grad.begin[y[0]] -= 1.0
        grad.end += unary[-1]
        grad.end[y[-1]] -= 1.0
    if l2_lambda:
        loss += 0.5 * l2_lambda * params.sq_norm()
        for g, p in zip(grad.blocks(), params.blocks()):
            g += l2_lambda * p
    return loss, grad


class AdamState:
    """Per-block Adam accumulators with bias correction."""

    def __init__(self, params: CrfParams, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step = 0
        self.m = [np.zeros_like(b) for b in params.blocks()]
        self.v = [np.zeros_like(b) for b in params.blocks()]

    def update(self, params: CrfParams, grad: CrfParams) -> None:
        self.step += 1
        bc1 = 1.0 - self.beta1 ** self.step
        bc2 = 1.0 - self.beta2 ** self.step
        for m, v, p, g in zip(self.m, self.v, params.blocks(), grad.blocks()):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class EarlyStopper:
    """Strict-improvement tracker with a patience budget."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_score = -np.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, score: float, epoch: int) -> bool:
        """Record an epoch score; returns True when it improved the best."""
        if score > self.best_score:
            self.best_score = score
            self.best_epoch = epoch
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


@dataclass
class CrfModel:
    vocab: LabelVocabulary
    feature_map: FeatureMap
    params: CrfParams
    config: TrainConfig
    dense_dim: int = 0
    _mask: Optional[ConstraintMask] = field(default=None, repr=False)

    def constraint_mask(self) -> ConstraintMask:
        if self._mask is None:
            self._mask = build_constraint_mask(self.vocab)
        return self._mask


@dataclass
class TrainResult:
    model: CrfModel
    history: list[dict]  # one record per epoch: loss, dev F1, improved


def _encode_instances(corpus: Corpus, vocab: LabelVocabulary, fm: FeatureMap,
                      store: Optional[DenseStore]) -> list[tuple[Sentence, Instance]]:
    out = []
    for sentence in corpus:
        if not sentence.tokens:
            logger.warning("sentence %s has no tokens, skipped", sentence.id)
            continue
        truncated = truncate_relations(sentence)
        try:
            stacked = stack_layers(truncated, truncated.relations)
        except OverlapError as e:
            logger.warning("sentence %s not encodable: %s", sentence.id, e)
            continue
        try:
            labels = [vocab.index[tag] for tag in stacked]
        except KeyError as e:
            raise UnknownLabel(f"label {e} not in vocabulary") from None
        dense_rows = store.for_sentence(sentence) if store is not None else None
        feats = featurize_sentence(fm, sentence, dense_rows)
        out.append((sentence, (feats, labels)))
    return out


def train(train_corpus: Corpus, dev_corpus: Corpus, config: TrainConfig,
          dense_store: Optional[DenseStore] = None) -> TrainResult:
    """Mini-batch Adam on the exact NLL with dev-F1 early stopping.

    The label vocabulary is filtered to stacked labels observed in train
    and dev; the feature map grows over train only, then freezes.  Returns
    the parameters of the best dev epoch.  Fully deterministic given the
    config seed.
    """
    if not len(train_corpus):
        raise EmptyCorpus("training corpus is empty")
    if not len(dev_corpus):
        raise EmptyCorpus("dev corpus is empty")
    vocab = build_vocabulary([train_corpus, dev_corpus])
    fm = FeatureMap()
    dense_dim = dense_store.dim if dense_store is not None else 0
    encoded = _encode_instances(train_corpus, vocab, fm, dense_store)
    fm.freeze()
    if not encoded:
        raise EmptyCorpus("no trainable sentences after encoding")
    instances = [inst for _, inst in encoded]
    params = CrfParams.zeros(len(fm), len(vocab), dense_dim)
    adam = AdamState(params, config.learning_rate)
    stopper = EarlyStopper(config.patience)
    best_params = params.copy()
    rng = np.random.default_rng(config.seed)
    model = CrfModel(vocab=vocab, feature_map=fm, params=params,
                     config=config, dense_dim=dense_dim)
    history: list[dict] = []
    n = len(instances)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch_idx = sorted(order[start : start + config.batch_size])
            batch = [instances[i] for i in batch_idx]
            loss, grad = nll_and_gradient(params, batch, config.l2_lambda)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            epoch_loss += loss
            adam.update(params, grad)
        dev_pred = predict_corpus(model, dev_corpus, dense_store)
        dev_f1 = evaluation.evaluate(dev_corpus, dev_pred, mode="fair").macro.f1
        improved = stopper.update(dev_f1, epoch)
        if improved:
            best_params = params.copy()
        history.append(
            {"epoch": epoch, "train_loss": epoch_loss, "dev_f1": dev_f1,
             "improved": improved}
        )
        logger.info("epoch %d: loss=%.4f dev_f1=%.4f%s", epoch, epoch_loss,
                    dev_f1, " *" if improved else "")
        if stopper.should_stop:
            break
    model.params = best_params
    return TrainResult(model=model, history=history)


def predict(model: CrfModel, sentence: Sentence,
            dense_store: Optional[DenseStore] = None) -> list[CausalRelation]:
    """Viterbi-decode a sentence into at most three causal relations."""
    if not sentence.tokens:
        return []
    dense_rows = (
        dense_store.for_sentence(sentence) if dense_store is not None else None
    )
    feats = featurize_sentence(model.feature_map, sentence, dense_rows)
    mask = model.constraint_mask() if model.config.hard_constraints else None
    path, _ = viterbi(model.params, feats, mask)
    stacked = [model.vocab.labels[y] for y in path]
    per_layer = [[split_stacked(tag)[z] for tag in stacked]
                 for z in range(N_LAYERS)]
    repaired = [repair_layer(layer) for layer in per_layer]
    rejoined = [
        join_layers([repaired[z][t] for z in range(N_LAYERS)])
        for t in range(len(stacked))
    ]
    return decode_stacked(rejoined)


def predict_corpus(model: CrfModel, corpus: Corpus,
                   dense_store: Optional[DenseStore] = None,
                   threads: int = 1) -> Corpus:
    """Predict every sentence; output order matches input order."""

    def one(sentence: Sentence) -> Sentence:
        relations = predict(model, sentence, dense_store)
        return replace(
            sentence, relations=tuple(relations), is_causal=bool(relations)
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            predicted = list(pool.map(one, corpus.sentences))
    else:
        predicted = [one(s) for s in corpus.sentences]
    return Corpus(tuple(predicted), split_name=corpus.split_name)
