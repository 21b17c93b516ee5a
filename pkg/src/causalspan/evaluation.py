"""Relaxed labeled-span scoring with a boundary/label error taxonomy.

Predicted and gold spans are pooled per sentence (across relation layers)
and matched one-to-one.  Matches fall into four categories: exact match
(TP), label error (LE, same range but different role), boundary error (BE,
overlapping range, same role), and label+boundary error (LBE).  Fair
scoring gives half credit to boundary errors instead of double-penalizing
them; strict scoring counts exact matches only.  Only sentences that are
causal in the gold standard are scored.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .corpus import CausalRelation, Corpus, ROLE_ORDER, Role
from .errors import ConsistencyError

EXACT_MATCH_LIMIT = 64  # max |gold| * |pred| for exhaustive matching

PooledSpan = tuple[Role, int, int]


class Category(Enum):
    TP = "tp"
    LE = "le"
    BE = "be"
    LBE = "lbe"
    NO_MATCH = "no-match"


def pool_spans(relations: Iterable[CausalRelation]) -> list[PooledSpan]:
    """Flatten relations into a deduplicated, deterministically ordered set."""
    seen = set()
    for rel in relations:
        for span in rel.spans():
            seen.add((span.role, span.start_tok, span.end_tok))
    return sorted(seen, key=lambda s: (ROLE_ORDER[s[0]], s[1], s[2]))


def classify_match(gold: PooledSpan, pred: PooledSpan) -> Category:
    g_role, g_lo, g_hi = gold
    p_role, p_lo, p_hi = pred
    if g_lo == p_lo and g_hi == p_hi:
        return Category.TP if g_role == p_role else Category.LE
    if g_lo < p_hi and p_lo < g_hi:
        return Category.BE if g_role == p_role else Category.LBE
    return Category.NO_MATCH


@dataclass
class MatchResult:
    pairs: list[tuple[int, int, Category]]
    unmatched_gold: list[int]
    unmatched_pred: list[int]

    def category_counts(self) -> tuple[int, int, int, int]:
        counts = {c: 0 for c in Category}
        for _, _, cat in self.pairs:
            counts[cat] += 1
        return (counts[Category.TP], counts[Category.LE],
                counts[Category.BE], counts[Category.LBE])


def _exact_match(gold, pred, compat) -> MatchResult:
    """Branch over all one-to-one assignments of compatible pairs."""
    best_counts = None
    best_pairs: list[tuple[int, int, Category]] = []

    def recurse(gi: int, used: set[int], pairs: list):
        nonlocal best_counts, best_pairs
        if gi == len(gold):
            counts = [0, 0, 0, 0]
            order = {Category.TP: 0, Category.LE: 1, Category.BE: 2,
                     Category.LBE: 3}
            for _, _, cat in pairs:
                counts[order[cat]] += 1
            key = tuple(counts)
            if best_counts is None or key > best_counts:
                best_counts = key
                best_pairs = list(pairs)
            return
        recurse(gi + 1, used, pairs)  # leave this gold span unmatched
        for pi, cat in compat.get(gi, ()):
            if pi not in used:
                used.add(pi)
                pairs.append((gi, pi, cat))
                recurse(gi + 1, used, pairs)
                pairs.pop()
                used.remove(pi)

    recurse(0, set(), [])
    matched_g = {gi for gi, _, _ in best_pairs}
    matched_p = {pi for _, pi, _ in best_pairs}
    return MatchResult(
        pairs=sorted(best_pairs),
        unmatched_gold=[i for i in range(len(gold)) if i not in matched_g],
        unmatched_pred=[i for i in range(len(pred)) if i not in matched_p],
    )


def _greedy_match(gold, pred, compat) -> MatchResult:
    pairs = []
    used_g: set[int] = set()
    used_p: set[int] = set()
    for target in (Category.TP, Category.LE, Category.BE, Category.LBE):
        for gi in range(len(gold)):
            if gi in used_g:
                continue
            for pi, cat in compat.get(gi, ()):
                if cat is target and pi not in used_p:
                    pairs.append((gi, pi, cat))
                    used_g.add(gi)
                    used_p.add(pi)
                    break
    return MatchResult(
        pairs=sorted(pairs),
        unmatched_gold=[i for i in range(len(gold)) if i not in used_g],
        unmatched_pred=[i for i in range(len(pred)) if i not in used_p],
    )


def match_sentence(gold_spans: Sequence[PooledSpan],
                   pred_spans: Sequence[PooledSpan]) -> MatchResult:
    """One-to-one matching maximizing (TP, LE, BE, LBE) lexicographically.

    Exact search when |gold|x|pred| <= 64, else greedy in category-priority
    order with leftmost-first tie-breaking.
    """
    compat: dict[int, list[tuple[int, Category]]] = {}
    for gi, g in enumerate(gold_spans):
        row = []
        for pi, p in enumerate(pred_spans):
            cat = classify_match(g, p)
            if cat is not Category.NO_MATCH:
                row.append((pi, cat))
        if row:
            compat[gi] = row
    if len(gold_spans) * len(pred_spans) <= EXACT_MATCH_LIMIT:
        return _exact_match(gold_spans, pred_spans, compat)
    return _greedy_match(gold_spans, pred_spans, compat)


@dataclass
class ErrorCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    be: int = 0
    le_pred: int = 0
    le_gold: int = 0
    lbe_pred: int = 0
    lbe_gold: int = 0

    def total_gold(self) -> int:
        return self.tp + self.be + self.le_gold + self.lbe_gold + self.fn

    def total_pred(self) -> int:
        return self.tp + self.be + self.le_pred + self.lbe_pred + self.fp

    def merge(self, other: "ErrorCounts") -> None:
        for f in ("tp", "fp", "fn", "be", "le_pred", "le_gold",
                  "lbe_pred", "lbe_gold"):
            setattr(self, f, getattr(self, f) + getattr(other, f))

    def to_dict(self) -> dict:
        return {
            "TP": self.tp, "FP": self.fp, "FN": self.fn, "BE": self.be,
            "LE_pred": self.le_pred, "LE_gold": self.le_gold,
            "LBE_pred": self.lbe_pred, "LBE_gold": self.lbe_gold,
        }


RoleCounts = dict[Role, ErrorCounts]


def new_role_counts() -> RoleCounts:
    return {role: ErrorCounts() for role in Role}


def accumulate_matches(counts: RoleCounts, gold_spans, pred_spans,
                       result: MatchResult) -> None:
    for gi, pi, cat in result.pairs:
        g_role = gold_spans[gi][0]
        p_role = pred_spans[pi][0]
        if cat is Category.TP:
            counts[g_role].tp += 1
        elif cat is Category.BE:
            counts[g_role].be += 1
        elif cat is Category.LE:
            counts[g_role].le_gold += 1
            counts[p_role].le_pred += 1
        elif cat is Category.LBE:
            counts[g_role].lbe_gold += 1
            counts[p_role].lbe_pred += 1
    for gi in result.unmatched_gold:
        counts[gold_spans[gi][0]].fn += 1
    for pi in result.unmatched_pred:
        counts[pred_spans[pi][0]].fp += 1


@dataclass(frozen=True)
class RoleScores:
    precision: float
    recall: float
    f1: float


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def fair_scores(counts: RoleCounts) -> dict[Role, RoleScores]:
    """Half credit for boundary errors, none for label errors."""
    out = {}
    for role, c in counts.items():
        hit = c.tp + 0.5 * c.be
        p_den = c.total_pred()
        r_den = c.total_gold()
        p = hit / p_den if p_den else 0.0
        r = hit / r_den if r_den else 0.0
        out[role] = RoleScores(p, r, _f1(p, r))
    return out


def strict_scores(counts: RoleCounts) -> dict[Role, RoleScores]:
    """Traditional hard matching: only exact TP counts."""
    out = {}
    for role, c in counts.items():
        p_den = c.total_pred()
        r_den = c.total_gold()
        p = c.tp / p_den if p_den else 0.0
        r = c.tp / r_den if r_den else 0.0
        out[role] = RoleScores(p, r, _f1(p, r))
    return out


def _bucket(n_relations: int) -> str:
    return {1: "1", 2: "2"}.get(n_relations, "3+")


@dataclass
class EvalReport:
    mode: str
    role_scores: dict[Role, RoleScores]
    macro: RoleScores
    counts: RoleCounts
    breakdown: dict[str, dict[Role, RoleScores]]
    n_evaluated: int
    n_skipped: int
    missing_predictions: tuple[str, ...]

    def to_dict(self) -> dict:
        def scores_dict(scores):
            return {
                role.name.lower(): {
                    "precision": s.precision, "recall": s.recall, "f1": s.f1,
                }
                for role, s in scores.items()
            }

        return {
            "mode": self.mode,
            "roles": scores_dict(self.role_scores),
            "macro": {
                "precision": self.macro.precision,
                "recall": self.macro.recall,
                "f1": self.macro.f1,
            },
            "counts": {
                role.name.lower(): c.to_dict() for role, c in self.counts.items()
            },
            "breakdown": {
                bucket: scores_dict(scores)
                for bucket, scores in self.breakdown.items()
            },
            "n_evaluated": self.n_evaluated,
            "n_skipped": self.n_skipped,
            "missing_predictions": list(self.missing_predictions),
        }

    def render(self) -> str:
        lines = [f"span evaluation ({self.mode})"]
        header = (f"{'role':<8} {'P':>7} {'R':>7} {'F1':>7}   "
                  f"{'TP':>4} {'BE':>4} {'LE':>6} {'LBE':>6} {'FP':>4} {'FN':>4}")
        lines.append(header)
        for role in Role:
            s = self.role_scores[role]
            c = self.counts[role]
            lines.append(
                f"{role.name.lower():<8} {s.precision:7.3f} {s.recall:7.3f} "
                f"{s.f1:7.3f}   {c.tp:4d} {c.be:4d} "
                f"{c.le_gold:3d}/{c.le_pred:<3d} {c.lbe_gold:3d}/{c.lbe_pred:<3d} "
                f"{c.fp:4d} {c.fn:4d}"
            )
        lines.append(
            f"{'macro':<8} {self.macro.precision:7.3f} {self.macro.recall:7.3f} "
            f"{self.macro.f1:7.3f}"
        )
        if self.breakdown:
            lines.append("per gold relation count:")
            for bucket in ("1", "2", "3+"):
                if bucket not in self.breakdown:
                    continue
                scores = self.breakdown[bucket]
                cells = "  ".join(
                    f"{role.name.lower()}={scores[role].f1:.3f}" for role in Role
                )
                lines.append(f"  {bucket:>2}: {cells}")
        lines.append(
            f"sentences evaluated={self.n_evaluated} skipped={self.n_skipped} "
            f"missing_predictions={len(self.missing_predictions)}"
        )
        return "\n".join(lines)


def _scores_for(counts: RoleCounts, mode: str) -> dict[Role, RoleScores]:
    if mode == "fair":
        return fair_scores(counts)
    if mode == "strict":
        return strict_scores(counts)
    raise ValueError(f"unknown evaluation mode {mode!r}")


def _macro(counts: RoleCounts, scores: dict[Role, RoleScores]) -> RoleScores:
    present = [
        role for role in Role
        if counts[role].total_gold() + counts[role].total_pred() > 0
    ]
    if not present:
        return RoleScores(0.0, 0.0, 0.0)
    n = len(present)
    return RoleScores(
        sum(scores[r].precision for r in present) / n,
        sum(scores[r].recall for r in present) / n,
        sum(scores[r].f1 for r in present) / n,
    )


def evaluate(gold_corpus: Corpus, pred_corpus: Corpus,
             mode: str = "fair") -> EvalReport:
    """Score predictions against gold on gold-causal sentences only.

    Gold sentences without relations are skipped.  A gold-causal sentence
    with no prediction record counts all its spans as FN and is flagged in
    the report.
    """
    gold_ids = {s.id for s in gold_corpus}
    unknown = [s.id for s in pred_corpus if s.id not in gold_ids]
    if unknown:
        raise ConsistencyError(
            f"prediction ids not present in gold: {unknown[:5]}"
        )
    pred_by_id = pred_corpus.by_id()
    totals = new_role_counts()
    bucket_counts: dict[str, RoleCounts] = {}
    n_evaluated = n_skipped = 0
    missing: list[str] = []
    for sentence in gold_corpus:
        if not sentence.relations:
            n_skipped += 1
            continue
        n_evaluated += 1
        gold_spans = pool_spans(sentence.relations)
        pred_sentence = pred_by_id.get(sentence.id)
        if pred_sentence is None:
            missing.append(sentence.id)
            pred_spans: list[PooledSpan] = []
        else:
            pred_spans = pool_spans(pred_sentence.relations)
        result = match_sentence(gold_spans, pred_spans)
        bucket = _bucket(len(sentence.relations))
        per_bucket = bucket_counts.setdefault(bucket, new_role_counts())
        for counts in (totals, per_bucket):
            accumulate_matches(counts, gold_spans, pred_spans, result)
    scores = _scores_for(totals, mode)
    return EvalReport(
        mode=mode,
        role_scores=scores,
        macro=_macro(totals, scores),
        counts=totals,
        breakdown={
            bucket: _scores_for(counts, mode)
            for bucket, counts in sorted(bucket_counts.items())
        },
        n_evaluated=n_evaluated,
        n_skipped=n_skipped,
        missing_predictions=tuple(missing),
    )
