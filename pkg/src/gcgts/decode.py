"""Grid decoding, exact-match scoring and model evaluation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .corpus import A, O, P, Sentence, Span, encode_gold_grid, grid_mask, supervised_positions

SpanPair = Tuple[Span, Span]


@dataclass(frozen=True)
class ExtractionResult:
    aspects: FrozenSet[Span] = frozenset()
    opinions: FrozenSet[Span] = frozenset()
    pairs: FrozenSet[SpanPair] = frozenset()

    def to_json(self, sentence: Optional[Sentence] = None) -> dict:
        def sp(s):
            obj = {"span": list(s)}
            if sentence is not None:
                obj["text"] = sentence.surface(s)
            return obj

        return {
            "aspects": [sp(s) for s in sorted(self.aspects)],
            "opinions": [sp(s) for s in sorted(self.opinions)],
            "pairs": [{"aspect": sp(a), "opinion": sp(o)} for a, o in sorted(self.pairs)],
        }


def gold_result(s: Sentence) -> ExtractionResult:
    return ExtractionResult(
        frozenset(s.aspects), frozenset(s.opinions),
        frozenset((s.aspects[a], s.opinions[o]) for a, o in s.pairs))


def _word_bounds(s: Sentence):
    owner = s.word_of_char()
    return [s.words[w][0] for w in owner], [s.words[w][1] for w in owner]


def decode_grid(labels: np.ndarray, sentence: Sentence, mode: str) -> ExtractionResult:
    """Read aspect/opinion runs off the diagonal, then pairs off P cells.

    Only supervised cells are consulted.  A run of consecutive supervised
    positions with diagonal label A (resp. O) is one aspect (opinion); its
    character span is widened to whole words.  A pair is emitted when any cell
    linking the two runs is P.
    """
    labels = np.asarray(labels)
    positions = supervised_positions(sentence, mode)
    starts, ends = _word_bounds(sentence)

    runs = {A: [], O: []}
    current, kind = [], None
    for p in positions + [None]:
        lab = None if p is None else int(labels[p, p])
        if lab == kind and lab in runs:
            current.append(p)
            continue
        if kind in runs:
            runs[kind].append(current)
        current, kind = [p], lab

    def span(run):
        return starts[run[0]], ends[run[-1]]

    pairs = set()
    for ra in runs[A]:
        for ro in runs[O]:
            if any(labels[min(i, j), max(i, j)] == P for i in ra for j in ro):
                pairs.add((span(ra), span(ro)))
    return ExtractionResult(frozenset(span(r) for r in runs[A]),
                            frozenset(span(r) for r in runs[O]), frozenset(pairs))


def decode_grid_bruteforce(labels: np.ndarray, sentence: Sentence, mode: str) -> ExtractionResult:
    """Enumerate every contiguous range of supervised positions and keep the
    maximal single-label ones; independent of :func:`decode_grid`."""
    labels = np.asarray(labels)
    pos = supervised_positions(sentence, mode)
    m = len(pos)
    starts, ends = _word_bounds(sentence)
    diag = [int(labels[p, p]) for p in pos]

    def maximal_ranges(lab):
        found = []
        for a in range(m):
            for b in range(a, m):
                if not all(diag[k] == lab for k in range(a, b + 1)):
                    continue
                if a > 0 and diag[a - 1] == lab:
                    continue
                if b < m - 1 and diag[b + 1] == lab:
                    continue
                found.append((a, b))
        return found

    asp = maximal_ranges(A)
    opi = maximal_ranges(O)
    to_span = lambda r: (starts[pos[r[0]]], ends[pos[r[1]]])
    pairs = set()
    for ra, ro in itertools.product(asp, opi):
        hit = False
        for x in range(ra[0], ra[1] + 1):
            for y in range(ro[0], ro[1] + 1):
                i, j = sorted((pos[x], pos[y]))
                hit = hit or labels[i, j] == P
        if hit:
            pairs.add((to_span(ra), to_span(ro)))
    return ExtractionResult(frozenset(map(to_span, asp)), frozenset(map(to_span, opi)),
                            frozenset(pairs))


def argmax_labels(probs: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask == 1, np.argmax(probs, axis=-1), 0)


# ------------------------------------------------------------------ scoring

@dataclass
class PRF:
    p: float = 0.0
    r: float = 0.0
    f1: float = 0.0
    tp: int = 0
    n_pred: int = 0
    n_gold: int = 0

    @classmethod
    def from_counts(cls, tp, n_pred, n_gold):
        p = tp / n_pred if n_pred else 0.0
        r = tp / n_gold if n_gold else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f1, tp, n_pred, n_gold)

    def to_json(self):
        return {"p": self.p, "r": self.r, "f1": self.f1}


@dataclass
class Metrics:
    pair: PRF = field(default_factory=PRF)
    aspect: PRF = field(default_factory=PRF)
    opinion: PRF = field(default_factory=PRF)
    n_sentences: int = 0

    def to_json(self) -> dict:
        return {"pair": self.pair.to_json(), "aspect": self.aspect.to_json(),
                "opinion": self.opinion.to_json(), "n_sentences": self.n_sentences}


def score(preds: Sequence[ExtractionResult], golds: Sequence[ExtractionResult]) -> Metrics:
    """Micro-averaged exact-match P/R/F1 over a corpus."""
    if len(preds) != len(golds):
        raise ValueError("prediction and gold lists differ in length")
    out = {}
    for cat in ("pair", "aspect", "opinion"):
        attr = cat + "s"
        tp = n_pred = n_gold = 0
        for pr, go in zip(preds, golds):
            a, b = getattr(pr, attr), getattr(go, attr)
            tp += len(a & b)
            n_pred += len(a)
            n_gold += len(b)
        out[cat] = PRF.from_counts(tp, n_pred, n_gold)
    return Metrics(out["pair"], out["aspect"], out["opinion"], len(preds))


def predict(model, sentence: Sentence) -> Tuple[ExtractionResult, np.ndarray]:
    pred = model.forward(sentence)
    probs = pred.final.data
    labels = argmax_labels(probs, pred.mask)
    return decode_grid(labels, sentence, model.config.mode), probs


def evaluate_model(model, sentences: Sequence[Sentence], gold_oracle: bool = False,
                   mode: Optional[str] = None):
    """Decode every sentence and score against its annotations.

    With ``gold_oracle`` the model is bypassed and gold grids are decoded.
    Returns ``(metrics, per_sentence_results)``.
    """
    if model is None and not gold_oracle:
        raise ValueError("a model is required unless gold_oracle is set")
    mode = mode or model.config.mode
    preds = []
    for s in sentences:
        if gold_oracle:
            grid = encode_gold_grid(s, mode)
            preds.append(decode_grid(grid.labels, s, mode))
        else:
            preds.append(predict(model, s)[0])
    return score(preds, [gold_result(s) for s in sentences]), preds
