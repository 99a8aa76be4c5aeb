"""Sentences, vocabularies, gold grid labels and the synthetic corpus.

Spans are half-open ``(start, end)`` character intervals everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

Span = Tuple[int, int]

LABELS = ("N", "A", "O", "P")
N, A, O, P = range(4)

SELF = "self"
NO_REL = "O"
UNK = "<unk>"
PAD = "<pad>"

FIRST_CHAR = "first-char"
ALL_CHAR = "all-char"
MODES = (FIRST_CHAR, ALL_CHAR)


class CorpusError(ValueError):
    """Malformed corpus input."""


class ValidationError(CorpusError):
    """A sentence violates one of the structural rules."""


@dataclass
class Sentence:
    chars: List[str]
    words: List[Span]
    pos: List[str]
    deps: List[Tuple[int, str]]
    aspects: List[Span] = field(default_factory=list)
    opinions: List[Span] = field(default_factory=list)
    pairs: List[Tuple[int, int]] = field(default_factory=list)
    id: Optional[str] = None

    def __len__(self):
        return len(self.chars)

    @property
    def text(self) -> str:
        return "".join(self.chars)

    def word_of_char(self) -> List[int]:
        owner = [0] * len(self.chars)
        for w, (s, e) in enumerate(self.words):
            for c in range(s, e):
                owner[c] = w
        return owner

    def word_starts(self) -> List[int]:
        return [s for s, _ in self.words]

    def surface(self, span: Span) -> str:
        return "".join(self.chars[span[0]:span[1]])

    def to_json(self) -> dict:
        obj = {
            "chars": list(self.chars),
            "words": [list(w) for w in self.words],
            "pos": list(self.pos),
            "deps": [{"head": h, "rel": r} for h, r in self.deps],
            "aspects": [list(s) for s in self.aspects],
            "opinions": [list(s) for s in self.opinions],
            "pairs": [list(p) for p in self.pairs],
        }
        if self.id is not None:
            obj["id"] = self.id
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "Sentence":
        try:
            s = cls(
                chars=[str(c) for c in obj["chars"]],
                words=[_span(w) for w in obj["words"]],
                pos=[str(p) for p in obj["pos"]],
                deps=[(int(d["head"]), str(d["rel"])) for d in obj["deps"]],
                aspects=[_span(x) for x in obj.get("aspects", [])],
                opinions=[_span(x) for x in obj.get("opinions", [])],
                pairs=[(int(a), int(o)) for a, o in obj.get("pairs", [])],
                id=None if obj.get("id") is None else str(obj["id"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad field layout: {exc}") from None
        validate(s)
        return s


def _span(x) -> Span:
    a, b = x
    return int(a), int(b)


def validate(s: Sentence) -> None:
    n = len(s.chars)
    pos = 0
    for start, end in s.words:
        if start < pos:
            raise ValidationError("overlapping word spans")
        if start > pos:
            raise ValidationError("word spans leave a gap")
        if end <= start:
            raise ValidationError("empty word span")
        pos = end
    if pos != n:
        raise ValidationError("word spans do not cover the sentence")
    nw = len(s.words)
    if len(s.pos) != nw:
        raise ValidationError("one POS tag per word required")
    if len(s.deps) != nw:
        raise ValidationError("one dependency arc per word required")
    roots = 0
    for w, (head, _) in enumerate(s.deps):
        if head == -1:
            roots += 1
        elif not 0 <= head < nw or head == w:
            raise ValidationError(f"invalid dependency head {head} for word {w}")
    if nw and roots != 1:
        raise ValidationError("exactly one ROOT word required")
    starts = {a for a, _ in s.words}
    ends = {b for _, b in s.words}
    for kind, spans in (("aspect", s.aspects), ("opinion", s.opinions)):
        for a, b in spans:
            if not 0 <= a < b <= n:
                raise ValidationError(f"{kind} span out of range")
            if a not in starts or b not in ends:
                raise ValidationError(f"{kind} span not aligned to word boundaries")
    for a, o in s.pairs:
        if not (0 <= a < len(s.aspects) and 0 <= o < len(s.opinions)):
            raise ValidationError("pair references unknown aspect/opinion")


def parse_corpus(lines: Iterable[str]) -> List[Sentence]:
    """Read JSON Lines; blank lines are skipped."""
    out = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {lineno}: malformed JSON ({exc.msg})") from None
        try:
            s = Sentence.from_json(obj)
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
        if s.id is None:
            s.id = str(len(out))
        out.append(s)
    return out


def read_corpus(path) -> List[Sentence]:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh)


def dump_corpus(sentences: Sequence[Sentence]) -> str:
    return "".join(json.dumps(s.to_json(), ensure_ascii=False) + "\n" for s in sentences)


def write_corpus(sentences: Sequence[Sentence], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_corpus(sentences))


# ---------------------------------------------------------------- vocabulary

class Vocab:
    def __init__(self, reserved: Sequence[str] = ()):
        self.itos: List[str] = []
        self.stoi: Dict[str, int] = {}
        for tok in reserved:
            self.add(tok)

    def add(self, tok: str) -> int:
        if tok not in self.stoi:
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)
        return self.stoi[tok]

    def __len__(self):
        return len(self.itos)

    def __contains__(self, tok):
        return tok in self.stoi

    def __getitem__(self, tok: str) -> int:
        return self.stoi.get(tok, self.stoi.get(UNK, 0))

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos


@dataclass
class Vocabs:
    chars: Vocab
    pos: Vocab
    rels: Vocab
    labels: Tuple[str, ...] = LABELS

    def to_json(self) -> dict:
        return {"chars": self.chars.itos, "pos": self.pos.itos, "rels": self.rels.itos,
                "labels": list(self.labels)}

    @classmethod
    def from_json(cls, obj) -> "Vocabs":
        if tuple(obj["labels"]) != LABELS:
            raise CorpusError(f"label vocabulary must be {LABELS}")
        return cls(_vocab(obj["chars"]), _vocab(obj["pos"]), _vocab(obj["rels"]))


def _vocab(items) -> Vocab:
    v = Vocab()
    for tok in items:
        v.add(tok)
    return v


def build_vocabs(sentences: Iterable[Sentence]) -> Vocabs:
    # padding row first so id 0 is the zero-initialised embedding
    chars = Vocab([PAD, UNK])
    pos = Vocab([PAD, UNK])
    rels = Vocab([PAD, UNK, SELF, NO_REL])
    for s in sentences:
        for c in s.chars:
            chars.add(c)
        for p in s.pos:
            pos.add(p)
        for _, r in s.deps:
            rels.add(r)
    return Vocabs(chars, pos, rels)


# ----------------------------------------------------------- character graph

@dataclass
class CharGraph:
    rel: List[List[str]]
    d: np.ndarray

    def rel_ids(self, vocab: Vocab) -> np.ndarray:
        return np.array([[vocab[r] for r in row] for row in self.rel], dtype=np.int64).reshape(
            len(self.rel), len(self.rel))


def char_relation_matrix(s: Sentence) -> CharGraph:
    """Character relation types derived from word membership and dependency arcs.

    Arcs are undirected here: both (head, dep) and (dep, head) get the label.
    """
    n = len(s.chars)
    owner = s.word_of_char()
    arc: Dict[Tuple[int, int], str] = {}
    for w, (head, rel) in enumerate(s.deps):
        if head >= 0:
            arc[(w, head)] = rel
            arc[(head, w)] = rel
    rel = [[NO_REL] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            wi, wj = owner[i], owner[j]
            if wi == wj:
                rel[i][j] = SELF
            else:
                rel[i][j] = arc.get((wi, wj), NO_REL)
    d = np.array([[r != NO_REL for r in row] for row in rel], dtype=np.int8).reshape(n, n)
    return CharGraph(rel, d)


# --------------------------------------------------------------- gold labels

@dataclass
class LabelGrid:
    labels: np.ndarray
    mask: np.ndarray

    @property
    def n(self):
        return self.labels.shape[0]


def supervised_positions(s: Sentence, mode: str) -> List[int]:
    if mode == FIRST_CHAR:
        return s.word_starts()
    if mode == ALL_CHAR:
        return list(range(len(s.chars)))
    raise ValueError(f"unknown mode {mode!r}")


def grid_mask(s: Sentence, mode: str) -> np.ndarray:
    n = len(s.chars)
    sup = np.zeros(n, dtype=bool)
    sup[supervised_positions(s, mode)] = True
    return (np.triu(np.ones((n, n), dtype=bool)) & sup[:, None] & sup[None, :]).astype(np.int8)


def encode_gold_grid(s: Sentence, mode: str = FIRST_CHAR) -> LabelGrid:
    n = len(s.chars)
    for a, b in list(s.aspects) + list(s.opinions):
        if not 0 <= a < b <= n:
            raise ValidationError("span out of range")
    labels = np.full((n, n), N, dtype=np.int64)
    rank = {N: 0, O: 1, A: 2, P: 3}

    def put(i, j, lab):
        i, j = min(i, j), max(i, j)
        if rank[lab] > rank[labels[i, j]]:
            labels[i, j] = lab

    for lab, spans in ((A, s.aspects), (O, s.opinions)):
        for a, b in spans:
            for i in range(a, b):
                for j in range(i, b):
                    put(i, j, lab)
    for ai, oi in s.pairs:
        sa, so = s.aspects[ai], s.opinions[oi]
        for i in range(*sa):
            for j in range(*so):
                put(i, j, P)
    mask = grid_mask(s, mode)
    labels = np.where(mask == 1, labels, N)
    return LabelGrid(labels, mask)


# ---------------------------------------------------------- synthetic corpus

_ASPECT_WORDS = [
    "原材料", "价格", "营业", "收入", "管理", "费用", "毛利率", "净利润", "营销", "队伍",
    "偿债", "能力", "营运", "成本", "销量", "市场", "份额", "现金流", "负债率", "产能",
    "订单", "库存", "研发", "投入", "主营", "业务", "海外", "销售", "产品", "结构",
    "利润", "增速", "资产", "规模", "经营", "业绩", "人工", "出货量", "市场占有率",
]
_OPINION_WORDS = [
    "上涨", "下降", "增长", "减少", "较强", "提升", "扩张", "低于", "改善", "稳定",
    "好转", "承压", "大增", "下滑", "回升", "偏弱", "优化", "高企", "显著改善",
]
_FILLER_WORDS = [("同比", "AD"), ("明显", "AD"), ("持续", "AD"), ("大幅", "AD"),
                 ("有所", "AD"), ("进一步", "AD"), ("继续", "AD"), ("较", "AD"),
                 ("今年", "NT"), ("公司", "NN")]
_CLAUSE_END = ["，", "；"]
_SENT_END = ["。", "！"]


def generate_synthetic_corpus(seed: int, count: int, max_clauses: int = 2,
                              max_aspects_per_clause: int = 2) -> List[Sentence]:
    """Template sentences ``[aspect words] [filler] [opinion] [punct]`` per clause.

    Aspects of one clause are separated by "、" and all pair with that
    clause's opinion.  The first clause's opinion is the ROOT; later opinions
    attach to it, so the dependency tree is projective.
    """
    rng = np.random.default_rng(seed)
    return [_one_sentence(rng, str(k), max_clauses, max_aspects_per_clause)
            for k in range(count)]


def _one_sentence(rng, sid, max_clauses, max_aspects) -> Sentence:
    words: List[str] = []
    pos: List[str] = []
    heads: List[int] = []
    rels: List[str] = []
    aspect_words: List[Tuple[int, int]] = []  # word-index ranges
    opinion_words: List[int] = []
    pairs: List[Tuple[int, int]] = []
    root = None

    def add(word, tag, head=None, rel=""):
        words.append(word)
        pos.append(tag)
        heads.append(head)
        rels.append(rel)
        return len(words) - 1

    n_clauses = int(rng.integers(1, max_clauses + 1))
    for c in range(n_clauses):
        clause_aspects = []
        for k in range(int(rng.integers(1, max_aspects + 1))):
            if k:
                add("、", "PU", None, "punct")
                clause_aspects.append(("sep", len(words) - 1))
            n_parts = int(rng.choice([1, 2], p=[0.6, 0.4]))
            idx = [add(str(rng.choice(_ASPECT_WORDS)), "NN") for _ in range(n_parts)]
            for w in idx[:-1]:
                heads[w], rels[w] = idx[-1], "compound:nn"
            aspect_words.append((idx[0], idx[-1]))
            clause_aspects.append(("asp", len(aspect_words) - 1))
        fillers = []
        if rng.random() < 0.5:
            word, tag = _FILLER_WORDS[int(rng.integers(len(_FILLER_WORDS)))]
            fillers.append(add(word, tag))
        op = add(str(rng.choice(_OPINION_WORDS)), "VA" if rng.random() < 0.5 else "VV")
        opinion_words.append(op)
        if root is None:
            root = op
            heads[op], rels[op] = -1, "root"
        else:
            heads[op], rels[op] = root, "conj"
        for w in fillers:
            heads[w], rels[w] = op, "advmod"
        for kind, ref in clause_aspects:
            if kind == "asp":
                heads[aspect_words[ref][1]], rels[aspect_words[ref][1]] = op, "nsubj"
                pairs.append((ref, len(opinion_words) - 1))
        seps = [ref for kind, ref in clause_aspects if kind == "sep"]
        for w in seps:
            # "、" attaches to the aspect head that follows it
            following = min(e for s_, e in aspect_words if s_ > w)
            heads[w] = following
        end = _SENT_END if c == n_clauses - 1 else _CLAUSE_END
        add(str(rng.choice(end)), "PU", root, "punct")

    chars: List[str] = []
    spans: List[Span] = []
    for w in words:
        spans.append((len(chars), len(chars) + len(w)))
        chars.extend(w)
    aspects = [(spans[a][0], spans[b][1]) for a, b in aspect_words]
    opinions = [spans[o] for o in opinion_words]
    deps = [(int(h), r) for h, r in zip(heads, rels)]
    s = Sentence(chars, spans, pos, deps, aspects, opinions, pairs, id=sid)
    validate(s)
    return s


def is_projective(s: Sentence) -> bool:
    arcs = [(min(w, h), max(w, h)) for w, (h, _) in enumerate(s.deps) if h >= 0]
    for a, b in arcs:
        for c, d in arcs:
            if a < c < b < d:
                return False
    return True
