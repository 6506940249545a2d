"""Document ingestion, three-way sentence-pair sampling, synthetic corpora.

Corpus file format: UTF-8, one sentence per line, blank line separates
documents.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import tokenizer

NEXT, PREV, RAND = "next", "prev", "rand"
PAIR_LABELS = (NEXT, PREV, RAND)
LABEL_ID = {lab: i for i, lab in enumerate(PAIR_LABELS)}

_MAX_REDRAWS = 10_000


@dataclass
class DocumentStore:
    """Ordered sentences grouped into documents."""

    documents: list[list[str]]

    def __post_init__(self):
        if any(len(d) == 0 for d in self.documents):
            raise ValueError("empty document in store")

    @property
    def n_documents(self) -> int:
        return len(self.documents)


@dataclass
class SentencePair:
    s1_tokens: list[int]
    s2_tokens: list[int]
    label: str

    def __post_init__(self):
        if self.label not in PAIR_LABELS:
            raise ValueError(f"bad pair label {self.label!r}")
        if not self.s1_tokens or not self.s2_tokens:
            raise ValueError("pair sides must be non-empty")


def ingest(lines: Iterable[str]) -> DocumentStore:
    """Blank-line-separated blocks become documents, one sentence per line."""
    docs: list[list[str]] = []
    current: list[str] = []
    for raw in lines:
        line = raw.strip()
        if line:
            current.append(line)
        elif current:
            docs.append(current)
            current = []
    if current:
        docs.append(current)
    if not docs:
        raise ValueError("no usable documents in input")
    return DocumentStore(docs)


def load_corpus(path) -> DocumentStore:
    with open(path, encoding="utf-8") as f:
        return ingest(f)


def write_corpus(store: DocumentStore, path):
    with open(path, "w", encoding="utf-8") as f:
        for i, doc in enumerate(store.documents):
            if i:
                f.write("\n")
            for sent in doc:
                f.write(sent + "\n")


def tokenize_store(store: DocumentStore, vocab: tokenizer.Vocab) -> list[list[list[int]]]:
    """Token-id view of the store; sentences that tokenize to nothing are dropped."""
    out = []
    for doc in store.documents:
        tdoc = [ids for ids in (tokenizer.tokenize(s, vocab) for s in doc) if ids]
        if tdoc:
            out.append(tdoc)
    if not out:
        raise ValueError("store has no tokenizable sentences")
    return out


def _grow_forward(doc: list[list[int]], start: int, budget: int, stop: int | None = None) -> list[int]:
    """Concatenate sentences doc[start:], filling but not exceeding budget.

    Always includes doc[start] (truncated to the budget if oversized);
    `stop` is an exclusive upper bound on the sentence index.
    """
    limit = len(doc) if stop is None else stop
    span = list(doc[start][:budget]) if len(doc[start]) > budget else list(doc[start])
    i = start + 1
    while i < limit and len(span) + len(doc[i]) <= budget:
        span.extend(doc[i])
        i += 1
    return span


def _grow_backward(doc: list[list[int]], end: int, budget: int) -> list[int]:
    """Concatenate sentences ending at doc[end], growing toward the front."""
    span = list(doc[end][:budget]) if len(doc[end]) > budget else list(doc[end])
    i = end - 1
    while i >= 0 and len(doc[i]) + len(span) <= budget:
        span = doc[i] + span
        i -= 1
    return span


def _forward_end(doc: list[list[int]], start: int, budget: int, stop: int | None = None) -> int:
    """Index one past the last sentence _grow_forward would take."""
    limit = len(doc) if stop is None else stop
    used = min(len(doc[start]), budget)
    i = start + 1
    while i < limit and used + len(doc[i]) <= budget:
        used += len(doc[i])
        i += 1
    return i


def sample_pair(tdocs: list[list[list[int]]], budget: int, rng: np.random.Generator,
                branch: str | None = None) -> SentencePair:
    """Draw one (S1, S2, label) pair from tokenized documents.

    Label is uniform over {next, prev, rand} unless `branch` forces one.
    S1 and S2 are contiguous multi-sentence spans splitting the token
    budget 50/50 (leftover to S1). Anchors that cannot satisfy the drawn
    branch are redrawn, leaving the 1/3 label marginals intact.
    """
    if len(tdocs) < 2:
        raise ValueError("pair sampling needs at least 2 documents")
    if budget < 8:
        raise ValueError("budget must be at least 8 tokens")
    b1 = budget - budget // 2
    b2 = budget // 2

    label = branch if branch is not None else PAIR_LABELS[rng.integers(3)]
    if label not in PAIR_LABELS:
        raise ValueError(f"bad branch {label!r}")

    for _ in range(_MAX_REDRAWS):
        d = int(rng.integers(len(tdocs)))
        doc = tdocs[d]
        a = int(rng.integers(len(doc)))
        if label == NEXT:
            if a >= len(doc) - 1:
                continue
            # S1 may not swallow the document tail: S2 needs at least one sentence
            end = _forward_end(doc, a, b1, stop=len(doc) - 1)
            s1 = _grow_forward(doc, a, b1, stop=len(doc) - 1)
            s2 = _grow_forward(doc, end, b2)
        elif label == PREV:
            if a == 0:
                continue
            s1 = _grow_forward(doc, a, b1)
            s2 = _grow_backward(doc, a - 1, b2)
        else:
            others = [i for i in range(len(tdocs)) if i != d]
            d2 = others[int(rng.integers(len(others)))]
            doc2 = tdocs[d2]
            a2 = int(rng.integers(len(doc2)))
            s1 = _grow_forward(doc, a, b1)
            s2 = _grow_forward(doc2, a2, b2)
        return SentencePair(s1, s2, label)
    raise ValueError(f"no valid anchor found for branch {label!r}")


# ---------------------------------------------------------------------------
# synthetic corpora
# ---------------------------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Generator for corpora whose token order and document coherence are learnable.

    Tokens follow a first-order Markov chain whose default transition matrix
    drifts forward through the vocabulary ring, so adjacent text reveals its
    order; each document also carries a topic token injected at topic_rate.
    """

    vocab_size: int = 240
    n_topics: int = 8
    topic_rate: float = 0.12
    n_docs: int = 500
    sentences_per_doc: tuple[int, int] = (8, 16)
    sentence_len: tuple[int, int] = (6, 12)
    max_offset: int = 4
    offset_decay: float = 0.6
    background: float = 0.01
    transition: np.ndarray | None = None

    def __post_init__(self):
        if self.vocab_size < 4:
            raise ValueError("degenerate spec: vocab_size must be >= 4")
        if self.transition is not None:
            t = np.asarray(self.transition, dtype=np.float64)
            if t.shape != (self.vocab_size, self.vocab_size):
                raise ValueError("transition matrix shape must be (vocab_size, vocab_size)")
            if not np.allclose(t.sum(axis=1), 1.0, atol=1e-8):
                raise ValueError("transition rows must sum to 1")
            self.transition = t


def transition_matrix(spec: SyntheticSpec) -> np.ndarray:
    """Row-stochastic matrix; default is a forward band on the vocab ring."""
    if spec.transition is not None:
        return spec.transition
    v = spec.vocab_size
    t = np.full((v, v), spec.background / v, dtype=np.float64)
    weights = np.array([spec.offset_decay ** (d - 1) for d in range(1, spec.max_offset + 1)])
    weights *= (1.0 - spec.background) / weights.sum()
    for d, w in enumerate(weights, start=1):
        t[np.arange(v), (np.arange(v) + d) % v] += w
    return t


def make_synthetic(spec: SyntheticSpec, rng: np.random.Generator) -> DocumentStore:
    """Sample documents from the spec's chain; returns sentence strings."""
    trans = transition_matrix(spec)
    cdf = np.cumsum(trans, axis=1)
    lo_s, hi_s = spec.sentences_per_doc
    lo_l, hi_l = spec.sentence_len
    docs = []
    for _ in range(spec.n_docs):
        topic = int(rng.integers(spec.n_topics))
        state = int(rng.integers(spec.vocab_size))
        doc = []
        for _ in range(int(rng.integers(lo_s, hi_s + 1))):
            words = []
            for _ in range(int(rng.integers(lo_l, hi_l + 1))):
                if spec.n_topics > 0 and rng.random() < spec.topic_rate:
                    words.append(f"t{topic}")
                else:
                    words.append(f"w{state}")
                    state = int(np.searchsorted(cdf[state], rng.random(), side="right"))
            doc.append(" ".join(words))
        docs.append(doc)
    return DocumentStore(docs)
