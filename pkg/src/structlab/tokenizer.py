"""Subword vocabulary construction and greedy longest-match segmentation.

The vocabulary is trained by frequency-based pair merging over the corpus
word counts; segmentation is per-word greedy longest-match-first, with
continuation pieces carrying a ``##`` prefix.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIALS = (PAD, UNK, CLS, SEP, MASK)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)

MAX_WORD_LEN = 100

_WORD_RE = re.compile(r"[a-z0-9]+")


def normalize(text: str) -> list[str]:
    """Lowercase and split into alphanumeric words (everything else is a separator)."""
    return _WORD_RE.findall(text.lower())


@dataclass
class Vocab:
    """Bijection between subword strings and ids; ids 0-4 are the specials."""

    entries: list[str]
    id_of: dict[str, int] = field(init=False)

    def __post_init__(self):
        if tuple(self.entries[:5]) != SPECIALS:
            raise ValueError("ids 0-4 must be the reserved specials")
        self.id_of = {s: i for i, s in enumerate(self.entries)}
        if len(self.id_of) != len(self.entries):
            raise ValueError("duplicate vocabulary entry")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, piece: str) -> bool:
        return piece in self.id_of

    def piece(self, idx: int) -> str:
        if not 0 <= idx < len(self.entries):
            raise KeyError(f"unknown token id {idx}")
        return self.entries[idx]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for e in self.entries:
                f.write(e + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as f:
            return cls([line.rstrip("\n") for line in f if line.rstrip("\n")])


def _word_counts(store) -> Counter:
    counts: Counter = Counter()
    for doc in store.documents:
        for sent in doc:
            counts.update(normalize(sent))
    return counts


def build_vocab(store, target_size: int) -> Vocab:
    """Grow a vocabulary by merging the most frequent adjacent symbol pair.

    Starts from all single characters seen (word-initial and ``##`` forms),
    merges until target_size is reached or no pair repeats. Ties break
    lexicographically so construction is deterministic.
    """
    counts = _word_counts(store)
    if not counts:
        raise ValueError("empty corpus")

    alphabet = sorted({ch for w in counts for ch in w})
    base = [c for c in alphabet] + ["##" + c for c in alphabet]
    if target_size <= len(SPECIALS) + len(base):
        raise ValueError(
            f"target_size {target_size} leaves no room beyond specials + alphabet ({len(SPECIALS) + len(base)})"
        )

    # each distinct word as a symbol sequence: first char bare, rest ## forms
    words = {w: [w[0]] + ["##" + c for c in w[1:]] for w in counts}
    merged: list[str] = []
    room = target_size - len(SPECIALS) - len(base)
    while room > 0:
        pairs: Counter = Counter()
        for w, syms in words.items():
            n = counts[w]
            for a, b in zip(syms, syms[1:]):
                pairs[(a, b)] += n
        if not pairs:
            break
        best = min(pairs, key=lambda p: (-pairs[p], p))
        if pairs[best] < 2:
            break
        a, b = best
        joined = a + b[2:]
        merged.append(joined)
        room -= 1
        for w, syms in words.items():
            if len(syms) < 2:
                continue
            out = []
            i = 0
            while i < len(syms):
                if i + 1 < len(syms) and syms[i] == a and syms[i + 1] == b:
                    out.append(joined)
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            words[w] = out

    return Vocab(list(SPECIALS) + base + merged)


def _segment_word(word: str, v: Vocab) -> list[int] | None:
    """Greedy longest-match-first pieces for one word, or None if stuck."""
    ids = []
    start = 0
    while start < len(word):
        end = len(word)
        found = None
        while end > start:
            piece = word[start:end]
            if start > 0:
                piece = "##" + piece
            if piece in v.id_of:
                found = v.id_of[piece]
                break
            end -= 1
        if found is None:
            return None
        ids.append(found)
        start = end
    return ids


def tokenize(text: str, v: Vocab) -> list[int]:
    """Whitespace-split then greedy subword ids; unmatchable words become [UNK]."""
    out: list[int] = []
    for word in normalize(text):
        if len(word) > MAX_WORD_LEN:
            out.append(UNK_ID)
            continue
        ids = _segment_word(word, v)
        out.extend(ids if ids is not None else [UNK_ID])
    return out


def detokenize(ids, v: Vocab) -> str:
    """Strip ## prefixes, join continuations onto the previous word."""
    words: list[str] = []
    for i in ids:
        piece = v.piece(int(i))
        if piece.startswith("##") and words:
            words[-1] += piece[2:]
        else:
            words.append(piece[2:] if piece.startswith("##") else piece)
    return " ".join(words)
