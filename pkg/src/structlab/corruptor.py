"""Corruption pipeline: pack a sentence pair, mask tokens, shuffle trigrams.

Every function is a pure function of (inputs, rng state), so example
generation is reproducible and embarrassingly parallel across derived
seeds.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .corpus import LABEL_ID, PAIR_LABELS, SentencePair, sample_pair
from .seeding import derived_rng
from .tokenizer import CLS_ID, MASK_ID, PAD_ID, SEP_ID

N_SPECIALS = 5

DUMP_MAGIC = b"SBEX"
DUMP_VERSION = 1


@dataclass(frozen=True)
class CorruptionConfig:
    mask_rate: float = 0.15
    mask_token_prob: float = 0.8
    random_replace_prob: float = 0.1
    keep_prob: float = 0.1
    trigram_rate: float = 0.05
    k: int = 3
    max_len: int = 64

    def __post_init__(self):
        if abs(self.mask_token_prob + self.random_replace_prob + self.keep_prob - 1.0) > 1e-9:
            raise ValueError("replacement probabilities must sum to 1")
        if not 0.0 < self.mask_rate < 1.0:
            raise ValueError("mask_rate must be in (0, 1)")
        # 0 is allowed so the word objective can be switched off
        if not 0.0 <= self.trigram_rate < 1.0:
            raise ValueError("trigram_rate must be in [0, 1)")
        if self.k != 3:
            raise ValueError("only trigram shuffling (k=3) is supported")
        if self.max_len < 8:
            raise ValueError("max_len must be at least 8")


@dataclass
class PretrainExample:
    input_ids: np.ndarray        # (max_len,) int32, corrupted
    segment_ids: np.ndarray      # (max_len,) int8
    mlm_targets: dict[int, int]  # position -> original id
    shuffle_targets: dict[int, int]
    sentence_label: str

    def restore(self) -> np.ndarray:
        """Overwrite every target position with its original id."""
        out = self.input_ids.copy()
        for pos, tok in self.mlm_targets.items():
            out[pos] = tok
        for pos, tok in self.shuffle_targets.items():
            out[pos] = tok
        return out


def pack(pair: SentencePair, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    """[CLS] s1 [SEP] s2 [SEP] + padding, truncating the longer side first."""
    if max_len < 8:
        raise ValueError("max_len must be at least 8")
    s1 = list(pair.s1_tokens)
    s2 = list(pair.s2_tokens)
    room = max_len - 3
    while len(s1) + len(s2) > room:
        (s1 if len(s1) > len(s2) else s2).pop()
    ids = np.full(max_len, PAD_ID, dtype=np.int32)
    segs = np.zeros(max_len, dtype=np.int8)
    seq = [CLS_ID] + s1 + [SEP_ID] + s2 + [SEP_ID]
    ids[: len(seq)] = seq
    segs[len(s1) + 2 :] = 1
    return ids, segs


def _maskable(ids: np.ndarray) -> np.ndarray:
    return ids >= N_SPECIALS


def apply_masking(input_ids: np.ndarray, cfg: CorruptionConfig, rng: np.random.Generator,
                  vocab_size: int) -> tuple[np.ndarray, dict[int, int]]:
    """Independently select non-special positions at mask_rate; replace with
    [MASK] / random id / original at the 80/10/10 split, recording originals."""
    ids = input_ids.copy()
    eligible = _maskable(ids)
    selected = (rng.random(ids.shape[0]) < cfg.mask_rate) & eligible
    positions = np.flatnonzero(selected)
    targets: dict[int, int] = {}
    if positions.size == 0:
        return ids, targets
    u = rng.random(positions.size)
    repl = rng.integers(N_SPECIALS, vocab_size, size=positions.size)
    for j, pos in enumerate(positions):
        targets[int(pos)] = int(ids[pos])
        if u[j] < cfg.mask_token_prob:
            ids[pos] = MASK_ID
        elif u[j] < cfg.mask_token_prob + cfg.random_replace_prob:
            ids[pos] = repl[j]
        # else: keep the original token
    return ids, targets


def select_and_shuffle_trigrams(input_ids: np.ndarray, segment_ids: np.ndarray,
                                mlm_targets: dict[int, int], cfg: CorruptionConfig,
                                rng: np.random.Generator) -> tuple[np.ndarray, dict[int, int]]:
    """Left-to-right scan over eligible trigram starts; each is selected with
    probability trigram_rate and its three tokens get a uniform permutation.

    Eligible runs are non-special, unmasked, inside one segment; selected
    trigrams never overlap.
    """
    ids = input_ids.copy()
    targets: dict[int, int] = {}
    if cfg.trigram_rate <= 0.0:
        return ids, targets
    ok = _maskable(ids)
    for pos in mlm_targets:
        ok[pos] = False
    k = cfg.k
    i = 0
    while i + k <= ids.shape[0]:
        run_ok = ok[i : i + k].all() and segment_ids[i] == segment_ids[i + k - 1]
        if run_ok and rng.random() < cfg.trigram_rate:
            perm = rng.permutation(k)
            original = ids[i : i + k].copy()
            ids[i : i + k] = original[perm]
            for j in range(k):
                targets[i + j] = int(original[j])
            i += k
        else:
            i += 1
    return ids, targets


def make_example(pair: SentencePair, cfg: CorruptionConfig, rng: np.random.Generator,
                 vocab_size: int) -> PretrainExample:
    """pack -> apply_masking -> select_and_shuffle_trigrams."""
    ids, segs = pack(pair, cfg.max_len)
    ids, mlm = apply_masking(ids, cfg, rng, vocab_size)
    ids, shuf = select_and_shuffle_trigrams(ids, segs, mlm, cfg, rng)
    return PretrainExample(ids, segs, mlm, shuf, pair.label)


def example_stream(tdocs, cfg: CorruptionConfig, vocab_size: int, seed: int, n: int,
                   branch: str | None = None):
    """Yield n reproducible examples; example i only depends on (seed, i)."""
    budget = cfg.max_len - 3
    for i in range(n):
        rng = derived_rng(seed, i)
        pair = sample_pair(tdocs, budget, rng, branch=branch)
        yield make_example(pair, cfg, rng, vocab_size)


# ---------------------------------------------------------------------------
# Monte Carlo validators
# ---------------------------------------------------------------------------


@dataclass
class CorruptionStats:
    n_examples: int = 0
    eligible_positions: int = 0
    masked_positions: int = 0
    mask_category: int = 0
    random_category: int = 0
    keep_category: int = 0
    trigram_draws: int = 0
    trigrams_selected: int = 0
    label_counts: dict[str, int] = field(default_factory=lambda: {lab: 0 for lab in PAIR_LABELS})

    @property
    def mask_fraction(self) -> float:
        return self.masked_positions / max(self.eligible_positions, 1)

    @property
    def category_split(self) -> tuple[float, float, float]:
        n = max(self.masked_positions, 1)
        return (self.mask_category / n, self.random_category / n, self.keep_category / n)

    @property
    def trigram_fraction(self) -> float:
        return self.trigrams_selected / max(self.trigram_draws, 1)

    @property
    def label_fractions(self) -> dict[str, float]:
        return {lab: c / max(self.n_examples, 1) for lab, c in self.label_counts.items()}


def _count_trigram_draws(ids: np.ndarray, segs: np.ndarray, mlm: dict[int, int],
                         shuf: dict[int, int], k: int) -> tuple[int, int]:
    """Replay the greedy scan on a finished example: (starts tested, selected)."""
    ok = _maskable(ids)
    for pos in mlm:
        ok[pos] = False
    draws = selected = 0
    i = 0
    while i + k <= ids.shape[0]:
        if ok[i : i + k].all() and segs[i] == segs[i + k - 1]:
            draws += 1
            if i in shuf:
                selected += 1
                i += k
                continue
        i += 1
    return draws, selected


def corruption_stats(tdocs, cfg: CorruptionConfig, vocab_size: int, n_examples: int,
                     seed: int) -> CorruptionStats:
    """Generate n examples and measure every corruption rate directly."""
    stats = CorruptionStats()
    budget = cfg.max_len - 3
    for i in range(n_examples):
        rng = derived_rng(seed, i)
        pair = sample_pair(tdocs, budget, rng)
        packed, segs = pack(pair, cfg.max_len)
        ex = PretrainExample(*_corrupt_packed(packed, segs, cfg, rng, vocab_size), pair.label)
        stats.n_examples += 1
        stats.label_counts[ex.sentence_label] += 1
        stats.eligible_positions += int(_maskable(packed).sum())
        stats.masked_positions += len(ex.mlm_targets)
        for pos, orig in ex.mlm_targets.items():
            got = int(ex.input_ids[pos])
            if got == MASK_ID:
                stats.mask_category += 1
            elif got == orig:
                stats.keep_category += 1
            else:
                stats.random_category += 1
        draws, sel = _count_trigram_draws(ex.input_ids, segs, ex.mlm_targets, ex.shuffle_targets, cfg.k)
        stats.trigram_draws += draws
        stats.trigrams_selected += sel
    return stats


def _corrupt_packed(ids, segs, cfg, rng, vocab_size):
    ids2, mlm = apply_masking(ids, cfg, rng, vocab_size)
    ids3, shuf = select_and_shuffle_trigrams(ids2, segs, mlm, cfg, rng)
    return ids3, segs, mlm, shuf


# ---------------------------------------------------------------------------
# binary example dump
# ---------------------------------------------------------------------------


def write_examples(path, examples: list[PretrainExample]):
    """Versioned little-endian record dump (magic SBEX, see README)."""
    with open(path, "wb") as f:
        f.write(DUMP_MAGIC)
        f.write(struct.pack("<B", DUMP_VERSION))
        f.write(struct.pack("<I", len(examples)))
        for ex in examples:
            n = ex.input_ids.shape[0]
            f.write(struct.pack("<I", n))
            f.write(ex.input_ids.astype("<u4").tobytes())
            f.write(ex.segment_ids.astype("u1").tobytes())
            for targets in (ex.mlm_targets, ex.shuffle_targets):
                f.write(struct.pack("<I", len(targets)))
                for pos in sorted(targets):
                    f.write(struct.pack("<II", pos, targets[pos]))
            f.write(struct.pack("<B", LABEL_ID[ex.sentence_label]))


def read_examples(path) -> list[PretrainExample]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != DUMP_MAGIC:
        raise ValueError("not an example dump (bad magic)")
    version = raw[4]
    if version != DUMP_VERSION:
        raise ValueError(f"unsupported dump version {version}")
    off = 5
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    out = []
    for _ in range(count):
        (n,) = struct.unpack_from("<I", raw, off)
        off += 4
        ids = np.frombuffer(raw, dtype="<u4", count=n, offset=off).astype(np.int32)
        off += 4 * n
        segs = np.frombuffer(raw, dtype="u1", count=n, offset=off).astype(np.int8)
        off += n
        maps = []
        for _ in range(2):
            (m,) = struct.unpack_from("<I", raw, off)
            off += 4
            d = {}
            for _ in range(m):
                pos, tok = struct.unpack_from("<II", raw, off)
                off += 8
                d[pos] = tok
            maps.append(d)
        label = PAIR_LABELS[raw[off]]
        off += 1
        out.append(PretrainExample(ids, segs, maps[0], maps[1], label))
    return out
