"""Token inventories defining each task's output space.

The unigram alphabet is case-sensitive and contains exactly the distinct
characters of the training transcripts. N-gram vocabularies (n = 2..4) are
lowercase-letter units: the full 676-entry table for bigrams, the top-k most
frequent grams for trigrams and fourgrams. Id 0 is reserved for the CTC
blank in every vocabulary; real tokens occupy 1..V.
"""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

from .errors import ConfigError, EncodingError, ParseError

BLANK_ID = 0
LETTERS = "abcdefghijklmnopqrstuvwxyz"

_LETTER_RUN = re.compile(r"[a-z]+")


@dataclass(frozen=True)
class Alphabet:
    """Unigram inventory; tokens[i] carries id i+1, blank is id 0."""

    tokens: tuple[str, ...]
    _ids: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = {tok: i + 1 for i, tok in enumerate(self.tokens)}
        if len(ids) != len(self.tokens):
            raise ConfigError("alphabet tokens are not unique")
        object.__setattr__(self, "_ids", ids)

    @property
    def n(self) -> int:
        return 1

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def blank_id(self) -> int:
        return BLANK_ID

    def id_of(self, token: str) -> int:
        return self._ids[token]

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def token_of(self, token_id: int) -> str:
        if not 1 <= token_id <= self.size:
            raise ValueError(f"token id {token_id} out of range 1..{self.size}")
        return self.tokens[token_id - 1]


@dataclass(frozen=True)
class NgramVocab:
    """Fixed-width n-gram inventory over the 26 lowercase letters."""

    n: int
    grams: tuple[str, ...]
    _ids: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError(f"n-gram vocabulary needs n >= 2, got {self.n}")
        for g in self.grams:
            if len(g) != self.n or not all(c in LETTERS for c in g):
                raise ConfigError(f"bad gram {g!r} for n={self.n}")
        ids = {g: i + 1 for i, g in enumerate(self.grams)}
        if len(ids) != len(self.grams):
            raise ConfigError("grams are not unique")
        object.__setattr__(self, "_ids", ids)

    @property
    def tokens(self) -> tuple[str, ...]:
        return self.grams

    @property
    def size(self) -> int:
        return len(self.grams)

    @property
    def blank_id(self) -> int:
        return BLANK_ID

    def id_of(self, gram: str) -> int:
        return self._ids[gram]

    def __contains__(self, gram: str) -> bool:
        return gram in self._ids

    def token_of(self, token_id: int) -> str:
        if not 1 <= token_id <= self.size:
            raise ValueError(f"token id {token_id} out of range 1..{self.size}")
        return self.grams[token_id - 1]


@dataclass(frozen=True)
class LabelSeq:
    """A CTC target: task granularity plus blank-free token ids."""

    task: int
    ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)


def build_alphabet(transcripts: list[str]) -> Alphabet:
    """Collect the distinct characters of all transcripts, code-point sorted."""
    if not transcripts:
        raise ConfigError("cannot build an alphabet from an empty transcript list")
    chars = sorted(set("".join(transcripts)))
    if not chars:
        raise ConfigError("transcripts contain no characters")
    return Alphabet(tuple(chars))


def letter_runs(text: str) -> list[str]:
    """Maximal lowercase-letter runs of text after case folding."""
    return _LETTER_RUN.findall(text.lower())


def build_ngram_vocab(transcripts: list[str], n: int, top_k: int = 1000) -> NgramVocab:
    """Build the n-gram inventory for one task granularity.

    Bigrams: all 676 two-letter combinations, independent of the corpus.
    Trigrams/fourgrams: the top_k most frequent grams counted with a
    stride-1 sliding window over the lowercase letter runs of the
    transcripts, ties broken lexicographically.
    """
    if n not in (2, 3, 4):
        raise ConfigError(f"n-gram tasks support n in {{2,3,4}}, got {n}")
    if top_k < 1:
        raise ConfigError(f"top_k must be >= 1, got {top_k}")
    if n == 2:
        grams = tuple(a + b for a in LETTERS for b in LETTERS)
        return NgramVocab(2, grams)
    counts: Counter[str] = Counter()
    for text in transcripts:
        for run in letter_runs(text):
            for i in range(len(run) - n + 1):
                counts[run[i : i + n]] += 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return NgramVocab(n, tuple(g for g, _ in ranked[:top_k]))


def encode_unigrams(text: str, alphabet: Alphabet) -> LabelSeq:
    """Map text to its unigram id sequence; length is preserved."""
    ids = []
    for pos, ch in enumerate(text):
        if ch not in alphabet:
            raise EncodingError(f"character {ch!r} at position {pos} not in alphabet")
        ids.append(alphabet.id_of(ch))
    return LabelSeq(task=1, ids=tuple(ids))


def decode_ids(ids, vocab) -> str:
    """Inverse of encoding: concatenate the tokens of each id."""
    return "".join(vocab.token_of(i) for i in ids)


def save_vocab(vocab, path) -> None:
    """Dump one token per line; line number equals id, header pins blank=0."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"#blank=0 n={vocab.n}\n")
        for tok in vocab.tokens:
            f.write(tok + "\n")


def load_vocab(path):
    """Read a vocabulary dump back into an Alphabet or NgramVocab."""
    with open(path, encoding="utf-8") as f:
        header = f.readline()
        m = re.fullmatch(r"#blank=0 n=(\d+)\n?", header)
        if not m:
            raise ParseError(f"{path}: line 1: bad vocabulary header {header!r}")
        n = int(m.group(1))
        tokens = [line.rstrip("\n") for line in f]
    if n == 1:
        return Alphabet(tuple(tokens))
    return NgramVocab(n, tuple(tokens))
