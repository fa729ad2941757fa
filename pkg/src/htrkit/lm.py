"""Backoff n-gram language models with Witten-Bell interpolated smoothing.

Character-level models tokenize lines into single characters (space
included) over a closed set; word-level models whitespace-split and map
singleton-count words to <unk>. Every stored context satisfies
sum_t P(t|context) = 1 over the declared vocabulary under the backoff
recursion, which the smoothing guarantees by construction.

Models serialize to the ARPA text format (log10 probabilities and backoff
weights, tab-separated fields). The literal space token is written as the
reserved symbol <sp> because grams are space-joined inside their field.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .errors import ConfigError, ParseError, ScoringError

SOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
_SPACE_ESCAPE = "<sp>"

Gram = tuple[str, ...]


@dataclass
class NgramLM:
    order: int
    level: str  # "char" or "word"
    vocab: tuple[str, ...]
    # gram -> (log10 prob, log10 backoff weight or None at the highest order)
    table: dict[Gram, tuple[float, float | None]]

    def __post_init__(self):
        self._vocab_set = set(self.vocab)

    def in_vocab(self, token: str) -> bool:
        return token in self._vocab_set


def _tokenize(line: str, level: str) -> list[str]:
    if level == "char":
        return list(line)
    return line.split()


def train_ngram_lm(corpus: list[str], order: int, level: str) -> NgramLM:
    """Count n-grams over <s>/<\\s>-padded token streams and smooth them.

    Witten-Bell interpolation per order, bottoming out in a unigram
    distribution interpolated with a uniform base over the full vocabulary,
    then converted to standard backoff form.
    """
    if not 1 <= order <= 5:
        raise ConfigError(f"LM order must be in 1..5, got {order}")
    if level not in ("char", "word"):
        raise ConfigError(f"LM level must be 'char' or 'word', got {level!r}")
    if not corpus or all(not _tokenize(line, level) for line in corpus):
        raise ConfigError("cannot train an LM on an empty corpus")

    streams = [_tokenize(line, level) for line in corpus]
    streams = [s for s in streams if s]
    if level == "word":
        word_freq = Counter(tok for s in streams for tok in s)
        streams = [[w if word_freq[w] > 1 else UNK for w in s] for s in streams]

    tokens = sorted({tok for s in streams for tok in s} | {SOS, EOS})
    if level == "word" and UNK not in tokens:
        tokens = sorted(tokens + [UNK])
    vocab = tuple(tokens)

    counts: list[Counter[Gram]] = [Counter() for _ in range(order)]
    for s in streams:
        padded = [SOS] + s + [EOS]
        for k in range(1, order + 1):
            for i in range(len(padded) - k + 1):
                counts[k - 1][tuple(padded[i : i + k])] += 1

    # context statistics: total continuation count and distinct continuation types
    ctx_total: list[Counter[Gram]] = [Counter() for _ in range(order)]
    ctx_types: list[Counter[Gram]] = [Counter() for _ in range(order)]
    for k in range(2, order + 1):
        for gram in counts[k - 1]:
            ctx = gram[:-1]
            ctx_total[k - 1][ctx] += counts[k - 1][gram]
            ctx_types[k - 1][ctx] += 1

    probs: list[dict[Gram, float]] = [dict() for _ in range(order)]
    n_tokens = sum(counts[0].values())
    t_uni = len(counts[0])
    base = 1.0 / len(vocab)
    for w in vocab:
        probs[0][(w,)] = (counts[0].get((w,), 0) + t_uni * base) / (n_tokens + t_uni)
    for k in range(2, order + 1):
        for gram, c in counts[k - 1].items():
            ctx = gram[:-1]
            lower = probs[k - 2][gram[1:]]
            t = ctx_types[k - 1][ctx]
            total = ctx_total[k - 1][ctx]
            probs[k - 1][gram] = (c + t * lower) / (total + t)

    # backoff weights: leftover mass at the context over leftover lower-order mass
    bows: dict[Gram, float] = {}
    for k in range(1, order):
        by_ctx: dict[Gram, list[Gram]] = {}
        for gram in counts[k].keys():
            by_ctx.setdefault(gram[:-1], []).append(gram)
        for ctx, grams in by_ctx.items():
            num = 1.0 - sum(probs[k][g] for g in grams)
            den = 1.0 - sum(probs[k - 1][g[1:]] for g in grams)
            if den <= 1e-12 or num <= 1e-12:
                bows[ctx] = 1.0
            else:
                bows[ctx] = num / den

    table: dict[Gram, tuple[float, float | None]] = {}
    for k in range(1, order + 1):
        for gram, p in probs[k - 1].items():
            lp = math.log10(p)
            if k == order:
                table[gram] = (lp, None)
            else:
                table[gram] = (lp, math.log10(bows.get(gram, 1.0)))
    return NgramLM(order=order, level=level, vocab=vocab, table=table)


def lm_logprob(lm: NgramLM, context: list[str], token: str) -> float:
    """log10 P(token | context) by longest-match backoff.

    Word level maps out-of-vocabulary tokens (query and context) to <unk>;
    char level is a closed set and rejects unknown query tokens.
    """
    if lm.level == "word":
        token = token if lm.in_vocab(token) else UNK
        context = [w if lm.in_vocab(w) else UNK for w in context]
    elif not lm.in_vocab(token):
        raise ScoringError(f"token {token!r} outside the closed character set")
    ctx: Gram = tuple(context[max(0, len(context) - (lm.order - 1)) :])
    total_bow = 0.0
    while True:
        entry = lm.table.get(ctx + (token,))
        if entry is not None:
            return total_bow + entry[0]
        if not ctx:
            # all vocabulary tokens have unigram entries
            raise ScoringError(f"token {token!r} has no unigram entry")
        ctx_entry = lm.table.get(ctx)
        if ctx_entry is not None and ctx_entry[1] is not None:
            total_bow += ctx_entry[1]
        ctx = ctx[1:]


def lm_prob(lm: NgramLM, context: list[str], token: str) -> float:
    return 10.0 ** lm_logprob(lm, context, token)


def _escape(token: str) -> str:
    return _SPACE_ESCAPE if token == " " else token


def _unescape(token: str) -> str:
    return " " if token == _SPACE_ESCAPE else token


def write_arpa(lm: NgramLM, path) -> None:
    by_order: list[list[Gram]] = [[] for _ in range(lm.order)]
    for gram in lm.table:
        by_order[len(gram) - 1].append(gram)
    for grams in by_order:
        grams.sort()
    with open(path, "w", encoding="utf-8") as f:
        f.write("\\data\\\n")
        for k in range(1, lm.order + 1):
            f.write(f"ngram {k}={len(by_order[k - 1])}\n")
        for k in range(1, lm.order + 1):
            f.write(f"\n\\{k}-grams:\n")
            for gram in by_order[k - 1]:
                lp, bow = lm.table[gram]
                text = " ".join(_escape(t) for t in gram)
                if bow is None:
                    f.write(f"{lp!r}\t{text}\n")
                else:
                    f.write(f"{lp!r}\t{text}\t{bow!r}\n")
        f.write("\n\\end\\\n")


def read_arpa(path, level: str | None = None) -> NgramLM:
    """Strict ARPA reader; errors carry the offending line number.

    The level is inferred from the vocabulary (<unk> present means word
    level) unless given explicitly.
    """
    with open(path, encoding="utf-8") as f:
        lines = f.read().split("\n")

    def err(lineno: int, msg: str) -> ParseError:
        return ParseError(f"{path}: line {lineno}: {msg}")

    i = 0
    while i < len(lines) and lines[i].strip() == "":
        i += 1
    if i >= len(lines) or lines[i].strip() != "\\data\\":
        raise err(i + 1, "expected \\data\\ header")
    i += 1
    declared: dict[int, int] = {}
    while i < len(lines) and lines[i].strip() != "":
        parts = lines[i].split()
        if len(parts) != 2 or parts[0] != "ngram" or "=" not in parts[1]:
            raise err(i + 1, f"bad count line {lines[i]!r}")
        k_str, n_str = parts[1].split("=", 1)
        try:
            declared[int(k_str)] = int(n_str)
        except ValueError:
            raise err(i + 1, f"non-numeric count in {lines[i]!r}") from None
        i += 1
    if not declared or sorted(declared) != list(range(1, len(declared) + 1)):
        raise err(i, "count section must declare orders 1..N")
    order = len(declared)

    table: dict[Gram, tuple[float, float | None]] = {}
    seen_end = False
    expected_k = 1
    while i < len(lines):
        line = lines[i].strip()
        if line == "":
            i += 1
            continue
        if line == "\\end\\":
            seen_end = True
            i += 1
            break
        if not (line.startswith("\\") and line.endswith("-grams:")):
            raise err(i + 1, f"expected a \\k-grams: section header, got {line!r}")
        try:
            k = int(line[1:].split("-")[0])
        except ValueError:
            raise err(i + 1, f"bad section header {line!r}") from None
        if k != expected_k:
            raise err(i + 1, f"expected \\{expected_k}-grams:, got \\{k}-grams:")
        i += 1
        n_entries = 0
        while i < len(lines) and lines[i].strip() != "" and not lines[i].startswith("\\"):
            fields = lines[i].split("\t")
            if len(fields) not in (2, 3) or (k == order and len(fields) == 3):
                raise err(i + 1, f"expected {2 if k == order else '2 or 3'} tab fields")
            try:
                lp = float(fields[0])
            except ValueError:
                raise err(i + 1, f"non-numeric log-probability {fields[0]!r}") from None
            gram = tuple(_unescape(t) for t in fields[1].split(" "))
            if len(gram) != k or any(t == "" for t in gram):
                raise err(i + 1, f"gram {fields[1]!r} is not a {k}-gram")
            bow: float | None = None
            if k < order:
                bow = 0.0
                if len(fields) == 3:
                    try:
                        bow = float(fields[2])
                    except ValueError:
                        raise err(i + 1, f"non-numeric backoff {fields[2]!r}") from None
            if gram in table:
                raise err(i + 1, f"duplicate gram {fields[1]!r}")
            table[gram] = (lp, bow)
            n_entries += 1
            i += 1
        if n_entries != declared[k]:
            raise ParseError(
                f"{path}: section \\{k}-grams: declared {declared[k]} entries, found {n_entries}"
            )
        expected_k += 1
    if expected_k != order + 1:
        raise ParseError(f"{path}: missing \\{expected_k}-grams: section")
    if not seen_end:
        raise ParseError(f"{path}: missing \\end\\ marker")

    vocab = tuple(sorted(g[0] for g in table if len(g) == 1))
    if level is None:
        level = "word" if UNK in vocab else "char"
    return NgramLM(order=order, level=level, vocab=vocab, table=table)
