"""Unigram posterior decoding: greedy, LM-fused prefix beam search, oracle.

Hypothesis scores live in the natural-log domain:

    score = ln P_ctc(prefix) + alpha * ln P_LM + beta * (completed words)

where the LM term is the active model's accumulated log10 probability
converted to natural log. The char-level LM applies at every character
extension; the word-level LM and the word bonus apply at word-completion
events (space emission and end of grid). The exhaustive oracle scores
whole label sequences with the identical terms, so beam search at
saturated width must match it exactly.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .ctc import PosteriorGrid, ctc_feasible, ctc_loss
from .decomp import squash
from .errors import ConfigError, TooLargeError
from .lm import SOS, NgramLM, lm_logprob
from .vocab import Alphabet, decode_ids

LN10 = math.log(10.0)
NEG_INF = -math.inf


@dataclass
class BeamParams:
    width: int = 64
    alpha_char: float = 0.8
    alpha_word: float = 0.8
    word_bonus: float = 1.0
    lm: str = "none"  # none | char | word
    # optional per-frame extension pruning: skip tokens with ln p below this
    prune_logp: float | None = None

    def __post_init__(self):
        if self.width < 1:
            raise ConfigError("beam width must be >= 1")
        if self.alpha_char < 0 or self.alpha_word < 0:
            raise ConfigError("LM weights must be >= 0")
        if self.lm not in ("none", "char", "word"):
            raise ConfigError(f"lm must be none|char|word, got {self.lm!r}")


@dataclass
class Hypothesis:
    """Prefix bookkeeping: blank/non-blank ending mass plus LM state."""

    p_blank: float = NEG_INF
    p_nonblank: float = NEG_INF
    lm_score: float = 0.0  # accumulated log10 LM terms
    words: tuple[str, ...] = ()
    pending: str = ""
    word_count: int = 0

    def total(self) -> float:
        return float(np.logaddexp(self.p_blank, self.p_nonblank))


def _tail(seq: list, k: int) -> list:
    return seq[len(seq) - k :] if k > 0 else []


def _check_lm(lm: NgramLM | None, params: BeamParams) -> tuple[NgramLM | None, float]:
    if params.lm == "none":
        return None, 0.0
    if lm is None:
        raise ConfigError(f"params request a {params.lm}-level LM but none was given")
    if lm.level != params.lm:
        raise ConfigError(f"params request a {params.lm}-level LM, got {lm.level}-level")
    alpha = params.alpha_char if params.lm == "char" else params.alpha_word
    return lm, alpha


def greedy_decode(grid: PosteriorGrid, alphabet: Alphabet) -> str:
    """Squash of the per-frame argmax path; ties break toward lower id."""
    path = np.argmax(grid.logp, axis=1)
    return decode_ids(squash(path, alphabet).ids, alphabet)


def lm_terms(text: str, lm: NgramLM | None, params: BeamParams) -> tuple[float, int]:
    """(accumulated log10 LM term, completed word count) for a finished text.

    The whole-sequence form of the incremental terms beam search applies,
    shared with the exhaustive oracle.
    """
    lm, _ = _check_lm(lm, params)
    words = text.split()
    lm10 = 0.0
    if lm is not None and params.lm == "char" and params.alpha_char != 0.0:
        chars = list(text)
        for i, ch in enumerate(chars):
            lm10 += lm_logprob(lm, _tail([SOS] + chars[:i], lm.order - 1), ch)
    if lm is not None and params.lm == "word" and params.alpha_word != 0.0:
        for j, wd in enumerate(words):
            lm10 += lm_logprob(lm, _tail([SOS] + words[:j], lm.order - 1), wd)
    return lm10, len(words)


def _score(h: Hypothesis, alpha: float, beta: float) -> float:
    return h.total() + alpha * LN10 * h.lm_score + beta * h.word_count


def _final_score(h: Hypothesis, lm, params: BeamParams, alpha: float) -> float:
    """Running score with the trailing partial word completed at end of grid."""
    lm10 = h.lm_score
    wc = h.word_count
    if h.pending:
        if lm is not None and params.lm == "word" and params.alpha_word != 0.0:
            ctx = _tail([SOS] + list(h.words), lm.order - 1)
            lm10 += lm_logprob(lm, ctx, h.pending)
        wc += 1
    return h.total() + alpha * LN10 * lm10 + params.word_bonus * wc


def beam_search_decode(
    grid: PosteriorGrid,
    alphabet: Alphabet,
    lm: NgramLM | None = None,
    params: BeamParams = BeamParams(),
) -> str:
    """Prefix beam search over label prefixes with optional LM fusion."""
    lm, alpha = _check_lm(lm, params)
    beta = params.word_bonus
    logp = grid.logp
    T, grid_width = logp.shape
    V = grid_width - 1
    ctx_len = (lm.order - 1) if lm is not None else 0

    def extend_state(parent: Hypothesis, prefix: tuple[int, ...], c: int) -> Hypothesis:
        """LM/word bookkeeping for prefix + (c,); CTC mass starts empty."""
        child = Hypothesis(
            lm_score=parent.lm_score,
            words=parent.words,
            pending=parent.pending,
            word_count=parent.word_count,
        )
        tok = alphabet.token_of(c)
        if lm is not None and params.lm == "char" and params.alpha_char != 0.0:
            ctx = _tail([SOS] + [alphabet.token_of(i) for i in prefix], ctx_len)
            child.lm_score += lm_logprob(lm, ctx, tok)
        if tok == " ":
            if child.pending:
                if lm is not None and params.lm == "word" and params.alpha_word != 0.0:
                    ctx = _tail([SOS] + list(child.words), ctx_len)
                    child.lm_score += lm_logprob(lm, ctx, child.pending)
                child.words = child.words + (child.pending,)
                child.word_count += 1
                child.pending = ""
        else:
            child.pending = child.pending + tok
        return child

    beam: dict[tuple[int, ...], Hypothesis] = {(): Hypothesis(p_blank=0.0)}
    for t in range(T):
        lp = logp[t]
        nxt: dict[tuple[int, ...], Hypothesis] = {}
        for prefix, h in beam.items():
            total = h.total()
            # blank emission keeps the prefix; so does repeating its last label
            stay = nxt.get(prefix)
            if stay is None:
                stay = Hypothesis(
                    lm_score=h.lm_score,
                    words=h.words,
                    pending=h.pending,
                    word_count=h.word_count,
                )
                nxt[prefix] = stay
            stay.p_blank = np.logaddexp(stay.p_blank, total + lp[0])
            if prefix and h.p_nonblank > NEG_INF:
                stay.p_nonblank = np.logaddexp(stay.p_nonblank, h.p_nonblank + lp[prefix[-1]])
            for c in range(1, V + 1):
                if params.prune_logp is not None and lp[c] < params.prune_logp:
                    continue
                base = h.p_blank if (prefix and c == prefix[-1]) else total
                if base == NEG_INF:
                    continue
                new_prefix = prefix + (c,)
                child = nxt.get(new_prefix)
                if child is None:
                    child = extend_state(h, prefix, c)
                    nxt[new_prefix] = child
                child.p_nonblank = np.logaddexp(child.p_nonblank, base + lp[c])
        if len(nxt) > params.width:
            ranked = sorted(nxt.items(), key=lambda kv: (-_score(kv[1], alpha, beta), kv[0]))
            nxt = dict(ranked[: params.width])
        beam = nxt

    best_prefix = min(
        beam.items(), key=lambda kv: (-_final_score(kv[1], lm, params, alpha), kv[0])
    )[0]
    return decode_ids(best_prefix, alphabet)


def exhaustive_decode(
    grid: PosteriorGrid,
    alphabet: Alphabet,
    lm: NgramLM | None = None,
    params: BeamParams = BeamParams(),
) -> str:
    """Score every label sequence up to length T; argmax, ties to smaller text."""
    _, alpha = _check_lm(lm, params)
    T, V = grid.T, grid.V
    n_seqs = sum(V**L for L in range(T + 1))
    if n_seqs > 10**6:
        raise TooLargeError(f"{n_seqs} candidate sequences exceed the 1e6 oracle guard")
    best_text = ""
    best_score = NEG_INF
    for L in range(T + 1):
        for ids in itertools.product(range(1, V + 1), repeat=L):
            if not ctc_feasible(T, ids):
                continue
            text = decode_ids(ids, alphabet)
            lm10, wc = lm_terms(text, lm, params)
            score = -ctc_loss(grid.logp, ids) + alpha * LN10 * lm10 + params.word_bonus * wc
            if score > best_score or (score == best_score and text < best_text):
                best_score = score
                best_text = text
    return best_text
