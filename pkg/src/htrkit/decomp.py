"""Target decomposition: sliding-window n-grams and the CTC squash map."""
from __future__ import annotations

from .vocab import BLANK_ID, LabelSeq, NgramVocab, letter_runs


def squash(ids, vocab) -> LabelSeq:
    """Collapse consecutive identical ids, then drop blanks.

    `ids` is a frame-length alignment in which blank (0) may appear
    anywhere; the result is the label sequence the alignment spells.
    """
    size = vocab.size
    out = []
    prev = None
    for i in ids:
        i = int(i)
        if not 0 <= i <= size:
            raise ValueError(f"alignment id {i} out of range 0..{size}")
        if i != prev and i != BLANK_ID:
            out.append(i)
        prev = i
    return LabelSeq(task=vocab.n, ids=tuple(out))


def decompose_ngrams(text: str, vocab: NgramVocab) -> LabelSeq:
    """Slide width-n windows over the letter runs of text, skipping OOV.

    Text is lowercased and split into maximal a-z runs; windows absent
    from the vocabulary emit nothing, so the target is the in-vocabulary
    subsequence of the full decomposition. Runs shorter than n emit
    nothing. Never fails; the result may be empty.
    """
    n = vocab.n
    ids = []
    for run in letter_runs(text):
        for i in range(len(run) - n + 1):
            window = run[i : i + n]
            if window in vocab:
                ids.append(vocab.id_of(window))
    return LabelSeq(task=n, ids=tuple(ids))


def target_for(text: str, vocab) -> LabelSeq:
    """Task target for a transcript: unigram encoding or n-gram windows."""
    if vocab.n == 1:
        from .vocab import encode_unigrams

        return encode_unigrams(text, vocab)
    return decompose_ngrams(text, vocab)
