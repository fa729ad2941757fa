"""Levenshtein distance and corpus-level WER/CER with pooled counting."""
from __future__ import annotations

from dataclasses import dataclass

from .errors import InputError


def levenshtein(a, b) -> int:
    """Minimum insert/delete/substitute count between two token lists."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ta in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, tb in enumerate(b, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (0 if ta == tb else 1),
            )
        prev = cur
    return prev[len(b)]


@dataclass
class LineRecord:
    ref: str
    hyp: str
    char_dist: int
    word_dist: int
    ref_chars: int
    ref_words: int


@dataclass
class EvalReport:
    cer: float
    wer: float
    char_dist: int
    word_dist: int
    ref_chars: int
    ref_words: int
    lines: list[LineRecord]

    def summary(self) -> str:
        return (
            f"lines {len(self.lines)}  "
            f"CER {self.cer:.4f} ({self.char_dist}/{self.ref_chars})  "
            f"WER {self.wer:.4f} ({self.word_dist}/{self.ref_words})"
        )


def _check_pair(refs, hyps):
    if len(refs) != len(hyps):
        raise InputError(f"{len(refs)} references vs {len(hyps)} hypotheses")


def compute_cer(refs: list[str], hyps: list[str]) -> float:
    """Pooled character error rate: sum of distances over sum of ref lengths."""
    _check_pair(refs, hyps)
    dist = sum(levenshtein(list(r), list(h)) for r, h in zip(refs, hyps))
    total = sum(len(r) for r in refs)
    if total == 0:
        raise InputError("CER undefined: total reference length is zero")
    return dist / total


def compute_wer(refs: list[str], hyps: list[str]) -> float:
    """Pooled word error rate over whitespace-split tokens."""
    _check_pair(refs, hyps)
    dist = sum(levenshtein(r.split(), h.split()) for r, h in zip(refs, hyps))
    total = sum(len(r.split()) for r in refs)
    if total == 0:
        raise InputError("WER undefined: total reference word count is zero")
    return dist / total


def evaluate(refs: list[str], hyps: list[str]) -> EvalReport:
    """Per-line edit statistics pooled into corpus CER/WER."""
    _check_pair(refs, hyps)
    lines = []
    for r, h in zip(refs, hyps):
        lines.append(
            LineRecord(
                ref=r,
                hyp=h,
                char_dist=levenshtein(list(r), list(h)),
                word_dist=levenshtein(r.split(), h.split()),
                ref_chars=len(r),
                ref_words=len(r.split()),
            )
        )
    char_dist = sum(l.char_dist for l in lines)
    word_dist = sum(l.word_dist for l in lines)
    ref_chars = sum(l.ref_chars for l in lines)
    ref_words = sum(l.ref_words for l in lines)
    if ref_chars == 0 or ref_words == 0:
        raise InputError("evaluation undefined on empty references")
    return EvalReport(
        cer=char_dist / ref_chars,
        wer=word_dist / ref_words,
        char_dist=char_dist,
        word_dist=word_dist,
        ref_chars=ref_chars,
        ref_words=ref_words,
        lines=lines,
    )


def write_report(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"cer\t{report.cer!r}\n")
        f.write(f"wer\t{report.wer!r}\n")
        f.write(f"char_dist\t{report.char_dist}\n")
        f.write(f"word_dist\t{report.word_dist}\n")
        f.write(f"ref_chars\t{report.ref_chars}\n")
        f.write(f"ref_words\t{report.ref_words}\n")
        for rec in report.lines:
            f.write(f"line\t{rec.char_dist}\t{rec.word_dist}\t{rec.ref}\t{rec.hyp}\n")
