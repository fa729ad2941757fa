"""Exact CTC loss and gradient via log-space forward-backward.

All likelihood arithmetic runs in natural-log space with stable
log-sum-exp; probabilities down to 1e-300 must not produce NaN. The
brute-force alignment enumerator is the test oracle and refuses large
instances.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParseError, TooLargeError

NEG_INF = -np.inf


@dataclass
class PosteriorGrid:
    """T x (V+1) per-frame token log-probabilities; column 0 is blank."""

    logp: np.ndarray

    def __post_init__(self):
        self.logp = np.asarray(self.logp, dtype=np.float64)
        if self.logp.ndim != 2 or self.logp.shape[1] < 2:
            raise InputError(f"grid must be T x (V+1), got shape {self.logp.shape}")

    @property
    def T(self) -> int:
        return self.logp.shape[0]

    @property
    def V(self) -> int:
        return self.logp.shape[1] - 1

    def probs(self) -> np.ndarray:
        return np.exp(self.logp)

    @classmethod
    def from_probs(cls, p, tol: float = 1e-9) -> "PosteriorGrid":
        p = np.asarray(p, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] < 2:
            raise InputError(f"grid must be T x (V+1), got shape {p.shape}")
        if np.any(p < 0) or np.any(p > 1):
            raise InputError("grid entries must lie in [0, 1]")
        sums = p.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > tol):
            worst = int(np.argmax(np.abs(sums - 1.0)))
            raise InputError(f"grid row {worst} sums to {sums[worst]!r}, not 1")
        with np.errstate(divide="ignore"):
            return cls(np.log(p))


def _extended_target(ids) -> np.ndarray:
    """Blank-interleaved target: -, y1, -, y2, ..., -, yL, - (length 2L+1)."""
    ext = np.zeros(2 * len(ids) + 1, dtype=np.int64)
    ext[1::2] = ids
    return ext


def _check_ids(ids, V: int) -> tuple[int, ...]:
    ids = tuple(int(i) for i in ids)
    for i in ids:
        if not 1 <= i <= V:
            raise ValueError(f"target id {i} out of range 1..{V}")
    return ids


def min_frames(ids) -> int:
    """Shortest alignment spelling ids: L plus one blank per adjacent repeat."""
    repeats = sum(1 for a, b in zip(ids, ids[1:]) if a == b)
    return len(ids) + repeats


def ctc_feasible(T: int, ids) -> bool:
    return T >= min_frames(ids)


def _forward(emit: np.ndarray, ext: np.ndarray) -> np.ndarray:
    """Alpha recursion over emit[t, s] = logp[t, ext[s]]; includes frame t."""
    T, S = emit.shape
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    # skip transition s-2 -> s allowed when ext[s] is a label differing from ext[s-2]
    can_skip = np.zeros(S, dtype=bool)
    can_skip[2:] = (ext[2:] != 0) & (ext[2:] != ext[:-2])
    work = np.empty(S)
    skip = np.full(S, NEG_INF)
    for t in range(1, T):
        prev = alpha[t - 1]
        work[0] = NEG_INF
        work[1:] = prev[:-1]
        np.logaddexp(prev, work, out=work)
        if S > 2:
            np.copyto(skip[2:], prev[:-2], where=can_skip[2:])
            np.logaddexp(work, skip, out=work)
        np.add(work, emit[t], out=alpha[t])
    return alpha


def _backward(emit: np.ndarray, ext: np.ndarray) -> np.ndarray:
    """Beta recursion over emit; beta[t, s] includes the emission at frame t."""
    T, S = emit.shape
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = emit[T - 1, S - 1]
    if S > 1:
        beta[T - 1, S - 2] = emit[T - 1, S - 2]
    can_skip = np.zeros(S, dtype=bool)
    can_skip[: S - 2] = (ext[:-2] != 0) & (ext[:-2] != ext[2:])
    work = np.empty(S)
    skip = np.full(S, NEG_INF)
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        work[-1] = NEG_INF
        work[:-1] = nxt[1:]
        np.logaddexp(nxt, work, out=work)
        if S > 2:
            np.copyto(skip[:-2], nxt[2:], where=can_skip[:-2])
            np.logaddexp(work, skip, out=work)
        np.add(work, emit[t], out=beta[t])
    return beta


def ctc_loss(logp, ids) -> float:
    """-log P(y|X) summed over all alignments squashing to y.

    `logp` is a T x (V+1) natural-log grid (PosteriorGrid or array).
    Returns +inf when no alignment exists (T < L + adjacent repeats).
    """
    if isinstance(logp, PosteriorGrid):
        logp = logp.logp
    logp = np.asarray(logp, dtype=np.float64)
    T, width = logp.shape
    ids = _check_ids(ids, width - 1)
    if not ctc_feasible(T, ids):
        return math.inf
    ext = _extended_target(ids)
    alpha = _forward(logp[:, ext], ext)
    if len(ext) > 1:
        total = np.logaddexp(alpha[T - 1, -1], alpha[T - 1, -2])
    else:
        total = alpha[T - 1, -1]
    return float(-total)


def ctc_loss_grad(z, ids) -> tuple[float, np.ndarray]:
    """(-log P(y|X), its gradient w.r.t. the pre-softmax logits z).

    The gradient is softmax(z) - gamma, where gamma[t, k] is the posterior
    probability that frame t emits token k; each row sums to 0.
    Raises InputError for infeasible targets so callers can skip.
    """
    z = np.asarray(z, dtype=np.float64)
    T, width = z.shape
    ids = _check_ids(ids, width - 1)
    if not ctc_feasible(T, ids):
        raise InputError(
            f"target of length {len(ids)} needs {min_frames(ids)} frames, grid has {T}"
        )
    zmax = z.max(axis=1, keepdims=True)
    expz = np.exp(z - zmax)
    p = expz / expz.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        logp = np.log(p)

    ext = _extended_target(ids)
    emit = logp[:, ext]
    alpha = _forward(emit, ext)
    beta = _backward(emit, ext)
    if len(ext) > 1:
        log_total = np.logaddexp(alpha[T - 1, -1], alpha[T - 1, -2])
    else:
        log_total = alpha[T - 1, -1]
    # alpha and beta both include the frame-t emission; divide one copy out
    ab = alpha + beta
    with np.errstate(invalid="ignore"):
        occ = ab - emit - log_total
    occ = np.where(np.isfinite(ab), occ, NEG_INF)
    gamma = np.zeros_like(p)
    np.add.at(gamma, (slice(None), ext), np.exp(occ))
    return float(-log_total), p - gamma


def ctc_grad(z, ids) -> np.ndarray:
    """Gradient half of ctc_loss_grad; see there for the contract."""
    return ctc_loss_grad(z, ids)[1]


def ctc_brute_force(p, ids) -> float:
    """Sum of alignment products over all (V+1)^T alignments squashing to ids.

    Probability-space test oracle; refuses instances above 1e7 alignments.
    """
    if isinstance(p, PosteriorGrid):
        p = p.probs()
    p = np.asarray(p, dtype=np.float64)
    T, width = p.shape
    ids = _check_ids(ids, width - 1)
    if width**T > 10**7:
        raise TooLargeError(f"{width}^{T} alignments exceed the 1e7 oracle guard")
    target = ids
    total = 0.0
    for path in itertools.product(range(width), repeat=T):
        prev = None
        lab = []
        for a in path:
            if a != prev and a != 0:
                lab.append(a)
            prev = a
        if tuple(lab) == target:
            prod = 1.0
            for t, a in enumerate(path):
                prod *= p[t, a]
            total += prod
    return total


def write_grid(grid: PosteriorGrid, path) -> None:
    """Posterior-grid text format: `T V` header, then T probability rows."""
    p = grid.probs()
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{grid.T} {grid.V}\n")
        for row in p:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_grid(path) -> PosteriorGrid:
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise ParseError(f"{path}: line 1: expected 'T V'")
        try:
            T, V = int(header[0]), int(header[1])
        except ValueError as e:
            raise ParseError(f"{path}: line 1: non-integer sizes") from e
        rows = []
        for lineno in range(2, T + 2):
            parts = f.readline().split()
            if len(parts) != V + 1:
                raise ParseError(f"{path}: line {lineno}: expected {V + 1} probabilities")
            try:
                rows.append([float(x) for x in parts])
            except ValueError as e:
                raise ParseError(f"{path}: line {lineno}: non-numeric entry") from e
    return PosteriorGrid.from_probs(np.array(rows))
