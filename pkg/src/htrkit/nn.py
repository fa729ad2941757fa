"""Minimal differentiable kernel set with hand-written backward passes.

Everything is float64; forward functions are pure, backward functions take
the forward inputs (plus optional cached state) and return exact chain-rule
gradients. Parameter collections are flat dicts keyed by '/'-joined paths,
which keeps the optimizer, checkpoints and finite-difference tests simple.
"""
from __future__ import annotations

import re

import numpy as np

from .errors import ConfigError, InputError, ParseError


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = (1.0 / fan_in) ** 0.5
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# dense


def dense_apply(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y = x @ w + b over the trailing axis; leading axes pass through."""
    if x.shape[-1] != w.shape[0]:
        raise InputError(f"dense: trailing dim {x.shape[-1]} != fan-in {w.shape[0]}")
    return x @ w + b


def dense_backward(x, w, grad_out):
    grad_x = grad_out @ w.T
    x2 = x.reshape(-1, x.shape[-1])
    g2 = grad_out.reshape(-1, grad_out.shape[-1])
    grad_w = x2.T @ g2
    grad_b = g2.sum(axis=0)
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# elementwise


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x, grad_out):
    return np.where(x > 0, grad_out, 0.0)


def log_softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax, shift-invariant and overflow-safe."""
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def log_softmax_backward(x, grad_out):
    logp = log_softmax_rows(x)
    return grad_out - np.exp(logp) * grad_out.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# pooling / stacking


def column_max_pool(f: np.ndarray) -> np.ndarray:
    """(d, h, w) feature map -> (w, d) sequence, max over the height axis."""
    if f.ndim != 3 or f.shape[1] < 1:
        raise InputError(f"column_max_pool expects (d, h, w), got {f.shape}")
    return f.max(axis=1).T


def column_max_pool_backward(f, grad_out):
    d, h, w = f.shape
    arg = f.argmax(axis=1)  # first max wins ties
    grad_f = np.zeros_like(f)
    di, wi = np.meshgrid(np.arange(d), np.arange(w), indexing="ij")
    grad_f[di, arg, wi] = grad_out.T
    return grad_f


def time_max_pool2(x: np.ndarray) -> np.ndarray:
    """Non-overlapping pairwise max along the first axis; odd tail dropped."""
    T = x.shape[0] // 2
    pairs = x[: 2 * T].reshape(T, 2, -1)
    return pairs.max(axis=1)


def time_max_pool2_backward(x, grad_out):
    T = x.shape[0] // 2
    pairs = x[: 2 * T].reshape(T, 2, -1)
    arg = pairs.argmax(axis=1)
    grad_pairs = np.zeros_like(pairs)
    ti, di = np.meshgrid(np.arange(T), np.arange(pairs.shape[2]), indexing="ij")
    grad_pairs[ti, arg, di] = grad_out
    grad_x = np.zeros_like(x)
    grad_x[: 2 * T] = grad_pairs.reshape(2 * T, -1)
    return grad_x


def frame_stack(x: np.ndarray, k: int) -> np.ndarray:
    """(T, d) -> (T, k*d): concatenate the k-frame window centered at t.

    Edges are zero padded; k must be odd.
    """
    if k < 1 or k % 2 == 0:
        raise ConfigError(f"frame_stack window must be odd and >= 1, got {k}")
    T, d = x.shape
    half = k // 2
    padded = np.zeros((T + 2 * half, d))
    padded[half : half + T] = x
    return np.concatenate([padded[i : i + T] for i in range(k)], axis=1)


def frame_stack_backward(grad_out, k, T, d):
    half = k // 2
    grad_padded = np.zeros((T + 2 * half, d))
    for i in range(k):
        grad_padded[i : i + T] += grad_out[:, i * d : (i + 1) * d]
    return grad_padded[half : half + T]


# ---------------------------------------------------------------------------
# bidirectional tanh recurrence


def birnn_init(rng: np.random.Generator, in_dim: int, hidden: int) -> dict[str, np.ndarray]:
    p = {}
    for tag in ("f", "b"):
        p[f"wx_{tag}"] = uniform_init(rng, (in_dim, hidden), in_dim)
        p[f"wh_{tag}"] = uniform_init(rng, (hidden, hidden), hidden)
        p[f"b_{tag}"] = np.zeros(hidden)
    return p


def _rnn_pass(x, wx, wh, b, reverse: bool):
    T = x.shape[0]
    hidden = wh.shape[0]
    hs = np.empty((T, hidden))
    pre = x @ wx + b
    h = np.zeros(hidden)
    ts = range(T - 1, -1, -1) if reverse else range(T)
    for t in ts:
        h = np.tanh(pre[t] + h @ wh)
        hs[t] = h
    return hs


def birnn_apply(x: np.ndarray, p: dict[str, np.ndarray]) -> np.ndarray:
    """(T, in) -> (T, 2*hidden): forward tanh pass then mirrored backward pass."""
    if x.ndim != 2 or x.shape[1] != p["wx_f"].shape[0]:
        raise InputError(f"birnn: input shape {x.shape} does not match wx {p['wx_f'].shape}")
    hf = _rnn_pass(x, p["wx_f"], p["wh_f"], p["b_f"], reverse=False)
    hb = _rnn_pass(x, p["wx_b"], p["wh_b"], p["b_b"], reverse=True)
    return np.concatenate([hf, hb], axis=1)


def _rnn_pass_backward(x, wx, wh, b, hs, grad_hs, reverse: bool):
    # the time loop only carries the recurrent term; weight gradients batch up
    T = x.shape[0]
    hidden = wh.shape[0]
    gpre_all = np.empty((T, hidden))
    wh_t = wh.T
    carry = np.zeros(hidden)
    ts = range(T) if reverse else range(T - 1, -1, -1)
    for t in ts:
        gpre = (grad_hs[t] + carry) * (1.0 - hs[t] ** 2)
        gpre_all[t] = gpre
        carry = gpre @ wh_t
    h_prev = np.zeros_like(hs)
    if reverse:
        h_prev[:-1] = hs[1:]
    else:
        h_prev[1:] = hs[:-1]
    grad_wx = x.T @ gpre_all
    grad_wh = h_prev.T @ gpre_all
    grad_b = gpre_all.sum(axis=0)
    grad_x = gpre_all @ wx.T
    return grad_x, grad_wx, grad_wh, grad_b


def birnn_backward(x, p, grad_out, out=None):
    """Exact backprop-through-time; recomputes states unless `out` is given."""
    hidden = p["wh_f"].shape[0]
    if out is None:
        out = birnn_apply(x, p)
    hf, hb = out[:, :hidden], out[:, hidden:]
    gf, gb = grad_out[:, :hidden], grad_out[:, hidden:]
    gx_f, gwx_f, gwh_f, gb_f = _rnn_pass_backward(
        x, p["wx_f"], p["wh_f"], p["b_f"], hf, gf, reverse=False
    )
    gx_b, gwx_b, gwh_b, gb_b = _rnn_pass_backward(
        x, p["wx_b"], p["wh_b"], p["b_b"], hb, gb, reverse=True
    )
    grads = {
        "wx_f": gwx_f, "wh_f": gwh_f, "b_f": gb_f,
        "wx_b": gwx_b, "wh_b": gwh_b, "b_b": gb_b,
    }
    return gx_f + gx_b, grads


# ---------------------------------------------------------------------------
# optimizer over flat parameter trees


def zeros_like_tree(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def add_into_tree(acc: dict[str, np.ndarray], grads: dict[str, np.ndarray], scale=1.0):
    for k, g in grads.items():
        acc[k] += scale * g


def rmsprop_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    accum: dict[str, np.ndarray],
    lr: float,
    rho: float = 0.9,
    eps: float = 1e-8,
) -> None:
    """In-place update: s <- rho*s + (1-rho)*g^2; theta <- theta - lr*g/(sqrt(s)+eps)."""
    for k in params:
        g = grads[k]
        if not np.all(np.isfinite(g)):
            raise InputError(f"non-finite gradient for parameter {k!r}")
        s = accum[k]
        s *= rho
        s += (1.0 - rho) * g * g
        params[k] -= lr * g / (np.sqrt(s) + eps)


# ---------------------------------------------------------------------------
# checkpoint text format


def save_checkpoint(path, params: dict[str, np.ndarray], meta: dict[str, str]) -> None:
    """Structured text: `meta k v` lines, then per-array shape + flat values.

    Values are written with repr(), which round-trips float64 exactly.
    """
    with open(path, "w", encoding="utf-8") as f:
        f.write("ckpt-v1\n")
        for k in sorted(meta):
            if re.search(r"\s", k):
                raise ConfigError(f"meta key {k!r} may not contain whitespace")
            f.write(f"meta {k} {meta[k]}\n")
        for name in sorted(params):
            arr = np.asarray(params[name], dtype=np.float64)
            dims = ",".join(str(d) for d in arr.shape)
            f.write(f"param {name} {dims}\n")
            f.write(" ".join(repr(float(v)) for v in arr.ravel()) + "\n")
        f.write("end\n")


def load_checkpoint(path):
    params: dict[str, np.ndarray] = {}
    meta: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        lines = f.read().split("\n")
    if not lines or lines[0] != "ckpt-v1":
        raise ParseError(f"{path}: line 1: missing ckpt-v1 header")
    i = 1
    ended = False
    while i < len(lines):
        line = lines[i]
        if line == "":
            i += 1
            continue
        if line == "end":
            ended = True
            break
        if line.startswith("meta "):
            _, key, value = line.split(" ", 2)
            meta[key] = value
            i += 1
        elif line.startswith("param "):
            try:
                _, name, dims = line.split(" ")
                shape = tuple(int(d) for d in dims.split(",") if d != "")
            except ValueError as e:
                raise ParseError(f"{path}: line {i + 1}: bad param header") from e
            try:
                values = np.array([float(v) for v in lines[i + 1].split()])
            except ValueError as e:
                raise ParseError(f"{path}: line {i + 2}: non-numeric value") from e
            expected = int(np.prod(shape)) if shape else 1
            if values.size != expected:
                raise ParseError(
                    f"{path}: line {i + 2}: expected {expected} values, got {values.size}"
                )
            params[name] = values.reshape(shape)
            i += 2
        else:
            raise ParseError(f"{path}: line {i + 1}: unrecognized record {line!r}")
    if not ended:
        raise ParseError(f"{path}: missing end marker")
    return params, meta
