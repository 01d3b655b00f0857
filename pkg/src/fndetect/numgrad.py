"""Central finite-difference gradient oracles for the classifier heads.

Two evaluation paths compute the same quantity:

* central_difference — the reference oracle: perturb one parameter entry at
  a time and re-run the head forward. Simple and obviously correct, but too
  slow for full coverage of the LSTM's recurrent matrix.
* lstm_fd_gradients — a batched evaluator that advances thousands of
  perturbed LSTM trajectories simultaneously. It computes the identical
  (loss(p+e) - loss(p-e)) / 2e values; tests cross-validate it against the
  reference oracle on sampled entries before trusting full coverage.

Both use the step size e * (1 + |value|) per entry.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .models import Classifier, ModelSpec, head_backward, head_forward
from .training import BCE_EPS, bce_grad, bce_loss

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    HAVE_NUMBA = False


def make_loss_fn(spec: ModelSpec, params: dict[str, np.ndarray], outputs, labels):
    """Eval-mode head loss over the given (live) parameter dict.

    The returned callable takes no arguments; finite differencing works by
    perturbing the parameter arrays in place and re-evaluating.
    """

    def loss_fn() -> float:
        probs, _ = head_forward(spec, params, outputs)
        return bce_loss(probs, labels)

    return loss_fn


def central_difference(
    loss_fn,
    params: dict[str, np.ndarray],
    eps: float = 1e-6,
    entries: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Reference central differences, one entry at a time.

    Each entry is nudged in place by +/- eps*(1+|value|), loss_fn() is
    re-evaluated, and the value restored. entries optionally restricts each
    tensor to the given flat indices (used for cross-validating the fast
    path); None means all entries.
    """
    grads: dict[str, np.ndarray] = {}
    for name in sorted(params):
        flat = params[name].ravel()
        if entries is not None:
            if name not in entries:
                continue
            index_list = np.asarray(entries[name])
        else:
            index_list = np.arange(flat.size)
        out = np.zeros(len(index_list))
        for n, idx in enumerate(index_list):
            original = flat[idx]
            step = eps * (1.0 + abs(original))
            flat[idx] = original + step
            plus = loss_fn()
            flat[idx] = original - step
            minus = loss_fn()
            flat[idx] = original
            out[n] = (plus - minus) / (2.0 * step)
        grads[name] = out if entries is not None else out.reshape(params[name].shape)
    return grads


# ---- batched LSTM trajectories ----------------------------------------------

if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _gate_step_kernel(z, c_in, h_out, c_out):  # pragma: no cover - compiled
        rows, width = z.shape
        hidden = width // 4
        for r in prange(rows):
            for k in range(hidden):
                zi = z[r, k]
                zf = z[r, hidden + k]
                zg = z[r, 2 * hidden + k]
                zo = z[r, 3 * hidden + k]
                if zi >= 0.0:
                    i = 1.0 / (1.0 + np.exp(-zi))
                else:
                    t = np.exp(zi)
                    i = t / (1.0 + t)
                if zf >= 0.0:
                    f = 1.0 / (1.0 + np.exp(-zf))
                else:
                    t = np.exp(zf)
                    f = t / (1.0 + t)
                g = np.tanh(zg)
                if zo >= 0.0:
                    o = 1.0 / (1.0 + np.exp(-zo))
                else:
                    t = np.exp(zo)
                    o = t / (1.0 + t)
                cc = f * c_in[r, k] + i * g
                c_out[r, k] = cc
                h_out[r, k] = o * np.tanh(cc)


def _gate_step_numpy(z, c_in, h_out, c_out):
    hidden = z.shape[1] // 4

    def sig(v):
        out = np.empty_like(v)
        pos = v >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
        ev = np.exp(v[~pos])
        out[~pos] = ev / (1.0 + ev)
        return out

    i = sig(z[:, :hidden])
    f = sig(z[:, hidden : 2 * hidden])
    g = np.tanh(z[:, 2 * hidden : 3 * hidden])
    o = sig(z[:, 3 * hidden :])
    np.multiply(f, c_in, out=c_out)
    c_out += i * g
    np.multiply(o, np.tanh(c_out), out=h_out)


def _gate_step(z, c_in, h_out, c_out):
    if HAVE_NUMBA:
        _gate_step_kernel(z, c_in, h_out, c_out)
    else:
        _gate_step_numpy(z, c_in, h_out, c_out)


def _losses_from_final(h_final, out_w, out_b, labels):
    """Per-trajectory BCE losses from stacked final hidden states [S,B,H]."""
    logits = h_final @ out_w[:, 0] + out_b[0]
    probs = np.empty_like(logits)
    pos = logits >= 0
    probs[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    ez = np.exp(logits[~pos])
    probs[~pos] = ez / (1.0 + ez)
    p = np.clip(probs, BCE_EPS, 1.0 - BCE_EPS)
    losses = -(labels[None, :] * np.log(p) + (1.0 - labels[None, :]) * np.log(1.0 - p))
    return losses.mean(axis=1)


def _base_trajectory(x, W, U, b):
    """Plain forward pass storing every (h_t, c_t) plus the projected inputs."""
    B, T, _ = x.shape
    H = U.shape[0]
    xW = x @ W
    hs = np.zeros((T + 1, B, H))
    cs = np.zeros((T + 1, B, H))
    for t in range(T):
        z = xW[:, t] + hs[t] @ U + b
        rows = np.ascontiguousarray(z)
        h_out = np.empty((B, H))
        c_out = np.empty((B, H))
        _gate_step(rows, cs[t], h_out, c_out)
        hs[t + 1] = h_out
        cs[t + 1] = c_out
    return xW, hs, cs


def _run_perturbed_block(
    tensor: str,
    ii: np.ndarray,
    jj: np.ndarray,
    steps: np.ndarray,
    x,
    xWb,
    hs,
    cs,
    U,
    out_w,
    out_b,
    labels,
    start_t: int,
):
    """Advance one block of perturbed trajectories; returns per-state losses.

    tensor selects where the step is injected: "U" adds step*h[:, i] to gate
    column j, "W" adds step*x[:, t, i], "b" adds step to column j. xWb is
    the precomputed x @ W + b. Buffers are reused across time steps.
    """
    S = ii.size
    B, T, _ = x.shape
    H = U.shape[0]
    rows = S * B
    h = np.empty((rows, H))
    c = np.empty((rows, H))
    h[...] = np.broadcast_to(hs[start_t], (S, B, H)).reshape(rows, H)
    c[...] = np.broadcast_to(cs[start_t], (S, B, H)).reshape(rows, H)
    h_next = np.empty((rows, H))
    c_next = np.empty((rows, H))
    z = np.empty((rows, 4 * H))
    ar = np.arange(S)
    for t in range(start_t, T):
        np.matmul(h, U, out=z)
        z3 = z.reshape(S, B, 4 * H)
        z3 += xWb[:, t][None, :, :]
        if tensor == "U":
            z3[ar, :, jj] += steps[:, None] * h.reshape(S, B, H)[ar, :, ii]
        elif tensor == "W":
            z3[ar, :, jj] += steps[:, None] * x[:, t, :].T[ii]
        else:  # b
            z3[ar, :, jj] += steps[:, None]
        _gate_step(z, c, h_next, c_next)
        h, h_next = h_next, h
        c, c_next = c_next, c
    return _losses_from_final(h.reshape(S, B, H), out_w, out_b, labels)


def lstm_fd_gradients(
    x: np.ndarray,
    labels: np.ndarray,
    params: dict[str, np.ndarray],
    eps: float = 1e-6,
    block: int = 4096,
    entries: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Central differences for lstm.W / lstm.U / lstm.b via batched trajectories.

    x is the encoder token-feature tensor [B,T,D] (held fixed), labels the
    0/1 targets. Computes full coverage unless entries restricts indices.
    The base trajectory is consistency-checked against head evaluation by
    the caller (see check_gradients).
    """
    labels = np.asarray(labels, dtype=np.float64)
    W, U, b = params["lstm.W"], params["lstm.U"], params["lstm.b"]
    out_w, out_b = params["out.W"], params["out.b"]
    xW, hs, cs = _base_trajectory(x, W, U, b)
    xWb = xW + b[None, None, :]

    grads: dict[str, np.ndarray] = {}
    specs = {
        "lstm.U": ("U", U, 1),  # h_0 = 0, so U steps cannot act before t=1
        "lstm.W": ("W", W, 0),
        "lstm.b": ("b", b, 0),
    }
    for name, (tensor, value, start_t) in specs.items():
        flat = value.ravel()
        if entries is not None:
            index_list = entries.get(name)
            if index_list is None:
                continue
            index_list = np.asarray(index_list)
        else:
            index_list = np.arange(flat.size)
        n_cols = value.shape[1] if value.ndim == 2 else value.size
        fd = np.empty(index_list.size)
        for s in range(0, index_list.size, block):
            sel = index_list[s : s + block]
            if value.ndim == 2:
                ii = sel // n_cols
                jj = sel % n_cols
            else:
                ii = np.zeros(sel.size, dtype=np.int64)
                jj = sel
            steps = eps * (1.0 + np.abs(flat[sel]))
            ii2 = np.concatenate([ii, ii])
            jj2 = np.concatenate([jj, jj])
            signed = np.concatenate([steps, -steps])
            losses = _run_perturbed_block(
                tensor, ii2, jj2, signed, x, xWb, hs, cs, U, out_w, out_b, labels, start_t
            )
            k = sel.size
            fd[s : s + k] = (losses[:k] - losses[k:]) / (2.0 * steps)
        grads[name] = fd if entries is not None else fd.reshape(value.shape)
    return grads


# ---- orchestration -----------------------------------------------------------


@dataclass(frozen=True)
class GradCheckResult:
    """Outcome of comparing analytic and numeric head gradients."""

    max_violation: float
    per_parameter: dict[str, float]
    entries_checked: int
    seconds: float
    rtol: float
    atol: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= 1.0


def violation(analytic: np.ndarray, numeric: np.ndarray, rtol: float, atol: float) -> np.ndarray:
    """|a - n| measured against atol + rtol*max(|a|,|n|); <= 1 passes."""
    scale = atol + rtol * np.maximum(np.abs(analytic), np.abs(numeric))
    return np.abs(analytic - numeric) / scale


def check_gradients(
    model: Classifier,
    batches,
    labels,
    eps: float = 1e-6,
    rtol: float = 1e-4,
    atol: float = 1e-8,
) -> GradCheckResult:
    """Full-coverage analytic-vs-central-difference check of every head
    parameter entry, in eval mode on the given batch."""
    started = time.perf_counter()
    model.eval_mode()
    labels = np.asarray(labels, dtype=np.float64)
    batches = model._normalize_batches(batches)
    outputs = [enc.encode(batch) for enc, batch in zip(model.encoders, batches)]
    spec, params = model.spec, model.params

    probs, cache = head_forward(spec, params, outputs)
    analytic, _ = head_backward(spec, params, cache, bce_grad(probs, labels))
    loss_fn = make_loss_fn(spec, params, outputs, labels)

    if spec.variant == "enc_lstm":
        numeric = lstm_fd_gradients(outputs[0].token_features, labels, params, eps=eps)
        # base trajectories must agree with the head's own forward pass
        base = _base_trajectory(outputs[0].token_features, params["lstm.W"], params["lstm.U"], params["lstm.b"])
        base_loss = _losses_from_final(base[1][-1][None], params["out.W"], params["out.b"], labels)[0]
        if abs(base_loss - loss_fn()) > 1e-9:
            raise AssertionError("fast FD base trajectory disagrees with head forward")
        dense_only = {k: params[k] for k in ("out.W", "out.b")}
        numeric.update(central_difference(loss_fn, dense_only, eps=eps))
    else:
        numeric = central_difference(loss_fn, params, eps=eps)

    per_parameter = {}
    checked = 0
    for name in sorted(params):
        v = violation(analytic[name], numeric[name], rtol, atol)
        per_parameter[name] = float(v.max())
        checked += v.size
    return GradCheckResult(
        max_violation=max(per_parameter.values()),
        per_parameter=per_parameter,
        entries_checked=checked,
        seconds=time.perf_counter() - started,
        rtol=rtol,
        atol=atol,
    )


def cross_validate_fast_path(
    model: Classifier,
    batches,
    labels,
    n_samples: int = 40,
    seed: int = 0,
    eps: float = 1e-6,
) -> float:
    """Max |fast - reference| FD difference on sampled LSTM entries.

    Guards the batched evaluator with the one-at-a-time oracle; only
    meaningful for enc_lstm models.
    """
    model.eval_mode()
    labels = np.asarray(labels, dtype=np.float64)
    batches = model._normalize_batches(batches)
    outputs = [enc.encode(batch) for enc, batch in zip(model.encoders, batches)]
    rng = np.random.default_rng(seed)
    entries = {
        name: np.sort(rng.choice(model.params[name].size, size=min(n_samples, model.params[name].size), replace=False))
        for name in ("lstm.W", "lstm.U", "lstm.b")
    }
    fast = lstm_fd_gradients(outputs[0].token_features, labels, model.params, eps=eps, entries=entries)
    loss_fn = make_loss_fn(model.spec, model.params, outputs, labels)
    slow = central_difference(loss_fn, model.params, eps=eps, entries=entries)
    return max(float(np.abs(fast[name] - slow[name]).max()) for name in entries)
