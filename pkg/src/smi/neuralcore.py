"""From-scratch recurrent classifier: MLP encoder -> LSTM -> classifier
and Gaussian-predictor heads, with exact reverse-mode gradients.

Everything is plain numpy.  The forward pass over an update window is
organized so the encoder and both heads run as single large matmuls over
(batch * window) rows; only the LSTM recurrence iterates per step.  The
backward pass mirrors that structure, which is what keeps desk-scale
training inside its wall-clock budget on a CPU.

Training runs in float32; gradient-check tests build float64 models.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit as _sigmoid

from .errors import BudgetViolation, IoFailure, NonFinite, StaleModel

N_CLASSES = 17
CHECKPOINT_VERSION = 1

DEFAULT_PARAM_BUDGET = (500_000, 1_000_000)


@dataclass(frozen=True)
class ArchConfig:
    """Layer widths; defaults land the parameter count near the 681k-class
    budget of the target interface model."""

    input_dim: int = 301
    encoder: tuple = (256,)
    hidden: int = 256
    classifier: tuple = (128,)
    predictor: tuple = (128,)
    n_classes: int = N_CLASSES
    scale_floor: float = 1e-3
    param_budget: tuple | None = DEFAULT_PARAM_BUDGET

    @classmethod
    def from_dict(cls, doc: dict) -> "ArchConfig":
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
        if "param_budget" in kw and kw["param_budget"] is not None:
            kw["param_budget"] = tuple(kw["param_budget"])
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "encoder": list(self.encoder),
            "hidden": self.hidden,
            "classifier": list(self.classifier),
            "predictor": list(self.predictor),
            "n_classes": self.n_classes,
            "scale_floor": self.scale_floor,
            "param_budget": list(self.param_budget) if self.param_budget else None,
        }


@dataclass(frozen=True)
class TrainHyper:
    gamma: float = 0.02          # predictor-loss gain
    learning_rate: float = 5e-4
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class ModelParams:
    """All trainable arrays.  encoder/classifier/predictor are lists of
    (W, b); the LSTM packs its four gates (i, f, g, o) side by side."""

    arch: ArchConfig
    encoder: list
    lstm_w: np.ndarray   # (enc_out + H, 4H)
    lstm_b: np.ndarray   # (4H,)
    classifier: list
    predictor: list

    def named_arrays(self):
        for i, (w, b) in enumerate(self.encoder):
            yield f"encoder.{i}.w", w
            yield f"encoder.{i}.b", b
        yield "lstm.w", self.lstm_w
        yield "lstm.b", self.lstm_b
        for name, layers in (("classifier", self.classifier),
                             ("predictor", self.predictor)):
            for i, (w, b) in enumerate(layers):
                yield f"{name}.{i}.w", w
                yield f"{name}.{i}.b", b

    @property
    def dtype(self):
        return self.lstm_w.dtype

    def copy(self) -> "ModelParams":
        return ModelParams(
            arch=self.arch,
            encoder=[(w.copy(), b.copy()) for w, b in self.encoder],
            lstm_w=self.lstm_w.copy(), lstm_b=self.lstm_b.copy(),
            classifier=[(w.copy(), b.copy()) for w, b in self.classifier],
            predictor=[(w.copy(), b.copy()) for w, b in self.predictor],
        )

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            arch=self.arch,
            encoder=[(w.astype(dtype), b.astype(dtype)) for w, b in self.encoder],
            lstm_w=self.lstm_w.astype(dtype), lstm_b=self.lstm_b.astype(dtype),
            classifier=[(w.astype(dtype), b.astype(dtype)) for w, b in self.classifier],
            predictor=[(w.astype(dtype), b.astype(dtype)) for w, b in self.predictor],
        )


@dataclass(frozen=True)
class HiddenState:
    h: np.ndarray
    c: np.ndarray


def zero_state(hidden: int, batch: int | None = None, dtype=np.float32) -> HiddenState:
    shape = (hidden,) if batch is None else (batch, hidden)
    return HiddenState(np.zeros(shape, dtype), np.zeros(shape, dtype))


@dataclass(frozen=True)
class GaussPred:
    mean: np.ndarray
    scale: np.ndarray


# --- sizing ---------------------------------------------------------------

def _mlp_sizes(in_dim, widths, out_dim):
    dims = [in_dim, *widths, out_dim]
    return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))


def param_count(arch: ArchConfig) -> int:
    """Exact analytic parameter count for an architecture."""
    enc_out = arch.encoder[-1] if arch.encoder else arch.input_dim
    n = _mlp_sizes(arch.input_dim, arch.encoder[:-1], arch.encoder[-1]) if arch.encoder else 0
    n += (enc_out + arch.hidden) * 4 * arch.hidden + 4 * arch.hidden
    n += _mlp_sizes(arch.hidden, arch.classifier, arch.n_classes)
    n += _mlp_sizes(arch.hidden, arch.predictor, 2 * arch.input_dim)
    return n


def count_params(params: ModelParams) -> int:
    return sum(int(a.size) for _, a in params.named_arrays())


# --- initialization -------------------------------------------------------

def _init_dense(rng, fan_in, fan_out, dtype):
    s = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-s, s, (fan_in, fan_out)).astype(dtype)
    b = np.zeros(fan_out, dtype)
    return w, b


def _init_mlp(rng, in_dim, widths, out_dim, dtype):
    layers = []
    d = in_dim
    for w in (*widths, out_dim):
        layers.append(_init_dense(rng, d, w, dtype))
        d = w
    return layers


def init_params(arch: ArchConfig, seed: int, dtype=np.float32) -> ModelParams:
    """Deterministic scaled-uniform fan-in init; forget-gate bias +1."""
    budget = arch.param_budget
    n = param_count(arch)
    if budget is not None and not (budget[0] <= n <= budget[1]):
        raise BudgetViolation(
            f"architecture has {n} parameters, outside [{budget[0]}, {budget[1]}]")
    rng = np.random.default_rng(seed)
    enc_out = arch.encoder[-1] if arch.encoder else arch.input_dim
    encoder = (_init_mlp(rng, arch.input_dim, arch.encoder[:-1], arch.encoder[-1], dtype)
               if arch.encoder else [])
    h = arch.hidden
    lstm_w, lstm_b = _init_dense(rng, enc_out + h, 4 * h, dtype)
    lstm_b[h:2 * h] = 1.0  # forget gate starts open
    classifier = _init_mlp(rng, h, arch.classifier, arch.n_classes, dtype)
    predictor = _init_mlp(rng, h, arch.predictor, 2 * arch.input_dim, dtype)
    return ModelParams(arch, encoder, lstm_w, lstm_b, classifier, predictor)


# --- numerics helpers -----------------------------------------------------

def _softplus(x):
    # max(x, 0) + log1p(exp(-|x|)): stable and cheaper than logaddexp
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _log_softmax(logits):
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _check_finite(name, *arrays):
    for a in arrays:
        if not np.isfinite(a).all():
            raise NonFinite(f"non-finite values in {name}")


# --- forward --------------------------------------------------------------

def _mlp_forward(x, layers, tape=None):
    """Hidden layers tanh, final layer linear.  tape collects the input
    plus each hidden post-activation."""
    acts = [x]
    for i, (w, b) in enumerate(layers):
        x = x @ w + b
        if i < len(layers) - 1:
            x = np.tanh(x)
            acts.append(x)
    if tape is not None:
        tape.extend(acts)
    return x


def forward_window(obs, state: HiddenState, params: ModelParams,
                   want_tape: bool = False):
    """Run (B, W, input_dim) observations through encoder -> LSTM -> heads.

    Returns (log_probs (B,W,C), mean (B,W,D), scale (B,W,D), new_state,
    tape).  The tape holds everything backward_window needs.
    """
    arch = params.arch
    B, W, D = obs.shape
    H = arch.hidden
    dtype = params.dtype
    obs2 = np.ascontiguousarray(obs.reshape(B * W, D), dtype=dtype)

    enc_tape: list = []
    e = _mlp_forward(obs2, params.encoder, enc_tape if want_tape else None)
    E = e.shape[-1]
    e3 = e.reshape(B, W, E)

    # input contribution to all four gates, batched over the window
    pre_in = (e @ params.lstm_w[:E]).reshape(B, W, 4 * H)
    w_hh = params.lstm_w[E:]

    h, c = state.h.astype(dtype, copy=True), state.c.astype(dtype, copy=True)
    hs = np.empty((B, W, H), dtype)
    gates = np.empty((B, W, 4 * H), dtype) if want_tape else None
    h_prev = np.empty((B, W, H), dtype) if want_tape else None
    c_prev = np.empty((B, W, H), dtype) if want_tape else None
    tanh_c = np.empty((B, W, H), dtype) if want_tape else None

    for t in range(W):
        pre = pre_in[:, t] + h @ w_hh + params.lstm_b
        i = _sigmoid(pre[:, :H])
        f = _sigmoid(pre[:, H:2 * H])
        g = np.tanh(pre[:, 2 * H:3 * H])
        o = _sigmoid(pre[:, 3 * H:])
        if want_tape:
            h_prev[:, t] = h
            c_prev[:, t] = c
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t] = h
        if want_tape:
            gates[:, t, :H] = i
            gates[:, t, H:2 * H] = f
            gates[:, t, 2 * H:3 * H] = g
            gates[:, t, 3 * H:] = o
            tanh_c[:, t] = tc

    hs2 = hs.reshape(B * W, H)
    cls_tape: list = []
    logits = _mlp_forward(hs2, params.classifier, cls_tape if want_tape else None)
    _check_finite("classifier logits", logits)
    log_probs = _log_softmax(logits).reshape(B, W, arch.n_classes)

    prd_tape: list = []
    out = _mlp_forward(hs2, params.predictor, prd_tape if want_tape else None)
    _check_finite("predictor output", out)
    mean = out[:, :D].reshape(B, W, D)
    spre = out[:, D:]
    scale = (_softplus(spre) + arch.scale_floor).reshape(B, W, D)

    new_state = HiddenState(h.copy(), c.copy())
    tape = None
    if want_tape:
        tape = {
            "obs2": obs2, "enc": enc_tape, "e3": e3,
            "h_prev": h_prev, "c_prev": c_prev, "gates": gates,
            "tanh_c": tanh_c, "hs2": hs2,
            "cls": cls_tape, "prd": prd_tape,
            "log_probs": log_probs, "mean": mean, "scale": scale,
            "spre": spre, "shape": (B, W, D),
        }
    return log_probs, mean, scale, new_state, tape


def step(frame_vec, state: HiddenState, params: ModelParams):
    """Single-frame forward pass: (new state, class probs, GaussPred)."""
    x = np.asarray(frame_vec, dtype=params.dtype).reshape(1, 1, -1)
    st = HiddenState(state.h.reshape(1, -1), state.c.reshape(1, -1))
    log_probs, mean, scale, new_state, _ = forward_window(x, st, params)
    probs = np.exp(log_probs[0, 0])
    return (
        HiddenState(new_state.h[0], new_state.c[0]),
        probs,
        GaussPred(mean[0, 0].copy(), scale[0, 0].copy()),
    )


# --- loss -----------------------------------------------------------------

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _window_losses(log_probs, mean, scale, labels, next_obs, has_next, gamma):
    """Per-trajectory window-summed loss terms.

    Returns (ce_sum (B,), pred_sum (B,)); pred terms only where has_next.
    """
    B, W, C = log_probs.shape
    ce = -np.take_along_axis(
        log_probs, labels.reshape(B, 1, 1).repeat(W, axis=1), axis=2)[:, :, 0]
    ce_sum = ce.sum(axis=1)
    if gamma == 0.0:
        return ce_sum, np.zeros(B, dtype=log_probs.dtype)
    delta = next_obs - mean
    nll = (_HALF_LOG_2PI + np.log(scale)
           + 0.5 * (delta / scale) ** 2).sum(axis=2)  # (B, W)
    pred_sum = gamma * (nll * has_next).sum(axis=1)
    return ce_sum, pred_sum


def _traj_window(traj, window):
    start, stop = window if not isinstance(window, range) else (window.start, window.stop)
    frames = np.asarray(traj.frames)
    T = frames.shape[0]
    if not (0 <= start <= stop <= T):
        raise ValueError(f"window [{start}, {stop}) outside trajectory of length {T}")
    return frames, int(traj.label), T, start, stop


def sequence_loss(traj, params: ModelParams, hyper: TrainHyper,
                  start_state: HiddenState, window):
    """Windowed classification + predictive loss for one trajectory.

    The predictor term at step t targets the next observation and is
    omitted at the final trajectory step.  Returns (loss, carry state).
    """
    frames, label, T, start, stop = _traj_window(traj, window)
    st = HiddenState(start_state.h.reshape(1, -1), start_state.c.reshape(1, -1))
    if stop == start:
        return 0.0, start_state
    obs = frames[start:stop][None].astype(params.dtype)
    log_probs, mean, scale, new_state, _ = forward_window(obs, st, params)
    W = stop - start
    next_obs = np.zeros_like(obs)
    has_next = np.zeros((1, W), dtype=params.dtype)
    upto = min(stop + 1, T) - (start + 1)
    if upto > 0:
        next_obs[0, :upto] = frames[start + 1:start + 1 + upto]
        has_next[0, :upto] = 1.0
    ce, pred = _window_losses(log_probs, mean, scale,
                              np.array([label]), next_obs, has_next, hyper.gamma)
    loss = float(ce[0] + pred[0])
    if not np.isfinite(loss):
        raise NonFinite("sequence loss overflowed")
    return loss, HiddenState(new_state.h[0], new_state.c[0])


# --- backward -------------------------------------------------------------

def _mlp_backward(d_out, layers, acts):
    """Gradient through _mlp_forward.  acts = [input, hidden acts...]."""
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        a = acts[i]
        gw = a.T @ d_out
        gb = d_out.sum(axis=0)
        grads[i] = (gw, gb)
        d_out = d_out @ w.T
        if i > 0:
            d_out = d_out * (1.0 - acts[i] ** 2)
    return grads, d_out


def backward_window(tape, params: ModelParams, labels, next_obs, has_next,
                    gamma, loss_scale=1.0):
    """Exact gradients of the window loss; truncates at the window start.

    loss_scale multiplies every gradient (used for batch averaging).
    Returns a ModelParams-shaped gradient container.
    """
    arch = params.arch
    B, W, D = tape["shape"]
    H = arch.hidden
    dtype = params.dtype
    s = dtype.type(loss_scale)

    # classifier head: d logits = softmax - onehot
    probs = np.exp(tape["log_probs"]).reshape(B * W, arch.n_classes)
    onehot = np.zeros_like(probs)
    onehot[np.arange(B * W), np.repeat(labels, W)] = 1.0
    dlogits = (probs - onehot) * s
    cls_grads, dh_cls = _mlp_backward(dlogits, params.classifier, tape["cls"])

    # predictor head
    if gamma != 0.0:
        mean = tape["mean"].reshape(B * W, D)
        scale = tape["scale"].reshape(B * W, D)
        delta = next_obs.reshape(B * W, D) - mean
        w_t = (has_next.reshape(B * W, 1) * (gamma * s))
        inv2 = 1.0 / (scale * scale)
        dmean = -delta * inv2 * w_t
        dscale = (1.0 / scale - (delta * delta) * inv2 / scale) * w_t
        dspre = dscale * _sigmoid(tape["spre"])
        dout = np.concatenate([dmean, dspre], axis=1)
        prd_grads, dh_prd = _mlp_backward(dout, params.predictor, tape["prd"])
        dh_heads = dh_cls + dh_prd
    else:
        prd_grads = [(np.zeros_like(w), np.zeros_like(b))
                     for w, b in params.predictor]
        dh_heads = dh_cls

    dh_heads = dh_heads.reshape(B, W, H)

    # LSTM backward through time
    e3 = tape["e3"]
    E = e3.shape[-1]
    gates, tanh_c = tape["gates"], tape["tanh_c"]
    h_prev, c_prev = tape["h_prev"], tape["c_prev"]
    w_hh = params.lstm_w[E:]
    dpre_all = np.empty((B, W, 4 * H), dtype)
    dh = np.zeros((B, H), dtype)
    dc = np.zeros((B, H), dtype)
    for t in range(W - 1, -1, -1):
        dh = dh + dh_heads[:, t]
        i = gates[:, t, :H]
        f = gates[:, t, H:2 * H]
        g = gates[:, t, 2 * H:3 * H]
        o = gates[:, t, 3 * H:]
        tc = tanh_c[:, t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev[:, t]
        dpre = dpre_all[:, t]
        dpre[:, :H] = di * i * (1.0 - i)
        dpre[:, H:2 * H] = df * f * (1.0 - f)
        dpre[:, 2 * H:3 * H] = dg * (1.0 - g * g)
        dpre[:, 3 * H:] = do * o * (1.0 - o)
        dh = dpre @ w_hh.T
        dc = dc * f
    # state gradients at the window start are dropped: truncated BPTT

    dpre2 = dpre_all.reshape(B * W, 4 * H)
    e2 = e3.reshape(B * W, E)
    hp2 = h_prev.reshape(B * W, H)
    g_lstm_w = np.empty_like(params.lstm_w)
    g_lstm_w[:E] = e2.T @ dpre2
    g_lstm_w[E:] = hp2.T @ dpre2
    g_lstm_b = dpre2.sum(axis=0)

    de = dpre2 @ params.lstm_w[:E].T
    enc_grads, _ = _mlp_backward(de, params.encoder, tape["enc"]) \
        if params.encoder else ([], None)

    grads = ModelParams(arch, enc_grads, g_lstm_w, g_lstm_b, cls_grads, prd_grads)
    for name, a in grads.named_arrays():
        if not np.isfinite(a).all():
            raise NonFinite(f"non-finite gradient in {name}")
    return grads


def gradients(traj, params: ModelParams, hyper: TrainHyper,
              start_state: HiddenState, window):
    """Reverse-mode gradients of sequence_loss over the window."""
    frames, label, T, start, stop = _traj_window(traj, window)
    if stop == start:
        z = ModelParams(
            params.arch,
            [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.encoder],
            np.zeros_like(params.lstm_w), np.zeros_like(params.lstm_b),
            [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.classifier],
            [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.predictor])
        return z
    st = HiddenState(start_state.h.reshape(1, -1), start_state.c.reshape(1, -1))
    obs = frames[start:stop][None].astype(params.dtype)
    *_, tape = forward_window(obs, st, params, want_tape=True)
    W = stop - start
    next_obs = np.zeros_like(obs)
    has_next = np.zeros((1, W), dtype=params.dtype)
    upto = min(stop + 1, T) - (start + 1)
    if upto > 0:
        next_obs[0, :upto] = frames[start + 1:start + 1 + upto]
        has_next[0, :upto] = 1.0
    return backward_window(tape, params, np.array([label]), next_obs,
                           has_next, hyper.gamma)


# --- optimizer ------------------------------------------------------------

@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def optimizer_step(params: ModelParams, grads: ModelParams,
                   opt_state: AdamState, hyper: TrainHyper):
    """One bias-corrected adaptive-moment update.  Functional: returns
    fresh params and state."""
    t = opt_state.t + 1
    lr = hyper.learning_rate
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    new_m, new_v, updated = {}, {}, {}
    gdict = dict(grads.named_arrays())
    for name, p in params.named_arrays():
        g = gdict[name]
        m = ADAM_BETA1 * opt_state.m.get(name, 0.0) + (1 - ADAM_BETA1) * g
        v = ADAM_BETA2 * opt_state.v.get(name, 0.0) + (1 - ADAM_BETA2) * (g * g)
        new_m[name], new_v[name] = m, v
        stepv = lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        updated[name] = (p - stepv).astype(p.dtype, copy=False)
        if not np.isfinite(updated[name]).all():
            raise NonFinite(f"optimizer produced non-finite values in {name}")
    enc, cls, prd = [], [], []
    for i in range(len(params.encoder)):
        enc.append((updated[f"encoder.{i}.w"], updated[f"encoder.{i}.b"]))
    for i in range(len(params.classifier)):
        cls.append((updated[f"classifier.{i}.w"], updated[f"classifier.{i}.b"]))
    for i in range(len(params.predictor)):
        prd.append((updated[f"predictor.{i}.w"], updated[f"predictor.{i}.b"]))
    out = ModelParams(params.arch, enc, updated["lstm.w"], updated["lstm.b"],
                      cls, prd)
    return out, AdamState(t, new_m, new_v)


# --- checkpoint I/O -------------------------------------------------------

def save_checkpoint(stem, params: ModelParams, metadata: dict | None = None):
    """Write <stem>.json manifest + <stem>.bin little-endian f32 blob."""
    stem = str(stem)
    order = []
    blobs = []
    for name, a in params.named_arrays():
        order.append({"name": name, "shape": list(a.shape)})
        blobs.append(np.ascontiguousarray(a, dtype="<f4").tobytes())
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "arch": params.arch.to_dict(),
        "param_count": count_params(params),
        "order": order,
        "metadata": metadata or {},
    }
    with open(stem + ".json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(stem + ".bin", "wb") as fh:
        fh.write(b"".join(blobs))


def load_checkpoint(stem):
    """Read a checkpoint pair; validates version, count and finiteness."""
    stem = str(stem)
    try:
        with open(stem + ".json", "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        raw = np.fromfile(stem + ".bin", dtype="<f4")
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {stem}: {exc}") from exc
    except ValueError as exc:
        raise IoFailure(f"corrupt checkpoint manifest {stem}: {exc}") from exc
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise StaleModel(
            f"checkpoint format {manifest.get('format_version')} != "
            f"supported {CHECKPOINT_VERSION}")
    arch = ArchConfig.from_dict(manifest["arch"])
    expected = sum(int(np.prod(e["shape"])) for e in manifest["order"])
    if raw.size != expected or expected != manifest["param_count"]:
        raise IoFailure(
            f"checkpoint blob holds {raw.size} values, manifest declares "
            f"{manifest['param_count']}")
    if not np.isfinite(raw).all():
        raise IoFailure("checkpoint contains non-finite parameters")
    arrays = {}
    off = 0
    for entry in manifest["order"]:
        n = int(np.prod(entry["shape"]))
        arrays[entry["name"]] = raw[off:off + n].reshape(entry["shape"]).copy()
        off += n

    def take_mlp(prefix):
        layers = []
        i = 0
        while f"{prefix}.{i}.w" in arrays:
            layers.append((arrays[f"{prefix}.{i}.w"], arrays[f"{prefix}.{i}.b"]))
            i += 1
        return layers

    params = ModelParams(arch, take_mlp("encoder"), arrays["lstm.w"],
                         arrays["lstm.b"], take_mlp("classifier"),
                         take_mlp("predictor"))
    return params, manifest["metadata"]
