"""Two-layer LSTM trained from scratch: forward, backpropagation through time,
Adam, and a framework-free checkpoint format.

Everything runs on float64 numpy so analytic gradients can be checked against
central finite differences at tight tolerances. Shapes follow the batch-first
convention (batch, timesteps, features); a single window (timesteps, features)
is accepted wherever a batch is.

Per layer the parameters are ``W_x`` (4H x D), ``W_h`` (4H x H) and ``b``
(4H,), with the four gate blocks stacked in i, f, g, o order:

    i = sigmoid(.)   f = sigmoid(.)   g = tanh(.)   o = sigmoid(.)
    c_t = f * c_{t-1} + i * g         h_t = o * tanh(c_t)

with h_0 = c_0 = 0 per window. Layer-1 hidden states (after dropout during
training) feed layer 2; a per-timestep affine readout plus sigmoid maps the
layer-2 state to a value in (0, 1).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import SliceTooShort, epoch_order

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SCK1"

# Seed-stream tags so model init, dropout, and batch order never collide.
_INIT_TAG = 11
_DROPOUT_TAG = 13


class NeuralError(Exception):
    pass


class ShapeMismatch(NeuralError):
    pass


class NonFiniteActivation(NeuralError):
    pass


class StaleCache(NeuralError):
    pass


class DivergedTraining(NeuralError):
    def __init__(self, step: int, message: str):
        super().__init__(f"training diverged at step {step}: {message}")
        self.step = step


class IoFailure(NeuralError):
    pass


class CorruptCheckpoint(NeuralError):
    pass


class LossMode(Enum):
    LAST_OUTPUT = "last_output"
    FULL_SEQUENCE = "full_sequence"


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form: one ufunc pass, no overflow for any argument.
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LstmLayerParams:
    """One LSTM layer: stacked gate weights for input and recurrent paths."""

    W_x: np.ndarray  # (4H, D)
    W_h: np.ndarray  # (4H, H)
    b: np.ndarray    # (4H,)

    def __post_init__(self) -> None:
        four_h, d = self.W_x.shape
        if four_h % 4 != 0:
            raise ShapeMismatch(f"W_x first dimension {four_h} is not a multiple of 4")
        h = four_h // 4
        if self.W_h.shape != (four_h, h) or self.b.shape != (four_h,):
            raise ShapeMismatch(
                f"inconsistent layer shapes: W_x {self.W_x.shape}, W_h {self.W_h.shape}, b {self.b.shape}"
            )

    @property
    def hidden_size(self) -> int:
        return self.W_x.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.W_x.shape[1]


@dataclass
class LstmModel:
    """Two stacked LSTM layers plus an affine+sigmoid readout to one value."""

    layer1: LstmLayerParams
    layer2: LstmLayerParams
    w_out: np.ndarray  # (H2,)
    b_out: np.ndarray  # (1,)
    dropout_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.layer2.input_size != self.layer1.hidden_size:
            raise ShapeMismatch("layer2 input size must equal layer1 hidden size")
        if self.w_out.shape != (self.layer2.hidden_size,) or self.b_out.shape != (1,):
            raise ShapeMismatch("readout shapes do not match layer2 hidden size")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def input_size(self) -> int:
        return self.layer1.input_size

    @property
    def hidden_sizes(self) -> tuple[int, int]:
        return (self.layer1.hidden_size, self.layer2.hidden_size)

    def parameters(self) -> dict[str, np.ndarray]:
        """Named parameter arrays in canonical (checkpoint) order."""
        return {
            "layer1.W_x": self.layer1.W_x,
            "layer1.W_h": self.layer1.W_h,
            "layer1.b": self.layer1.b,
            "layer2.W_x": self.layer2.W_x,
            "layer2.W_h": self.layer2.W_h,
            "layer2.b": self.layer2.b,
            "readout.w": self.w_out,
            "readout.b": self.b_out,
        }


def _init_layer(rng: np.random.Generator, input_size: int, hidden_size: int) -> LstmLayerParams:
    lim_x = 1.0 / math.sqrt(input_size)
    lim_h = 1.0 / math.sqrt(hidden_size)
    w_x = rng.uniform(-lim_x, lim_x, size=(4 * hidden_size, input_size))
    w_h = rng.uniform(-lim_h, lim_h, size=(4 * hidden_size, hidden_size))
    b = np.zeros(4 * hidden_size)
    b[hidden_size : 2 * hidden_size] = 1.0  # open forget gate at start
    return LstmLayerParams(W_x=w_x, W_h=w_h, b=b)


def init_model(
    input_size: int = 6,
    hidden_sizes: tuple[int, int] = (64, 64),
    dropout_rate: float = 0.2,
    seed: int = 0,
) -> LstmModel:
    """Fresh model with uniform +-1/sqrt(fan-in) weights and forget bias 1."""
    rng = np.random.default_rng([_INIT_TAG, seed])
    h1, h2 = hidden_sizes
    layer1 = _init_layer(rng, input_size, h1)
    layer2 = _init_layer(rng, h1, h2)
    lim = 1.0 / math.sqrt(h2)
    return LstmModel(
        layer1=layer1,
        layer2=layer2,
        w_out=rng.uniform(-lim, lim, size=(h2,)),
        b_out=np.zeros(1),
        dropout_rate=dropout_rate,
    )


@dataclass
class _LayerCache:
    inputs: np.ndarray  # (B, T, D) layer input as seen in the forward pass
    i: np.ndarray       # gate activations, each (B, T, H)
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray       # cell states (B, T, H)
    tanh_c: np.ndarray
    h: np.ndarray       # hidden states (B, T, H)


@dataclass
class ForwardCache:
    """Activations retained for backpropagation through time."""

    model: LstmModel
    inputs: np.ndarray
    layer1: _LayerCache
    dropout_mask: np.ndarray | None
    layer2: _LayerCache
    outputs: np.ndarray  # (B, T) post-sigmoid
    squeezed: bool       # True when the caller passed a single window


def _layer_forward(
    params: LstmLayerParams, x: np.ndarray, keep_cache: bool
) -> tuple[np.ndarray, _LayerCache | None]:
    batch, steps, _ = x.shape
    hidden = params.hidden_size
    # Input contribution for all timesteps in one matmul; the recurrent part
    # below has to stay sequential.
    gx = x.reshape(batch * steps, -1) @ params.W_x.T
    gx = gx.reshape(batch, steps, 4 * hidden) + params.b

    hs = np.empty((batch, steps, hidden), dtype=x.dtype)
    if keep_cache:
        gi = np.empty((batch, steps, hidden), dtype=x.dtype)
        gf = np.empty_like(gi)
        gg = np.empty_like(gi)
        go = np.empty_like(gi)
        cs = np.empty_like(gi)
        tcs = np.empty_like(gi)
    h_prev = np.zeros((batch, hidden), dtype=x.dtype)
    c_prev = np.zeros((batch, hidden), dtype=x.dtype)
    w_h_t = params.W_h.T
    for t in range(steps):
        a = gx[:, t] + h_prev @ w_h_t
        i_t = _sigmoid(a[:, :hidden])
        f_t = _sigmoid(a[:, hidden : 2 * hidden])
        g_t = np.tanh(a[:, 2 * hidden : 3 * hidden])
        o_t = _sigmoid(a[:, 3 * hidden :])
        c_t = f_t * c_prev + i_t * g_t
        tc_t = np.tanh(c_t)
        h_t = o_t * tc_t
        hs[:, t] = h_t
        if keep_cache:
            gi[:, t] = i_t
            gf[:, t] = f_t
            gg[:, t] = g_t
            go[:, t] = o_t
            cs[:, t] = c_t
            tcs[:, t] = tc_t
        h_prev = h_t
        c_prev = c_t
    if not keep_cache:
        return hs, None
    return hs, _LayerCache(inputs=x, i=gi, f=gf, g=gg, o=go, c=cs, tanh_c=tcs, h=hs)


def lstm_forward(
    model: LstmModel,
    inputs: np.ndarray,
    dropout_rng: np.random.Generator | None = None,
    want_cache: bool = True,
) -> tuple[np.ndarray, ForwardCache | None]:
    """Run the unrolled network over a batch of windows.

    ``inputs`` is (batch, timesteps, D) or a single (timesteps, D) window.
    Dropout between the layers is applied only when ``dropout_rng`` is given
    (training); inference passes no generator and is deterministic. Returns
    per-timestep outputs in (0, 1) and, unless ``want_cache`` is False, the
    activation cache for the backward pass.
    """
    dtype = model.w_out.dtype  # float64 for training; a float32 shadow model for fast inference
    x = np.asarray(inputs, dtype=dtype)
    squeezed = x.ndim == 2
    if squeezed:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != model.input_size:
        raise ShapeMismatch(f"expected (batch, timesteps, {model.input_size}) inputs, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteActivation("non-finite model inputs")

    keep = want_cache
    h1, cache1 = _layer_forward(model.layer1, x, keep_cache=keep)

    mask = None
    if dropout_rng is not None and model.dropout_rate > 0.0:
        keep_prob = 1.0 - model.dropout_rate
        mask = (dropout_rng.random(h1.shape) < keep_prob) / keep_prob
        h1_fed = h1 * mask
    else:
        h1_fed = h1

    h2, cache2 = _layer_forward(model.layer2, h1_fed, keep_cache=keep)
    z = h2 @ model.w_out + model.b_out[0]
    if not np.all(np.isfinite(z)):
        raise NonFiniteActivation("readout pre-activation is not finite")
    outputs = _sigmoid(z)

    if not keep:
        return (outputs[0] if squeezed else outputs), None
    cache = ForwardCache(
        model=model,
        inputs=x,
        layer1=cache1,
        dropout_mask=mask,
        layer2=cache2,
        outputs=outputs,
        squeezed=squeezed,
    )
    return (outputs[0] if squeezed else outputs), cache


def _as_batch(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    return arr[None] if arr.ndim == 1 else arr


def loss(outputs: np.ndarray, targets: np.ndarray, mode: LossMode) -> float:
    """Squared-difference loss, averaged over the batch.

    LAST_OUTPUT scores only each window's final timestep; FULL_SEQUENCE
    averages the squared differences over all timesteps.
    """
    out = _as_batch(outputs)
    tgt = _as_batch(targets)
    if out.shape != tgt.shape:
        raise ShapeMismatch(f"outputs {out.shape} vs targets {tgt.shape}")
    if mode is LossMode.LAST_OUTPUT:
        return float(np.mean((out[:, -1] - tgt[:, -1]) ** 2))
    return float(np.mean((out - tgt) ** 2))


def _loss_grad(outputs: np.ndarray, targets: np.ndarray, mode: LossMode) -> np.ndarray:
    batch, steps = outputs.shape
    d_out = np.zeros_like(outputs)
    if mode is LossMode.LAST_OUTPUT:
        d_out[:, -1] = 2.0 * (outputs[:, -1] - targets[:, -1]) / batch
    else:
        d_out[:] = 2.0 * (outputs - targets) / (batch * steps)
    return d_out


def _layer_backward(
    params: LstmLayerParams, cache: _LayerCache, d_h: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    batch, steps, hidden = d_h.shape
    d_gates = np.empty((batch, steps, 4 * hidden))
    dh_carry = np.zeros((batch, hidden))
    dc_carry = np.zeros((batch, hidden))
    for t in reversed(range(steps)):
        dh_t = d_h[:, t] + dh_carry
        i_t = cache.i[:, t]
        f_t = cache.f[:, t]
        g_t = cache.g[:, t]
        o_t = cache.o[:, t]
        tc_t = cache.tanh_c[:, t]
        c_prev = cache.c[:, t - 1] if t > 0 else 0.0

        d_o = dh_t * tc_t
        d_c = dc_carry + dh_t * o_t * (1.0 - tc_t * tc_t)
        d_i = d_c * g_t
        d_f = d_c * c_prev
        d_g = d_c * i_t

        d_gates[:, t, :hidden] = d_i * i_t * (1.0 - i_t)
        d_gates[:, t, hidden : 2 * hidden] = d_f * f_t * (1.0 - f_t)
        d_gates[:, t, 2 * hidden : 3 * hidden] = d_g * (1.0 - g_t * g_t)
        d_gates[:, t, 3 * hidden :] = d_o * o_t * (1.0 - o_t)

        dh_carry = d_gates[:, t] @ params.W_h
        dc_carry = d_c * f_t

    flat = d_gates.reshape(batch * steps, 4 * hidden)
    d_w_x = flat.T @ cache.inputs.reshape(batch * steps, -1)
    d_b = flat.sum(axis=0)
    if steps > 1:
        d_w_h = (
            d_gates[:, 1:].reshape(batch * (steps - 1), 4 * hidden).T
            @ cache.h[:, :-1].reshape(batch * (steps - 1), hidden)
        )
    else:
        d_w_h = np.zeros_like(params.W_h)
    d_x = (flat @ params.W_x).reshape(batch, steps, -1)
    return d_x, {"W_x": d_w_x, "W_h": d_w_h, "b": d_b}


def lstm_backward(
    model: LstmModel,
    cache: ForwardCache,
    targets: np.ndarray,
    mode: LossMode,
) -> dict[str, np.ndarray]:
    """Exact loss gradients for every parameter via BPTT over the window.

    Must be called with the cache of a forward pass of the same model object,
    before any parameter update; otherwise StaleCache is raised or the
    gradients would silently be wrong.
    """
    if cache.model is not model:
        raise StaleCache("cache was produced by a different model")
    tgt = _as_batch(targets)
    outputs = cache.outputs
    if tgt.shape != outputs.shape:
        raise ShapeMismatch(f"targets {tgt.shape} vs outputs {outputs.shape}")

    d_out = _loss_grad(outputs, tgt, mode)
    d_z = d_out * outputs * (1.0 - outputs)  # (B, T)

    h2 = cache.layer2.h
    batch, steps, hidden2 = h2.shape
    d_w_out = h2.reshape(batch * steps, hidden2).T @ d_z.reshape(batch * steps)
    d_b_out = np.array([d_z.sum()])
    d_h2 = d_z[:, :, None] * model.w_out

    d_h1_fed, grads2 = _layer_backward(model.layer2, cache.layer2, d_h2)
    d_h1 = d_h1_fed * cache.dropout_mask if cache.dropout_mask is not None else d_h1_fed
    _, grads1 = _layer_backward(model.layer1, cache.layer1, d_h1)

    return {
        "layer1.W_x": grads1["W_x"],
        "layer1.W_h": grads1["W_h"],
        "layer1.b": grads1["b"],
        "layer2.W_x": grads2["W_x"],
        "layer2.W_h": grads2["W_h"],
        "layer2.b": grads2["b"],
        "readout.w": d_w_out,
        "readout.b": d_b_out,
    }


@dataclass
class AdamState:
    """First/second moment accumulators mirroring every parameter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def init_adam(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        step=0,
    )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One in-place Adam update with bias correction."""
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


@dataclass(frozen=True)
class TrainConfig:
    timesteps: int = 50
    batch_size: int = 256
    learning_rate: float = 0.01
    training_steps: int = 120
    hidden_sizes: tuple[int, int] = (64, 64)
    dropout_rate: float = 0.2
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    loss_mode: LossMode = LossMode.LAST_OUTPUT
    clip_norm: float = 5.0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.training_steps < 1:
            raise ValueError("training_steps must be >= 1")
        if self.timesteps < 1 or self.batch_size < 1:
            raise ValueError("timesteps and batch_size must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "timesteps": self.timesteps,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "training_steps": self.training_steps,
            "hidden_sizes": list(self.hidden_sizes),
            "dropout_rate": self.dropout_rate,
            "seed": self.seed,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_epsilon": self.adam_epsilon,
            "loss_mode": self.loss_mode.value,
            "clip_norm": self.clip_norm,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        fields = dict(data)
        if "hidden_sizes" in fields:
            fields["hidden_sizes"] = tuple(fields["hidden_sizes"])
        if "loss_mode" in fields:
            fields["loss_mode"] = LossMode(fields["loss_mode"])
        return cls(**fields)


@dataclass
class TrainResult:
    model: LstmModel
    adam_state: AdamState
    loss_trace: list[float]
    steps: int


def _dropout_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([_DROPOUT_TAG, seed, step])


def train(
    model: LstmModel,
    inputs: np.ndarray,
    targets: np.ndarray,
    config: TrainConfig,
    adam_state: AdamState | None = None,
    start_step: int = 0,
    loss_trace: Sequence[float] = (),
) -> TrainResult:
    """Run ``training_steps`` Adam updates over shuffled batches.

    Batch order and dropout masks are keyed by (seed, epoch) and (seed, step)
    respectively, so a run is reproducible and a checkpoint resumed at
    ``start_step`` continues the exact same trajectory. The per-step batch
    loss (before the update) is recorded in the returned trace.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(inputs) != len(targets) or len(inputs) == 0:
        raise ShapeMismatch("inputs and targets must be equally many and non-empty")
    n = len(inputs)
    batches_per_epoch = max(1, math.ceil(n / config.batch_size))
    params = model.parameters()
    state = adam_state if adam_state is not None else init_adam(params)
    trace = list(loss_trace)

    for step in range(start_step, config.training_steps):
        epoch, b = divmod(step, batches_per_epoch)
        order = epoch_order(n, config.seed, epoch)
        idx = order[b * config.batch_size : (b + 1) * config.batch_size]
        x = inputs[idx]
        y = targets[idx]
        rng = _dropout_rng(config.seed, step) if model.dropout_rate > 0 else None
        try:
            outputs, cache = lstm_forward(model, x, dropout_rng=rng)
        except NonFiniteActivation as exc:
            raise DivergedTraining(step, str(exc)) from exc
        step_loss = loss(outputs, y, config.loss_mode)
        if not math.isfinite(step_loss):
            raise DivergedTraining(step, f"loss is {step_loss}")
        grads = lstm_backward(model, cache, y, config.loss_mode)
        clip_gradients(grads, config.clip_norm)
        adam_step(
            params,
            grads,
            state,
            lr=config.learning_rate,
            beta1=config.adam_beta1,
            beta2=config.adam_beta2,
            eps=config.adam_epsilon,
        )
        trace.append(step_loss)
        if step % 50 == 0 or step == config.training_steps - 1:
            log.debug("step %d/%d loss %.6f", step + 1, config.training_steps, step_loss)
    return TrainResult(model=model, adam_state=state, loss_trace=trace, steps=config.training_steps)


def cast_model(model: LstmModel, dtype) -> LstmModel:
    """Copy of the model with parameters cast to ``dtype`` (float32 inference)."""
    return LstmModel(
        layer1=LstmLayerParams(
            model.layer1.W_x.astype(dtype), model.layer1.W_h.astype(dtype),
            model.layer1.b.astype(dtype),
        ),
        layer2=LstmLayerParams(
            model.layer2.W_x.astype(dtype), model.layer2.W_h.astype(dtype),
            model.layer2.b.astype(dtype),
        ),
        w_out=model.w_out.astype(dtype),
        b_out=model.b_out.astype(dtype),
        dropout_rate=model.dropout_rate,
    )


def predict_slice(
    model: LstmModel,
    slice_inputs: np.ndarray,
    timesteps: int,
    batch_size: int = 1024,
    float32: bool = False,
) -> np.ndarray:
    """Per-sample predicted signal over a whole slice of length L >= timesteps.

    Position e >= timesteps-1 takes the last output of the window ending at
    e; positions 0..timesteps-2 take the intermediate sequence outputs of the
    first window, which is all the context those early samples have. Dropout
    is always off here. ``float32`` trades ulp-level output differences for
    roughly twice the speed; training precision is untouched.
    """
    x = np.asarray(slice_inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_size:
        raise ShapeMismatch(f"expected (length, {model.input_size}) slice inputs, got {x.shape}")
    length = len(x)
    if length < timesteps:
        raise SliceTooShort(f"slice length {length} < timesteps {timesteps}")
    if float32:
        model = cast_model(model, np.float32)
        x = x.astype(np.float32)

    windows = np.lib.stride_tricks.sliding_window_view(x, timesteps, axis=0).transpose(0, 2, 1)
    n_windows = len(windows)
    out = np.empty(length)
    for lo in range(0, n_windows, batch_size):
        chunk = np.ascontiguousarray(windows[lo : lo + batch_size])
        ys, _ = lstm_forward(model, chunk, want_cache=False)
        if lo == 0:
            out[: timesteps - 1] = ys[0, : timesteps - 1]
        out[timesteps - 1 + lo : timesteps - 1 + lo + len(chunk)] = ys[:, -1]
    return out


def save_checkpoint(
    path: Path | str,
    model: LstmModel,
    adam_state: AdamState | None = None,
    step: int = 0,
    seed: int | None = None,
    extra: dict | None = None,
) -> None:
    """Write magic + one-line JSON manifest + raw little-endian float64 arrays.

    ``extra`` rides along in the manifest for JSON-serializable sidecar data
    (e.g. the normalization statistics a trained model expects).
    """
    params = model.parameters()
    arrays: list[tuple[str, np.ndarray]] = list(params.items())
    if adam_state is not None:
        arrays += [(f"adam.m.{k}", adam_state.m[k]) for k in params]
        arrays += [(f"adam.v.{k}", adam_state.v[k]) for k in params]
    manifest = {
        "version": 1,
        "input_size": model.input_size,
        "hidden_sizes": list(model.hidden_sizes),
        "dropout_rate": model.dropout_rate,
        "seed": seed,
        "step": step,
        "adam_step": adam_state.step if adam_state is not None else None,
        "extra": extra,
        "arrays": [{"name": name, "shape": list(arr.shape)} for name, arr in arrays],
    }
    try:
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(json.dumps(manifest, sort_keys=True).encode("utf-8"))
            fh.write(b"\n")
            for _, arr in arrays:
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc


@dataclass
class CheckpointBundle:
    model: LstmModel
    adam_state: AdamState | None
    step: int
    seed: int | None
    extra: dict | None = None


def load_checkpoint(path: Path | str) -> CheckpointBundle:
    """Read a checkpoint back; bit-exact inverse of save_checkpoint."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise CorruptCheckpoint("bad magic bytes")
    newline = blob.find(b"\n", len(CHECKPOINT_MAGIC))
    if newline < 0:
        raise CorruptCheckpoint("manifest line is not terminated")
    try:
        manifest = json.loads(blob[len(CHECKPOINT_MAGIC) : newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"manifest is not valid JSON: {exc}") from exc

    offset = newline + 1
    arrays: dict[str, np.ndarray] = {}
    for entry in manifest.get("arrays", []):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(blob):
            raise CorruptCheckpoint(f"array {entry['name']} is truncated")
        arrays[entry["name"]] = (
            np.frombuffer(blob[offset : offset + nbytes], dtype="<f8").reshape(shape).copy()
        )
        offset += nbytes
    if offset != len(blob):
        raise CorruptCheckpoint(f"{len(blob) - offset} trailing bytes after arrays")

    h1, h2 = manifest["hidden_sizes"]
    expected = {
        "layer1.W_x": (4 * h1, manifest["input_size"]),
        "layer1.W_h": (4 * h1, h1),
        "layer1.b": (4 * h1,),
        "layer2.W_x": (4 * h2, h1),
        "layer2.W_h": (4 * h2, h2),
        "layer2.b": (4 * h2,),
        "readout.w": (h2,),
        "readout.b": (1,),
    }
    for name, shape in expected.items():
        if name not in arrays:
            raise CorruptCheckpoint(f"parameter {name} missing from checkpoint")
        if arrays[name].shape != shape:
            raise CorruptCheckpoint(
                f"parameter {name} has shape {arrays[name].shape}, manifest implies {shape}"
            )
    model = LstmModel(
        layer1=LstmLayerParams(arrays["layer1.W_x"], arrays["layer1.W_h"], arrays["layer1.b"]),
        layer2=LstmLayerParams(arrays["layer2.W_x"], arrays["layer2.W_h"], arrays["layer2.b"]),
        w_out=arrays["readout.w"],
        b_out=arrays["readout.b"],
        dropout_rate=manifest["dropout_rate"],
    )
    adam_state = None
    if manifest.get("adam_step") is not None:
        params = model.parameters()
        try:
            adam_state = AdamState(
                m={k: arrays[f"adam.m.{k}"] for k in params},
                v={k: arrays[f"adam.v.{k}"] for k in params},
                step=int(manifest["adam_step"]),
            )
        except KeyError as exc:
            raise CorruptCheckpoint(f"optimizer array missing: {exc}") from exc
    return CheckpointBundle(
        model=model,
        adam_state=adam_state,
        step=int(manifest["step"]),
        seed=manifest.get("seed"),
        extra=manifest.get("extra"),
    )
