"""Feed-forward classifier head: 2-way softmax, cross-entropy, exact gradients.

The network is a stack of affine layers with ReLU between them and a
linear final layer feeding a stable softmax over exactly two outputs.
Default depth is zero hidden layers (softmax regression); a hidden layer
can be added through the architecture. All arithmetic is float64 and
every operation here is pure, so training runs are bit-reproducible.

Gradients are derived by hand: the output layer uses the fused
softmax/cross-entropy form (probs - onehot), hidden layers standard
backprop through ReLU. `backward` is checked against central finite
differences in the test suite.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Polarity
from .errors import FormatError, ValidationError
from .featurize import SparseVec

OUTPUT_DIM = 2  # negative=0, positive=1

PROB_CLAMP = 1e-12  # log-stability clamp on probabilities


@dataclass(frozen=True)
class ModelParams:
    """Per-layer (W, b) pairs; W is (out, in), b is (out,)."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValidationError("weights and biases must pair up, one per layer")
        for li, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValidationError(f"layer {li}: W {W.shape} and b {b.shape} disagree")
            if li > 0 and W.shape[1] != self.weights[li - 1].shape[0]:
                raise ValidationError(
                    f"layer {li}: input width {W.shape[1]} != previous output "
                    f"{self.weights[li - 1].shape[0]}"
                )
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValidationError(f"layer {li}: non-finite parameter")
        if self.weights[-1].shape[0] != OUTPUT_DIM:
            raise ValidationError(
                f"output layer must have {OUTPUT_DIM} units, got {self.weights[-1].shape[0]}"
            )

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return tuple(W.shape[0] for W in self.weights[:-1])

    @property
    def architecture(self) -> tuple[int, tuple[int, ...], int]:
        return (self.input_dim, self.hidden_dims, OUTPUT_DIM)

    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))


@dataclass(frozen=True)
class Gradients:
    """Same shape tree as ModelParams."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray  # (P(neg), P(pos)); sums to 1
    logits: np.ndarray


def init_params(
    input_dim: int, hidden_dims: tuple[int, ...] = (), seed: int = 0
) -> ModelParams:
    """Uniform(-s, s) weights with s = sqrt(6/(fan_in+fan_out)); zero biases."""
    if input_dim <= 0:
        raise ValidationError(f"input_dim must be positive, got {input_dim}")
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden_dims, OUTPUT_DIM]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        s = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelParams(tuple(weights), tuple(biases))


def _affine_input(W: np.ndarray, b: np.ndarray, x: SparseVec | np.ndarray) -> np.ndarray:
    """First-layer affine; exploits sparsity when x is a SparseVec."""
    if isinstance(x, SparseVec):
        if x.dim != W.shape[1]:
            raise ValidationError(f"input dim {x.dim} != model input dim {W.shape[1]}")
        if len(x.indices) == 0:
            return b.copy()
        return W[:, x.indices] @ x.values + b
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (W.shape[1],):
        raise ValidationError(f"input shape {x.shape} != model input dim {W.shape[1]}")
    return W @ x + b


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax: subtract the max logit before exponentiating."""
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / e.sum()


def _forward_full(
    params: ModelParams, x: SparseVec | np.ndarray
) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """Returns (logits, post-activation layer inputs, pre-activations)."""
    activations: list[np.ndarray] = []  # a[i] = input to layer i+1 (post-ReLU)
    pre: list[np.ndarray] = []
    z = _affine_input(params.weights[0], params.biases[0], x)
    pre.append(z)
    for W, b in zip(params.weights[1:], params.biases[1:]):
        a = np.maximum(z, 0.0)
        activations.append(a)
        z = W @ a + b
        pre.append(z)
    return z, activations, pre


def forward(params: ModelParams, x: SparseVec | np.ndarray) -> Prediction:
    logits, _, _ = _forward_full(params, x)
    return Prediction(softmax(logits), logits)


def bce_loss(pred: Prediction, label: Polarity) -> float:
    """Cross-entropy of the two-way softmax: -ln p[label], with p clamped."""
    p = float(pred.probs[label.index])
    return -math.log(min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP))


def predict_class(params: ModelParams, x: SparseVec | np.ndarray) -> int:
    """Argmax class; an exact tie goes to negative (class 0)."""
    pred = forward(params, x)
    return 1 if pred.probs[1] > pred.probs[0] else 0


def backward(
    params: ModelParams, x: SparseVec | np.ndarray, label: Polarity
) -> tuple[float, Gradients]:
    """Loss and exact analytic gradients of bce_loss(forward(x), label)."""
    logits, activations, pre = _forward_full(params, x)
    probs = softmax(logits)
    loss = bce_loss(Prediction(probs, logits), label)

    delta = probs.copy()
    delta[label.index] -= 1.0  # fused softmax/cross-entropy gradient

    n_layers = len(params.weights)
    grad_w: list[np.ndarray | None] = [None] * n_layers
    grad_b: list[np.ndarray | None] = [None] * n_layers
    for li in range(n_layers - 1, 0, -1):
        grad_w[li] = np.outer(delta, activations[li - 1])
        grad_b[li] = delta
        delta = (params.weights[li].T @ delta) * (pre[li - 1] > 0.0)

    if isinstance(x, SparseVec):
        gw0 = np.zeros_like(params.weights[0])
        if len(x.indices):
            gw0[:, x.indices] = np.outer(delta, x.values)
        grad_w[0] = gw0
    else:
        grad_w[0] = np.outer(delta, np.asarray(x, dtype=np.float64))
    grad_b[0] = delta
    return loss, Gradients(tuple(grad_w), tuple(grad_b))


# --- optimizers ---------------------------------------------------------------


@dataclass(frozen=True)
class SgdState:
    learning_rate: float

    def __post_init__(self):
        _check_lr(self.learning_rate)


@dataclass(frozen=True)
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: tuple[np.ndarray, ...] = ()  # first moments, (W..., b...) flattened order
    v: tuple[np.ndarray, ...] = ()
    step_count: int = 0

    def __post_init__(self):
        _check_lr(self.learning_rate)


OptimizerState = SgdState | AdamState


def _check_lr(lr: float) -> None:
    if not (math.isfinite(lr) and lr >= 0.0):
        raise ValidationError(f"learning rate {lr} must be finite and non-negative")


def make_optimizer(kind: str, learning_rate: float, params: ModelParams) -> OptimizerState:
    if kind == "sgd":
        return SgdState(learning_rate)
    if kind == "adam":
        zeros = tuple(np.zeros_like(a) for a in (*params.weights, *params.biases))
        return AdamState(learning_rate, m=zeros, v=zeros)
    raise ValidationError(f"unknown optimizer {kind!r}")


def _apply_update(
    params: ModelParams, state: OptimizerState, grads: list[np.ndarray]
) -> tuple[ModelParams, OptimizerState]:
    flat = [*params.weights, *params.biases]
    n_w = len(params.weights)
    if isinstance(state, SgdState):
        new = [p - state.learning_rate * g for p, g in zip(flat, grads)]
        new_state: OptimizerState = state
    else:
        t = state.step_count + 1
        m = tuple(
            state.beta1 * m_i + (1.0 - state.beta1) * g for m_i, g in zip(state.m, grads)
        )
        v = tuple(
            state.beta2 * v_i + (1.0 - state.beta2) * g * g
            for v_i, g in zip(state.v, grads)
        )
        c1 = 1.0 - state.beta1**t
        c2 = 1.0 - state.beta2**t
        new = [
            p - state.learning_rate * (m_i / c1) / (np.sqrt(v_i / c2) + state.eps)
            for p, m_i, v_i in zip(flat, m, v)
        ]
        new_state = AdamState(
            state.learning_rate, state.beta1, state.beta2, state.eps, m, v, t
        )
    return (
        ModelParams(tuple(new[:n_w]), tuple(new[n_w:])),
        new_state,
    )


def batch_step(
    params: ModelParams,
    opt_state: OptimizerState,
    batch: list[tuple[SparseVec | np.ndarray, Polarity]],
) -> tuple[ModelParams, OptimizerState, float]:
    """One optimizer step on the batch-mean gradient; returns the mean loss.

    Gradients are accumulated example by example in batch order so the
    reduction is deterministic.
    """
    if not batch:
        raise ValidationError("batch_step needs a non-empty batch")
    acc_w = [np.zeros_like(W) for W in params.weights]
    acc_b = [np.zeros_like(b) for b in params.biases]
    total_loss = 0.0
    for x, label in batch:
        loss, delta = _scatter_backward(params, x, label, acc_w, acc_b)
        total_loss += loss
    scale = 1.0 / len(batch)
    grads = [g * scale for g in (*acc_w, *acc_b)]
    new_params, new_state = _apply_update(params, opt_state, grads)
    return new_params, new_state, total_loss * scale


def _scatter_backward(params, x, label, acc_w, acc_b) -> tuple[float, np.ndarray]:
    """Accumulate one example's gradients into shared buffers.

    Identical math to `backward`, but the first-layer weight gradient is
    scattered onto the sparse support instead of materializing a full
    matrix per example.
    """
    logits, activations, pre = _forward_full(params, x)
    probs = softmax(logits)
    loss = bce_loss(Prediction(probs, logits), label)
    delta = probs.copy()
    delta[label.index] -= 1.0
    for li in range(len(params.weights) - 1, 0, -1):
        acc_w[li] += np.outer(delta, activations[li - 1])
        acc_b[li] += delta
        delta = (params.weights[li].T @ delta) * (pre[li - 1] > 0.0)
    if isinstance(x, SparseVec):
        if len(x.indices):
            acc_w[0][:, x.indices] += np.outer(delta, x.values)
    else:
        acc_w[0] += np.outer(delta, np.asarray(x, dtype=np.float64))
    acc_b[0] += delta
    return loss, delta


# --- checkpoints --------------------------------------------------------------
#
# On disk: magic "XFCK", u32 version, u32 header length, JSON header
# (architecture, encoder spec, seed, stage), little-endian f64 parameters
# in layer order (W then b per layer, row-major), sha256 of all preceding
# bytes.

CKPT_MAGIC = b"XFCK"
CKPT_VERSION = 1


def save_checkpoint(
    params: ModelParams,
    path: str | Path,
    encoder_spec: dict,
    seed: int,
    stage: str,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "architecture": {
            "input_dim": params.input_dim,
            "hidden_dims": list(params.hidden_dims),
            "output_dim": OUTPUT_DIM,
        },
        "encoder": encoder_spec,
        "seed": seed,
        "stage": stage,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += CKPT_MAGIC
    blob += struct.pack("<II", CKPT_VERSION, len(header_bytes))
    blob += header_bytes
    for W, b in zip(params.weights, params.biases):
        blob += W.astype("<f8").tobytes()
        blob += b.astype("<f8").tobytes()
    blob += hashlib.sha256(blob).digest()
    path.write_bytes(blob)


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict]:
    """Returns (params, header). Verifies the checksum and all shapes."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as err:
        raise ValidationError(f"cannot read checkpoint {path}: {err}") from None
    if len(data) < 12 or data[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack_from("<II", data, 4)
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    if len(data) < 12 + header_len + 32:
        raise FormatError(f"{path}: truncated checkpoint")
    digest = data[-32:]
    if hashlib.sha256(data[:-32]).digest() != digest:
        raise FormatError(f"{path}: checksum mismatch")
    try:
        header = json.loads(data[12 : 12 + header_len])
        arch = header["architecture"]
        dims = [int(arch["input_dim"]), *map(int, arch["hidden_dims"]), int(arch["output_dim"])]
    except (KeyError, ValueError, json.JSONDecodeError) as err:
        raise FormatError(f"{path}: bad checkpoint header ({err})") from None
    off = 12 + header_len
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        W = np.frombuffer(data, dtype="<f8", count=fan_out * fan_in, offset=off)
        off += 8 * fan_out * fan_in
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=off)
        off += 8 * fan_out
        weights.append(W.reshape(fan_out, fan_in).copy())
        biases.append(b.copy())
    if off != len(data) - 32:
        raise FormatError(f"{path}: parameter block size disagrees with architecture")
    return ModelParams(tuple(weights), tuple(biases)), header
