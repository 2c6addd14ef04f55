"""Three-layer pixel classifier: forward, loss, analytic gradients, SGD.

Layer stack: two hidden blocks of linear -> batch norm -> ReLU -> inverted
dropout, then a bare linear output layer. Batch norm uses biased batch
variance with eps 1e-5 and updates running statistics with momentum 0.1
(the running variance follows the same biased convention). Parameters are
held in float64 for gradient fidelity; the checkpoint format serializes
float32.

Checkpoint file ``.hdgm`` (little-endian): magic "HDGM", version u32 = 1,
then D, H1, H2, K as u32, dropout probability f32, a class-name table
(u32 count, then per name u32 byte length + UTF-8 bytes), then the tensors
W1, b1, gamma1, beta1, mu1, var1, W2, b2, gamma2, beta2, mu2, var2, W3, b3
as float32 row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError, IoError, SchemaError, ShapeError
from .rng import Rng, derive_seed

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

CHECKPOINT_MAGIC = b"HDGM"
CHECKPOINT_VERSION = 1


class Mode(Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass(frozen=True)
class MlpArch:
    input_dim: int
    hidden_dims: tuple[int, int] = (256, 128)
    num_classes: int = 5
    dropout_p: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        if len(self.hidden_dims) != 2:
            raise ConfigError("exactly two hidden widths are required")
        if min(self.input_dim, *self.hidden_dims, self.num_classes) < 1:
            raise ConfigError(f"all layer widths must be >= 1, got {self}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")


#: Tensor field order is the checkpoint serialization order.
_TENSOR_FIELDS = (
    "w1", "b1", "gamma1", "beta1", "mu1", "var1",
    "w2", "b2", "gamma2", "beta2", "mu2", "var2",
    "w3", "b3",
)


@dataclass
class MlpParams:
    w1: np.ndarray
    b1: np.ndarray
    gamma1: np.ndarray
    beta1: np.ndarray
    mu1: np.ndarray
    var1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    gamma2: np.ndarray
    beta2: np.ndarray
    mu2: np.ndarray
    var2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def copy(self) -> "MlpParams":
        return MlpParams(**{f.name: getattr(self, f.name).copy() for f in fields(self)})

    def arch_shape(self) -> tuple[int, int, int, int]:
        return (
            self.w1.shape[1],
            self.w1.shape[0],
            self.w2.shape[0],
            self.w3.shape[0],
        )


@dataclass
class MlpGrads:
    w1: np.ndarray
    b1: np.ndarray
    gamma1: np.ndarray
    beta1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    gamma2: np.ndarray
    beta2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    #: learnable tensors touched by sgd_step, in a fixed order
    FIELDS = ("w1", "b1", "gamma1", "beta1", "w2", "b2", "gamma2", "beta2", "w3", "b3")


@dataclass
class _LayerCache:
    inputs: np.ndarray           # batch entering the linear layer
    xhat: np.ndarray             # normalized pre-activation
    inv_std: np.ndarray          # 1/sqrt(batch var + eps)
    bn_out: np.ndarray           # gamma*xhat + beta (pre-ReLU)
    dropout_mask: np.ndarray | None  # includes 1/(1-p) scaling, or None


@dataclass
class ForwardCache:
    layer1: _LayerCache
    layer2: _LayerCache
    hidden2: np.ndarray          # input to the output layer
    batch_size: int


def init_params(arch: MlpArch, seed: int) -> MlpParams:
    """He-style uniform init: W ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)).

    One derived stream fills W1, W2, W3 in order (row-major); biases and
    batch-norm shifts start at zero, scales and running variances at one.
    """
    stream = Rng(derive_seed(seed, "init"))
    d, (h1, h2), k = arch.input_dim, arch.hidden_dims, arch.num_classes

    def draw(out_dim: int, in_dim: int) -> np.ndarray:
        bound = np.sqrt(6.0 / in_dim)
        flat = stream.random(out_dim * in_dim) * 2.0 * bound - bound
        return flat.reshape(out_dim, in_dim)

    return MlpParams(
        w1=draw(h1, d), b1=np.zeros(h1),
        gamma1=np.ones(h1), beta1=np.zeros(h1),
        mu1=np.zeros(h1), var1=np.ones(h1),
        w2=draw(h2, h1), b2=np.zeros(h2),
        gamma2=np.ones(h2), beta2=np.zeros(h2),
        mu2=np.zeros(h2), var2=np.ones(h2),
        w3=draw(k, h2), b3=np.zeros(k),
    )


def _hidden_layer(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    mu: np.ndarray,
    var: np.ndarray,
    mode: Mode,
    dropout_mask: np.ndarray | None,
):
    z = x @ w.T + b
    if mode is Mode.TRAIN:
        batch_mean = z.mean(axis=0)
        batch_var = z.var(axis=0)  # biased
        inv_std = 1.0 / np.sqrt(batch_var + BN_EPS)
        xhat = (z - batch_mean) * inv_std
        mu *= 1.0 - BN_MOMENTUM
        mu += BN_MOMENTUM * batch_mean
        var *= 1.0 - BN_MOMENTUM
        var += BN_MOMENTUM * batch_var
    else:
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (z - mu) * inv_std
    bn_out = gamma * xhat + beta
    hidden = np.maximum(bn_out, 0.0)
    if dropout_mask is not None:
        hidden = hidden * dropout_mask
    cache = _LayerCache(
        inputs=x, xhat=xhat, inv_std=inv_std, bn_out=bn_out, dropout_mask=dropout_mask
    )
    return hidden, cache


def forward(
    params: MlpParams,
    x: np.ndarray,
    mode: Mode = Mode.EVAL,
    dropout_seed: int | None = None,
    dropout_p: float = 0.0,
):
    """Run the classifier; returns (logits, cache) with cache None in eval.

    Train mode needs at least two rows for batch statistics and mutates the
    running means/variances in place. Dropout draws come from one stream
    seeded by dropout_seed, layer 1 first; eval mode ignores dropout.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"input must be [B, D], got shape {x.shape}")
    d, h1, h2, k = params.arch_shape()
    if x.shape[1] != d:
        raise ShapeError(f"input has {x.shape[1]} features, model expects {d}")
    batch = x.shape[0]
    if batch < 1:
        raise ShapeError("empty batch")
    if mode is Mode.TRAIN and batch < 2:
        raise ConfigError("train-mode forward needs a batch of at least 2 rows")

    mask1 = mask2 = None
    if mode is Mode.TRAIN and dropout_p > 0.0:
        if dropout_seed is None:
            raise ConfigError("train-mode forward with dropout needs dropout_seed")
        # one draw covers both layers: layer 1's units come first
        keep = Rng(dropout_seed).random(batch * (h1 + h2)) >= dropout_p
        scale = 1.0 / (1.0 - dropout_p)
        mask1 = keep[: batch * h1].reshape(batch, h1) * scale
        mask2 = keep[batch * h1 :].reshape(batch, h2) * scale

    hidden1, cache1 = _hidden_layer(
        x, params.w1, params.b1, params.gamma1, params.beta1,
        params.mu1, params.var1, mode, mask1,
    )
    hidden2, cache2 = _hidden_layer(
        hidden1, params.w2, params.b2, params.gamma2, params.beta2,
        params.mu2, params.var2, mode, mask2,
    )
    logits = hidden2 @ params.w3.T + params.b3
    if mode is Mode.EVAL:
        return logits, None
    return logits, ForwardCache(cache1, cache2, hidden2, batch)


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy and its logit gradient.

    Computed with row-max subtraction; dlogits = (softmax - onehot) / B.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(
            f"need logits [B, K] and labels [B], got {logits.shape} and {labels.shape}"
        )
    k = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DataError(f"labels must lie in [0, {k}), got range "
                        f"[{int(labels.min())}, {int(labels.max())}]")
    batch = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(total)
    loss = -log_probs[np.arange(batch), labels].mean()
    dlogits = exp / total
    dlogits[np.arange(batch), labels] -= 1.0
    dlogits /= batch
    return float(loss), dlogits


def _hidden_layer_backward(d_hidden, cache: _LayerCache, w, gamma, batch):
    if cache.dropout_mask is not None:
        d_hidden = d_hidden * cache.dropout_mask
    d_bn = d_hidden * (cache.bn_out > 0.0)
    d_gamma = (d_bn * cache.xhat).sum(axis=0)
    d_beta = d_bn.sum(axis=0)
    d_xhat = d_bn * gamma
    # batch-norm backward including the batch-statistic terms
    dz = (cache.inv_std / batch) * (
        batch * d_xhat
        - d_xhat.sum(axis=0)
        - cache.xhat * (d_xhat * cache.xhat).sum(axis=0)
    )
    d_w = dz.T @ cache.inputs
    d_b = dz.sum(axis=0)
    d_inputs = dz @ w
    return d_inputs, d_w, d_b, d_gamma, d_beta


def backward(params: MlpParams, cache: ForwardCache, dlogits: np.ndarray) -> MlpGrads:
    """Exact gradients for every learnable tensor; running stats get none."""
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.shape != (cache.batch_size, params.w3.shape[0]):
        raise ShapeError(
            f"dlogits shape {dlogits.shape} does not match cached batch "
            f"({cache.batch_size}, {params.w3.shape[0]})"
        )
    d_w3 = dlogits.T @ cache.hidden2
    d_b3 = dlogits.sum(axis=0)
    d_hidden2 = dlogits @ params.w3
    d_hidden1, d_w2, d_b2, d_gamma2, d_beta2 = _hidden_layer_backward(
        d_hidden2, cache.layer2, params.w2, params.gamma2, cache.batch_size
    )
    _, d_w1, d_b1, d_gamma1, d_beta1 = _hidden_layer_backward(
        d_hidden1, cache.layer1, params.w1, params.gamma1, cache.batch_size
    )
    return MlpGrads(
        w1=d_w1, b1=d_b1, gamma1=d_gamma1, beta1=d_beta1,
        w2=d_w2, b2=d_b2, gamma2=d_gamma2, beta2=d_beta2,
        w3=d_w3, b3=d_b3,
    )


def sgd_step(params: MlpParams, grads: MlpGrads, lr: float) -> MlpParams:
    """Plain SGD on every learnable tensor; running stats pass through."""
    updated = params.copy()
    for name in MlpGrads.FIELDS:
        tensor = getattr(updated, name)
        tensor -= lr * getattr(grads, name)
    return updated


def _loss_on_batch(params: MlpParams, x: np.ndarray, labels: np.ndarray) -> float:
    logits, _ = forward(params, x, Mode.TRAIN)
    loss, _ = cross_entropy(logits, labels)
    return loss


def grad_check(
    arch: MlpArch,
    seed: int,
    batch_size: int = 8,
    fd_eps: float = 1e-3,
    inject_fault: float = 0.0,
) -> float:
    """Max relative error of analytic vs central-difference gradients.

    Dropout is forced off. inject_fault perturbs the analytic W1 gradient
    and exists so tests can prove the harness catches broken gradients.
    """
    check_arch = MlpArch(arch.input_dim, arch.hidden_dims, arch.num_classes, 0.0)
    params = init_params(check_arch, seed)
    stream = Rng(derive_seed(seed, "grad-check"))
    x = stream.normal(batch_size * check_arch.input_dim).reshape(batch_size, -1)
    labels = stream.integers(check_arch.num_classes, batch_size)

    logits, cache = forward(params, x, Mode.TRAIN)
    _, dlogits = cross_entropy(logits, labels)
    grads = backward(params, cache, dlogits)
    if inject_fault:
        grads.w1 = grads.w1 + inject_fault

    worst = 0.0
    for name in MlpGrads.FIELDS:
        tensor = getattr(params, name)
        analytic = getattr(grads, name)
        flat = tensor.reshape(-1)
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + fd_eps
            hi = _loss_on_batch(params, x, labels)
            flat[i] = original - fd_eps
            lo = _loss_on_batch(params, x, labels)
            flat[i] = original
            numeric[i] = (hi - lo) / (2.0 * fd_eps)
        numeric = numeric.reshape(tensor.shape)
        rel = np.abs(analytic - numeric) / np.maximum(
            np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8
        )
        worst = max(worst, float(rel.max()))
    return worst


@dataclass
class MlpCheckpoint:
    arch: MlpArch
    params: MlpParams
    class_names: tuple[str, ...]


def save_checkpoint(checkpoint: MlpCheckpoint, path) -> None:
    arch, params = checkpoint.arch, checkpoint.params
    chunks = [
        CHECKPOINT_MAGIC,
        struct.pack(
            "<IIIIIf",
            CHECKPOINT_VERSION,
            arch.input_dim,
            arch.hidden_dims[0],
            arch.hidden_dims[1],
            arch.num_classes,
            arch.dropout_p,
        ),
        struct.pack("<I", len(checkpoint.class_names)),
    ]
    for name in checkpoint.class_names:
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)) + encoded)
    for field_name in _TENSOR_FIELDS:
        tensor = getattr(params, field_name)
        chunks.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    try:
        Path(path).write_bytes(b"".join(chunks))
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def _tensor_shapes(d: int, h1: int, h2: int, k: int) -> list[tuple[int, ...]]:
    return [
        (h1, d), (h1,), (h1,), (h1,), (h1,), (h1,),
        (h2, h1), (h2,), (h2,), (h2,), (h2,), (h2,),
        (k, h2), (k,),
    ]


def load_checkpoint(path) -> MlpCheckpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic {raw[:4]!r}")
    try:
        version, d, h1, h2, k, dropout_p = struct.unpack_from("<IIIIIf", raw, 4)
    except struct.error as exc:
        raise FormatError(f"{path}: truncated checkpoint header") from exc
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    offset = 4 + struct.calcsize("<IIIIIf")
    try:
        (count,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        names = []
        for _ in range(count):
            (length,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            names.append(raw[offset : offset + length].decode("utf-8"))
            offset += length
    except (struct.error, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: malformed class-name table") from exc
    try:
        arch = MlpArch(d, (h1, h2), k, round(dropout_p, 6))
    except ConfigError as exc:
        raise SchemaError(f"{path}: inconsistent architecture: {exc}") from exc
    tensors = []
    for shape in _tensor_shapes(d, h1, h2, k):
        size = int(np.prod(shape))
        end = offset + size * 4
        if end > len(raw):
            raise FormatError(f"{path}: truncated tensor payload")
        tensors.append(
            np.frombuffer(raw[offset:end], dtype="<f4").astype(np.float64).reshape(shape)
        )
        offset = end
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes")
    params = MlpParams(*tensors)
    return MlpCheckpoint(arch=arch, params=params, class_names=tuple(names))
