"""A small residual fully-convolutional network with hand-written backprop.

Layout is channel-last: activations are ``(H, W, C)`` arrays.  Each conv
is stride 1 with edge-replicate padding, so every layer preserves the
spatial size.  Convolutions are evaluated as a sum of ``k * k`` matrix
products over shifted views of the flattened padded input; the shifted
rows that straddle two image rows are computed and then thrown away.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .resample import make_rng


@dataclass(frozen=True)
class NetworkConfig:
    hidden_layers: int = 8
    channels: int = 64
    kernel_size: int = 3
    in_channels: int = 3
    out_channels: int = 3

    def __post_init__(self):
        if self.hidden_layers < 1:
            raise ValueError("hidden_layers must be >= 1")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd and >= 1")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")

    def layer_shapes(self):
        """``(out_ch, in_ch, k, k)`` for every conv, input layer first."""
        k = self.kernel_size
        chans = [self.in_channels] + [self.channels] * self.hidden_layers + [self.out_channels]
        return [(cout, cin, k, k) for cin, cout in zip(chans[:-1], chans[1:])]


@dataclass
class NetworkParams:
    """Weights ``(out_ch, in_ch, k, k)`` and biases ``(out_ch,)`` per layer.

    There are ``hidden_layers + 1`` layers; the last projects back to the
    image channels and carries no activation.
    """

    config: NetworkConfig
    weights: list
    biases: list

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.config, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self):
        """All parameter arrays in checkpoint order (weights then bias, per layer)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams(self.config, [np.zeros_like(w) for w in self.weights],
                             [np.zeros_like(b) for b in self.biases])

    @property
    def dtype(self):
        return self.weights[0].dtype


def init_network(cfg: NetworkConfig, seed, dtype=np.float32) -> NetworkParams:
    """He-uniform hidden layers, zero biases and an all-zero output layer.

    With the output layer at zero the residual network starts as the identity.
    """
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    weights, biases = [], []
    shapes = cfg.layer_shapes()
    for i, shape in enumerate(shapes):
        cout, cin, k, _ = shape
        if i == len(shapes) - 1:
            w = np.zeros(shape)
        else:
            bound = np.sqrt(6.0 / (cin * k * k))
            w = rng.uniform(-bound, bound, size=shape)
        weights.append(w.astype(dtype))
        biases.append(np.zeros(cout, dtype=dtype))
    return NetworkParams(cfg, weights, biases)


def _pad_edge(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((p, p), (p, p), (0, 0)), mode="edge")


def _fold_edge(gp: np.ndarray, p: int, h: int, w: int) -> np.ndarray:
    """Adjoint of :func:`_pad_edge`: pile padded-border gradients onto the edges."""
    if p == 0:
        return gp
    rows = gp[p:p + h].copy()
    rows[0] += gp[:p].sum(axis=0)
    rows[-1] += gp[p + h:].sum(axis=0)
    out = rows[:, p:p + w].copy()
    out[:, 0] += rows[:, :p].sum(axis=1)
    out[:, -1] += rows[:, p + w:].sum(axis=1)
    return out


def _tap_major(weight: np.ndarray) -> np.ndarray:
    # (out, in, k, k) -> contiguous (k, k, in, out); strided operands would bypass BLAS
    return np.ascontiguousarray(weight.transpose(2, 3, 1, 0))


def _offsets(k: int, wp: int):
    return [(dy, dx, dy * wp + dx) for dy in range(k) for dx in range(k)]


class _Conv:
    """Geometry of one padded conv over an ``h x w`` image."""

    def __init__(self, h: int, w: int, k: int):
        self.h, self.w, self.k = h, w, k
        self.p = k // 2
        self.hp, self.wp = h + 2 * self.p, w + 2 * self.p
        # valid output rows of the flattened computation
        self.length = (h - 1) * self.wp + w
        self.offsets = _offsets(k, self.wp)

    def unflatten(self, flat: np.ndarray) -> np.ndarray:
        c = flat.shape[1]
        full = np.empty((self.h * self.wp, c), dtype=flat.dtype)
        full[:self.length] = flat
        full[self.length:] = 0
        return full.reshape(self.h, self.wp, c)[:, :self.w]

    def flatten_grad(self, g: np.ndarray) -> np.ndarray:
        c = g.shape[2]
        full = np.zeros((self.h, self.wp, c), dtype=g.dtype)
        full[:, :self.w] = g
        return full.reshape(-1, c)[:self.length]

    def forward(self, xflat: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
        taps = _tap_major(weight)
        acc = None
        for dy, dx, off in self.offsets:
            term = xflat[off:off + self.length] @ taps[dy, dx]
            if acc is None:
                acc = term
            else:
                acc += term
        acc += bias
        return self.unflatten(acc)


@dataclass
class ForwardCache:
    """Activations retained by :func:`forward` for :func:`backward`."""

    shape: tuple = None
    inputs: list = field(default_factory=list)   # flattened padded input of each layer
    masks: list = field(default_factory=list)    # ReLU gates of each hidden layer

    @property
    def ready(self) -> bool:
        return self.shape is not None


def forward(params: NetworkParams, x: np.ndarray, cache: ForwardCache | None = None) -> np.ndarray:
    """``x + net(x)``, unclamped. Pass a :class:`ForwardCache` to enable :func:`backward`."""
    cfg = params.config
    if x.ndim != 3 or x.shape[2] != cfg.in_channels:
        raise ValueError(f"network expects (H, W, {cfg.in_channels}) input, got shape {x.shape}")
    h, w = x.shape[:2]
    conv = _Conv(h, w, cfg.kernel_size)
    if cache is not None:
        cache.shape = (h, w)
        cache.inputs.clear()
        cache.masks.clear()

    act = x.astype(params.dtype, copy=False)
    last = len(params.weights) - 1
    for i, (wt, b) in enumerate(zip(params.weights, params.biases)):
        xflat = _pad_edge(act, conv.p).reshape(-1, act.shape[2])
        z = conv.forward(xflat, wt, b)
        if cache is not None:
            cache.inputs.append(xflat)
        if i < last:
            mask = z > 0
            act = z * mask
            if cache is not None:
                cache.masks.append(mask)
        else:
            act = z
    return x + act


def backward(params: NetworkParams, cache: ForwardCache, grad_out: np.ndarray) -> NetworkParams:
    """Exact parameter gradients given ``dL/dy`` for the output of the cached forward pass."""
    if cache is None or not cache.ready:
        raise RuntimeError("backward() needs the cache filled by a prior forward() call")
    h, w = cache.shape
    if grad_out.shape[:2] != (h, w) or grad_out.shape[2] != params.config.out_channels:
        raise ValueError(f"grad_out shape {grad_out.shape} does not match the cached forward pass")
    conv = _Conv(h, w, params.config.kernel_size)
    grads = params.zeros_like()

    # the skip connection contributes no parameter gradient
    g = grad_out.astype(params.dtype, copy=False)
    for i in range(len(params.weights) - 1, -1, -1):
        if i < len(params.weights) - 1:
            g = g * cache.masks[i]
        wt = params.weights[i]
        xflat = cache.inputs[i]
        gflat = conv.flatten_grad(g)
        grads.biases[i][:] = g.sum(axis=(0, 1))
        k = conv.k
        gw = np.empty((k, k) + wt.shape[:2], dtype=wt.dtype)
        for dy, dx, off in conv.offsets:
            gw[dy, dx] = gflat.T @ xflat[off:off + conv.length]
        grads.weights[i][...] = gw.transpose(2, 3, 0, 1)
        if i == 0:
            break
        taps = _tap_major(wt)
        gxp = np.zeros((conv.hp * conv.wp, wt.shape[1]), dtype=g.dtype)
        for dy, dx, off in conv.offsets:
            gxp[off:off + conv.length] += gflat @ taps[dy, dx].T
        g = _fold_edge(gxp.reshape(conv.hp, conv.wp, -1), conv.p, h, w)
    return grads


def l1_loss(pred: np.ndarray, target: np.ndarray):
    """Mean absolute error and its gradient ``sign(pred - target) / N``."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    n = diff.size
    loss = float(np.abs(diff, dtype=np.float64).sum() / n)
    grad = np.sign(diff) / np.asarray(n, dtype=diff.dtype)
    return loss, grad


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: NetworkParams, **kw) -> "AdamState":
        return cls([np.zeros_like(a) for a in params.arrays()], [np.zeros_like(a) for a in params.arrays()], **kw)

    def copy(self) -> "AdamState":
        return AdamState([a.copy() for a in self.m], [a.copy() for a in self.v],
                         self.step, self.beta1, self.beta2, self.eps)


class DivergenceError(FloatingPointError):
    """Non-finite gradients or losses during training."""


def adam_step(params: NetworkParams, grads: NetworkParams, state: AdamState, lr: float):
    """Bias-corrected Adam update, applied in place. Returns ``(params, state)``."""
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    garrs = grads.arrays()
    for g in garrs:
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params.arrays(), garrs, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return params, state


_MAGIC = b"ZSSRNET1"


def save_checkpoint(params: NetworkParams, path) -> None:
    """``ZSSRNET1``, five little-endian int64 config fields, then float64 parameters."""
    cfg = params.config
    with open(Path(path), "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<5q", cfg.hidden_layers, cfg.channels, cfg.kernel_size,
                             cfg.in_channels, cfg.out_channels))
        for a in params.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path, dtype=np.float32) -> NetworkParams:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise ValueError(f"{path}: not a network checkpoint")
    cfg = NetworkConfig(*struct.unpack("<5q", data[8:48]))
    values = np.frombuffer(data, dtype="<f8", offset=48)
    weights, biases, pos = [], [], 0
    for shape in cfg.layer_shapes():
        n = int(np.prod(shape))
        weights.append(values[pos:pos + n].reshape(shape).astype(dtype))
        pos += n
        biases.append(values[pos:pos + shape[0]].astype(dtype))
        pos += shape[0]
    if pos != values.size:
        raise ValueError(f"{path}: checkpoint size does not match its config")
    return NetworkParams(cfg, weights, biases)
