"""Minimal differentiable-layer toolkit backing the strain classifier.

Everything here operates on float64 numpy arrays with explicit batched
shapes (N, C, H, W).  Forward/backward pairs are hand-derived; the test
suite checks each against a naive-loop oracle and central finite
differences.  No autograd graph: the network is a fixed chain and the
callers wire gradients by hand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible with the layer geometry."""


class TrainingError(RuntimeError):
    """Non-finite values encountered while training."""


@dataclass
class ConvLayerParams:
    """Learnable parameters of a (transpose) convolution layer.

    ``weights`` has shape (out_ch, in_ch, kh, kw) in both roles; the
    transpose role scatters instead of gathering.
    """

    weights: np.ndarray
    bias: np.ndarray
    stride: tuple[int, int] = (1, 1)
    zero_pad: tuple[int, int] = (0, 0)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 4:
            raise ShapeError(f"weights must be rank 4, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match out_ch "
                f"{self.weights.shape[0]}"
            )
        if min(self.weights.shape[2:]) < 1 or min(self.stride) < 1:
            raise ShapeError("kernel dims and strides must be >= 1")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise TrainingError("non-finite layer parameters")

    @property
    def out_ch(self) -> int:
        return self.weights.shape[0]

    @property
    def in_ch(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel(self) -> tuple[int, int]:
        return self.weights.shape[2], self.weights.shape[3]


@dataclass
class GradientBundle:
    """Gradients of one layer application, shape-congruent with its operands."""

    d_weights: np.ndarray
    d_bias: np.ndarray
    d_input: np.ndarray


def _as_batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected a rank-3 or rank-4 tensor, got shape {x.shape}")


def conv_output_shape(
    in_shape: tuple[int, int], kernel: tuple[int, int],
    stride: tuple[int, int], zero_pad: tuple[int, int],
) -> tuple[int, int]:
    h = (in_shape[0] + 2 * zero_pad[0] - kernel[0]) // stride[0] + 1
    w = (in_shape[1] + 2 * zero_pad[1] - kernel[1]) // stride[1] + 1
    return h, w


def _im2col(x: np.ndarray, kernel, stride, zero_pad) -> tuple[np.ndarray, tuple[int, int]]:
    """Unfold padded input into (C*kh*kw, N*Ho*Wo) patch columns."""
    n, c, h, w = x.shape
    kh, kw = kernel
    sh, sw = stride
    ph, pw = zero_pad
    ho, wo = conv_output_shape((h, w), kernel, stride, zero_pad)
    if ho < 1 or wo < 1:
        raise ShapeError(
            f"input {x.shape} too small for kernel {kernel} "
            f"stride {stride} pad {zero_pad}"
        )
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, :, i : i + sh * ho : sh,
                               j : j + sw * wo : sw].transpose(1, 0, 2, 3)
    return cols.reshape(c * kh * kw, n * ho * wo), (ho, wo)


def _col2im(cols: np.ndarray, n: int, in_shape, kernel, stride, zero_pad) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch columns back onto the input."""
    c, h, w = in_shape
    kh, kw = kernel
    sh, sw = stride
    ph, pw = zero_pad
    ho, wo = conv_output_shape((h, w), kernel, stride, zero_pad)
    cols = cols.reshape(c, kh, kw, n, ho, wo)
    xp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += \
                cols[:, i, j].transpose(1, 0, 2, 3)
    return xp[:, :, ph : ph + h, pw : pw + w]


def conv2d_forward(x: np.ndarray, layer: ConvLayerParams,
                   return_cols: bool = False):
    """Cross-correlation plus bias.  Accepts (C,H,W) or (N,C,H,W).

    With ``return_cols`` the im2col patch matrix is also returned so the
    backward pass can reuse it.
    """
    xb, squeeze = _as_batched(x)
    if xb.shape[1] != layer.in_ch:
        raise ShapeError(
            f"input channels {xb.shape[1]} != layer in_ch {layer.in_ch} "
            f"(input {x.shape}, weights {layer.weights.shape})"
        )
    n = xb.shape[0]
    cols, (ho, wo) = _im2col(xb, layer.kernel, layer.stride, layer.zero_pad)
    wmat = layer.weights.reshape(layer.out_ch, -1)
    out = np.ascontiguousarray(
        (wmat @ cols).reshape(layer.out_ch, n, ho, wo).swapaxes(0, 1))
    out += layer.bias[None, :, None, None]
    out = out[0] if squeeze else out
    if return_cols:
        return out, cols
    return out


def conv2d_backward(
    x: np.ndarray, layer: ConvLayerParams, upstream: np.ndarray,
    cols: np.ndarray | None = None,
) -> GradientBundle:
    """Exact gradients of conv2d_forward w.r.t. weights, bias and input."""
    xb, squeeze = _as_batched(x)
    ub, _ = _as_batched(upstream)
    n = xb.shape[0]
    ho, wo = conv_output_shape(xb.shape[2:], layer.kernel, layer.stride, layer.zero_pad)
    if ub.shape != (n, layer.out_ch, ho, wo):
        raise ShapeError(
            f"upstream shape {upstream.shape} != forward output "
            f"{(n, layer.out_ch, ho, wo)}"
        )
    if cols is None:
        cols, _ = _im2col(xb, layer.kernel, layer.stride, layer.zero_pad)
    u_mat = np.ascontiguousarray(ub.swapaxes(0, 1)).reshape(
        layer.out_ch, n * ho * wo)
    d_w = (u_mat @ cols.T).reshape(layer.weights.shape)
    d_b = ub.sum(axis=(0, 2, 3))
    wmat = layer.weights.reshape(layer.out_ch, -1)
    d_x = _col2im(wmat.T @ u_mat, n, xb.shape[1:], layer.kernel,
                  layer.stride, layer.zero_pad)
    return GradientBundle(d_w, d_b, d_x[0] if squeeze else d_x)


def convtranspose2d_forward(x: np.ndarray, layer: ConvLayerParams) -> np.ndarray:
    """Scatter-accumulate transpose of conv2d.

    Output spatial size is (H-1)*sh + kh by (W-1)*sw + kw (zero_pad must
    be (0, 0), which is all the model uses).
    """
    if layer.zero_pad != (0, 0):
        raise ShapeError("transpose convolution supports zero_pad=(0, 0) only")
    xb, squeeze = _as_batched(x)
    if xb.shape[1] != layer.in_ch:
        raise ShapeError(
            f"input channels {xb.shape[1]} != layer in_ch {layer.in_ch}"
        )
    n, _, h, w = xb.shape
    kh, kw = layer.kernel
    sh, sw = layer.stride
    ho, wo = (h - 1) * sh + kh, (w - 1) * sw + kw
    out = np.zeros((n, layer.out_ch, ho, wo), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + sh * h : sh, j : j + sw * w : sw] += np.einsum(
                "nchw,oc->nohw", xb, layer.weights[:, :, i, j], optimize=True
            )
    out += layer.bias[None, :, None, None]
    return out[0] if squeeze else out


def convtranspose2d_backward(
    x: np.ndarray, layer: ConvLayerParams, upstream: np.ndarray
) -> GradientBundle:
    xb, squeeze = _as_batched(x)
    ub, _ = _as_batched(upstream)
    n, _, h, w = xb.shape
    kh, kw = layer.kernel
    sh, sw = layer.stride
    ho, wo = (h - 1) * sh + kh, (w - 1) * sw + kw
    if ub.shape != (n, layer.out_ch, ho, wo):
        raise ShapeError(
            f"upstream shape {upstream.shape} != forward output "
            f"{(n, layer.out_ch, ho, wo)}"
        )
    d_w = np.empty_like(layer.weights)
    d_x = np.zeros_like(xb)
    for i in range(kh):
        for j in range(kw):
            u_slice = ub[:, :, i : i + sh * h : sh, j : j + sw * w : sw]
            d_w[:, :, i, j] = np.einsum("nohw,nchw->oc", u_slice, xb, optimize=True)
            d_x += np.einsum("nohw,oc->nchw", u_slice, layer.weights[:, :, i, j],
                             optimize=True)
    d_b = ub.sum(axis=(0, 2, 3))
    return GradientBundle(d_w, d_b, d_x[0] if squeeze else d_x)


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    # subgradient 0 at exactly 0
    return np.where(np.asarray(x) > 0.0, upstream, 0.0)


def _softplus(z: np.ndarray) -> np.ndarray:
    # max(z, 0) + log1p(exp(-|z|)): stable for large |z|
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def weighted_bce_logits(
    logits: np.ndarray, targets: np.ndarray, pos_weight: float = 1.0
) -> tuple[float, np.ndarray]:
    """Mean weighted binary cross entropy on logits, with its gradient.

    Per element: -[w*y*log(sigmoid(z)) + (1-y)*log(1-sigmoid(z))], the
    positive term scaled by ``pos_weight``; the mean is over all elements.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if z.shape != y.shape:
        raise ShapeError(f"logits shape {z.shape} != targets shape {y.shape}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("targets must be binary (0 or 1)")
    if pos_weight <= 0:
        raise ValueError("pos_weight must be positive")
    w = float(pos_weight)
    # w*y*softplus(-z) + (1-y)*softplus(z)
    per_elem = w * y * _softplus(-z) + (1.0 - y) * _softplus(z)
    loss = float(per_elem.mean())
    sig = 1.0 / (1.0 + np.exp(-z))
    grad = (sig * (w * y + 1.0 - y) - w * y) / z.size
    return loss, grad


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter array."""

    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros_like(cls, param: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(param, dtype=np.float64),
                   np.zeros_like(param, dtype=np.float64))


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    t: int,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    name: str = "param",
) -> np.ndarray:
    """One bias-corrected Adam update; mutates ``state``, returns new params."""
    if t < 1:
        raise ValueError("Adam timestep t must be >= 1")
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise TrainingError(f"non-finite gradient for {name}")
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** t)
    v_hat = state.v / (1.0 - beta2 ** t)
    out = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    if not np.all(np.isfinite(out)):
        raise TrainingError(f"non-finite parameters after Adam step for {name}")
    return out


def sgd_step(param: np.ndarray, grad: np.ndarray, lr: float,
             name: str = "param") -> np.ndarray:
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise TrainingError(f"non-finite gradient for {name}")
    return param - lr * grad


def grad_check(fn, arrays: dict[str, np.ndarray], h: float = 1e-5):
    """Central-difference check of a scalar function of named arrays.

    ``fn(arrays) -> (loss, grads)`` where grads maps each name to an
    analytic gradient.  Returns (max relative error, worst (name, index)).
    """
    _, grads = fn(arrays)
    worst = (0.0, None)
    for name, arr in arrays.items():
        g = np.asarray(grads[name], dtype=np.float64)
        flat = arr.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            lp, _ = fn(arrays)
            flat[idx] = orig - h
            lm, _ = fn(arrays)
            flat[idx] = orig
            num = (lp - lm) / (2.0 * h)
            ana = g.reshape(-1)[idx]
            rel = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            if rel > worst[0]:
                worst = (rel, (name, idx))
    return worst
