"""Dense float32 tensors and the explicit forward/backward math for a small
convolutional stack: convolution, transposed convolution, linear layers,
relu/tanh, softmax cross-entropy, and Adam parameter updates.

Everything here is a pure function over value types; nothing mutates its
arguments. All arithmetic is 32-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

DTYPE = np.float32


class Tensor:
    """N-dimensional array of float32 stored flat in row-major order."""

    __slots__ = ("shape", "data")

    def __init__(self, shape, data):
        shape = tuple(int(e) for e in shape)
        if any(e < 1 for e in shape):
            raise DimensionError(f"tensor extents must be >= 1, got {shape}")
        data = np.ascontiguousarray(data, dtype=DTYPE).ravel()
        expected = 1
        for e in shape:
            expected *= e
        if data.size != expected:
            raise DimensionError(
                f"shape {shape} needs {expected} values, data has {data.size}"
            )
        self.shape = shape
        self.data = data

    @classmethod
    def from_array(cls, array) -> "Tensor":
        array = np.asarray(array, dtype=DTYPE)
        return cls(array.shape, array.ravel())

    @classmethod
    def zeros(cls, shape) -> "Tensor":
        shape = tuple(int(e) for e in shape)
        n = 1
        for e in shape:
            n *= e
        return cls(shape, np.zeros(n, dtype=DTYPE))

    def view(self) -> np.ndarray:
        """Ndarray view of the flat storage, in this tensor's shape."""
        return self.data.reshape(self.shape)

    def copy(self) -> "Tensor":
        return Tensor(self.shape, self.data.copy())

    def equals(self, other: "Tensor") -> bool:
        """Bitwise equality of shape and contents."""
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


@dataclass
class AdamState:
    """Per-parameter Adam accumulators.

    m and v always share the parameter's shape; t counts applied steps and
    grows by exactly one per update.
    """

    m: Tensor
    v: Tensor
    t: int = 0
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-7
    lr: float = 0.005

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError(f"betas must lie in (0,1), got {self.beta1}, {self.beta2}")
        if self.m.shape != self.v.shape:
            raise DimensionError(
                f"moment shapes disagree: {self.m.shape} vs {self.v.shape}"
            )

    @classmethod
    def for_param(cls, param: Tensor, lr: float, beta1: float = 0.5,
                  beta2: float = 0.999, epsilon: float = 1e-7) -> "AdamState":
        return cls(m=Tensor.zeros(param.shape), v=Tensor.zeros(param.shape),
                   t=0, beta1=beta1, beta2=beta2, epsilon=epsilon, lr=lr)


def adam_step(param: Tensor, grad: Tensor, state: AdamState):
    """One Adam update. Returns (new_param, new_state); inputs are untouched.

    The zero-denominator guard sits inside the square root:
    w -= lr * m_hat / sqrt(v_hat + epsilon).
    """
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise DimensionError(
            f"param {param.shape}, grad {grad.shape} and state {state.m.shape} "
            "must share one shape"
        )
    t = state.t + 1
    b1 = DTYPE(state.beta1)
    b2 = DTYPE(state.beta2)
    one = DTYPE(1.0)
    g = grad.data
    m = b1 * state.m.data + (one - b1) * g
    v = b2 * state.v.data + (one - b2) * (g * g)
    m_hat = m / DTYPE(1.0 - state.beta1 ** t)
    v_hat = v / DTYPE(1.0 - state.beta2 ** t)
    step = DTYPE(state.lr) * m_hat / np.sqrt(v_hat + DTYPE(state.epsilon))
    new_param = Tensor(param.shape, param.data - step)
    new_state = AdamState(m=Tensor(param.shape, m), v=Tensor(param.shape, v), t=t,
                          beta1=state.beta1, beta2=state.beta2,
                          epsilon=state.epsilon, lr=state.lr)
    return new_param, new_state


# ---------------------------------------------------------------------------
# convolution core


def _im2col(image: np.ndarray, kh: int, kw: int, stride: int, padding: int,
            h_out: int, w_out: int) -> np.ndarray:
    """Unfold windows of a (C, H, W) image into a (C*kh*kw, h_out*w_out) matrix."""
    if padding:
        image = np.pad(image, ((0, 0), (padding, padding), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(image, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(image.shape[0] * kh * kw,
                                                    h_out * w_out)
    return np.ascontiguousarray(cols)


def _col2im_add(cols: np.ndarray, c: int, h: int, w: int, kh: int, kw: int,
                stride: int, padding: int, h_out: int, w_out: int) -> np.ndarray:
    """Scatter-add unfolded window gradients back onto a (C, H, W) image."""
    hp, wp = h + 2 * padding, w + 2 * padding
    acc = np.zeros((c, hp, wp), dtype=DTYPE)
    cols = cols.reshape(c, kh, kw, h_out, w_out)
    for i in range(kh):
        for j in range(kw):
            acc[:, i:i + stride * h_out:stride, j:j + stride * w_out:stride] += cols[:, i, j]
    if padding:
        acc = acc[:, padding:hp - padding, padding:wp - padding]
    return np.ascontiguousarray(acc)


def _out_extent(extent: int, k: int, stride: int, padding: int) -> int:
    return (extent + 2 * padding - k) // stride + 1


def _corr_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
                  stride: int, padding: int) -> np.ndarray:
    c_out, _, kh, kw = kernel.shape
    h_out = _out_extent(x.shape[1], kh, stride, padding)
    w_out = _out_extent(x.shape[2], kw, stride, padding)
    if h_out < 1 or w_out < 1:
        raise DimensionError(
            f"kernel {kernel.shape} does not fit input {x.shape} "
            f"with stride {stride}, padding {padding}"
        )
    cols = _im2col(x, kh, kw, stride, padding, h_out, w_out)
    out = kernel.reshape(c_out, -1) @ cols + bias[:, None]
    return out.reshape(c_out, h_out, w_out)


def _corr_backward(grad_out: np.ndarray, x: np.ndarray, kernel: np.ndarray,
                   stride: int, padding: int):
    c_out, c_in, kh, kw = kernel.shape
    h_out, w_out = grad_out.shape[1], grad_out.shape[2]
    g2 = grad_out.reshape(c_out, -1)
    cols = _im2col(x, kh, kw, stride, padding, h_out, w_out)
    grad_kernel = (g2 @ cols.T).reshape(kernel.shape)
    grad_bias = g2.sum(axis=1)
    grad_cols = kernel.reshape(c_out, -1).T @ g2
    grad_x = _col2im_add(grad_cols, c_in, x.shape[1], x.shape[2], kh, kw,
                         stride, padding, h_out, w_out)
    return grad_x, grad_kernel, grad_bias


def _check_conv_shapes(x: Tensor, kernel: Tensor, bias: Tensor, channel_axis: int):
    if len(x.shape) != 3:
        raise DimensionError(f"expected a (C, H, W) input, got shape {x.shape}")
    if len(kernel.shape) != 4:
        raise DimensionError(f"expected a 4-d kernel, got shape {kernel.shape}")
    if x.shape[0] != kernel.shape[channel_axis]:
        raise DimensionError(
            f"input has {x.shape[0]} channels (shape {x.shape}) but kernel "
            f"expects {kernel.shape[channel_axis]} (shape {kernel.shape})"
        )
    n_out = kernel.shape[1 - channel_axis]
    if bias.shape != (n_out,):
        raise DimensionError(f"bias shape {bias.shape} does not match {n_out} output channels")


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int, padding: int) -> Tensor:
    """Cross-correlate a (C_in, H, W) input with a (C_out, C_in, KH, KW) kernel.

    Output spatial extent is floor((H + 2*padding - KH) / stride) + 1.
    """
    _check_conv_shapes(x, kernel, bias, channel_axis=1)
    out = _corr_forward(x.view(), kernel.view(), bias.view(), stride, padding)
    return Tensor(out.shape, out)


def conv2d_backward(grad_out: Tensor, saved_input: Tensor, kernel: Tensor,
                    stride: int, padding: int):
    """Gradients of conv2d. Returns (grad_input, grad_kernel, grad_bias)."""
    kv = kernel.view()
    xv = saved_input.view()
    expected = (kv.shape[0],
                _out_extent(xv.shape[1], kv.shape[2], stride, padding),
                _out_extent(xv.shape[2], kv.shape[3], stride, padding))
    if grad_out.shape != expected:
        raise DimensionError(
            f"grad_out shape {grad_out.shape} does not match forward output {expected}"
        )
    if xv.shape[0] != kv.shape[1]:
        raise DimensionError(
            f"input has {xv.shape[0]} channels (shape {saved_input.shape}) but "
            f"kernel expects {kv.shape[1]} (shape {kernel.shape})"
        )
    gx, gk, gb = _corr_backward(grad_out.view(), xv, kv, stride, padding)
    return Tensor(gx.shape, gx), Tensor(gk.shape, gk), Tensor(gb.shape, gb)


def _dilate(image: np.ndarray, stride: int, output_padding: int) -> np.ndarray:
    """Insert stride-1 zeros between pixels; append output_padding zero rows/cols."""
    c, h, w = image.shape
    hd = (h - 1) * stride + 1 + output_padding
    wd = (w - 1) * stride + 1 + output_padding
    out = np.zeros((c, hd, wd), dtype=DTYPE)
    out[:, :(h - 1) * stride + 1:stride, :(w - 1) * stride + 1:stride] = image
    return out


def _flip_swap(kernel: np.ndarray) -> np.ndarray:
    # (C_in, C_out, KH, KW) -> spatially flipped (C_out, C_in, KH, KW)
    return np.ascontiguousarray(kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))


def _check_transpose_geometry(kh: int, stride: int, padding: int, output_padding: int):
    if output_padding >= stride:
        raise DimensionError(
            f"output_padding {output_padding} must be smaller than stride {stride}"
        )
    if padding > kh - 1:
        raise DimensionError(
            f"padding {padding} exceeds kernel extent - 1 ({kh - 1})"
        )


def conv_transpose2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int,
                     padding: int, output_padding: int) -> Tensor:
    """Transposed convolution, the adjoint of conv2d with the same geometry.

    The kernel is laid out (C_in, C_out, KH, KW); output spatial extent is
    (H - 1)*stride - 2*padding + KH + output_padding.
    """
    _check_conv_shapes(x, kernel, bias, channel_axis=0)
    kh = kernel.shape[2]
    _check_transpose_geometry(kh, stride, padding, output_padding)
    dilated = _dilate(x.view(), stride, output_padding)
    out = _corr_forward(dilated, _flip_swap(kernel.view()), bias.view(),
                        stride=1, padding=kh - 1 - padding)
    return Tensor(out.shape, out)


def conv_transpose2d_backward(grad_out: Tensor, saved_input: Tensor, kernel: Tensor,
                              stride: int, padding: int, output_padding: int):
    """Gradients of conv_transpose2d. Returns (grad_input, grad_kernel, grad_bias)."""
    kv = kernel.view()
    xv = saved_input.view()
    kh, kw = kv.shape[2], kv.shape[3]
    _check_transpose_geometry(kh, stride, padding, output_padding)
    expected = (kv.shape[1],
                (xv.shape[1] - 1) * stride - 2 * padding + kh + output_padding,
                (xv.shape[2] - 1) * stride - 2 * padding + kw + output_padding)
    if grad_out.shape != expected:
        raise DimensionError(
            f"grad_out shape {grad_out.shape} does not match forward output {expected}"
        )
    dilated = _dilate(xv, stride, output_padding)
    g_dilated, g_flipped, g_bias = _corr_backward(
        grad_out.view(), dilated, _flip_swap(kv), stride=1, padding=kh - 1 - padding)
    h, w = xv.shape[1], xv.shape[2]
    grad_x = np.ascontiguousarray(
        g_dilated[:, :(h - 1) * stride + 1:stride, :(w - 1) * stride + 1:stride])
    grad_kernel = np.ascontiguousarray(
        g_flipped.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    return (Tensor(grad_x.shape, grad_x), Tensor(grad_kernel.shape, grad_kernel),
            Tensor(g_bias.shape, g_bias))


# ---------------------------------------------------------------------------
# dense and elementwise layers


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map weight @ x + bias, with weight laid out (N_out, N_in)."""
    if len(x.shape) != 1 or len(weight.shape) != 2:
        raise DimensionError(
            f"linear expects a vector and a matrix, got {x.shape} and {weight.shape}"
        )
    n_out, n_in = weight.shape
    if x.shape[0] != n_in or bias.shape != (n_out,):
        raise DimensionError(
            f"weight {weight.shape} does not map input {x.shape} with bias {bias.shape}"
        )
    return Tensor((n_out,), weight.view() @ x.data + bias.data)


def linear_backward(grad_out: Tensor, saved_input: Tensor, weight: Tensor):
    """Gradients of linear. Returns (grad_input, grad_weight, grad_bias)."""
    n_out, n_in = weight.shape
    if grad_out.shape != (n_out,) or saved_input.shape != (n_in,):
        raise DimensionError(
            f"grad {grad_out.shape} / input {saved_input.shape} do not match "
            f"weight {weight.shape}"
        )
    grad_input = weight.view().T @ grad_out.data
    grad_weight = np.outer(grad_out.data, saved_input.data)
    return (Tensor((n_in,), grad_input), Tensor(weight.shape, grad_weight),
            grad_out.copy())


def relu(x: Tensor) -> Tensor:
    return Tensor(x.shape, np.maximum(x.data, DTYPE(0.0)))


def relu_backward(grad_out: Tensor, saved_input: Tensor) -> Tensor:
    """Masks the upstream gradient where the forward input was <= 0."""
    if grad_out.shape != saved_input.shape:
        raise DimensionError(
            f"grad shape {grad_out.shape} != saved input shape {saved_input.shape}"
        )
    return Tensor(grad_out.shape,
                  np.where(saved_input.data > 0, grad_out.data, DTYPE(0.0)))


def tanh(x: Tensor) -> Tensor:
    return Tensor(x.shape, np.tanh(x.data))


def tanh_backward(grad_out: Tensor, saved_output: Tensor) -> Tensor:
    """Scales the upstream gradient by 1 - y^2, from the saved forward output."""
    if grad_out.shape != saved_output.shape:
        raise DimensionError(
            f"grad shape {grad_out.shape} != saved output shape {saved_output.shape}"
        )
    y = saved_output.data
    return Tensor(grad_out.shape, grad_out.data * (DTYPE(1.0) - y * y))


def softmax(logits: Tensor) -> Tensor:
    """Numerically stable softmax (max logit subtracted before exponentiation)."""
    z = logits.data
    e = np.exp(z - z.max())
    return Tensor(logits.shape, e / e.sum())


def softmax_cross_entropy(logits: Tensor, target_class: int):
    """Cross-entropy of softmax(logits) against a class index.

    Returns (loss, grad_logits) where grad_logits = softmax - onehot(target).
    """
    if len(logits.shape) != 1:
        raise DimensionError(f"logits must be a vector, got shape {logits.shape}")
    k = logits.shape[0]
    if not 0 <= target_class < k:
        raise IndexError(f"target class {target_class} outside [0, {k})")
    z = logits.data
    shifted = z - z.max()
    e = np.exp(shifted)
    total = e.sum()
    loss = float(np.log(total) - shifted[target_class])
    grad = e / total
    grad[target_class] -= DTYPE(1.0)
    return loss, Tensor(logits.shape, grad)
