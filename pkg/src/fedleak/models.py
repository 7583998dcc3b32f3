"""The two fixed networks: an 11-way convolutional classifier (which doubles as
the attack's discriminator) and a noise-to-image generator.

Both are explicit forward/backward pipelines over named parameter sets; a
forward pass returns an activation tape that the matching backward pass
consumes exactly once. Default widths give the production architecture;
narrower nets (used by gradient checks) share the same layer names and code
paths.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .tensor import (DTYPE, AdamState, Tensor, adam_step, conv2d,
                     conv2d_backward, conv_transpose2d,
                     conv_transpose2d_backward, linear, linear_backward, relu,
                     relu_backward, softmax_cross_entropy, tanh, tanh_backward)

IMAGE_SHAPE = (1, 28, 28)
NUM_CLASSES = 11          # ten data classes plus the adversary's fake class
FAKE_CLASS = 10
NOISE_DIM = 100
GRID = 7                  # both nets meet the image at a 7x7 spatial grid


class ParamSet:
    """Ordered, named collection of parameter tensors."""

    def __init__(self, entries):
        self._entries = {}
        for name, t in entries:
            if name in self._entries:
                raise ValueError(f"duplicate parameter name {name!r}")
            self._entries[name] = t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self):
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def tensors(self):
        return self._entries.values()

    def clone(self) -> "ParamSet":
        return ParamSet((name, t.copy()) for name, t in self.items())

    def shapes(self):
        return [(name, t.shape) for name, t in self.items()]

    def same_shapes(self, other: "ParamSet") -> bool:
        return self.shapes() == other.shapes()

    def equals(self, other: "ParamSet") -> bool:
        """Bitwise equality of names, order, and tensor contents."""
        return (self.names() == other.names()
                and all(a.equals(other[n]) for n, a in self.items()))

    def count(self) -> int:
        return sum(t.size for t in self.tensors())

    def __repr__(self):
        return f"ParamSet({len(self)} tensors, {self.count()} values)"


class Tape:
    """Activations saved by one forward pass; consumed exactly once."""

    __slots__ = ("saved", "consumed")

    def __init__(self, saved):
        self.saved = saved
        self.consumed = False

    def take(self):
        if self.consumed:
            raise RuntimeError("activation tape already consumed by a backward pass")
        self.consumed = True
        return self.saved


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor.from_array(rng.uniform(-bound, bound, size=shape))


def init_discriminator(rng: np.random.Generator, conv1: int = 32, conv2: int = 64,
                       hidden: int = 200, num_classes: int = NUM_CLASSES) -> ParamSet:
    """Fresh classifier parameters.

    Geometry: 1x28x28 -> conv stride 2 -> conv1 x14x14 -> conv stride 2
    -> conv2 x7x7 -> flatten -> hidden -> num_classes logits.
    """
    flat = conv2 * GRID * GRID
    layers = [
        ("conv1.weight", (conv1, 1, 3, 3), 9),
        ("conv1.bias", (conv1,), 9),
        ("conv2.weight", (conv2, conv1, 3, 3), conv1 * 9),
        ("conv2.bias", (conv2,), conv1 * 9),
        ("fc1.weight", (hidden, flat), flat),
        ("fc1.bias", (hidden,), flat),
        ("fc2.weight", (num_classes, hidden), hidden),
        ("fc2.bias", (num_classes,), hidden),
    ]
    return ParamSet((name, _uniform(rng, shape, fan)) for name, shape, fan in layers)


def init_generator(rng: np.random.Generator, planes: int = 32, mid: int = 16,
                   noise_dim: int = NOISE_DIM) -> ParamSet:
    """Fresh generator parameters.

    Geometry: noise_dim -> planes*7*7 -> deconv stride 2 -> planes x14x14
    -> deconv stride 2 -> mid x28x28 -> deconv stride 1 -> 1x28x28 tanh image.
    """
    flat = planes * GRID * GRID
    layers = [
        ("fc.weight", (flat, noise_dim), noise_dim),
        ("fc.bias", (flat,), noise_dim),
        ("deconv1.weight", (planes, planes, 3, 3), planes * 9),
        ("deconv1.bias", (planes,), planes * 9),
        ("deconv2.weight", (planes, mid, 3, 3), planes * 9),
        ("deconv2.bias", (mid,), planes * 9),
        ("deconv3.weight", (mid, 1, 3, 3), mid * 9),
        ("deconv3.bias", (1,), mid * 9),
    ]
    return ParamSet((name, _uniform(rng, shape, fan)) for name, shape, fan in layers)


def discriminator_forward(params: ParamSet, image: Tensor):
    """Classify one image. Returns (logits, tape)."""
    if image.shape != IMAGE_SHAPE:
        raise DimensionError(f"expected image shape {IMAGE_SHAPE}, got {image.shape}")
    x1 = conv2d(image, params["conv1.weight"], params["conv1.bias"], stride=2, padding=1)
    a1 = relu(x1)
    x2 = conv2d(a1, params["conv2.weight"], params["conv2.bias"], stride=2, padding=1)
    a2 = relu(x2)
    flat = Tensor((a2.size,), a2.data)
    x3 = linear(flat, params["fc1.weight"], params["fc1.bias"])
    a3 = relu(x3)
    logits = linear(a3, params["fc2.weight"], params["fc2.bias"])
    tape = Tape({"image": image, "x1": x1, "a1": a1, "x2": x2, "flat": flat,
                 "x3": x3, "a3": a3})
    return logits, tape


def discriminator_backward(params: ParamSet, tape: Tape, grad_logits: Tensor):
    """Backpropagate through the classifier.

    Returns (grads, grad_image): a ParamSet of gradients in parameter order and
    the gradient with respect to the input image.
    """
    t = tape.take()
    g_a3, g_w4, g_b4 = linear_backward(grad_logits, t["a3"], params["fc2.weight"])
    g_x3 = relu_backward(g_a3, t["x3"])
    g_flat, g_w3, g_b3 = linear_backward(g_x3, t["flat"], params["fc1.weight"])
    g_a2 = Tensor(t["x2"].shape, g_flat.data)
    g_x2 = relu_backward(g_a2, t["x2"])
    g_a1, g_k2, g_b2 = conv2d_backward(g_x2, t["a1"], params["conv2.weight"],
                                       stride=2, padding=1)
    g_x1 = relu_backward(g_a1, t["x1"])
    g_img, g_k1, g_b1 = conv2d_backward(g_x1, t["image"], params["conv1.weight"],
                                        stride=2, padding=1)
    grads = ParamSet([
        ("conv1.weight", g_k1), ("conv1.bias", g_b1),
        ("conv2.weight", g_k2), ("conv2.bias", g_b2),
        ("fc1.weight", g_w3), ("fc1.bias", g_b3),
        ("fc2.weight", g_w4), ("fc2.bias", g_b4),
    ])
    return grads, g_img


def generator_forward(params: ParamSet, z: Tensor):
    """Map a noise vector to a tanh image in [-1, 1]. Returns (image, tape)."""
    noise_dim = params["fc.weight"].shape[1]
    if z.shape != (noise_dim,):
        raise DimensionError(f"expected noise shape ({noise_dim},), got {z.shape}")
    planes = params["fc.weight"].shape[0] // (GRID * GRID)
    x0 = linear(z, params["fc.weight"], params["fc.bias"])
    a0 = relu(x0)
    grid = Tensor((planes, GRID, GRID), a0.data)
    x1 = conv_transpose2d(grid, params["deconv1.weight"], params["deconv1.bias"],
                          stride=2, padding=1, output_padding=1)
    a1 = relu(x1)
    x2 = conv_transpose2d(a1, params["deconv2.weight"], params["deconv2.bias"],
                          stride=2, padding=1, output_padding=1)
    a2 = relu(x2)
    x3 = conv_transpose2d(a2, params["deconv3.weight"], params["deconv3.bias"],
                          stride=1, padding=1, output_padding=0)
    image = tanh(x3)
    tape = Tape({"z": z, "x0": x0, "grid": grid, "x1": x1, "a1": a1,
                 "x2": x2, "a2": a2, "image": image})
    return image, tape


def generator_backward(params: ParamSet, tape: Tape, grad_image: Tensor):
    """Backpropagate through the generator.

    Returns (grads, grad_z) with grads ordered like the parameter set.
    """
    t = tape.take()
    g_x3 = tanh_backward(grad_image, t["image"])
    g_a2, g_k3, g_b3 = conv_transpose2d_backward(
        g_x3, t["a2"], params["deconv3.weight"], stride=1, padding=1, output_padding=0)
    g_x2 = relu_backward(g_a2, t["x2"])
    g_a1, g_k2, g_b2 = conv_transpose2d_backward(
        g_x2, t["a1"], params["deconv2.weight"], stride=2, padding=1, output_padding=1)
    g_x1 = relu_backward(g_a1, t["x1"])
    g_grid, g_k1, g_b1 = conv_transpose2d_backward(
        g_x1, t["grid"], params["deconv1.weight"], stride=2, padding=1, output_padding=1)
    g_a0 = Tensor((g_grid.size,), g_grid.data)
    g_x0 = relu_backward(g_a0, t["x0"])
    g_z, g_w0, g_bf = linear_backward(g_x0, t["z"], params["fc.weight"])
    grads = ParamSet([
        ("fc.weight", g_w0), ("fc.bias", g_bf),
        ("deconv1.weight", g_k1), ("deconv1.bias", g_b1),
        ("deconv2.weight", g_k2), ("deconv2.bias", g_b2),
        ("deconv3.weight", g_k3), ("deconv3.bias", g_b3),
    ])
    return grads, g_z


# ---------------------------------------------------------------------------
# optimizer plumbing shared by every training site


def init_adam(params: ParamSet, lr: float, beta1: float = 0.5,
              beta2: float = 0.999, epsilon: float = 1e-7) -> dict:
    """One AdamState per parameter, keyed by name."""
    return {name: AdamState.for_param(t, lr, beta1, beta2, epsilon)
            for name, t in params.items()}


def apply_adam(params: ParamSet, grads: ParamSet, states: dict):
    """Step every parameter. Returns (new_params, new_states)."""
    new_entries = []
    new_states = {}
    for name, param in params.items():
        stepped, new_states[name] = adam_step(param, grads[name], states[name])
        new_entries.append((name, stepped))
    return ParamSet(new_entries), new_states


def train_batch(params: ParamSet, batch, opt_states: dict):
    """One optimizer step from the batch-averaged classifier gradients.

    batch is a nonempty list of (image, class_index) pairs. Returns
    (new_params, new_states, mean_loss).
    """
    if not batch:
        raise ValueError("empty batch")
    acc = {name: np.zeros(t.size, dtype=DTYPE) for name, t in params.items()}
    total = 0.0
    for image, label in batch:
        logits, tape = discriminator_forward(params, image)
        loss, grad_logits = softmax_cross_entropy(logits, label)
        grads, _ = discriminator_backward(params, tape, grad_logits)
        for name, g in grads.items():
            acc[name] += g.data
        total += loss
    inv = DTYPE(1.0 / len(batch))
    mean_grads = ParamSet((name, Tensor(params[name].shape, acc[name] * inv))
                          for name in acc)
    new_params, new_states = apply_adam(params, mean_grads, opt_states)
    return new_params, new_states, total / len(batch)


def predict(params: ParamSet, image: Tensor) -> int:
    """Argmax class over all logits, fake class included."""
    logits, _ = discriminator_forward(params, image)
    return int(np.argmax(logits.data))
