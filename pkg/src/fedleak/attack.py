"""The adversary: treats each downloaded global model as a frozen
discriminator, steers its generator toward the victim's class, then trains its
upload to file the generated images under the extra fake class.

The generator and its optimizer state persist for the whole experiment; the
local classifier copy is refreshed from the global model every round.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .models import (FAKE_CLASS, ParamSet, apply_adam, discriminator_backward,
                     discriminator_forward, generator_backward,
                     generator_forward, init_adam, train_batch)
from .tensor import DTYPE, Tensor, softmax_cross_entropy


@dataclass
class AdversaryState:
    """Everything the attacking client owns across rounds."""

    target_class: int
    generator: ParamSet
    generator_opt: dict
    lr_discriminator: float = 0.005
    lr_generator: float = 0.001
    gan_epochs: int = 500
    gan_batch: int = 16
    noise_dist: str = "uniform"
    noise_rng: np.random.Generator = None
    local_params: Optional[ParamSet] = None


def sample_noise(rng: np.random.Generator, n: int, dist: str = "uniform",
                 dim: int = 100) -> list:
    """Draw n noise vectors: i.i.d. uniform on [-1, 1] or standard normal."""
    if n < 1:
        raise ValueError(f"need at least one noise vector, got n={n}")
    if dist == "uniform":
        block = rng.uniform(-1.0, 1.0, size=(n, dim))
    elif dist == "gaussian":
        block = rng.standard_normal(size=(n, dim))
    else:
        raise ValueError(f"unknown noise distribution {dist!r}")
    return [Tensor((dim,), row) for row in block.astype(DTYPE)]


def train_generator(adv: AdversaryState, frozen_discriminator: ParamSet,
                    epochs: int, batch: int) -> float:
    """Update the generator against a frozen classifier.

    Each epoch draws one fresh noise batch, pushes it through generator and
    classifier, and steps the generator toward the target class. The
    classifier parameters are read, never written. Returns the mean loss of
    the final epoch.
    """
    if epochs < 1:
        raise ValueError(f"need at least one epoch, got {epochs}")
    mean_loss = float("nan")
    for _ in range(epochs):
        noise = sample_noise(adv.noise_rng, batch, adv.noise_dist,
                             dim=adv.generator["fc.weight"].shape[1])
        acc = {name: np.zeros(t.size, dtype=DTYPE)
               for name, t in adv.generator.items()}
        total = 0.0
        for z in noise:
            image, gen_tape = generator_forward(adv.generator, z)
            logits, disc_tape = discriminator_forward(frozen_discriminator, image)
            loss, grad_logits = softmax_cross_entropy(logits, adv.target_class)
            _, grad_image = discriminator_backward(frozen_discriminator,
                                                   disc_tape, grad_logits)
            grads, _ = generator_backward(adv.generator, gen_tape, grad_image)
            for name, g in grads.items():
                acc[name] += g.data
            total += loss
        inv = DTYPE(1.0 / batch)
        mean_grads = ParamSet((name, Tensor(adv.generator[name].shape, acc[name] * inv))
                              for name in acc)
        adv.generator, adv.generator_opt = apply_adam(adv.generator, mean_grads,
                                                      adv.generator_opt)
        mean_loss = total / batch
    return mean_loss


def generate_fake_batch(adv: AdversaryState, n: int) -> list:
    """n generated images labeled with the fake class, drawn from the
    adversary's training noise stream."""
    noise = sample_noise(adv.noise_rng, n, adv.noise_dist,
                         dim=adv.generator["fc.weight"].shape[1])
    return [(generator_forward(adv.generator, z)[0], FAKE_CLASS) for z in noise]


def adversary_local_update(adv: AdversaryState, global_params: ParamSet,
                           n_samples: int) -> ParamSet:
    """Produce the adversary's upload for one attacking round.

    Refreshes the local classifier from the global model, advances the
    generator against it, then trains the local copy for one epoch on
    n_samples generated images labeled as fake. With n_samples == 0 there is
    nothing to train on and the global parameters come back unchanged.
    """
    adv.local_params = global_params.clone()
    train_generator(adv, adv.local_params, adv.gan_epochs, adv.gan_batch)
    if n_samples <= 0:
        return adv.local_params
    samples = generate_fake_batch(adv, n_samples)
    states = init_adam(adv.local_params, adv.lr_discriminator)
    params = adv.local_params
    for start in range(0, n_samples, adv.gan_batch):
        params, states, _ = train_batch(params, samples[start:start + adv.gan_batch],
                                        states)
    adv.local_params = params
    return params


def snapshot_reconstruction(adv: AdversaryState, n: int,
                            rng: np.random.Generator) -> list:
    """n fresh images from the current generator, for metrics and export.

    Uses the dedicated rng passed in; no training state is touched.
    """
    noise = sample_noise(rng, n, adv.noise_dist,
                         dim=adv.generator["fc.weight"].shape[1])
    return [generator_forward(adv.generator, z)[0] for z in noise]
