"""Wasserstein critic loss with gradient penalty and drift (epsilon) penalty,
plus the generator loss.

The critic is passed in as a callable mapping a (B, C, T, H, W) batch to one
unbounded score per sample, so the same losses apply to plain and faded
forward passes.
"""

from dataclasses import dataclass

import torch

from .errors import DimensionError, TrainingFault, ValidationError


@dataclass
class LossCoefficients:
    lambda_gp: float = 10.0
    epsilon_drift: float = 0.001

    def __post_init__(self):
        if self.lambda_gp < 0 or self.epsilon_drift < 0:
            raise ValidationError("loss coefficients must be >= 0")


def gradient_penalty(critic, real, fake, lambda_gp, u_generator=None):
    """lambda * E[(||grad_x D(x_hat)||_2 - 1)^2] along straight real-fake lines.

    x_hat = u * real + (1 - u) * fake with one u ~ Uniform(0, 1) per batch
    element, broadcast over all other axes. The gradient norm is taken over
    all non-batch axes jointly. Keeps the graph so the penalty itself can be
    differentiated w.r.t. the critic's parameters.
    """
    if real.shape != fake.shape:
        raise DimensionError(f"real {tuple(real.shape)} and fake {tuple(fake.shape)} differ")
    b = real.shape[0]
    u = torch.rand((b,) + (1,) * (real.ndim - 1), generator=u_generator,
                   dtype=real.dtype, device=real.device)
    x_hat = (u * real.detach() + (1.0 - u) * fake.detach()).requires_grad_(True)
    scores = critic(x_hat)
    if scores.requires_grad:
        grads = torch.autograd.grad(
            outputs=scores.sum(), inputs=x_hat, create_graph=True, allow_unused=True)[0]
    else:
        grads = None  # critic ignores its input (e.g. a constant oracle)
    if grads is None:
        grads = torch.zeros_like(x_hat)
    norms = grads.flatten(1).norm(2, dim=1)
    return lambda_gp * ((norms - 1.0) ** 2).mean()


def discriminator_loss(critic, real, fake, coeff, u_generator=None):
    """Critic loss E[D(fake)] - E[D(real)] + gradient penalty + drift penalty.

    Returns (total, diagnostics) where diagnostics maps each term name to its
    float value; the three terms sum to the total exactly.
    """
    if real.shape != fake.shape:
        raise DimensionError(f"real {tuple(real.shape)} and fake {tuple(fake.shape)} differ")
    d_real = critic(real)
    d_fake = critic(fake)
    wasserstein = d_fake.mean() - d_real.mean()
    gp = gradient_penalty(critic, real, fake, coeff.lambda_gp, u_generator)
    drift = coeff.epsilon_drift * (d_real ** 2).mean()
    total = wasserstein + gp + drift
    if not torch.isfinite(total):
        raise TrainingFault(
            f"non-finite discriminator loss: wasserstein={float(wasserstein.detach())}, "
            f"gradient_penalty={float(gp.detach())}, drift_penalty={float(drift.detach())}")
    diagnostics = {
        "wasserstein": float(wasserstein.detach()),
        "gradient_penalty": float(gp.detach()),
        "drift_penalty": float(drift.detach()),
        "d_total": float(total.detach()),
    }
    return total, diagnostics


def generator_loss(critic, fake):
    """-E[D(fake)]."""
    loss = -critic(fake).mean()
    if not torch.isfinite(loss):
        raise TrainingFault(f"non-finite generator loss: {float(loss)}")
    return loss
