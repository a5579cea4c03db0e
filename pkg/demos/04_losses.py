"""The critic loss term by term, checked against critics with closed-form
answers.

Run:  python demos/04_losses.py
"""

import math

import torch

from framecast import LossCoefficients, discriminator_loss, generator_loss, gradient_penalty

torch.manual_seed(2)
coeff = LossCoefficients()  # lambda_gp=10, epsilon_drift=0.001
real = torch.randn(8, 1, 12, 16, 16, dtype=torch.float64)
fake = torch.randn(8, 1, 12, 16, 16, dtype=torch.float64)

# a constant critic has zero gradient, so the penalty is lambda * (0 - 1)^2
const = lambda x: torch.full((x.shape[0],), 3.0, dtype=x.dtype)
total, diag = discriminator_loss(const, real, fake, coeff)
print(f"constant critic D=3: loss {float(total):.6f} "
      f"(closed form {10.0 + 0.001 * 9:.6f})")
print("  terms:", {k: round(v, 6) for k, v in diag.items()})

# a linear critic whose coefficient vector has unit norm sits exactly on the
# gradient-norm target
v = torch.randn(1, 12, 16, 16, dtype=torch.float64)
v /= v.flatten().norm()
unit = lambda x: (x * v).flatten(1).sum(dim=1)
print(f"unit-gradient critic penalty: {float(gradient_penalty(unit, real, fake, 10.0)):.2e}")

# averaging over all N elements gives gradient norm 1/sqrt(N)
n = real[0].numel()
mean_critic = lambda x: x.flatten(1).mean(dim=1)
pen = gradient_penalty(mean_critic, real, fake, 10.0)
print(f"mean critic penalty: {float(pen):.6f} "
      f"(closed form {10.0 * (1 / math.sqrt(n) - 1) ** 2:.6f})")

print(f"generator loss against D=3: {float(generator_loss(const, fake)):.1f} (= -3)")
