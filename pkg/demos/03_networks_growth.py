"""Build the generator and discriminator at 4x4, grow them to 32x32, and show
the faded forward pass during a transition.

Run:  python demos/03_networks_growth.py
"""

import torch

from framecast import (NetworkSpec, PhaseState, blend_transition_input,
                       build_discriminator, build_generator)

torch.manual_seed(1)
spec = NetworkSpec(final_resolution=32, base_feature_maps=32, t_in=6, t_out=6,
                   channels=1)
gen = build_generator(spec)
disc = build_discriminator(spec)
print(f"levels: {spec.levels()}, feature maps per level: "
      f"{[spec.feature_maps(r) for r in spec.levels()]}")

for res in spec.levels():
    if res > gen.resolution:
        new_g = gen.grow(res)
        new_d = disc.grow(res)
        print(f"grew to {res}x{res}: +{sum(p.numel() for p in new_g)} generator "
              f"params, +{sum(p.numel() for p in new_d)} discriminator params")
    phase = PhaseState(res, "stabilization")
    z = torch.randn(2, 1, 6, res, res)
    x = torch.randn(2, 1, 12, res, res)
    with torch.no_grad():
        print(f"  G: {tuple(z.shape)} -> {tuple(gen(z, phase).shape)}   "
              f"D: {tuple(x.shape)} -> {tuple(disc(x, phase).shape)}")

# during a transition the output is literally the convex combination of the
# old (upsampled) and new paths; inputs are blended to match
z = torch.randn(1, 1, 6, 32, 32)
for alpha in (0.0, 0.5, 1.0):
    blended = blend_transition_input(z, alpha)
    with torch.no_grad():
        out = gen(blended, PhaseState(32, "transition", alpha))
    print(f"alpha={alpha:.1f}: output mean {float(out.mean()):+.4f}")

print()
print(gen.describe().splitlines()[0])
print(disc.describe().splitlines()[0])
