"""Tour of the custom layers: runtime-scaled 3d convolutions, pixelwise
feature normalization, the minibatch standard-deviation map, and the
asymmetric resampling convolutions.

Run:  python demos/02_building_blocks.py
"""

import torch

from framecast.layers import (ScaledConv3d, SpatialDown, SpatialUp,
                              TemporalCollapse, TemporalExpand,
                              minibatch_stddev, pixelwise_feature_norm)

torch.manual_seed(0)

# weights stay unit-normal; the He constant is applied at every forward pass
conv = ScaledConv3d(1, 1, kernel=1)
print(f"1x1x1 conv: raw weight {float(conv.weight.detach()):+.4f}, "
      f"runtime scale {conv.scale:.4f} (= sqrt(2/fan_in))")
v = torch.full((1, 1, 1, 1, 1), 0.5)
with torch.no_grad():
    print(f"forward(0.5) = {float(conv(v)):+.4f} "
          f"= 0.5 * weight * scale (bias starts at zero)")

# pixelwise normalization squashes each channel vector to unit mean square
x = torch.tensor([3.0, 4.0]).reshape(1, 2, 1, 1, 1)
print("pixelnorm of (3, 4):", pixelwise_feature_norm(x).flatten().tolist())

# the minibatch stddev layer appends one constant map per sample
batch = torch.stack([torch.zeros(1, 2, 4, 4), torch.full((1, 2, 4, 4), 2.0)])
out = minibatch_stddev(batch)
print(f"minibatch stddev of {{0, 2}} batch: appended value "
      f"{float(out[0, -1, 0, 0, 0]):.4f} (population std = 1)")
print(f"shapes: {tuple(batch.shape)} -> {tuple(out.shape)}")

# spatial resampling touches H and W only; the bottleneck convs fold and
# unfold the time axis
x = torch.randn(2, 8, 6, 16, 16)
print("spatial down:", tuple(SpatialDown(8, 8)(x).shape))
print("spatial up:  ", tuple(SpatialUp(8, 8)(x).shape))
latent = TemporalCollapse(8, 8, t_in=6)(x)
print("temporal collapse:", tuple(latent.shape))
print("temporal expand:  ", tuple(TemporalExpand(8, 8, t_out=6)(latent).shape))
