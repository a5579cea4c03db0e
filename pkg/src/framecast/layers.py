"""Custom differentiable building blocks: weight-scaled 3d convolutions,
asymmetric-kernel spatial resampling, temporal bottleneck convolutions,
pixelwise feature normalization, and the minibatch standard-deviation layer.
"""

import math

import torch
import torch.nn.functional as F
from torch import nn

from .errors import DimensionError, ValidationError


def _triple(v):
    if isinstance(v, int):
        return (v, v, v)
    v = tuple(int(x) for x in v)
    if len(v) != 3:
        raise ValidationError(f"expected int or 3-tuple, got {v}")
    return v


class ScaledConv3d(nn.Module):
    """(Transposed) 3d convolution with runtime He weight scaling.

    Raw weights are drawn from a unit-variance normal and multiplied by
    c = sqrt(2 / fan_in) in every forward pass, with fan_in = in_maps * prod(kernel),
    so the optimizer always acts on weights of equal dynamic range. Biases are
    zero-initialized and excluded from the scaling.
    """

    def __init__(self, in_maps, out_maps, kernel, stride=1, padding=0, transposed=False):
        super().__init__()
        self.in_maps = int(in_maps)
        self.out_maps = int(out_maps)
        self.kernel = _triple(kernel)
        self.stride = _triple(stride)
        self.padding = _triple(padding)
        self.transposed = bool(transposed)
        if min(self.kernel) < 1 or min(self.stride) < 1:
            raise ValidationError("kernel and stride entries must be >= 1")
        if self.in_maps < 1 or self.out_maps < 1:
            raise ValidationError("feature map counts must be >= 1")
        shape = ((self.in_maps, self.out_maps) if transposed else (self.out_maps, self.in_maps))
        self.weight = nn.Parameter(torch.randn(*shape, *self.kernel))
        self.bias = nn.Parameter(torch.zeros(self.out_maps))
        fan_in = self.in_maps * math.prod(self.kernel)
        self.scale = math.sqrt(2.0 / fan_in)

    def forward(self, x):
        if x.ndim != 5:
            raise DimensionError(f"expected 5 axes (B, C, T, H, W), got {x.ndim}")
        if x.shape[1] != self.in_maps:
            raise DimensionError(
                f"channel axis: expected {self.in_maps} feature maps, got {x.shape[1]}")
        w = self.weight * self.scale
        if self.transposed:
            return F.conv_transpose3d(x, w, self.bias, stride=self.stride, padding=self.padding)
        return F.conv3d(x, w, self.bias, stride=self.stride, padding=self.padding)

    def output_shape(self, input_shape):
        """Spatio-temporal output extents for a (T, H, W) input size."""
        out = []
        for i, n in enumerate(input_shape):
            k, s, p = self.kernel[i], self.stride[i], self.padding[i]
            if self.transposed:
                out.append((n - 1) * s - 2 * p + k)
            else:
                out.append((n + 2 * p - k) // s + 1)
        return tuple(out)

    def extra_repr(self):
        kind = "transposed" if self.transposed else "conv"
        return (f"{kind}, {self.in_maps}->{self.out_maps}, kernel={self.kernel}, "
                f"stride={self.stride}, padding={self.padding}, scale={self.scale:.4g}")


class ScaledLinear(nn.Module):
    """Fully connected layer with the same runtime He scaling as ScaledConv3d."""

    def __init__(self, in_features, out_features):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_features, in_features))
        self.bias = nn.Parameter(torch.zeros(out_features))
        self.scale = math.sqrt(2.0 / in_features)

    def forward(self, x):
        return F.linear(x, self.weight * self.scale, self.bias)


def pixelwise_feature_norm(x, eps=1e-8):
    """Normalize the channel vector to unit mean square at every site.

    Applied independently at each (time, height, width) location:
    b = a / sqrt(mean(a^2 over channels) + eps). eps guards zero vectors.
    """
    return x * torch.rsqrt(x.pow(2).mean(dim=1, keepdim=True) + eps)


class PixelwiseNorm(nn.Module):
    def __init__(self, eps=1e-8):
        super().__init__()
        self.eps = eps

    def forward(self, x):
        return pixelwise_feature_norm(x, self.eps)


def minibatch_stddev(x, eps=1e-8):
    """Append one constant feature map holding the batch-wide variation.

    Per (feature, t, h, w) site the population standard deviation over the
    batch is computed; all those values are averaged into a single scalar,
    replicated as one extra feature map on every sample. eps keeps the sqrt
    differentiable where the batch variance is exactly zero (constant sites,
    batch size 1), at the cost of a floor of sqrt(eps) ~ 1e-4.
    """
    if x.ndim != 5:
        raise DimensionError(f"expected 5 axes (B, F, T, H, W), got {x.ndim}")
    var = x.var(dim=0, unbiased=False, keepdim=True)
    scalar = (var + eps).sqrt().mean()
    extra = scalar.expand(x.shape[0], 1, *x.shape[2:])
    return torch.cat([x, extra], dim=1)


class MinibatchStdDev(nn.Module):
    def __init__(self, eps=1e-8):
        super().__init__()
        self.eps = eps

    def forward(self, x):
        return minibatch_stddev(x, self.eps)


# resampling constructors; within-block convs use (3, 3, 3) kernels while
# resampling convs keep the temporal extent at 1 (spatial) or the spatial
# extents at 1 (temporal bottleneck)


def conv3x3x3(in_maps, out_maps):
    return ScaledConv3d(in_maps, out_maps, kernel=3, stride=1, padding=1)


class SpatialDown(ScaledConv3d):
    """Halve H and W with a (1, 4, 4)/(1, 2, 2) strided conv; T untouched."""

    def __init__(self, in_maps, out_maps):
        super().__init__(in_maps, out_maps, kernel=(1, 4, 4), stride=(1, 2, 2),
                         padding=(0, 1, 1))

    def forward(self, x):
        if x.shape[-1] % 2 or x.shape[-2] % 2:
            raise DimensionError(f"spatial axes must be even to halve, got {tuple(x.shape[-2:])}")
        return super().forward(x)


class SpatialUp(ScaledConv3d):
    """Double H and W with a transposed (1, 4, 4)/(1, 2, 2) conv; T untouched."""

    def __init__(self, in_maps, out_maps):
        super().__init__(in_maps, out_maps, kernel=(1, 4, 4), stride=(1, 2, 2),
                         padding=(0, 1, 1), transposed=True)


class TemporalCollapse(ScaledConv3d):
    """Encoder bottleneck: a (t_in, 1, 1) conv reducing the time axis to 1."""

    def __init__(self, in_maps, out_maps, t_in):
        super().__init__(in_maps, out_maps, kernel=(t_in, 1, 1))
        self.t_in = t_in

    def forward(self, x):
        if x.shape[2] != self.t_in:
            raise DimensionError(f"time axis: expected {self.t_in} frames, got {x.shape[2]}")
        return super().forward(x)


class TemporalExpand(ScaledConv3d):
    """Decoder bottleneck: a transposed (t_out, 1, 1) conv expanding T from 1 to t_out."""

    def __init__(self, in_maps, out_maps, t_out):
        super().__init__(in_maps, out_maps, kernel=(t_out, 1, 1), transposed=True)
        self.t_out = t_out

    def forward(self, x):
        if x.shape[2] != 1:
            raise DimensionError(f"time axis: expected collapsed depth 1, got {x.shape[2]}")
        return super().forward(x)
