"""The progressively growing generator and discriminator.

The generator is an encoder -> temporal bottleneck -> decoder stack of
weight-scaled 3d convolutions; the discriminator mirrors the encoder over
t_in + t_out frames and ends in a single unbounded score per sample.

Growth appends one stage per resolution doubling and never edits existing
modules. During a transition phase both networks evaluate two complete paths
(the newly grown one, and the previous-resolution one on a downsampled input)
and blend only at the output, so the faded forward is exactly the convex
combination of the endpoint paths and growth preserves the function at
alpha = 0.
"""

from dataclasses import dataclass

import torch.nn.functional as F
from torch import nn

from .errors import DimensionError, ValidationError
from .layers import (
    MinibatchStdDev,
    ScaledConv3d,
    ScaledLinear,
    SpatialDown,
    SpatialUp,
    TemporalCollapse,
    TemporalExpand,
    conv3x3x3,
    pixelwise_feature_norm,
)
from .videodata import downsample_to_resolution, upsample_nearest

PHASE_KINDS = ("transition", "stabilization", "final")


@dataclass
class PhaseState:
    """Resolution, phase kind, and the live fade-in weight of training."""

    resolution: int
    kind: str
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in PHASE_KINDS:
            raise ValidationError(f"unknown phase kind {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.kind != "transition" and self.alpha != 1.0:
            raise ValidationError(f"alpha must be 1 outside transition, got {self.alpha}")


@dataclass
class NetworkSpec:
    """Architecture hyperparameters shared by generator and discriminator."""

    final_resolution: int
    base_resolution: int = 4
    base_feature_maps: int = 512
    halve_from_resolution: int = 64
    t_in: int = 6
    t_out: int = 6
    channels: int = 1
    lrelu_slope: float = 0.2

    def validate(self):
        for name in ("final_resolution", "base_resolution", "halve_from_resolution"):
            r = getattr(self, name)
            if r < 1 or r & (r - 1):
                raise ValidationError(f"{name} must be a power of two, got {r}")
        if self.base_resolution < 4:
            raise ValidationError("base_resolution must be >= 4")
        if self.final_resolution < self.base_resolution:
            raise ValidationError("final_resolution must be >= base_resolution")
        if self.t_in < 1 or self.t_out < 1:
            raise ValidationError("t_in and t_out must be >= 1")
        if self.channels < 1:
            raise ValidationError("channels must be >= 1")
        if self.base_feature_maps < 1:
            raise ValidationError("base_feature_maps must be >= 1")

    def feature_maps(self, resolution):
        """Maps per layer: the base count below halve_from_resolution, halved
        once for every layer at or above it (minimum 1)."""
        if resolution < self.halve_from_resolution:
            return self.base_feature_maps
        return max(self.base_feature_maps // 2, 1)

    def levels(self):
        """All resolutions from base to final, doubling each step."""
        out, r = [], self.base_resolution
        while r <= self.final_resolution:
            out.append(r)
            r *= 2
        return out


class _ConvUnit(nn.Module):
    """conv -> LReLU -> (generator only) pixelwise feature norm."""

    def __init__(self, conv, slope, pixelnorm):
        super().__init__()
        self.conv = conv
        self.slope = slope
        self.pixelnorm = pixelnorm

    def forward(self, x):
        x = F.leaky_relu(self.conv(x), self.slope)
        if self.pixelnorm:
            x = pixelwise_feature_norm(x)
        return x


def _units(*convs, slope, pixelnorm):
    return nn.ModuleList(_ConvUnit(c, slope, pixelnorm) for c in convs)


class _Stage(nn.Module):
    def __init__(self, units):
        super().__init__()
        self.units = units

    def forward(self, x):
        for u in self.units:
            x = u(x)
        return x


class _Net(nn.Module):
    """Shared growth bookkeeping for both networks."""

    def __init__(self, spec):
        super().__init__()
        spec.validate()
        self.spec = spec
        self.current_level = 0

    @property
    def resolution(self):
        return self.spec.base_resolution * (2 ** self.current_level)

    def grow(self, new_resolution):
        """Append the blocks for the next resolution; existing weights are
        untouched. Returns the list of newly created parameters."""
        if new_resolution != 2 * self.resolution:
            raise ValidationError(
                f"can only grow {self.resolution} -> {2 * self.resolution}, "
                f"requested {new_resolution}")
        if new_resolution > self.spec.final_resolution:
            raise ValidationError(
                f"cannot grow past final resolution {self.spec.final_resolution}")
        before = {id(p) for p in self.parameters()}
        self._add_stage(new_resolution)
        self.current_level += 1
        return [p for p in self.parameters() if id(p) not in before]

    def _check_input(self, x, phase, t_expected):
        if x.ndim != 5:
            raise DimensionError(f"expected 5 axes (B, C, T, H, W), got {x.ndim}")
        if x.shape[1] != self.spec.channels:
            raise DimensionError(
                f"channel axis: expected {self.spec.channels}, got {x.shape[1]}")
        if x.shape[2] != t_expected:
            raise DimensionError(f"time axis: expected {t_expected} frames, got {x.shape[2]}")
        if x.shape[3] != x.shape[4]:
            raise DimensionError(f"expected square frames, got {x.shape[3]}x{x.shape[4]}")
        if x.shape[3] != self.resolution:
            raise DimensionError(
                f"spatial axes: network is at {self.resolution}, input is {x.shape[3]}")
        if phase.resolution != self.resolution:
            raise ValidationError(
                f"phase resolution {phase.resolution} != network resolution {self.resolution}")

    def summary(self):
        """JSON-friendly listing of layers, weight shapes, and parameter counts."""
        entries = []
        for name, module in self.named_modules():
            params = {n: tuple(p.shape) for n, p in module.named_parameters(recurse=False)}
            if params:
                entries.append({
                    "layer": name,
                    "type": type(module).__name__,
                    "shapes": params,
                    "parameters": sum(p.numel() for p in module.parameters(recurse=False)),
                })
        return {
            "network": type(self).__name__,
            "resolution": self.resolution,
            "levels": self.spec.levels()[: self.current_level + 1],
            "total_parameters": sum(p.numel() for p in self.parameters()),
            "layers": entries,
        }

    def describe(self):
        s = self.summary()
        lines = [f"{s['network']} @ {s['resolution']}x{s['resolution']} "
                 f"({s['total_parameters']} parameters)"]
        for e in s["layers"]:
            shapes = ", ".join(f"{k}{list(v)}" for k, v in e["shapes"].items())
            lines.append(f"  {e['layer']:<40s} {e['type']:<18s} {shapes}")
        return "\n".join(lines)


class Generator(_Net):
    """Predicts t_out future frames from t_in past frames at the current
    resolution; the final frame projection is linear, so outputs are unbounded."""

    def __init__(self, spec):
        super().__init__(spec)
        nf = spec.feature_maps(spec.base_resolution)
        slope = spec.lrelu_slope
        self.enc_from = nn.ModuleDict()
        self.dec_to = nn.ModuleDict()
        self.enc_stages = nn.ModuleList()
        self.dec_stages = nn.ModuleList()

        self.enc_from[str(spec.base_resolution)] = _ConvUnit(
            ScaledConv3d(spec.channels, nf, 1), slope, pixelnorm=True)
        self.enc_stages.append(_Stage(_units(
            conv3x3x3(nf, nf), conv3x3x3(nf, nf),
            TemporalCollapse(nf, nf, spec.t_in),
            slope=slope, pixelnorm=True)))
        self.dec_stages.append(_Stage(_units(
            TemporalExpand(nf, nf, spec.t_out),
            conv3x3x3(nf, nf), conv3x3x3(nf, nf),
            slope=slope, pixelnorm=True)))
        self.dec_to[str(spec.base_resolution)] = ScaledConv3d(nf, spec.channels, 1)

    def _add_stage(self, resolution):
        spec = self.spec
        nf_new = spec.feature_maps(resolution)
        nf_old = spec.feature_maps(resolution // 2)
        slope = spec.lrelu_slope
        self.enc_from[str(resolution)] = _ConvUnit(
            ScaledConv3d(spec.channels, nf_new, 1), slope, pixelnorm=True)
        self.enc_stages.append(_Stage(_units(
            conv3x3x3(nf_new, nf_new), SpatialDown(nf_new, nf_old),
            slope=slope, pixelnorm=True)))
        self.dec_stages.append(_Stage(_units(
            SpatialUp(nf_old, nf_new), conv3x3x3(nf_new, nf_new),
            slope=slope, pixelnorm=True)))
        self.dec_to[str(resolution)] = ScaledConv3d(nf_new, spec.channels, 1)

    def _path(self, x, level):
        h = self.enc_from[str(self.spec.base_resolution * 2 ** level)](x)
        for lvl in range(level, -1, -1):
            h = self.enc_stages[lvl](h)
        for lvl in range(level + 1):
            h = self.dec_stages[lvl](h)
        return self.dec_to[str(self.spec.base_resolution * 2 ** level)](h)

    def forward(self, x, phase):
        self._check_input(x, phase, self.spec.t_in)
        level = self.current_level
        new = self._path(x, level)
        if phase.kind != "transition" or level == 0:
            return new
        old = self._path(downsample_to_resolution(x, self.resolution // 2), level - 1)
        return phase.alpha * new + (1.0 - phase.alpha) * upsample_nearest(old, 2)


class Discriminator(_Net):
    """Scores a t_in + t_out frame sequence with one unbounded scalar."""

    def __init__(self, spec):
        super().__init__(spec)
        nf = spec.feature_maps(spec.base_resolution)
        slope = spec.lrelu_slope
        t_total = spec.t_in + spec.t_out
        self.disc_from = nn.ModuleDict()
        self.disc_from[str(spec.base_resolution)] = _ConvUnit(
            ScaledConv3d(spec.channels, nf, 1), slope, pixelnorm=False)
        self.stages = nn.ModuleList()  # stages[i] handles level i + 1
        self.minibatch_stddev = MinibatchStdDev()
        self.base_stage = _Stage(_units(
            conv3x3x3(nf + 1, nf), conv3x3x3(nf, nf),
            TemporalCollapse(nf, nf, t_total),
            slope=slope, pixelnorm=False))
        self.score = ScaledLinear(nf * spec.base_resolution ** 2, 1)

    def _add_stage(self, resolution):
        spec = self.spec
        nf_new = spec.feature_maps(resolution)
        nf_old = spec.feature_maps(resolution // 2)
        slope = spec.lrelu_slope
        self.disc_from[str(resolution)] = _ConvUnit(
            ScaledConv3d(spec.channels, nf_new, 1), slope, pixelnorm=False)
        self.stages.append(_Stage(_units(
            conv3x3x3(nf_new, nf_new), SpatialDown(nf_new, nf_old),
            slope=slope, pixelnorm=False)))

    def _path(self, x, level):
        h = self.disc_from[str(self.spec.base_resolution * 2 ** level)](x)
        for lvl in range(level, 0, -1):
            h = self.stages[lvl - 1](h)
        h = self.minibatch_stddev(h)
        h = self.base_stage(h)
        return self.score(h.flatten(1)).squeeze(1)

    def forward(self, x, phase):
        self._check_input(x, phase, self.spec.t_in + self.spec.t_out)
        level = self.current_level
        new = self._path(x, level)
        if phase.kind != "transition" or level == 0:
            return new
        old = self._path(downsample_to_resolution(x, self.resolution // 2), level - 1)
        return phase.alpha * new + (1.0 - phase.alpha) * old


def build_generator(spec):
    """A generator at the spec's base resolution."""
    return Generator(spec)


def build_discriminator(spec):
    """A discriminator at the spec's base resolution."""
    return Discriminator(spec)


def grow(network, new_resolution):
    """Grow either network by one resolution doubling; see _Net.grow."""
    return network.grow(new_resolution)
