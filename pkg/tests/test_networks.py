import copy

import pytest
import torch

from framecast.errors import DimensionError, ValidationError
from framecast.layers import PixelwiseNorm
from framecast.networks import (NetworkSpec, PhaseState, build_discriminator,
                                build_generator, grow)
from framecast.videodata import (blend_transition_input, downsample_to_resolution,
                                 upsample_nearest)


def small_spec(final=16, maps=16, t_in=3, t_out=2, **kw):
    return NetworkSpec(final_resolution=final, base_feature_maps=maps,
                       t_in=t_in, t_out=t_out, channels=1, **kw)


# -- spec ---------------------------------------------------------------------

def test_levels_enumeration():
    assert small_spec(final=64).levels() == [4, 8, 16, 32, 64]
    assert small_spec(final=4).levels() == [4]


def test_feature_map_schedule_paper_scale():
    spec = NetworkSpec(final_resolution=128, base_feature_maps=512)
    assert [spec.feature_maps(r) for r in (4, 8, 16, 32)] == [512] * 4
    assert spec.feature_maps(64) == 256
    assert spec.feature_maps(128) == 256  # one halving for all layers from 64 up


def test_feature_map_schedule_desk_scale():
    spec = small_spec(final=32, maps=32, halve_from_resolution=16)
    assert spec.feature_maps(8) == 32
    assert spec.feature_maps(16) == 16
    assert spec.feature_maps(32) == 16


def test_spec_validation():
    with pytest.raises(ValidationError):
        NetworkSpec(final_resolution=48).validate()
    with pytest.raises(ValidationError):
        NetworkSpec(final_resolution=4, t_in=0).validate()
    with pytest.raises(ValidationError):
        PhaseState(8, "stabilization", alpha=0.5)
    with pytest.raises(ValidationError):
        PhaseState(8, "warmup")


# -- shape contracts -------------------------------------------------------------

def test_shape_roundtrip_every_level_and_phase():
    torch.manual_seed(0)
    spec = small_spec(final=16)
    g = build_generator(spec)
    d = build_discriminator(spec)
    for res in spec.levels():
        if res > g.resolution:
            grow(g, res)
            grow(d, res)
        for kind, alpha in (("transition", 0.5), ("stabilization", 1.0)):
            phase = PhaseState(res, kind, alpha if kind == "transition" else 1.0)
            out = g(torch.randn(2, 1, spec.t_in, res, res), phase)
            assert out.shape == (2, 1, spec.t_out, res, res)
            s = d(torch.randn(2, 1, spec.t_in + spec.t_out, res, res), phase)
            assert s.shape == (2,)
            assert torch.isfinite(s).all()


def test_base_resolution_identity_shapes():
    spec = NetworkSpec(final_resolution=4, base_feature_maps=8, t_in=6, t_out=6)
    g = build_generator(spec)
    out = g(torch.randn(1, 1, 6, 4, 4), PhaseState(4, "stabilization"))
    assert out.shape == (1, 1, 6, 4, 4)


def test_scores_finite_for_unit_range_inputs():
    torch.manual_seed(1)
    spec = small_spec(final=8)
    d = build_discriminator(spec)
    d.grow(8)
    x = torch.rand(3, 1, spec.t_in + spec.t_out, 8, 8) * 2 - 1
    s = d(x, PhaseState(8, "transition", 0.25))
    assert s.shape == (3,) and torch.isfinite(s).all()


# -- growth ----------------------------------------------------------------------

def test_grow_validations():
    g = build_generator(small_spec(final=8))
    with pytest.raises(ValidationError):
        g.grow(16)  # must double
    g.grow(8)
    with pytest.raises(ValidationError):
        g.grow(16)  # beyond final


def test_grow_preserves_existing_parameters():
    torch.manual_seed(2)
    spec = small_spec(final=8)
    for net in (build_generator(spec), build_discriminator(spec)):
        before = {n: p.detach().clone() for n, p in net.named_parameters()}
        net.grow(8)
        after = dict(net.named_parameters())
        for name, p in before.items():
            assert torch.equal(p, after[name].detach())
        assert len(after) > len(before)


def test_growth_sequence_level_count():
    spec = small_spec(final=64)
    g = build_generator(spec)
    seen = [g.resolution]
    for res in (8, 16, 32, 64):
        g.grow(res)
        seen.append(g.resolution)
    assert seen == [4, 8, 16, 32, 64]  # log2(64/4) + 1 = 5 levels


# -- fading ------------------------------------------------------------------------

def _grown_pair(seed=3):
    torch.manual_seed(seed)
    spec = small_spec(final=8)
    g = build_generator(spec)
    d = build_discriminator(spec)
    g_pre, d_pre = copy.deepcopy(g), copy.deepcopy(d)
    g.grow(8)
    d.grow(8)
    return spec, g, d, g_pre, d_pre


def test_generator_fade_endpoints_and_growth_preservation():
    spec, g, d, g_pre, d_pre = _grown_pair()
    x = blend_transition_input(torch.randn(2, 1, spec.t_in, 8, 8), 0.0)
    with torch.no_grad():
        out0 = g(x, PhaseState(8, "transition", 0.0))
        pre = g_pre(downsample_to_resolution(x, 4), PhaseState(4, "stabilization"))
        assert torch.equal(out0, upsample_nearest(pre, 2))
        x_full = torch.randn(2, 1, spec.t_in, 8, 8)
        assert torch.equal(g(x_full, PhaseState(8, "transition", 1.0)),
                           g(x_full, PhaseState(8, "stabilization")))


def test_discriminator_fade_endpoints():
    spec, g, d, g_pre, d_pre = _grown_pair(seed=4)
    x = torch.randn(2, 1, spec.t_in + spec.t_out, 8, 8)
    with torch.no_grad():
        s0 = d(x, PhaseState(8, "transition", 0.0))
        s_pre = d_pre(downsample_to_resolution(x, 4), PhaseState(4, "stabilization"))
        assert torch.equal(s0, s_pre)
        assert torch.equal(d(x, PhaseState(8, "transition", 1.0)),
                           d(x, PhaseState(8, "stabilization")))


def test_fade_is_exact_convex_combination():
    spec, g, d, *_ = _grown_pair(seed=5)
    x = torch.randn(2, 1, spec.t_in, 8, 8)
    xd = torch.randn(2, 1, spec.t_in + spec.t_out, 8, 8)
    with torch.no_grad():
        for alpha in (0.25, 0.5, 0.9):
            comb = (alpha * g(x, PhaseState(8, "transition", 1.0))
                    + (1 - alpha) * g(x, PhaseState(8, "transition", 0.0)))
            assert torch.equal(g(x, PhaseState(8, "transition", alpha)), comb)
            comb_d = (alpha * d(xd, PhaseState(8, "transition", 1.0))
                      + (1 - alpha) * d(xd, PhaseState(8, "transition", 0.0)))
            assert torch.equal(d(xd, PhaseState(8, "transition", alpha)), comb_d)


# -- structure -----------------------------------------------------------------------

def test_discriminator_has_no_pixelnorm():
    d = build_discriminator(small_spec(final=16))
    d.grow(8)
    from framecast.networks import _ConvUnit

    for module in d.modules():
        assert not isinstance(module, PixelwiseNorm)
        if isinstance(module, _ConvUnit):
            assert module.pixelnorm is False
    summary = d.summary()
    assert all("PixelwiseNorm" not in e["type"] for e in summary["layers"])


def test_identical_batch_stddev_contribution_is_floor(monkeypatch):
    torch.manual_seed(6)
    spec = small_spec(final=4)
    d = build_discriminator(spec)
    captured = {}

    def hook(module, args, output):
        captured["appended"] = output[:, -1].detach()

    d.minibatch_stddev.register_forward_hook(hook)
    x = torch.randn(1, 1, spec.t_in + spec.t_out, 4, 4).repeat(4, 1, 1, 1, 1)
    d(x, PhaseState(4, "stabilization"))
    assert float(captured["appended"].abs().max()) <= 1e-3


def test_summary_lists_layers_and_counts():
    g = build_generator(small_spec(final=8))
    g.grow(8)
    s = g.summary()
    assert s["total_parameters"] == sum(p.numel() for p in g.parameters())
    assert s["levels"] == [4, 8]
    assert any(e["layer"].startswith("enc_from.8") for e in s["layers"])
    text = g.describe()
    assert "Generator @ 8x8" in text and "enc_from.8" in text


def test_input_validation_names_axis():
    spec = small_spec(final=4)
    g = build_generator(spec)
    d = build_discriminator(spec)
    ph = PhaseState(4, "stabilization")
    with pytest.raises(DimensionError, match="channel axis"):
        g(torch.randn(1, 2, spec.t_in, 4, 4), ph)
    with pytest.raises(DimensionError, match="time axis"):
        g(torch.randn(1, 1, spec.t_in + 1, 4, 4), ph)
    with pytest.raises(DimensionError, match="spatial axes"):
        d(torch.randn(1, 1, spec.t_in + spec.t_out, 8, 8), ph)
    with pytest.raises(ValidationError):
        g(torch.randn(1, 1, spec.t_in, 4, 4), PhaseState(8, "stabilization"))


def test_gradient_flow_through_active_paths():
    torch.manual_seed(7)
    spec = small_spec(final=8)
    g = build_generator(spec)
    d = build_discriminator(spec)
    g.grow(8)
    d.grow(8)
    for kind, alpha in (("transition", 0.5), ("stabilization", 1.0)):
        phase = PhaseState(8, kind, alpha if kind == "transition" else 1.0)
        g.zero_grad(set_to_none=True)
        d.zero_grad(set_to_none=True)
        z = torch.randn(2, 1, spec.t_in, 8, 8)
        fake = torch.cat([z, g(z, phase)], dim=2)
        d(fake, phase).sum().backward()
        graded = [p for p in list(g.parameters()) + list(d.parameters())
                  if p.grad is not None]
        assert graded, "no gradients flowed"
        for p in graded:
            assert torch.isfinite(p.grad).all()
        # the whole trunk participates in both kinds
        assert g.enc_stages[0].units[0].conv.weight.grad is not None
        assert d.base_stage.units[0].conv.weight.grad is not None
