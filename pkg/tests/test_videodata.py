import numpy as np
import pytest
import torch

from framecast.errors import DatasetError, GlyphSourceError, ValidationError
from framecast.videodata import (GLYPH_SIZE, MovingMnistConfig, SequenceWindowing,
                                 VideoDataset, blend_transition_input, count_windows,
                                 downsample_to_resolution, generate_moving_mnist,
                                 load_video_folder, upsample_nearest,
                                 window_sequences)


# -- generation -------------------------------------------------------------

def test_deterministic_for_fixed_seed(glyphs):
    cfg = MovingMnistConfig(num_videos=3, video_length=8, seed=42)
    a = generate_moving_mnist(cfg, glyphs=glyphs)
    b = generate_moving_mnist(cfg, glyphs=glyphs)
    for i in range(3):
        assert np.array_equal(a.frames_u8(i), b.frames_u8(i))


def test_different_seeds_differ(glyphs):
    a = generate_moving_mnist(MovingMnistConfig(num_videos=2, video_length=4, seed=1),
                              glyphs=glyphs)
    b = generate_moving_mnist(MovingMnistConfig(num_videos=2, video_length=4, seed=2),
                              glyphs=glyphs)
    assert not np.array_equal(a.frames_u8(0)[0], b.frames_u8(0)[0])


def test_zero_speed_gives_static_video(glyphs):
    cfg = MovingMnistConfig(num_videos=1, video_length=36, speed_min=0.0, speed_max=0.0,
                            seed=7)
    ds = generate_moving_mnist(cfg, glyphs=glyphs)
    frames = ds.frames_u8(0)
    assert frames.shape[0] == 36
    for t in range(1, 36):
        assert np.array_equal(frames[t], frames[0])


def test_video_length_and_black_canvas(glyphs):
    cfg = MovingMnistConfig(num_videos=2, video_length=5, seed=0)
    ds = generate_moving_mnist(cfg, glyphs=glyphs)
    assert ds.lengths == [5, 5]
    # digits composite on black background; glyph peak is full white
    for i in range(2):
        v = ds.frames_u8(i)
        assert v.min() == 0
        assert (v.max(axis=(1, 2, 3)) == 255).all()  # per-frame max equals glyph max


def test_digit_classes_distinct(glyphs):
    # distinctness is enforced by sampling without replacement; the degenerate
    # request of 11 distinct classes must fail validation
    with pytest.raises(ValidationError):
        generate_moving_mnist(MovingMnistConfig(num_videos=1, digits_per_video=11),
                              glyphs=glyphs)


def test_invalid_configs_rejected():
    with pytest.raises(ValidationError):
        MovingMnistConfig(num_videos=0).validate()
    with pytest.raises(ValidationError):
        MovingMnistConfig(num_videos=1, canvas=GLYPH_SIZE - 1).validate()
    with pytest.raises(ValidationError):
        MovingMnistConfig(num_videos=1, speed_min=5.0, speed_max=3.0).validate()


def test_missing_glyph_source_fails():
    with pytest.raises(GlyphSourceError):
        generate_moving_mnist(MovingMnistConfig(num_videos=1),
                              glyphs=(np.zeros((0, 28, 28), np.float32),
                                      np.zeros(0, np.int64)))


# -- windowing ----------------------------------------------------------------

def test_window_count_formula():
    w = SequenceWindowing(6, 6)  # stride defaults to 12
    assert w.stride == 12
    assert count_windows(36, w) == 3
    assert count_windows(12, w) == 1
    assert count_windows(11, w) == 0
    # the paper-scale splits follow from the same formula
    assert 2250 * count_windows(36, w) == 6750
    assert 4500 * count_windows(36, w) == 13500


def test_window_sequences_counts_and_skips(glyphs):
    ds = generate_moving_mnist(MovingMnistConfig(num_videos=1, video_length=12, seed=1),
                               glyphs=glyphs)
    seqs = window_sequences(ds, SequenceWindowing(6, 6))
    assert len(seqs) == 1 and seqs.skipped == 0

    short = generate_moving_mnist(MovingMnistConfig(num_videos=1, video_length=11, seed=1),
                                  glyphs=glyphs)
    seqs = window_sequences(short, SequenceWindowing(6, 6))
    assert len(seqs) == 0 and seqs.skipped == 1


def test_windows_reconstruct_prefix(tiny_dataset):
    w = SequenceWindowing(2, 2)
    seqs = window_sequences(tiny_dataset, w)
    per_video = count_windows(12, w)
    first = [seqs[i] for i in range(per_video)]
    stitched = np.concatenate([np.concatenate([z, t], axis=1) for z, t in first], axis=1)
    video = tiny_dataset.video(0)
    assert np.array_equal(stitched, video[:, :stitched.shape[1]])


def test_window_shapes_and_range(tiny_sequences):
    z, target = tiny_sequences[0]
    assert z.shape == (1, 6, 64, 64)
    assert target.shape == (1, 6, 64, 64)
    assert z.min() >= -1.0 and z.max() <= 1.0


# -- resolution pipeline ------------------------------------------------------

def test_downsample_identity_and_constants(rng):
    x = rng.random((2, 1, 3, 64, 64)).astype(np.float32)
    assert np.array_equal(downsample_to_resolution(x, 64), x)
    const = np.full((1, 1, 2, 4, 4), 0.37, np.float32)
    out = downsample_to_resolution(const, 2)
    assert out.shape == (1, 1, 2, 2, 2)
    assert (out == 0.37).all()


def test_downsample_checkerboard_hand_case():
    i, j = np.mgrid[0:4, 0:4]
    board = ((i + j) % 2).astype(np.float32)[None, None, None]
    out = downsample_to_resolution(board, 2)
    # index map floor(i * 4 / 2) selects rows/cols 0 and 2
    expect = board[..., [0, 2], :][..., [0, 2]]
    assert np.array_equal(out, expect)
    assert (out == 0).all()


def test_downsample_composition(rng):
    x = rng.random((1, 1, 2, 32, 32))
    a = downsample_to_resolution(downsample_to_resolution(x, 16), 8)
    b = downsample_to_resolution(x, 8)
    assert np.array_equal(a, b)


def test_downsample_rejects_upsampling(rng):
    x = rng.random((1, 1, 1, 8, 8))
    with pytest.raises(ValidationError):
        downsample_to_resolution(x, 16)


def test_blend_endpoints_exact(rng):
    x = rng.random((2, 1, 3, 8, 8)).astype(np.float32)
    assert np.array_equal(blend_transition_input(x, 1.0), x)
    blocky = upsample_nearest(downsample_to_resolution(x, 4), 2)
    assert np.array_equal(blend_transition_input(x, 0.0), blocky)


def test_blend_constants_and_torch_parity(rng):
    const = np.full((1, 1, 2, 8, 8), -0.25, np.float32)
    assert np.allclose(blend_transition_input(const, 0.5), const)
    x = rng.random((1, 1, 2, 8, 8)).astype(np.float32)
    out_np = blend_transition_input(x, 0.3)
    out_t = blend_transition_input(torch.from_numpy(x), 0.3).numpy()
    assert np.allclose(out_np, out_t, atol=1e-7)


def test_blend_rejects_bad_alpha(rng):
    x = rng.random((1, 1, 1, 4, 4))
    for alpha in (-0.1, 1.1):
        with pytest.raises(ValidationError):
            blend_transition_input(x, alpha)


def test_time_axis_untouched(rng):
    x = rng.random((1, 1, 7, 16, 16))
    assert downsample_to_resolution(x, 4).shape[2] == 7
    assert upsample_nearest(x, 2).shape[2] == 7


# -- container ----------------------------------------------------------------

def test_container_roundtrip_and_idempotent_save(tmp_path, tiny_dataset):
    p1 = tmp_path / "a.npz"
    p2 = tmp_path / "b.npz"
    tiny_dataset.save(p1)
    loaded = VideoDataset.load(p1)
    assert loaded.num_videos == tiny_dataset.num_videos
    assert loaded.manifest["kind"] == "moving_mnist"
    for i in range(loaded.num_videos):
        assert np.array_equal(loaded.frames_u8(i), tiny_dataset.frames_u8(i))
    loaded.save(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_container_rejects_garbage(tmp_path):
    p = tmp_path / "junk.npz"
    p.write_bytes(b"not a dataset")
    with pytest.raises(DatasetError):
        VideoDataset.load(p)


# -- folder loading -------------------------------------------------------------

def _write_video_folder(root, name, frames):
    from PIL import Image

    d = root / name
    d.mkdir(parents=True)
    for i, fr in enumerate(frames):
        Image.fromarray(fr).save(d / f"{i:03d}.png")


def test_load_video_folder_resizes_and_normalizes(tmp_path, rng):
    frames = [(rng.random((120, 160)) * 255).astype(np.uint8) for _ in range(12)]
    _write_video_folder(tmp_path, "vid0", frames)
    ds = load_video_folder(tmp_path, 128, channels=1)
    assert ds.num_videos == 1 and ds.lengths == [12]
    assert ds.resolution == 128 and ds.channels == 1

    black = [np.zeros((32, 32), np.uint8) for _ in range(2)]
    white = [np.full((32, 32), 255, np.uint8) for _ in range(2)]
    _write_video_folder(tmp_path / "bw", "b", black)
    _write_video_folder(tmp_path / "bw", "w", white)
    ds = load_video_folder(tmp_path / "bw", 32)
    assert (ds.video(0) == -1.0).all()
    assert (ds.video(1) == 1.0).all()


def test_load_video_folder_rgb(tmp_path, rng):
    frames = [(rng.random((24, 24, 3)) * 255).astype(np.uint8) for _ in range(3)]
    _write_video_folder(tmp_path, "color", frames)
    ds = load_video_folder(tmp_path, 16, channels=3)
    assert ds.channels == 3
    assert ds.video(0).shape == (3, 3, 16, 16)


def test_load_video_folder_rejects_bad_video(tmp_path, rng):
    frames = [(rng.random((16, 16)) * 255).astype(np.uint8) for _ in range(2)]
    _write_video_folder(tmp_path, "good", frames)
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "000.png").write_bytes(b"this is not an image")
    ds = load_video_folder(tmp_path, 16)
    assert ds.num_videos == 1
    assert ds.manifest["rejected"] == ["bad"]


def test_load_video_folder_empty_errors(tmp_path):
    with pytest.raises(DatasetError):
        load_video_folder(tmp_path, 16)
