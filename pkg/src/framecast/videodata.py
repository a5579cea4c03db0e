"""Synthetic bouncing-digit videos, generic video-folder loading, sequence
windowing, and the multi-resolution batch helpers used by progressive training.

Videos are stored as uint8 frames (T, H, W, C) and exposed to models as float32
tensors in [-1, 1] with axis order (C, T, H, W); batches stack to (B, C, T, H, W).
"""

import json
import logging
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DatasetError, DimensionError, GlyphSourceError, ValidationError

log = logging.getLogger(__name__)

GLYPH_SIZE = 28
CONTAINER_FORMAT = "framecast-dataset-1"


# ---------------------------------------------------------------------------
# configs


@dataclass
class MovingMnistConfig:
    """Parameters of the synthetic bouncing-digit dataset."""

    num_videos: int
    video_length: int = 36
    canvas: int = 64
    digits_per_video: int = 2
    speed_min: float = 3.0
    speed_max: float = 5.0
    seed: int = 0

    def validate(self):
        if self.num_videos < 1:
            raise ValidationError("num_videos must be >= 1")
        if self.video_length < 1:
            raise ValidationError("video_length must be >= 1")
        if self.canvas < GLYPH_SIZE:
            raise ValidationError(f"canvas must be >= glyph size ({GLYPH_SIZE})")
        if not 1 <= self.digits_per_video <= 10:
            raise ValidationError("digits_per_video must be in (1..10] to keep classes distinct")
        if self.speed_min < 0 or self.speed_max < self.speed_min:
            raise ValidationError("speed range must satisfy 0 <= speed_min <= speed_max")


@dataclass
class SequenceWindowing:
    """How a video is cut into (input, target) prediction windows.

    ``stride`` defaults to t_in + t_out, i.e. non-overlapping windows.
    """

    t_in: int
    t_out: int
    stride: int | None = None

    def __post_init__(self):
        if self.stride is None:
            self.stride = self.t_in + self.t_out
        if self.t_in < 1 or self.t_out < 1:
            raise ValidationError("t_in and t_out must be >= 1")
        if self.stride < 1:
            raise ValidationError("stride must be >= 1")

    @property
    def window(self):
        return self.t_in + self.t_out


# ---------------------------------------------------------------------------
# digit glyphs


def _prepare_glyph(img8):
    """Upscale one 8x8 digit to a 28x28 white-on-black glyph.

    The preparation targets the stroke statistics of the classic 28x28
    handwritten-digit images: bicubic upscale, binarize, erode to thin the
    strokes, then a light blur for soft edges. Peak value is exactly 1.
    """
    from PIL import Image

    up = Image.fromarray((np.clip(img8, 0, 1) * 255).astype(np.uint8), mode="L")
    up = np.asarray(up.resize((GLYPH_SIZE, GLYPH_SIZE), Image.BICUBIC), dtype=np.float32) / 255.0
    if up.max() > 0:
        up = up / up.max()
    mask = up > 0.27
    mask = ndimage.binary_erosion(mask, structure=np.ones((3, 3), bool), iterations=2)
    glyph = ndimage.gaussian_filter(mask.astype(np.float32), sigma=0.5)
    peak = glyph.max()
    if peak > 0:
        glyph = glyph / peak
    return np.clip(glyph, 0.0, 1.0)


def load_digit_glyphs(path=None):
    """Return (glyphs, labels): float32 (N, 28, 28) in [0, 1] plus class ids.

    By default the bundled scikit-learn handwritten-digit set is prepared via
    :func:`_prepare_glyph`. ``path`` may point to an .npz with arrays
    ``glyphs`` (N, 28, 28) and ``labels`` (N,) to substitute a custom source.
    """
    if path is not None:
        try:
            with np.load(path) as f:
                glyphs = np.asarray(f["glyphs"], dtype=np.float32)
                labels = np.asarray(f["labels"], dtype=np.int64)
        except Exception as exc:
            raise GlyphSourceError(f"cannot load glyph file {path}: {exc}") from exc
        if glyphs.ndim != 3 or glyphs.shape[1:] != (GLYPH_SIZE, GLYPH_SIZE):
            raise GlyphSourceError(f"glyph array must be (N, {GLYPH_SIZE}, {GLYPH_SIZE})")
        if len(glyphs) != len(labels) or len(glyphs) == 0:
            raise GlyphSourceError("glyphs and labels must be non-empty and aligned")
        return np.clip(glyphs, 0.0, 1.0), labels
    try:
        from sklearn.datasets import load_digits
    except ImportError as exc:
        raise GlyphSourceError(
            "no glyph source: scikit-learn is not installed and no glyph file was given"
        ) from exc
    raw = load_digits()
    glyphs = np.stack([_prepare_glyph(img / 16.0) for img in raw.images])
    return glyphs.astype(np.float32), raw.target.astype(np.int64)


# ---------------------------------------------------------------------------
# dataset container


class VideoDataset:
    """An immutable, in-memory collection of videos.

    Frames are uint8; all videos share resolution and channel count but may
    differ in length. Safe to read from multiple workers once constructed.
    """

    def __init__(self, videos, manifest):
        if not videos:
            raise DatasetError("dataset has no videos")
        first = videos[0]
        for i, v in enumerate(videos):
            if v.dtype != np.uint8 or v.ndim != 4:
                raise DatasetError(f"video {i}: expected uint8 (T, H, W, C) frames")
            if v.shape[1:] != first.shape[1:]:
                raise DatasetError(f"video {i}: resolution/channels differ from video 0")
        h, w = first.shape[1], first.shape[2]
        if h != w or h & (h - 1):
            raise DatasetError(f"frames must be square power-of-two, got {h}x{w}")
        self._videos = tuple(videos)
        self.manifest = dict(manifest)

    def __len__(self):
        return len(self._videos)

    @property
    def num_videos(self):
        return len(self._videos)

    @property
    def resolution(self):
        return self._videos[0].shape[1]

    @property
    def channels(self):
        return self._videos[0].shape[3]

    @property
    def lengths(self):
        return [v.shape[0] for v in self._videos]

    def frames_u8(self, i):
        """Raw uint8 frames of video ``i``, shape (T, H, W, C)."""
        return self._videos[i]

    def video(self, i):
        """Video ``i`` as float32 (C, T, H, W) in [-1, 1]."""
        v = self._videos[i].astype(np.float32) / 127.5 - 1.0
        return np.ascontiguousarray(v.transpose(3, 0, 1, 2))

    def save(self, path):
        """Write the dense container: frames + per-video lengths + manifest."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frames = np.concatenate(self._videos, axis=0)
        lengths = np.asarray(self.lengths, dtype=np.int64)
        manifest = dict(self.manifest, format=CONTAINER_FORMAT)
        blob = np.frombuffer(json.dumps(manifest, sort_keys=True).encode("utf-8"), dtype=np.uint8)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "wb") as f:
            np.savez(f, frames=frames, lengths=lengths, manifest=blob)
        tmp.replace(path)

    @classmethod
    def load(cls, path):
        try:
            with np.load(path) as f:
                frames = f["frames"]
                lengths = f["lengths"]
                manifest = json.loads(f["manifest"].tobytes().decode("utf-8"))
        except Exception as exc:
            raise DatasetError(f"cannot read dataset container {path}: {exc}") from exc
        if manifest.get("format") != CONTAINER_FORMAT:
            raise DatasetError(f"unknown dataset format: {manifest.get('format')!r}")
        videos, at = [], 0
        for n in lengths:
            videos.append(np.ascontiguousarray(frames[at:at + n]))
            at += n
        if at != len(frames):
            raise DatasetError("length table does not match stored frame count")
        return cls(videos, manifest)


# ---------------------------------------------------------------------------
# synthetic dataset generation


def generate_moving_mnist(config, glyphs=None):
    """Generate bouncing-digit videos on a black canvas.

    Digits of distinct classes start at uniform positions with direction
    uniform in [0, 2pi) and speed uniform in [speed_min, speed_max] px/frame;
    they reflect elastically off the canvas borders (the offending velocity
    component is negated) and composite by per-pixel maximum. Deterministic
    for a fixed seed; the order of RNG draws is part of the format.
    """
    config.validate()
    if glyphs is None:
        glyph_images, glyph_labels = load_digit_glyphs()
    else:
        glyph_images, glyph_labels = glyphs
    by_class = [np.flatnonzero(glyph_labels == c) for c in range(10)]
    if any(len(ix) == 0 for ix in by_class[: config.digits_per_video]):
        raise GlyphSourceError("glyph source must cover all 10 digit classes")

    rng = np.random.default_rng(config.seed)
    pmax = float(config.canvas - GLYPH_SIZE)
    videos = []
    for _ in range(config.num_videos):
        classes = rng.choice(10, size=config.digits_per_video, replace=False)
        digits = []
        for c in classes:
            glyph = glyph_images[rng.choice(by_class[c])]
            x = rng.uniform(0.0, pmax)
            y = rng.uniform(0.0, pmax)
            angle = rng.uniform(0.0, 2.0 * np.pi)
            speed = rng.uniform(config.speed_min, config.speed_max)
            vel = np.array([speed * np.cos(angle), speed * np.sin(angle)])
            if pmax == 0.0:
                vel[:] = 0.0
            digits.append([glyph, np.array([x, y]), vel])
        frames = np.zeros((config.video_length, config.canvas, config.canvas), dtype=np.float32)
        for t in range(config.video_length):
            frame = frames[t]
            for glyph, pos, _ in digits:
                xi = int(round(min(max(pos[0], 0.0), pmax)))
                yi = int(round(min(max(pos[1], 0.0), pmax)))
                region = frame[yi:yi + GLYPH_SIZE, xi:xi + GLYPH_SIZE]
                np.maximum(region, glyph, out=region)
            for _, pos, vel in digits:
                for k in (0, 1):
                    p = pos[k] + vel[k]
                    while p < 0.0 or p > pmax:
                        p = -p if p < 0.0 else 2.0 * pmax - p
                        vel[k] = -vel[k]
                    pos[k] = p
        videos.append(np.round(frames * 255.0).astype(np.uint8)[..., None])

    manifest = {"kind": "moving_mnist", "config": asdict(config)}
    return VideoDataset(videos, manifest)


# ---------------------------------------------------------------------------
# windowing


def count_windows(length, w: SequenceWindowing):
    """Number of windows a video of ``length`` frames yields (0 if too short)."""
    if length < w.window:
        return 0
    return (length - w.window) // w.stride + 1


class SequenceSet:
    """(input, target) windows over a :class:`VideoDataset`.

    Index pairs are materialized; frame data stays in the dataset and is
    normalized on access. ``skipped`` counts videos shorter than one window.
    """

    def __init__(self, dataset, windowing):
        self.dataset = dataset
        self.windowing = windowing
        self.skipped = 0
        self._index = []
        for vi, length in enumerate(dataset.lengths):
            n = count_windows(length, windowing)
            if n == 0:
                self.skipped += 1
                log.warning("video %d (%d frames) shorter than one %d-frame window; skipped",
                            vi, length, windowing.window)
                continue
            for k in range(n):
                self._index.append((vi, k * windowing.stride))

    def __len__(self):
        return len(self._index)

    def __getitem__(self, i):
        vi, start = self._index[i]
        v = self.dataset.video(vi)
        w = self.windowing
        return v[:, start:start + w.t_in], v[:, start + w.t_in:start + w.window]

    def batch(self, indices):
        """Stack windows into (B, C, t_in, H, W) and (B, C, t_out, H, W)."""
        pairs = [self[i] for i in indices]
        z = np.stack([p[0] for p in pairs])
        target = np.stack([p[1] for p in pairs])
        return z, target


def window_sequences(dataset, windowing):
    """Cut every video into windows taken at ``windowing.stride`` from frame 0."""
    return SequenceSet(dataset, windowing)


# ---------------------------------------------------------------------------
# resolution pipeline (numpy arrays and torch tensors alike)


def _check_spatial(x, r):
    h, w = x.shape[-2], x.shape[-1]
    if h != w:
        raise DimensionError(f"expected square frames, got H={h} W={w}")
    if r < 1 or r & (r - 1):
        raise ValidationError(f"target resolution {r} is not a power of two")
    return h


def downsample_to_resolution(batch, r):
    """Spatial nearest-neighbor reduction to r x r; the time axis is untouched.

    The index map is floor(i * H / r), i.e. plain strided selection; the op is
    exact, idempotent at the current resolution, and composes over
    power-of-two ratios.
    """
    h = _check_spatial(batch, r)
    if r > h:
        raise ValidationError(f"cannot downsample {h} -> {r}: target exceeds current resolution")
    if h % r:
        raise ValidationError(f"target resolution {r} does not divide {h}")
    f = h // r
    return batch[..., ::f, ::f]


def upsample_nearest(batch, factor=2):
    """Repeat each pixel ``factor`` times along both spatial axes."""
    if factor < 1:
        raise ValidationError("factor must be >= 1")
    if isinstance(batch, np.ndarray):
        return batch.repeat(factor, axis=-2).repeat(factor, axis=-1)
    return batch.repeat_interleave(factor, dim=-2).repeat_interleave(factor, dim=-1)


def blend_transition_input(batch, alpha):
    """Fade a batch toward its half-resolution, re-upsampled version.

    Returns alpha * batch + (1 - alpha) * upsample(downsample(batch, r/2)).
    Exact at both endpoints.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must be in [0, 1], got {alpha}")
    h = _check_spatial(batch, batch.shape[-1])
    if h < 2:
        raise ValidationError("cannot blend at resolution 1")
    blocky = upsample_nearest(downsample_to_resolution(batch, h // 2), 2)
    return alpha * batch + (1.0 - alpha) * blocky


# ---------------------------------------------------------------------------
# generic folder loading


_IMAGE_EXTS = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff"}


def load_video_folder(path, resize_resolution, channels=1):
    """Load per-video subfolders of ordered frame images.

    Frames are decoded, bicubically resized to resize_resolution, and stored
    as uint8 (grayscale or RGB per ``channels``); unreadable videos are
    rejected with a diagnostic rather than aborting the load.
    """
    from PIL import Image

    if channels not in (1, 3):
        raise ValidationError("channels must be 1 or 3")
    if resize_resolution < 4 or resize_resolution & (resize_resolution - 1):
        raise ValidationError("resize_resolution must be a power of two >= 4")
    root = Path(path)
    if not root.is_dir():
        raise DatasetError(f"not a directory: {root}")
    subdirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not subdirs:
        raise DatasetError(f"no per-video subdirectories under {root}")

    mode = "L" if channels == 1 else "RGB"
    videos, rejected = [], []
    for sub in subdirs:
        frame_files = sorted(p for p in sub.iterdir() if p.suffix.lower() in _IMAGE_EXTS)
        frames = []
        try:
            if not frame_files:
                raise DatasetError("no frame images")
            for fp in frame_files:
                with Image.open(fp) as im:
                    im = im.convert(mode).resize(
                        (resize_resolution, resize_resolution), Image.BICUBIC)
                arr = np.asarray(im, dtype=np.uint8)
                if channels == 1:
                    arr = arr[..., None]
                frames.append(arr)
        except Exception as exc:
            rejected.append(sub.name)
            log.warning("video folder %s rejected: %s", sub, exc)
            continue
        videos.append(np.stack(frames))
    if not videos:
        raise DatasetError(f"no readable videos under {root}")
    manifest = {
        "kind": "video_folder",
        "source": str(root),
        "resize_resolution": resize_resolution,
        "channels": channels,
        "rejected": rejected,
    }
    return VideoDataset(videos, manifest)
