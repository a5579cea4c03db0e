"""Quantitative evaluation: per-frame MSE / PSNR / SSIM over a test split,
the CopyLast baseline, and recursive long-term prediction.

Conventions: predictions are clamped to [-1, 1]; PSNR and SSIM are computed
on values mapped to [0, 1] with dynamic range 1, while the reported MSE is on
the native [-1, 1] pixel scale (the scale training operates on, and the one
comparable across published video-prediction baselines). frame_metrics is the
range-1 primitive: given [0, 1] inputs it reports the [0, 1]-unit MSE, so
psnr == 10*log10(1/mse) holds for its outputs.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .errors import DimensionError, ValidationError

PSNR_CAP_DB = 100.0
_MSE_FLOOR = 1e-10


def _gaussian_1d(size=11, sigma=1.5):
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    return torch.from_numpy(g / g.sum())


_SSIM_G = _gaussian_1d()
_SSIM_ROW = _SSIM_G.reshape(1, 1, 1, -1)
_SSIM_COL = _SSIM_G.reshape(1, 1, -1, 1)
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def ssim_map(a, b):
    """Full-frame SSIM map between two [0, 1] images of equal shape (H, W).

    11x11 Gaussian window (sigma 1.5), k1=0.01, k2=0.03, dynamic range 1;
    local statistics use reflected borders so the map covers every pixel.
    """
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    x = torch.as_tensor(np.asarray(a), dtype=torch.float64)[None, None]
    y = torch.as_tensor(np.asarray(b), dtype=torch.float64)[None, None]
    return _ssim_maps_batched(x, y)[0, 0].numpy()


def _ssim_maps_batched(x, y):
    """(N, 1, H, W) float64 pairs -> (N, 1, H, W) SSIM maps."""
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    half = _SSIM_G.shape[0] // 2
    pad = (half, half, half, half)

    def local(t):
        # the Gaussian window is separable; two 1d passes over reflected pads
        out = F.conv2d(F.pad(t, pad, mode="reflect"), _SSIM_ROW)
        return F.conv2d(out, _SSIM_COL)

    mu_x, mu_y = local(x), local(y)
    var_x = local(x * x) - mu_x ** 2
    var_y = local(y * y) - mu_y ** 2
    cov = local(x * y) - mu_x * mu_y
    return (((2 * mu_x * mu_y + c1) * (2 * cov + c2))
            / ((mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)))


def frame_metrics(pred, truth):
    """{mse, psnr_db, ssim} for one frame pair with values in [0, 1].

    Frames are (H, W) or (C, H, W); SSIM is averaged over channels. PSNR is
    10*log10(1/mse), capped at 100 dB when mse < 1e-10.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DimensionError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    if pred.ndim == 2:
        pred, truth = pred[None], truth[None]
    if pred.ndim != 3:
        raise DimensionError(f"expected (H, W) or (C, H, W), got {pred.ndim} axes")
    mse = float(((pred - truth) ** 2).mean())
    psnr = PSNR_CAP_DB if mse < _MSE_FLOOR else 10.0 * math.log10(1.0 / mse)
    x = torch.from_numpy(pred)[:, None]
    y = torch.from_numpy(truth)[:, None]
    ssim = float(_ssim_maps_batched(x, y).mean())
    return {"mse": mse, "psnr_db": psnr, "ssim": ssim}


def map_to_unit(x):
    """Clamp [-1, 1] pixel values and map them linearly to [0, 1]."""
    return (np.clip(x, -1.0, 1.0) + 1.0) / 2.0


# ---------------------------------------------------------------------------
# baselines and drivers


def copy_last_baseline(z, t_out):
    """Repeat the last input frame t_out times; z is (C, T, H, W)."""
    if t_out < 1:
        raise ValidationError("t_out must be >= 1")
    z = np.asarray(z)
    if z.ndim != 4 or z.shape[1] < 1:
        raise DimensionError("input sequence must be a non-empty (C, T, H, W) array")
    return np.repeat(z[:, -1:], t_out, axis=1)


def copylast_predictor(t_out):
    """Batch predictor form of the baseline: (B, C, T, H, W) -> (B, C, t_out, H, W)."""
    if t_out < 1:
        raise ValidationError("t_out must be >= 1")

    def predict(z):
        z = np.asarray(z)
        if z.ndim != 5 or z.shape[2] < 1:
            raise DimensionError("expected a non-empty (B, C, T, H, W) batch")
        return np.repeat(z[:, :, -1:], t_out, axis=2)

    return predict


@dataclass
class MetricsReport:
    """Per-frame and horizon-averaged metrics plus run metadata.

    ``mse`` entries are squared error on the native [-1, 1] pixel scale;
    ``psnr_db`` and ``ssim`` are computed on the [0, 1] mapping with dynamic
    range 1. ``averaged`` is the mean of the per-frame entries.
    """

    per_frame: list
    averaged: dict
    metadata: dict = field(default_factory=dict)

    def to_json(self, path=None):
        text = json.dumps({"per_frame": self.per_frame, "averaged": self.averaged,
                           "metadata": self.metadata}, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as f:
                f.write(text + "\n")
        return text

    def to_csv(self, path=None):
        lines = ["frame,mse,psnr_db,ssim"]
        for i, row in enumerate(self.per_frame, start=1):
            lines.append(f"{i},{row['mse']!r},{row['psnr_db']!r},{row['ssim']!r}")
        a = self.averaged
        lines.append(f"average,{a['mse']!r},{a['psnr_db']!r},{a['ssim']!r}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as f:
                f.write(text)
        return text

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["per_frame"], d["averaged"], d.get("metadata", {}))


def evaluate(predictor, sequences, batch_size=256, metadata=None):
    """Run a predictor over a windowed test split and aggregate frame metrics.

    ``predictor`` maps a (B, C, t_in, H, W) batch in [-1, 1] to predictions of
    (B, C, t_out, H, W). Per-frame means use exact (fsum) accumulation, so the
    report is invariant to the ordering of the split.
    """
    n = len(sequences)
    if n == 0:
        raise ValidationError("empty test split")
    t_out = sequences.windowing.t_out
    per_seq = [{"mse": [], "psnr_db": [], "ssim": []} for _ in range(t_out)]

    for at in range(0, n, batch_size):
        idx = range(at, min(at + batch_size, n))
        z, target = sequences.batch(idx)
        pred = np.asarray(predictor(z))
        if pred.shape != target.shape:
            raise DimensionError(
                f"predictor returned {pred.shape}, expected {target.shape}")
        p01 = map_to_unit(pred).astype(np.float64)
        t01 = map_to_unit(target).astype(np.float64)
        # (B, t_out) per-sequence, per-horizon values
        mse01 = ((p01 - t01) ** 2).mean(axis=(1, 3, 4))
        b, c = p01.shape[0], p01.shape[1]
        # channels folded into the batch axis; averaged back per (seq, frame)
        flat_p = torch.from_numpy(p01).permute(0, 2, 1, 3, 4).reshape(-1, 1, *p01.shape[-2:])
        flat_t = torch.from_numpy(t01).permute(0, 2, 1, 3, 4).reshape(-1, 1, *t01.shape[-2:])
        smaps = _ssim_maps_batched(flat_p, flat_t)
        ssim_vals = smaps.mean(dim=(1, 2, 3)).reshape(b, t_out, c).mean(dim=2).numpy()
        for k in range(t_out):
            for j in range(len(mse01)):
                m01 = float(mse01[j, k])
                per_seq[k]["mse"].append(4.0 * m01)  # native [-1, 1] scale
                per_seq[k]["psnr_db"].append(
                    PSNR_CAP_DB if m01 < _MSE_FLOOR else 10.0 * math.log10(1.0 / m01))
                per_seq[k]["ssim"].append(float(ssim_vals[j, k]))

    per_frame = [{key: math.fsum(vals[key]) / n for key in ("mse", "psnr_db", "ssim")}
                 for vals in per_seq]
    averaged = {key: math.fsum(row[key] for row in per_frame) / t_out
                for key in ("mse", "psnr_db", "ssim")}
    meta = {"t_in": sequences.windowing.t_in, "t_out": t_out,
            "resolution": sequences.dataset.resolution, "sample_count": n}
    meta.update(metadata or {})
    return MetricsReport(per_frame, averaged, meta)


# ---------------------------------------------------------------------------
# long-term prediction


@dataclass
class LongTermResult:
    """Recursive rollout output; ``completed`` is False on a model failure."""

    frames: np.ndarray  # (C, n_predicted, H, W)
    passes: int
    completed: bool
    error: str | None = None


def long_term_predict(predictor, z, n_steps, t_in, t_out):
    """Predict ``n_steps`` frames by feeding predictions back in as inputs.

    Each pass predicts t_out frames and the input window slides to the most
    recent t_in frames of (real inputs ++ predictions); the first passes mix
    trailing real frames with leading predictions. Output is truncated to
    n_steps. Runs ceil(n_steps / t_out) passes.
    """
    z = np.asarray(z)
    if z.ndim != 4:
        raise DimensionError("input sequence must be (C, T, H, W)")
    if z.shape[1] < t_in:
        raise DimensionError(f"need at least t_in={t_in} real frames, got {z.shape[1]}")
    if n_steps < t_out:
        raise ValidationError(f"n_steps must be >= t_out ({t_out}), got {n_steps}")
    history = z
    predicted = []
    passes = 0
    total_passes = math.ceil(n_steps / t_out)
    try:
        for _ in range(total_passes):
            window = history[:, -t_in:]
            out = np.asarray(predictor(window[None]))[0]
            if out.shape[1] != t_out:
                raise DimensionError(f"predictor returned {out.shape[1]} frames, "
                                     f"expected {t_out}")
            predicted.append(out)
            history = np.concatenate([history, out], axis=1)
            passes += 1
    except Exception as exc:  # partial result flagged rather than lost
        frames = (np.concatenate(predicted, axis=1)[:, :n_steps] if predicted
                  else z[:, :0])
        return LongTermResult(frames, passes, completed=False, error=str(exc))
    frames = np.concatenate(predicted, axis=1)[:, :n_steps]
    return LongTermResult(frames, passes, completed=True)
