"""Progressive training orchestration.

Walks the growth schedule (transition / stabilization per level plus the
final extra epochs), ramps alpha linearly per iteration inside transitions,
alternates one discriminator and one generator Adam step per iteration,
decays the learning rate per resolution level, and checkpoints at phase
boundaries and on a fixed iteration cadence.

Determinism: one seed fans out to weight init, the interpolation-u stream,
and the per-epoch shuffle (a pure function of (seed, epoch)), so two runs
with the same seed on the same platform produce identical diagnostics, and a
checkpoint restores bit-identical continued behavior.
"""

import hashlib
import json
import math
import pickle
import shutil
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from .errors import (CheckpointError, ConfigConflictError, TrainingFault,
                     ValidationError)
from .losses import LossCoefficients, discriminator_loss, generator_loss
from .networks import Discriminator, Generator, NetworkSpec, PhaseState
from .videodata import blend_transition_input, downsample_to_resolution

CHECKPOINT_FORMAT = "framecast-checkpoint-1"


# ---------------------------------------------------------------------------
# schedule


@dataclass
class GrowthSchedule:
    """Ordered resolution levels and the epoch budget of each phase.

    Every level, the base one included, accounts epochs_transition +
    epochs_stabilization epochs (the base level has no old path, so its
    "transition" epochs run with alpha held at 1); the last level adds
    epochs_final_extra on top.
    """

    levels: list
    epochs_transition: int = 10
    epochs_stabilization: int = 10
    epochs_final_extra: int = 20

    @property
    def total_epochs(self):
        per_level = self.epochs_transition + self.epochs_stabilization
        return len(self.levels) * per_level + self.epochs_final_extra

    def phases(self):
        """[(level_index, resolution, kind, epochs), ...] in execution order."""
        out = []
        for i, res in enumerate(self.levels):
            out.append((i, res, "transition", self.epochs_transition))
            out.append((i, res, "stabilization", self.epochs_stabilization))
        last = len(self.levels) - 1
        out.append((last, self.levels[last], "final", self.epochs_final_extra))
        return out


def build_schedule(final_resolution, base_resolution=4, epochs_transition=10,
                   epochs_stabilization=10, epochs_final_extra=20):
    """Schedule with one level per resolution doubling from base to final."""
    for name, r in (("final_resolution", final_resolution), ("base_resolution", base_resolution)):
        if r < 4 or r & (r - 1):
            raise ValidationError(f"{name} must be a power of two >= 4, got {r}")
    if final_resolution < base_resolution:
        raise ValidationError("final_resolution must be >= base_resolution")
    levels, r = [], base_resolution
    while r <= final_resolution:
        levels.append(r)
        r *= 2
    return GrowthSchedule(levels, epochs_transition, epochs_stabilization, epochs_final_extra)


@dataclass
class OptimizerConfig:
    learning_rate_base: float = 0.001
    beta1: float = 0.0
    beta2: float = 0.99
    lr_decay_per_level: float = 0.87
    batch_size_per_level: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValidationError("betas must lie in [0, 1)")
        if any(b < 1 for b in self.batch_size_per_level.values()):
            raise ValidationError("batch sizes must be >= 1")

    def batch_size(self, resolution):
        try:
            return self.batch_size_per_level[resolution]
        except KeyError:
            raise ValidationError(f"no batch size configured for resolution {resolution}")


def default_batch_sizes(levels, base=16):
    """Desk-scale default: halve the batch per resolution level, minimum 1."""
    return {res: max(base >> i, 1) for i, res in enumerate(levels)}


def lr_for_level(config, level_index):
    """learning_rate_base decayed once per resolution step."""
    if level_index < 0:
        raise ValidationError("level_index must be >= 0")
    return config.learning_rate_base * config.lr_decay_per_level ** level_index


def alpha_at(iteration, iterations_in_transition):
    """Linear fade-in weight, clamped to [0, 1]; 1 for an empty transition."""
    if iterations_in_transition <= 0:
        return 1.0
    return min(max(iteration / iterations_in_transition, 0.0), 1.0)


# ---------------------------------------------------------------------------
# flat key = value config file


@dataclass
class TrainConfig:
    """Every knob of a training run; round-trips through a flat key = value file."""

    final_resolution: int = 64
    base_resolution: int = 4
    base_feature_maps: int = 512
    halve_from_resolution: int = 64
    t_in: int = 6
    t_out: int = 6
    channels: int = 1
    lrelu_slope: float = 0.2
    learning_rate_base: float = 0.001
    beta1: float = 0.0
    beta2: float = 0.99
    lr_decay_per_level: float = 0.87
    batch_size_base: int = 16
    epochs_transition: int = 10
    epochs_stabilization: int = 10
    epochs_final_extra: int = 20
    lambda_gp: float = 10.0
    epsilon_drift: float = 0.001
    seed: int = 0
    checkpoint_every: int = 1000

    def network_spec(self):
        return NetworkSpec(
            final_resolution=self.final_resolution,
            base_resolution=self.base_resolution,
            base_feature_maps=self.base_feature_maps,
            halve_from_resolution=self.halve_from_resolution,
            t_in=self.t_in, t_out=self.t_out, channels=self.channels,
            lrelu_slope=self.lrelu_slope)

    def schedule(self):
        return build_schedule(self.final_resolution, self.base_resolution,
                              self.epochs_transition, self.epochs_stabilization,
                              self.epochs_final_extra)

    def optimizer_config(self):
        levels = self.schedule().levels
        return OptimizerConfig(
            learning_rate_base=self.learning_rate_base, beta1=self.beta1,
            beta2=self.beta2, lr_decay_per_level=self.lr_decay_per_level,
            batch_size_per_level=default_batch_sizes(levels, self.batch_size_base))

    def loss_coefficients(self):
        return LossCoefficients(lambda_gp=self.lambda_gp, epsilon_drift=self.epsilon_drift)

    def to_file(self, path):
        lines = [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_file(cls, path):
        known = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ValidationError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = float(val) if known[key] in (float, "float") else int(val)
        return cls(**values)


def config_hash(config):
    blob = json.dumps(asdict(config), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def config_diff(old, new):
    """One line per key whose value differs between two config dicts."""
    lines = []
    for key in sorted(set(old) | set(new)):
        a, b = old.get(key, "<missing>"), new.get(key, "<missing>")
        if a != b:
            lines.append(f"{key}: checkpoint={a} requested={b}")
    return lines


# ---------------------------------------------------------------------------
# checkpoint container


def _tensors_to_numpy(obj):
    if isinstance(obj, torch.Tensor):
        return obj.detach().cpu().numpy()
    if isinstance(obj, dict):
        return {k: _tensors_to_numpy(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return type(obj)(_tensors_to_numpy(v) for v in obj)
    return obj


def _numpy_to_tensors(obj):
    if isinstance(obj, np.ndarray):
        return torch.from_numpy(obj.copy())
    if isinstance(obj, dict):
        return {k: _numpy_to_tensors(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return type(obj)(_numpy_to_tensors(v) for v in obj)
    return obj


def save_checkpoint(state, path):
    """Atomically write a TrainState payload (see Trainer.state_payload)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        pickle.dump(state, f, protocol=4)
    tmp.replace(path)


def load_checkpoint(path):
    """Read and validate a checkpoint; corrupt files raise without partial state."""
    try:
        with open(path, "rb") as f:
            state = pickle.load(f)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(state, dict):
        raise CheckpointError(f"{path}: not a checkpoint file")
    if state.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(
            f"{path}: unknown checkpoint format {state.get('format')!r}")
    if state.get("config_hash") != config_hash(TrainConfig(**state["config"])):
        raise CheckpointError(f"{path}: config hash mismatch, file is corrupt or edited")
    return state


# ---------------------------------------------------------------------------
# trainer


class Trainer:
    """Owns both networks and optimizers and walks the growth schedule.

    One controller instance owns parameter mutation; forward passes elsewhere
    must use a checkpoint copy.
    """

    def __init__(self, config, sequences, out_dir=None, _from_state=None):
        self.config = config
        self.sequences = sequences
        self.out_dir = Path(out_dir) if out_dir else None
        if sequences.windowing.t_in != config.t_in or sequences.windowing.t_out != config.t_out:
            raise ValidationError(
                f"windowing ({sequences.windowing.t_in}, {sequences.windowing.t_out}) does not "
                f"match config t_in/t_out ({config.t_in}, {config.t_out})")
        if sequences.dataset.resolution < config.final_resolution:
            raise ValidationError(
                f"dataset resolution {sequences.dataset.resolution} is below the "
                f"final resolution {config.final_resolution}")

        self.spec = config.network_spec()
        self.growth = config.schedule()
        self.opt_config = config.optimizer_config()
        self.coeff = config.loss_coefficients()
        self.phases = self.growth.phases()
        if len(sequences) < 1:
            raise ValidationError("empty sequence set")
        smallest = min(self.opt_config.batch_size_per_level.values())
        if len(sequences) < smallest:
            raise ValidationError(
                f"dataset ({len(sequences)} sequences) smaller than one batch ({smallest})")

        if _from_state is None:
            torch.manual_seed(config.seed)
        self.generator = Generator(self.spec)
        self.discriminator = Discriminator(self.spec)
        self.u_generator = torch.Generator().manual_seed(config.seed + 0x5EED)
        betas = (self.opt_config.beta1, self.opt_config.beta2)
        lr0 = lr_for_level(self.opt_config, 0)
        self.g_opt = torch.optim.Adam(self.generator.parameters(), lr=lr0, betas=betas)
        self.d_opt = torch.optim.Adam(self.discriminator.parameters(), lr=lr0, betas=betas)

        self.phase_index = 0
        self.epoch_in_phase = 0
        self.iter_in_epoch = 0
        self.global_step = 0
        self.events = []
        self._log_file = None

        if _from_state is not None:
            self._restore(_from_state)
        else:
            self._announce_phase()

    # -- bookkeeping ---------------------------------------------------

    def _grow_to(self, level):
        while self.generator.current_level < level:
            res = self.generator.resolution * 2
            new_g = self.generator.grow(res)
            new_d = self.discriminator.grow(res)
            self.g_opt.add_param_group({"params": new_g})
            self.d_opt.add_param_group({"params": new_d})

    def _set_lr(self, level):
        lr = lr_for_level(self.opt_config, level)
        for opt in (self.g_opt, self.d_opt):
            for group in opt.param_groups:
                group["lr"] = lr
        return lr

    def _announce_phase(self):
        level, res, kind, epochs = self.phases[self.phase_index]
        if level > self.generator.current_level:
            self._grow_to(level)
            self._event({"event": "grow", "to_resolution": res,
                         "from_resolution": res // 2, "step": self.global_step})
        self._set_lr(level)
        if kind == "final":
            self._event({"event": "final_phase", "resolution": res, "step": self.global_step})
        self._event({"event": "phase_start", "phase_index": self.phase_index,
                     "resolution": res, "kind": kind, "epochs": epochs,
                     "step": self.global_step})

    def _event(self, record):
        self.events.append(record)
        self._write_log(record)

    def _write_log(self, record):
        if self.out_dir is None:
            return
        if self._log_file is None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self._log_file = open(self.out_dir / "training_log.jsonl", "a")
        self._log_file.write(json.dumps(record) + "\n")
        self._log_file.flush()

    def _epochs_before_phase(self, phase_index):
        return sum(p[3] for p in self.phases[:phase_index])

    @property
    def global_epoch(self):
        return self._epochs_before_phase(self.phase_index) + self.epoch_in_phase

    def _batch_size(self):
        _, res, _, _ = self.phases[self.phase_index]
        return min(self.opt_config.batch_size(res), len(self.sequences))

    def _iterations_per_epoch(self):
        return math.ceil(len(self.sequences) / self._batch_size())

    def _epoch_order(self):
        rng = np.random.default_rng([self.config.seed, 1000003, self.global_epoch])
        return rng.permutation(len(self.sequences))

    def phase_state(self):
        """The live PhaseState at the cursor position."""
        level, res, kind, epochs = self.phases[self.phase_index]
        if kind == "transition" and level > 0:
            ipe = self._iterations_per_epoch()
            it = self.epoch_in_phase * ipe + self.iter_in_epoch
            return PhaseState(res, kind, alpha_at(it, epochs * ipe))
        return PhaseState(res, kind, 1.0)

    @property
    def finished(self):
        return self.phase_index >= len(self.phases)

    # -- stepping ------------------------------------------------------

    def step(self):
        """One iteration: one discriminator update, then one generator update.

        Returns the step's diagnostics record. Non-finite losses abort the
        step, persist an emergency checkpoint, and raise TrainingFault.
        """
        if self.finished:
            raise ValidationError("schedule exhausted; nothing left to train")
        level, res, kind, _ = self.phases[self.phase_index]
        phase = self.phase_state()
        bs = self._batch_size()
        order = self._epoch_order()
        idx = order[self.iter_in_epoch * bs:(self.iter_in_epoch + 1) * bs]
        z_np, target_np = self.sequences.batch(idx)
        z = downsample_to_resolution(torch.from_numpy(z_np), res)
        target = downsample_to_resolution(torch.from_numpy(target_np), res)
        if phase.kind == "transition" and level > 0:
            z = blend_transition_input(z, phase.alpha)
            target = blend_transition_input(target, phase.alpha)

        critic = lambda v: self.discriminator(v, phase)
        try:
            predicted = self.generator(z, phase)
            real = torch.cat([z, target], dim=2)
            fake = torch.cat([z, predicted.detach()], dim=2)
            d_total, diag = discriminator_loss(critic, real, fake, self.coeff,
                                               self.u_generator)
            self.d_opt.zero_grad(set_to_none=True)
            d_total.backward()
            self.d_opt.step()

            fake = torch.cat([z, self.generator(z, phase)], dim=2)
            g_loss = generator_loss(critic, fake)
            self.g_opt.zero_grad(set_to_none=True)
            g_loss.backward()
            self.g_opt.step()
        except TrainingFault:
            if self.out_dir is not None:
                path = self.out_dir / "checkpoints" / "emergency.ckpt"
                save_checkpoint(self.state_payload(), path)
                self._event({"event": "emergency_checkpoint", "path": str(path),
                             "step": self.global_step})
            raise

        record = {
            "step": self.global_step,
            "epoch": self.global_epoch,
            "phase_index": self.phase_index,
            "level": level,
            "resolution": res,
            "phase": kind,
            "alpha": phase.alpha,
            "lr": self.g_opt.param_groups[0]["lr"],
            "batch_size": int(len(idx)),
            "g_loss": float(g_loss.detach()),
            **diag,
        }
        self._write_log(record)
        self.global_step += 1
        self._advance_cursor()
        return record

    def _advance_cursor(self):
        self.iter_in_epoch += 1
        if self.iter_in_epoch < self._iterations_per_epoch():
            if self.config.checkpoint_every and self.global_step % self.config.checkpoint_every == 0:
                self._periodic_checkpoint()
            return
        self.iter_in_epoch = 0
        self.epoch_in_phase += 1
        _, _, _, epochs = self.phases[self.phase_index]
        if self.epoch_in_phase >= epochs:
            self.epoch_in_phase = 0
            self.phase_index += 1
            # announce (and grow into) the next phase before checkpointing so
            # the saved topology always matches the saved cursor
            if not self.finished:
                self._announce_phase()
            self._phase_boundary_checkpoint()
        elif self.config.checkpoint_every and self.global_step % self.config.checkpoint_every == 0:
            self._periodic_checkpoint()

    def _periodic_checkpoint(self):
        if self.out_dir is None:
            return
        path = self.out_dir / "checkpoints" / f"step_{self.global_step:08d}.ckpt"
        self.save(path)

    def _phase_boundary_checkpoint(self):
        if self.out_dir is None:
            return
        path = self.out_dir / "checkpoints" / f"phase_{self.phase_index:02d}.ckpt"
        self.save(path)

    def run(self, max_steps=None):
        """Train until the schedule is exhausted (or max_steps); returns records."""
        records = []
        while not self.finished:
            if max_steps is not None and len(records) >= max_steps:
                break
            records.append(self.step())
        if self.finished:
            self._event({"event": "training_complete", "step": self.global_step,
                         "epochs": self.global_epoch})
        return records

    def predictor(self, clamp=True):
        """A batch predictor for evaluation: (B, C, t_in, r, r) -> (B, C, t_out, r, r).

        Runs the pure current-resolution path (no fading) without gradients;
        outputs are clamped to [-1, 1] unless ``clamp`` is False.
        """
        return generator_predictor(self.generator, clamp=clamp)

    # -- checkpointing ---------------------------------------------------

    def state_payload(self):
        """The full TrainState: params, moments, cursor, RNG state, config."""
        return {
            "format": CHECKPOINT_FORMAT,
            "config": asdict(self.config),
            "config_hash": config_hash(self.config),
            "cursor": {
                "phase_index": self.phase_index,
                "epoch_in_phase": self.epoch_in_phase,
                "iter_in_epoch": self.iter_in_epoch,
                "global_step": self.global_step,
            },
            "generator": _tensors_to_numpy(self.generator.state_dict()),
            "discriminator": _tensors_to_numpy(self.discriminator.state_dict()),
            "g_optimizer": _tensors_to_numpy(self.g_opt.state_dict()),
            "d_optimizer": _tensors_to_numpy(self.d_opt.state_dict()),
            "torch_rng": torch.get_rng_state().numpy(),
            "u_rng": self.u_generator.get_state().numpy(),
        }

    def save(self, path):
        save_checkpoint(self.state_payload(), path)
        if self.out_dir is not None:
            latest = self.out_dir / "checkpoints" / "latest.ckpt"
            if Path(path) != latest:
                shutil.copyfile(path, latest)
        self._event({"event": "checkpoint", "path": str(path), "step": self.global_step})

    def _restore(self, state):
        cursor = state["cursor"]
        # rebuild the grown topology, then overwrite every tensor
        target_level = max(self.phases[min(cursor["phase_index"],
                                           len(self.phases) - 1)][0], 0)
        self._grow_to(target_level)
        self.generator.load_state_dict(_numpy_to_tensors(state["generator"]))
        self.discriminator.load_state_dict(_numpy_to_tensors(state["discriminator"]))
        self.g_opt.load_state_dict(_numpy_to_tensors(state["g_optimizer"]))
        self.d_opt.load_state_dict(_numpy_to_tensors(state["d_optimizer"]))
        torch.set_rng_state(torch.from_numpy(state["torch_rng"].copy()))
        self.u_generator.set_state(torch.from_numpy(state["u_rng"].copy()))
        self.phase_index = cursor["phase_index"]
        self.epoch_in_phase = cursor["epoch_in_phase"]
        self.iter_in_epoch = cursor["iter_in_epoch"]
        self.global_step = cursor["global_step"]
        self._event({"event": "resume", "step": self.global_step,
                     "phase_index": self.phase_index})

    @classmethod
    def resume(cls, path, sequences, out_dir=None, config=None):
        """Restore a Trainer from a checkpoint.

        If ``config`` is given it must match the checkpoint's config; on
        mismatch a ConfigConflictError carries a per-key diff report.
        """
        state = load_checkpoint(path)
        saved = TrainConfig(**state["config"])
        if config is not None and asdict(config) != asdict(saved):
            diff = config_diff(asdict(saved), asdict(config))
            raise ConfigConflictError(
                f"checkpoint config differs from the requested config:\n  "
                + "\n  ".join(diff), diff=diff)
        return cls(saved, sequences, out_dir=out_dir, _from_state=state)


def run_training(config, sequences, out_dir=None, max_steps=None):
    """Build a Trainer, run the full schedule, return (trainer, step records)."""
    trainer = Trainer(config, sequences, out_dir=out_dir)
    records = trainer.run(max_steps=max_steps)
    return trainer, records


def generator_predictor(generator, clamp=True):
    """Wrap a generator as a numpy batch predictor at its current resolution."""
    phase = PhaseState(generator.resolution, "stabilization", 1.0)

    def predict(z):
        with torch.no_grad():
            out = generator(torch.as_tensor(z, dtype=torch.float32), phase)
        if clamp:
            out = out.clamp(-1.0, 1.0)
        return out.numpy()

    return predict


def load_generator(path):
    """Rebuild just the generator from a checkpoint, for inference.

    Returns (generator, config). The generator is grown to the checkpoint's
    cursor level and runs the pure current-resolution path.
    """
    state = load_checkpoint(path)
    config = TrainConfig(**state["config"])
    phases = config.schedule().phases()
    cursor = state["cursor"]
    level = phases[min(cursor["phase_index"], len(phases) - 1)][0]
    generator = Generator(config.network_spec())
    while generator.current_level < level:
        generator.grow(generator.resolution * 2)
    generator.load_state_dict(_numpy_to_tensors(state["generator"]))
    return generator, config
