import json
import math
import pickle

import numpy as np
import pytest
import torch

from framecast.errors import (CheckpointError, ConfigConflictError,
                              TrainingFault, ValidationError)
from framecast.trainer import (GrowthSchedule, OptimizerConfig, TrainConfig,
                               Trainer, alpha_at, build_schedule,
                               default_batch_sizes, load_checkpoint,
                               lr_for_level, run_training, save_checkpoint)
from framecast.videodata import (MovingMnistConfig, SequenceWindowing,
                                 generate_moving_mnist, window_sequences)


def tiny_config(**kw):
    base = dict(final_resolution=16, base_feature_maps=8, t_in=6, t_out=6,
                batch_size_base=4, epochs_transition=1, epochs_stabilization=1,
                epochs_final_extra=1, seed=11, checkpoint_every=0)
    base.update(kw)
    return TrainConfig(**base)


# -- schedule arithmetic -----------------------------------------------------

def test_schedule_totals_match_paper_protocol():
    assert build_schedule(64).total_epochs == 120
    assert build_schedule(128).total_epochs == 140
    assert build_schedule(4).total_epochs == 40


@pytest.mark.parametrize("final", [4, 8, 16, 32, 64, 128, 256])
def test_schedule_closed_form_property(final):
    s = build_schedule(final)
    levels = int(math.log2(final / 4)) + 1
    assert len(s.levels) == levels
    assert s.total_epochs == levels * 20 + 20
    assert sum(p[3] for p in s.phases()) == s.total_epochs


def test_phase_order():
    s = build_schedule(8, epochs_transition=2, epochs_stabilization=3,
                       epochs_final_extra=4)
    assert s.phases() == [
        (0, 4, "transition", 2), (0, 4, "stabilization", 3),
        (1, 8, "transition", 2), (1, 8, "stabilization", 3),
        (1, 8, "final", 4),
    ]


def test_invalid_resolution_rejected():
    with pytest.raises(ValidationError):
        build_schedule(48)
    with pytest.raises(ValidationError):
        build_schedule(2)


def test_lr_for_level_values():
    cfg = OptimizerConfig()
    assert lr_for_level(cfg, 0) == 0.001
    assert math.isclose(lr_for_level(cfg, 1), 0.00087, rel_tol=1e-12)
    assert math.isclose(lr_for_level(cfg, 4), 0.001 * 0.87 ** 4, rel_tol=1e-12)
    assert math.isclose(lr_for_level(cfg, 4), 5.7290e-4, rel_tol=1e-4)


def test_alpha_at():
    assert alpha_at(0, 100) == 0.0
    assert alpha_at(100, 100) == 1.0
    assert alpha_at(50, 100) == 0.5
    assert alpha_at(3, 0) == 1.0


def test_default_batch_sizes_halve_per_level():
    assert default_batch_sizes([4, 8, 16, 32], base=8) == {4: 8, 8: 4, 16: 2, 32: 1}
    assert default_batch_sizes([4, 8], base=1) == {4: 1, 8: 1}


# -- config file ----------------------------------------------------------------

def test_config_file_roundtrip(tmp_path):
    cfg = tiny_config(seed=99, learning_rate_base=0.002)
    p = tmp_path / "train.cfg"
    cfg.to_file(p)
    assert TrainConfig.from_file(p) == cfg


def test_config_file_rejects_unknown_key(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("final_resolution = 16\nbogus_knob = 3\n")
    with pytest.raises(ValidationError, match="bogus_knob"):
        TrainConfig.from_file(p)


# -- training loop ----------------------------------------------------------------

def test_full_tiny_run_events_and_accounting(tiny_sequences, tmp_path):
    trainer, records = run_training(tiny_config(), tiny_sequences,
                                    out_dir=tmp_path / "run")
    grow_events = [e for e in trainer.events if e["event"] == "grow"]
    final_markers = [e for e in trainer.events if e["event"] == "final_phase"]
    assert [(e["from_resolution"], e["to_resolution"]) for e in grow_events] == \
        [(4, 8), (8, 16)]
    assert len(grow_events) + len(final_markers) == 3
    total = tiny_config().schedule().total_epochs
    assert records[-1]["epoch"] + 1 == total
    assert trainer.finished

    # alpha non-decreasing inside each transition, 1 everywhere else
    by_phase = {}
    for r in records:
        by_phase.setdefault(r["phase_index"], []).append(r)
    for phase_records in by_phase.values():
        alphas = [r["alpha"] for r in phase_records]
        if phase_records[0]["phase"] == "transition" and phase_records[0]["level"] > 0:
            assert alphas == sorted(alphas)
        else:
            assert set(alphas) == {1.0}

    # lr constant within a level, decayed by exactly 0.87 across levels
    lr_by_level = {}
    for r in records:
        lr_by_level.setdefault(r["level"], set()).add(r["lr"])
    assert all(len(v) == 1 for v in lr_by_level.values())
    for level, lrs in lr_by_level.items():
        assert math.isclose(next(iter(lrs)), 0.001 * 0.87 ** level, rel_tol=1e-12)

    log_lines = (tmp_path / "run" / "training_log.jsonl").read_text().splitlines()
    parsed = [json.loads(x) for x in log_lines]
    assert any(x.get("event") == "training_complete" for x in parsed)
    assert sum("step" in x and "d_total" in x for x in parsed) == len(records)


def test_step_changes_discriminator_params(tiny_sequences):
    trainer = Trainer(tiny_config(), tiny_sequences)
    before = [p.detach().clone() for p in trainer.discriminator.parameters()]
    trainer.step()
    after = list(trainer.discriminator.parameters())
    assert any(not torch.equal(a, b.detach()) for a, b in zip(before, after))


def test_zero_lr_leaves_params_bit_identical(tiny_sequences):
    trainer = Trainer(tiny_config(learning_rate_base=0.0), tiny_sequences)
    g_before = [p.detach().clone() for p in trainer.generator.parameters()]
    d_before = [p.detach().clone() for p in trainer.discriminator.parameters()]
    trainer.step()
    assert all(torch.equal(a, b.detach())
               for a, b in zip(g_before, trainer.generator.parameters()))
    assert all(torch.equal(a, b.detach())
               for a, b in zip(d_before, trainer.discriminator.parameters()))


def test_diagnostics_track_schedule_cursor(tiny_sequences):
    trainer = Trainer(tiny_config(), tiny_sequences)
    rec = trainer.step()
    assert rec["resolution"] == 4 and rec["phase"] == "transition"
    assert rec["alpha"] == 1.0  # base level has no old path
    assert {"wasserstein", "gradient_penalty", "drift_penalty",
            "d_total", "g_loss", "lr"} <= set(rec)


def test_dataset_smaller_than_batch_rejected(glyphs):
    ds = generate_moving_mnist(MovingMnistConfig(num_videos=1, video_length=12, seed=1),
                               glyphs=glyphs)
    seqs = window_sequences(ds, SequenceWindowing(6, 6))
    with pytest.raises(ValidationError, match="smaller than one batch"):
        Trainer(tiny_config(batch_size_base=64), seqs)


def test_windowing_mismatch_rejected(tiny_dataset):
    seqs = window_sequences(tiny_dataset, SequenceWindowing(4, 4))
    with pytest.raises(ValidationError, match="windowing"):
        Trainer(tiny_config(), seqs)


def test_periodic_checkpoint_cadence(tiny_sequences, tmp_path):
    trainer = Trainer(tiny_config(checkpoint_every=5), tiny_sequences,
                      out_dir=tmp_path / "run")
    trainer.run(max_steps=11)
    names = {p.name for p in (tmp_path / "run" / "checkpoints").glob("step_*.ckpt")}
    assert "step_00000005.ckpt" in names
    # every multiple of the cadence is covered by some checkpoint (a phase
    # boundary checkpoint supersedes the periodic one when they coincide)
    saved_at = {e["step"] for e in trainer.events if e["event"] == "checkpoint"}
    assert {5, 10} <= saved_at


def test_non_finite_fault_persists_emergency_checkpoint(tiny_sequences, tmp_path):
    trainer = Trainer(tiny_config(), tiny_sequences, out_dir=tmp_path / "run")
    with torch.no_grad():
        next(iter(trainer.discriminator.parameters())).fill_(float("nan"))
    with pytest.raises(TrainingFault):
        trainer.step()
    assert (tmp_path / "run" / "checkpoints" / "emergency.ckpt").exists()


# -- determinism and checkpointing ----------------------------------------------

def test_same_seed_same_diagnostics(tiny_sequences):
    a = Trainer(tiny_config(), tiny_sequences).run(max_steps=8)
    b = Trainer(tiny_config(), tiny_sequences).run(max_steps=8)
    assert a == b


def test_checkpoint_roundtrip_resume_identical(tiny_sequences, tmp_path):
    trainer = Trainer(tiny_config(), tiny_sequences)
    trainer.run(max_steps=5)
    ckpt = tmp_path / "mid.ckpt"
    trainer.save(ckpt)
    direct = trainer.run(max_steps=4)
    resumed = Trainer.resume(ckpt, tiny_sequences).run(max_steps=4)
    assert direct == resumed


def test_checkpoint_save_load_save_byte_identical(tiny_sequences, tmp_path):
    trainer = Trainer(tiny_config(), tiny_sequences)
    trainer.run(max_steps=3)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(trainer.state_payload(), p1)
    state = load_checkpoint(p1)
    save_checkpoint(state, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_stores_cursor_exactly(tiny_sequences, tmp_path):
    trainer = Trainer(tiny_config(), tiny_sequences)
    trainer.run(max_steps=3)
    p = tmp_path / "c.ckpt"
    trainer.save(p)
    cur = load_checkpoint(p)["cursor"]
    assert cur == {"phase_index": trainer.phase_index,
                   "epoch_in_phase": trainer.epoch_in_phase,
                   "iter_in_epoch": trainer.iter_in_epoch,
                   "global_step": trainer.global_step}


def test_corrupted_checkpoint_rejected(tmp_path, tiny_sequences):
    p = tmp_path / "corrupt.ckpt"
    p.write_bytes(b"\x80\x04 garbage")
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
    q = tmp_path / "wrong.ckpt"
    with open(q, "wb") as f:
        pickle.dump({"format": "other"}, f)
    with pytest.raises(CheckpointError):
        load_checkpoint(q)


def test_resume_with_mismatched_config_refused(tiny_sequences, tmp_path):
    trainer = Trainer(tiny_config(), tiny_sequences)
    trainer.run(max_steps=2)
    p = tmp_path / "m.ckpt"
    trainer.save(p)
    other = tiny_config(seed=12, base_feature_maps=16)
    with pytest.raises(ConfigConflictError) as err:
        Trainer.resume(p, tiny_sequences, config=other)
    assert any("seed" in line for line in err.value.diff)
    assert any("base_feature_maps" in line for line in err.value.diff)


def test_resume_across_growth_boundary(tiny_sequences, tmp_path):
    """A phase-boundary checkpoint lands after growth; resuming must rebuild
    the grown topology and continue identically."""
    cfg = tiny_config()
    out = tmp_path / "run"
    trainer = Trainer(cfg, tiny_sequences, out_dir=out)
    records = trainer.run()
    boundary = out / "checkpoints" / "phase_02.ckpt"  # just entered level 1
    assert boundary.exists()
    resumed = Trainer.resume(boundary, tiny_sequences)
    start = resumed.global_step
    tail = resumed.run()
    assert tail == records[start:]
