"""A complete (miniature) progressive training run: 4x4 -> 16x16 with one
epoch per phase, checkpointing, and an exact resume.

Run:  python demos/05_train_tiny.py            (about a minute on a laptop CPU)
"""

from pathlib import Path

from framecast import (MovingMnistConfig, SequenceWindowing, TrainConfig, Trainer,
                       generate_moving_mnist, run_training, window_sequences)

out_dir = Path(__file__).parent / "demo_output" / "tiny_run"

dataset = generate_moving_mnist(MovingMnistConfig(num_videos=8, video_length=12, seed=3))
sequences = window_sequences(dataset, SequenceWindowing(6, 6))
print(f"{len(sequences)} training sequences")

config = TrainConfig(final_resolution=16, base_feature_maps=16, t_in=6, t_out=6,
                     batch_size_base=4, epochs_transition=1, epochs_stabilization=1,
                     epochs_final_extra=1, seed=11, checkpoint_every=0)
print(f"schedule: {config.schedule().total_epochs} epochs over "
      f"{config.schedule().levels} px")

trainer, records = run_training(config, sequences, out_dir=out_dir)
for event in trainer.events:
    if event["event"] in ("grow", "phase_start", "final_phase"):
        print(" ", event)
last = records[-1]
print(f"finished after {len(records)} steps; last record: "
      f"d_total {last['d_total']:+.3f}, g_loss {last['g_loss']:+.3f}, "
      f"lr {last['lr']:.6f}")

# every artifact lands under out_dir; resuming from any checkpoint reproduces
# the continuation bit for bit
ckpt = out_dir / "checkpoints" / "phase_02.ckpt"
resumed = Trainer.resume(ckpt, sequences)
tail = resumed.run(max_steps=3)
print(f"resumed from {ckpt.name} at step {tail[0]['step']}; "
      f"diagnostics match the original run: "
      f"{tail == records[tail[0]['step']:tail[0]['step'] + 3]}")
