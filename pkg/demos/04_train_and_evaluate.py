"""The full pipeline in miniature: render, train, evaluate, predict.

Uses a deliberately tiny model and well under a minute of CPU. The CLI
wraps exactly these calls; see the README for the equivalent commands.
"""

import tempfile
from pathlib import Path

from ringdepth import (ModelConfig, RunConfig, evaluate, format_table,
                       generate_sample, predict, train, write_dataset)

work = Path(tempfile.mkdtemp(prefix="ringdepth-demo-"))

# sixteen procedural scenes for training, two held out
train_dir, test_dir = work / "train", work / "test"
write_dataset([generate_sample(seed=i, n_views=4, width=32, height=32,
                               d_max=20.0, hfov_deg=100.0, keep_fraction=0.3)
               for i in range(16)], train_dir, d_max=20.0)
write_dataset([generate_sample(seed=100 + i, n_views=4, width=32, height=32,
                               d_max=20.0, hfov_deg=100.0, keep_fraction=0.3)
               for i in range(2)], test_dir, d_max=20.0)

cfg = RunConfig(
    seed=0, epochs=40, batch_size=4, lr=5e-4, lambda_smooth=0.01,
    data_dir=str(train_dir), out_dir=str(work / "run"),
    model=ModelConfig(n_views=4, c_f=16, z_alternations=2, n_heads=1,
                      d_max=20.0))

print("training (half a minute or so on one core)...")
result = train(cfg)
first, last = result.log[0], result.log[-1]
print(f"step {first[0]}: loss {first[3]:.3f}  ->  "
      f"step {last[0]}: loss {last[3]:.3f}")

frames, agg = evaluate(result.ckpt_path, test_dir,
                       out_path=work / "report.json")
print("\nheld-out metrics, one row per camera frame:")
print(format_table(frames, agg))

written = predict(result.ckpt_path, test_dir, work / "pred")
print(f"\nwrote {len(written)} depth maps under {work / 'pred'}")
print(f"artifacts kept in {work}")
