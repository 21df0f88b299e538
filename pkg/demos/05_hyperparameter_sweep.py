"""Hyper-parameter sensitivity and ablation structure.

Every sweep point runs the full deterministic pipeline (episode ->
concept mining -> training -> evaluation) and lands in a CSV with
columns param,value,accuracy_pct,seed. The ablation block at the end
toggles whole branches off, which removes both their logits and their
gradients.

Run:  python3 demos/05_hyperparameter_sweep.py
"""

import os
import tempfile

from ccli import SynthSpec, TrainConfig, evaluate_zero_shot, gen_synth
from ccli.evaluation import run_pipeline, sweep, write_sweep_csv

spec = SynthSpec(
    num_classes=10,
    dim=64,
    num_concepts=40,
    train_per_class=16,
    test_per_class=50,
    sigma=0.6,
    seed=7,
)
train_bundle, test_bundle = gen_synth(spec)
cfg = TrainConfig(epochs=100, batch_size=32, lr=1e-3, seed=0)

print("sharpness sweep (delta):")
rows = sweep("delta", [0.5, 2.5, 4.5, 6.5, 8.5, 10.5],
             train_bundle, test_bundle, cfg, shots=16, seed=0)
for row in rows:
    bar = "#" * int(row.accuracy_pct / 2)
    print(f"  delta={row.value:>4.1f}  {row.accuracy_pct:5.1f}%  {bar}")

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "sweep.csv")
    write_sweep_csv(rows, path)
    print(f"\nCSV ({path}):")
    print(open(path).read().strip())

print("\nbranch-mix sweep (alpha, 0 disables the concept branch):")
rows = sweep("alpha", [0.0, 0.5, 1.5, 3.0],
             train_bundle, test_bundle, cfg, shots=16, seed=0)
for row in rows:
    print(f"  alpha={row.value:>3.1f}  {row.accuracy_pct:5.1f}%")

print("\nablations (16-shot):")
zero_shot = evaluate_zero_shot(test_bundle).overall_accuracy_pct
variants = {
    "full model": {},
    "no text adapter": {"disable_ta": True},
    "no description concepts": {"disable_description": True},
    "no class concepts": {"disable_class": True},
    "text adapter only": {"disable_ci": True},
}
import dataclasses

for name, toggles in variants.items():
    cfg_v = dataclasses.replace(cfg, **toggles)
    _, _, report = run_pipeline(train_bundle, test_bundle, cfg_v, 16, 0)
    print(f"  {name:26s} {report.overall_accuracy_pct:5.1f}%")
print(f"  {'zero-shot baseline':26s} {zero_shot:5.1f}%")
