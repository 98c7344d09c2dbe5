"""Train a small two-grid model on synthetic shapes and evaluate it per grid.

Pass a step count as the first argument; 2000 reaches ~100% in a few minutes.
"""
import sys

from lookupvit import train
from lookupvit.config import ModelConfig, TrainConfig
from lookupvit.data import gen_synthetic

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300
ds = gen_synthetic(classes=3, n=300, size=32, seed=0)
x, y = ds.as_float(), ds.labels

config = ModelConfig(image_size=(32, 32), patch=(4, 4), dim=64, depth=4, heads=4,
                     compressed_grids=((2, 2), (4, 4)), num_classes=3)


def log(step, m):
    if step % 50 == 0 or step == steps - 1:
        print(f"step {step:5d} loss {m['loss']:.4f} acc {m['acc_avg']:.2f} grid {m['grid']}")


params, history = train.fit(config, TrainConfig(steps=steps), x, y, callback=log)

# one set of weights, several compute budgets
for grid in [(1, 1), (2, 2), (3, 3), (4, 4), (8, 8)]:
    r = train.evaluate(params, config, x, y, grid)
    print(f"grid {grid}: acc_p {r['acc_p']:.3f} acc_l {r['acc_l']:.3f} avg {r['acc_avg']:.3f}")
