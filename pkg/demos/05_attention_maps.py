"""Where do the compressed tokens look? Export per-layer maps as PGM files."""
from pathlib import Path

from lookupvit import analysis, pgm, train
from lookupvit.config import ModelConfig, TrainConfig
from lookupvit.data import gen_synthetic

ds = gen_synthetic(3, 150, 32, seed=0)
config = ModelConfig(image_size=(32, 32), patch=(4, 4), dim=32, depth=2, heads=4,
                     compressed_grids=((2, 2),), num_classes=3)
params, _ = train.fit(config, TrainConfig(steps=150), ds.as_float(), ds.labels)

maps = analysis.attention_maps(params, config, ds.as_float()[0])
out = Path("attention_maps")
for k, m in enumerate(maps):
    pgm.write_pgm(out / f"layer_{k:02d}.pgm", analysis.as_image(m), comment=f"layer {k}")
    # each map is a distribution over the 8x8 lookup grid
    print(f"layer {k}: sum {m.sum():.3f}, max at {divmod(int(m.argmax()), m.shape[1])}")
print("wrote", sorted(p.name for p in out.iterdir()))
