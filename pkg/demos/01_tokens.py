"""Turn an image into lookup tokens and a few resampled compressed tokens."""
import numpy as np

from lookupvit.tokenizer import PatchEmbedParams, tokenize

rng = np.random.default_rng(0)
image = rng.uniform(size=(224, 224, 3)).astype(np.float32)

# 16x16 patches -> 14x14 lookup grid, 32-wide embedding
embed = PatchEmbedParams.init(rng, patch=(16, 16), channels=3, dim=32, lookup_grid=(14, 14))

for grid in [(3, 3), (5, 5), (7, 7), (10, 10), (14, 14)]:
    tokens = tokenize(image, embed, grid)
    print(f"grid {grid}: z_l {tokens.z_l.shape}, z_p {tokens.z_p.shape}, N/M = {tokens.compression_ratio:.2f}")

# the full grid is a plain copy of the lookup stream
same = tokenize(image, embed, (14, 14))
print("identical at 14x14:", np.array_equal(same.z_p.data, same.z_l.data))
