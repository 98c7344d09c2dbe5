"""One block, step by step: gather, refine, infuse, narrow MLP."""
import numpy as np

from lookupvit import tensor as T
from lookupvit.block import BlockParams, lookup_block_forward, mhbc_gather, mhbc_infuse, vit_block
from lookupvit.tensor import Tensor
from lookupvit.tokenizer import TokenPair

rng = np.random.default_rng(1)
D, heads = 32, 4
z_l = Tensor(rng.normal(size=(64, D)).astype(np.float32))  # 8x8 lookup grid
z_p = Tensor(rng.normal(size=(4, D)).astype(np.float32))   # 2x2 compressed grid
params = BlockParams.init(rng, D, heads)

# compressed tokens read from the lookup tokens; A is [heads, M, N]
z_p1, A = mhbc_gather(z_p, z_l, params.gather, heads)
print("gather weights", A.shape, "row sums", A.data.sum(-1).min(), A.data.sum(-1).max())

# a regular transformer layer, but only on 4 tokens
z_p2 = vit_block(z_p1, params.vit, heads)

# lookup tokens receive the update through A transposed, no new softmax
update = mhbc_infuse(z_l, z_p2, A, params.infuse, heads)
print("infuse update", update.shape)

# the whole block, with the cost counters on
with T.instrument() as counters:
    with T.block_index(0):
        out, _ = lookup_block_forward(TokenPair(z_p, z_l, (8, 8), (2, 2)), params)
print("softmax calls:", dict(counters.softmax_calls))
print("MACs by term:", dict(counters.macs_by_term()))
