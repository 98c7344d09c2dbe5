"""Analytic block costs for B/16 and how they grow with image size."""
from lookupvit import flops

print(flops.to_csv(flops.preset_rows("b16-224"), flops.REFERENCE_GFLOPS["b16-224"]))

# resolution sweep at a fixed 5x5 compressed grid
for row in flops.scaling_sweep([224, 384, 512], [(5, 5)]):
    tag = "vit " if row.is_vit else "5x5 "
    print(f"{row.size}px {tag} {row.gflops:8.2f} GFLOPs")

# the lookup block is the 5x5 ViT block plus the cross-attention extras
N, M, D = 196, 25, 768
extra = flops.cross_overhead(N, M, D)
print(flops.lookup_block_macs(N, M, D) == flops.vit_block_macs(M, D) + sum(extra.values()), extra)
