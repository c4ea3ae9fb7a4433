"""
A tour of the separator topologies
==================================

"""

import torch

from fusesep import ChunkSpec, SeparationModel, count_parameters, preset, segment
from fusesep.fusion import run_separator

# every architecture in the preset table, at a glance
print(f"{'preset':18s} {'variant':12s} {'stages':>6s} {'params':>10s}")
for name in ("msfft2p-tiny", "msfft3p-tiny", "single-path-tiny", "dprnn-tiny",
             "msfft2p-paper", "msfft3p-paper"):
    cfg = preset(name)
    n = count_parameters(SeparationModel(cfg))
    print(f"{name:18s} {cfg.variant:12s} {cfg.n_stages:6d} {n:10,d}")

# the multi-path separators process the same features at several chunk
# resolutions in parallel: path p runs at chunk length K / 2^(p-1). A trace
# records the active chunk lengths after every stage.
for name in ("msfft2p-tiny", "msfft3p-tiny"):
    cfg = preset(name)
    model = SeparationModel(cfg)
    z = segment(torch.randn(1, cfg.feature_dim, 200),
                ChunkSpec(cfg.chunk_len, cfg.chunk_hop))
    trace = []
    with torch.no_grad():
        run_separator(model.separator, z, trace=trace)
    print(f"\n{name}: chunk lengths per stage (one list entry per active path)")
    for stage, lengths in enumerate(trace, start=1):
        print(f"  stage {stage}: {lengths}")

# msfft3p starts with two paths and opens the third (quarter-resolution)
# path at the exchange stage; msfft2p fuses its two paths at every stage.
# The single-path variant is the same block stack with no parallelism at
# all, which is why it serves as the benchmark baseline.
