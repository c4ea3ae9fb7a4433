"""
Chunk segmentation and overlap-add, step by step
================================================

"""

import torch

from fusesep import ChunkSpec, overlap_add, segment

# a feature map with 3 channels and 11 frames; values encode (channel, frame)
# so you can see where each one lands after segmentation
x = torch.zeros(3, 11)
for d in range(3):
    for t in range(11):
        x[d, t] = 10 * d + t

spec = ChunkSpec(chunk_len=4, hop=2)
print(f"chunk length K={spec.chunk_len}, hop P={spec.hop}, "
      f"coverage K/P={spec.coverage}")

# segment pads K-P zeros in front (so frame 0 is covered by K/P chunks),
# completes the last chunk at the back, then stacks windows along a new axis
z = segment(x, spec)
print(f"{tuple(x.shape)} frames -> chunk stack {tuple(z.values.shape)} "
      f"(channels, K, n_chunks)")

# chunk s holds frames [s*P - (K-P), s*P - (K-P) + K); channel 1's frames
# are 10, 11, 12, ... so the two front-padding zeros are easy to spot
print("chunk 0 of channel 1:", z.values[1, :, 0].tolist())
print("chunk 1 of channel 1:", z.values[1, :, 1].tolist())

# overlap-add sums every chunk back at its offset; each frame was copied
# into exactly K/P chunks, so dividing by the coverage restores the input
y = overlap_add(z)
print("round trip max |error|:", float((y - x).abs().max()))

# without normalization you get the raw sums: a constant input comes back
# multiplied by the coverage everywhere
ones = segment(torch.ones(1, 8), spec)
raw = overlap_add(ones, normalize=False)
print("raw overlap-add of all-ones input:", raw[0].tolist())

# the same machinery runs batched: leading axes are carried through
batch = torch.randn(5, 2, 3, 50)
zb = segment(batch, spec)
print(f"batched {tuple(batch.shape)} -> {tuple(zb.values.shape)}, "
      f"round trip max |error|: "
      f"{float((overlap_add(zb) - batch).abs().max()):.2e}")
