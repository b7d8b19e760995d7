# ---
# jupyter:
#   jupytext:
#     formats: py:light
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# # Ranking proposals by audio similarity
#
# The cross-modal filter lives in a shared latent space: the audio segment
# and each candidate image crop become vectors, proposals are ranked by
# cosine similarity against the audio, and only proposals strictly above a
# threshold survive.

# +
import numpy as np

from cmsf import EmbeddingVector, cosine_similarity, rank_by_similarity, threshold_filter

# -

# Cosine similarity is computed with a fixed accumulation order, so it is
# exactly symmetric and bitwise reproducible across platforms.

# +
audio = EmbeddingVector((1.0, 0.0, 0.0, 0.0))
piano_crop = EmbeddingVector((0.95, 0.2, 0.1, 0.15))
curtain_crop = EmbeddingVector((0.05, -0.8, 0.55, 0.2))

print("piano crop   :", round(cosine_similarity(audio, piano_crop), 4))
print("curtain crop :", round(cosine_similarity(audio, curtain_crop), 4))
assert cosine_similarity(audio, piano_crop) == cosine_similarity(piano_crop, audio)
# -

# Ranking is stable (ties keep input order) and scale-invariant: embeddings
# only carry direction.

# +
rng = np.random.default_rng(3)
crops = [EmbeddingVector(tuple(rng.standard_normal(4))) for _ in range(6)]
ranked = rank_by_similarity(audio, crops)
for entry in ranked:
    print(f"proposal {entry.proposal_index}: similarity {entry.similarity:+.4f}")

doubled = [EmbeddingVector(tuple(2.0 * v for v in c.values)) for c in crops]
assert [r.proposal_index for r in rank_by_similarity(audio, doubled)] == [
    r.proposal_index for r in ranked
]
# -

# Threshold filtering reads "above tau" strictly, and raising tau can only
# shrink the surviving set; that is what makes whole-pipeline threshold
# sweeps monotone.

for tau in (-1.0, 0.0, 0.4, 0.8):
    survivors = [s.proposal_index for s in threshold_filter(ranked, tau)]
    print(f"tau={tau:+.1f} -> survivors {survivors}")
