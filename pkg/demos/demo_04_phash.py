"""Perceptual hashing: images to binary fingerprints, then near-duplicate
search over the fingerprints.

Run: python demos/demo_04_phash.py
"""

import numpy as np

from hamsearch import (
    CodeDataset,
    GrayscaleImage,
    QuerySpec,
    hamming_distance,
    phash,
    range_search_oracle,
)

rng = np.random.default_rng(11)


def smooth_image(seed, size=96):
    g = np.random.default_rng(seed)
    freq = g.random(6) * 0.2
    phase = g.random(6) * 6.28
    y, x = np.mgrid[0:size, 0:size].astype(float)
    img = sum(np.sin(f * (x + y * g.random()) + p) for f, p in zip(freq, phase))
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo) * 255.0


# A constant image hashes to the all-zero code: every non-DC coefficient is
# zero and the strict threshold maps ties to 0.
flat = phash(GrayscaleImage.from_array(np.full((64, 64), 90.0)), 64)
print("constant image hash is all zero:", not flat.words.any())

# Doubling brightness doesn't change a hash; the transform is linear and the
# median threshold scales along with the coefficients.
px = smooth_image(0) / 2.0
print(
    "brightness-invariant:",
    phash(GrayscaleImage.from_array(px), 256)
    == phash(GrayscaleImage.from_array(px * 2.0), 256),
)

# Fingerprint a small gallery plus noisy variants of one image.
base_images = [smooth_image(seed) for seed in range(30)]
variants = [
    np.clip(base_images[7] + rng.normal(0, 4.0, base_images[7].shape), 0, 255)
    for _ in range(3)
]
codes = [phash(GrayscaleImage.from_array(p), 256) for p in base_images + variants]
gallery = CodeDataset(256, np.stack([c.words for c in codes]))

query = codes[7]
for i, code in enumerate(codes):
    if 0 < hamming_distance(query, code) <= 40:
        print(f"image {i}: distance {hamming_distance(query, code)}")

hits = range_search_oracle(gallery, QuerySpec(query, 40))
print("radius-40 matches for image 7:", hits.ids.tolist())
