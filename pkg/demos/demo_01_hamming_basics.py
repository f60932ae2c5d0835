"""Binary codes, distances, and the exhaustive radius-query oracle.

Run: python demos/demo_01_hamming_basics.py
"""

import numpy as np

from hamsearch import (
    BinaryCode,
    QuerySpec,
    SyntheticSpec,
    extract_subcode,
    gen_synthetic,
    hamming_distance,
    perturb,
    range_search_oracle,
)

# Codes are fixed-width bit vectors packed into 64-bit words; bit i of
# word w is bit 64*w + i of the code.
a = BinaryCode.from_bits([1, 0, 1, 1] + [0] * 60)
b = BinaryCode.from_bits([1, 1, 1, 0] + [0] * 60)
print("d(a, b) =", hamming_distance(a, b))

# Sub-codes are contiguous bit slices interpreted as little-endian integers.
bits = np.zeros(64, dtype=np.uint8)
bits[17] = 1
c = BinaryCode.from_bits(bits)
print("bit 17 seen by sub-code 1 of width 16:", extract_subcode(c, 16, 1))

# A reproducible synthetic dataset: same seed, same bytes.
dataset = gen_synthetic(SyntheticSpec(count=50_000, width_bits=64, seed=42))
print(dataset)

# perturb flips an exact number of distinct bits, which makes queries with a
# known true distance easy to manufacture.
query = perturb(dataset.code(1234), flips=5, seed=7)
print("d(original, perturbed) =", hamming_distance(dataset.code(1234), query))

# The oracle scans everything and is the ground truth all backends must match.
for radius in (0, 5, 10, 20):
    hits = range_search_oracle(dataset, QuerySpec(query, radius))
    print(f"radius {radius:2d}: {len(hits)} neighbors")
