"""The main-memory flat backend: build fast, scan everything per query.

Run: python demos/demo_02_flat_scan.py
"""

import time

import numpy as np

from hamsearch import (
    QuerySpec,
    SyntheticSpec,
    flat_build,
    flat_range_search,
    gen_synthetic,
    range_search_oracle,
)

dataset = gen_synthetic(SyntheticSpec(count=1_000_000, width_bits=64, seed=3))

index = flat_build(dataset, workers=5)
print(f"built in {index.build_seconds * 1e3:.1f} ms, "
      f"{index.memory_bytes() / 2**20:.1f} MiB resident buffer")

query = QuerySpec(dataset.code(777), radius=11)
result = flat_range_search(index, query)
print(f"{len(result)} neighbors within radius 11")
assert result == range_search_oracle(dataset, query)

# The scan visits every code no matter the radius, so latency barely moves
# with r. That is the backend's signature trade-off.
rng = np.random.default_rng(0)
ids = rng.choice(dataset.count, 50, replace=False)
for radius in (3, 7, 11, 32):
    specs = [QuerySpec(dataset.code(int(i)), radius) for i in ids]
    for spec in specs:  # warm pass
        flat_range_search(index, spec)
    t0 = time.perf_counter()
    for spec in specs:
        flat_range_search(index, spec)
    mean_ms = (time.perf_counter() - t0) / len(specs) * 1e3
    print(f"radius {radius:2d}: {mean_ms:6.2f} ms/query")
