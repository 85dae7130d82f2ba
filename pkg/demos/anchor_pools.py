"""Show how the degree threshold decides which entities keep themselves in context.

    python3 demos/anchor_pools.py
"""

import math

from synergykgc import random_kg
from synergykgc.kg_store import build_store
from synergykgc.synergy import SynergyConfig, build_context_pool

store = build_store({"train": random_kg(20, 3, 30, seed=5)})
ids = sorted(range(store.n_entities), key=lambda x: store.degree[x])[::4]

for phi in (0, 1, 2, math.inf):
    cfg = SynergyConfig(phi=phi, hops=1, pool_cap=8)
    print(f"phi = {phi}")
    for x in ids:
        pool = build_context_pool(x, cfg, store)
        tag = "degenerate" if pool.degenerate else ("self" if pool.has_self else "")
        print(f"  entity {x:2d}  degree {int(store.degree[x]):2d}  pool {pool.member_ids.tolist()} {tag}")
