"""Min-hash collision rates and norm preservation under a random projection."""

import numpy as np

from twolevel_lsh.geometry import jl_target_dim, sample_jl
from twolevel_lsh.harness.minhash import minhash_demo

for s, overlap in [(3, 2), (10, 3), (20, 15)]:
    e = minhash_demo(s, overlap, 50_000, 0)
    print(f"s={s:>2} overlap={overlap:>2}: collision {e.estimate.p_hat:.4f}, jaccard {e.jaccard:.4f}")

m = jl_target_dim(1000, 0.2)
proj = sample_jl(512, m, 0)
X = np.random.default_rng(0).standard_normal((2000, 512))
X /= np.linalg.norm(X, axis=1, keepdims=True)
norms = np.linalg.norm(proj(X), axis=1)
print(f"JL to m={m}: norms in [{norms.min():.3f}, {norms.max():.3f}]")
