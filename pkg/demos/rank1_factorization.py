"""
Why the factorized transform is exact for rank-1 weights
========================================================

A k-order cross-feature transform weighs every product of k input features,
so it needs a D^k weight tensor per output. When that tensor is an outer
product of k vectors, the weighted sum splits into a product of k dot
products. The cross layer computes exactly that, with one weight matrix per
order.

Run with ``python3 demos/rank1_factorization.py``.
"""

import time

import numpy as np

from crossgcn.model import CrossConvLayer, cross_transform_forward
from crossgcn.oracle import brute_force_cross_transform, enumerate_cross_tensor, rank1_tensor_from_factors

g = np.random.default_rng(0)

# %%
# Second order by hand: the cross tensor of x is x x^T.

x = np.array([1.0, 2.0])
print(enumerate_cross_tensor(x, 2))
w, w_bar = np.array([1.0, 2.0]), np.array([1.0, 1.0])
print("brute force:", brute_force_cross_transform(x, [rank1_tensor_from_factors(w, w_bar)])[0])
print("factorized: ", (w @ x) * (w_bar @ x))

# %%
# A layer with E outputs keeps only its k-th order term (alpha one-hot) and
# an identity activation. Output e is then the product of row e of every
# order's weight matrix applied to x. The brute-force tensor for that
# output is the outer product of those rows, highest order first.

D, E = 5, 3
for k in (1, 2, 3):
    weights = [g.normal(size=(E, D)) for _ in range(k)]
    alpha = np.eye(k)[k - 1]
    layer = CrossConvLayer(weights, np.zeros(E), alpha, activation="identity")
    x = g.normal(size=D)
    fast, _ = cross_transform_forward(x[None, :], layer)
    tensors = [rank1_tensor_from_factors(*[weights[j][e] for j in reversed(range(k))]) for e in range(E)]
    slow = brute_force_cross_transform(x, tensors)
    print(f"k={k}: max difference {np.abs(fast[0] - slow).max():.2e}")

# %%
# The brute-force cost grows as D^k, the factorized one as k D.

for d in (4, 8, 16, 24):
    x = g.normal(size=d)
    factors = [g.normal(size=d) for _ in range(3)]
    t0 = time.perf_counter()
    slow = brute_force_cross_transform(x, [rank1_tensor_from_factors(*factors)])[0]
    t1 = time.perf_counter()
    fast = np.prod([f @ x for f in factors])
    t2 = time.perf_counter()
    print(f"D={d:>2}  brute force {1e3 * (t1 - t0):8.2f} ms  factorized {1e6 * (t2 - t1):6.1f} us  "
          f"relative gap {abs(slow - fast) / abs(fast):.1e}")
