"""What the ring attention actually does, on tensors small enough to read.

Self-attention mixes tokens within one view; adjacent attention lets a
view query its two ring neighbors. Rotating the ring of inputs rotates
the outputs -- the layers have no idea which camera is "first".
"""

import numpy as np

from ringdepth import (AttentionLayerParams, ModelConfig, Tensor,
                       adjacent_attention, forward, init_params,
                       self_attention)

rng = np.random.default_rng(0)
C = 8


def layer_params(seed):
    r = np.random.default_rng(seed)
    t = lambda shape: Tensor(r.normal(0, 0.3, shape).astype(np.float32))
    return AttentionLayerParams(wq=t((C, C)), wk=t((C, C)), wv=t((C, C)),
                                bq=t((C,)), bk=t((C,)), bv=t((C,)),
                                wo=t((C, C)), bo=t((C,)), n_heads=2)


p = layer_params(1)
f = [Tensor(rng.normal(size=(5, C)).astype(np.float32)) for _ in range(3)]

# attention weights are row-stochastic: each output token is a convex
# combination of value tokens
out, weights = self_attention(f[0], p, return_weights=True)
print("self-attention weights, head 0:")
print(np.array_str(weights.data[0], precision=3, suppress_small=True))
print("row sums:", weights.data.sum(axis=-1).round(6).ravel())

# view 0 attends into its neighbors' features (queries from the
# neighbors, keys/values from view 0), then averages the two contexts
out = adjacent_attention(f[0], f_left=f[2], f_right=f[1], p=p)
print("\nadjacent context for view 0, token 0:",
      np.array_str(out.data[0], precision=3))

# ring equivariance at the full-model level: rotate the cameras, get
# the same depths rotated
cfg = ModelConfig(n_views=3, c_f=8, z_alternations=1, n_heads=1, d_max=80.0)
params = init_params(cfg, seed=0)
x = rng.uniform(0, 1, (3, 1, 32, 32)).astype(np.float32)
pred = forward(Tensor(x), params, cfg).final.data
pred_rot = forward(Tensor(np.roll(x, 1, axis=0)), params, cfg).final.data
drift = np.abs(pred_rot - np.roll(pred, 1, axis=0)).max()
print(f"\nrotate inputs by one view: outputs rotate too "
      f"(max drift {drift:.2e})")
