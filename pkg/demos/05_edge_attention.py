# %% [markdown]
# # Gated convolution and the edge-attention block
#
# The learned refiner mixes edge features with image features through a
# sigmoid gate. Forward and backward passes are plain numpy; the gradient
# is checked against central differences.

# %%
import numpy as np

from vtonsize import refine

rng = np.random.default_rng(0)
ei = rng.normal(size=(2, 4, 4))
fi = rng.normal(size=(3, 4, 4))

for name, w in (("closed", -1e4), ("half", 0.0), ("open", 1e4)):
    p = refine.GatedConvParams(np.full((2, 3), w), np.zeros(2), np.eye(2))
    out = refine.gated_conv_forward(ei, fi, p)
    print(f"gate {name:<6}: out / ei = {np.median(out / ei):.2f}")

# %%
params = refine.init_params(2, 3, 4, seed=1, scale=0.5)
out = refine.edge_attention_forward(ei, fi, params)
print("edge attention output:", out.shape)

# %% Gradient check on one weight
dout = rng.normal(size=out.shape)
grads, _, _ = refine.edge_attention_backward(ei, fi, params, dout)
name = sorted(grads)[0]
arrs = {k: v.copy() for k, v in params.arrays().items()}
eps = 1e-4


def loss(a):
    return float((refine.edge_attention_forward(ei, fi, refine.EdgeAttentionParams.from_arrays(a)) * dout).sum())


arrs[name].flat[0] += eps
up = loss(arrs)
arrs[name].flat[0] -= 2 * eps
down = loss(arrs)
print(f"{name}[0]: analytic {grads[name].flat[0]:.6f}  numeric {(up - down) / (2 * eps):.6f}")
