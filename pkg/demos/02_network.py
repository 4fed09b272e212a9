# %% [markdown]
# # The image-specific network
#
# A plain residual CNN: 8 hidden 3x3 conv layers of 64 channels with ReLU
# and a final conv back to the image channels. The output is
# `input + net(input)`, and the last layer starts at zero, so a fresh
# network is the identity.

# %%
import numpy as np

from zssr.network import (AdamState, ForwardCache, NetworkConfig, adam_step, backward, forward,
                          init_network, l1_loss)

cfg = NetworkConfig()
params = init_network(cfg, seed=0)
print([w.shape for w in params.weights][:2], "...", params.weights[-1].shape)

x = np.random.default_rng(0).random((24, 24, 3)).astype(np.float32)
print("identity at init:", np.array_equal(forward(params, x), x))

# %% [markdown]
# ## Checking backprop against finite differences
#
# Gradients are written by hand, so compare them with central differences
# of `<forward(x), g>` in float64 on a small random network.

# %%
small = init_network(NetworkConfig(hidden_layers=2, channels=4, in_channels=1, out_channels=1), 1,
                     dtype=np.float64)
rng = np.random.default_rng(2)
for a in small.arrays():
    a[...] = rng.normal(0, 0.5, a.shape)
x1 = rng.random((7, 7, 1))
g = rng.normal(size=x1.shape)

cache = ForwardCache()
forward(small, x1, cache)
grads = backward(small, cache, g)

h = 1e-5
w = small.weights[1]
for idx in [(0, 0, 1, 1), (3, 2, 0, 2), (1, 3, 2, 0)]:
    orig = w[idx]
    w[idx] = orig + h
    fp = (forward(small, x1) * g).sum()
    w[idx] = orig - h
    fm = (forward(small, x1) * g).sum()
    w[idx] = orig
    print(idx, "backprop", grads.weights[1][idx], "numeric", (fp - fm) / (2 * h))

# %% [markdown]
# ## Fitting one pair with Adam and an L1 loss

# %%
target = np.clip(x + 0.1 * np.sin(np.arange(24))[None, :, None], 0, 1).astype(np.float32)
state = AdamState.zeros(params)
for it in range(60):
    cache = ForwardCache()
    loss, grad = l1_loss(forward(params, x, cache), target)
    adam_step(params, backward(params, cache, grad), state, lr=1e-3)
    if it % 20 == 0:
        print(f"iter {it:3d}  loss {loss:.5f}")
