# %% [markdown]
# # Resampling: bicubic resize, kernels and kernel files
#
# Everything the SR pipeline does to change resolution goes through two
# functions. `resize_bicubic` is an antialiased Keys cubic (a = -0.5) with
# half-pixel centers, the same arithmetic as MATLAB's `imresize`.
# `downscale_with_kernel` blurs with an arbitrary kernel and subsamples.

# %%
from pathlib import Path

import numpy as np

from zssr.image import load_image, save_image
from zssr.resample import (DELTA, GaussianKernelSpec, Kernel, downscale_with_kernel, gaussian_kernel,
                           load_kernel, resize_bicubic, resize_by, sample_random_kernel, save_kernel)

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"
OUT = Path("demo_output")
OUT.mkdir(exist_ok=True)

img = load_image(DATA / "astronaut.png", dtype=np.float64)
print("input", img.shape)

# %% [markdown]
# Shrinking stretches the cubic by 1/scale so it acts as a low-pass filter.
# Without antialiasing the same call just interpolates, and fine texture aliases.

# %%
small = resize_by(img, 0.5)
aliased = resize_by(img, 0.5, antialias=False)
print("downscaled", small.shape)
print("mean |antialiased - aliased| =", np.abs(small - aliased).mean())

up = resize_by(small, 2.0, size=img.shape[:2])
print("round trip mean abs error", np.abs(up - img).mean())
save_image(up, OUT / "astronaut_bicubic_roundtrip.png")

# %% [markdown]
# A constant image is a fixed point of every resize: the weights of each
# output sample sum to one.

# %%
flat = np.full((10, 10, 3), 0.3)
print(np.ptp(resize_bicubic(flat, 23, 7)))

# %% [markdown]
# ## Kernels
#
# `DELTA` is a single tap. Downscaling with it by 2 keeps every second pixel,
# the purest form of aliasing.

# %%
ramp = np.arange(16.0).reshape(4, 4, 1)
print(downscale_with_kernel(ramp, DELTA, 2)[:, :, 0])

# %% [markdown]
# Anisotropic Gaussians are given by two eigenvalues and a rotation.
# Random ones draw both eigenvalues from U[0, s^2] and the angle from U[0, pi).

# %%
k = gaussian_kernel(GaussianKernelSpec(lambda1=3.0, lambda2=0.5, theta=np.pi / 6, scale=2.0))
print("gaussian kernel", k.shape, "sum", k.taps.sum())

rk, spec = sample_random_kernel(2.0, seed=3)
print(spec)
blurred = downscale_with_kernel(img, rk, 2.0)
save_image(blurred, OUT / "astronaut_random_kernel_lr.png")

# %% [markdown]
# Kernel files are plain text: a `KH KW` line, then KH rows of taps.
# Taps that do not sum to one are normalized with a warning.

# %%
save_kernel(rk, OUT / "random_kernel.txt")
print((OUT / "random_kernel.txt").read_text().splitlines()[0])
assert load_kernel(OUT / "random_kernel.txt") == Kernel(rk.taps)
