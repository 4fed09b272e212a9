# %% [markdown]
# # Degradations, metrics and the benchmark suite
#
# Scores use the usual SR conventions: BT.601 luma, a border of ceil(s)
# pixels removed, PSNR against a peak of 1 and 11x11 Gaussian-window SSIM.

# %%
from pathlib import Path

import numpy as np

from zssr.bench import (BICUBIC, MODES, ZSSR_ASSUMED, ZSSR_TRUE, ManifestEntry, SuiteConfig, degrade,
                        oracle_combine, psnr_y, run_suite, ssim_y, write_manifest)
from zssr.image import load_image
from zssr.resample import resize_by
from zssr.trainer import ZssrConfig

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"
OUT = Path("demo_output")
OUT.mkdir(exist_ok=True)

gt = load_image(DATA / "coffee.png", dtype=np.float64)

# %% [markdown]
# Every degradation is seeded (PCG64), and the record says how to redo it.

# %%
for mode in MODES:
    lr, rec = degrade(gt, mode, {}, seed=1, source="coffee.png")
    up = resize_by(lr, 2.0, size=gt.shape[:2])
    print(f"{mode:24s} bicubic PSNR-Y {psnr_y(up, gt, 2):6.2f}  {rec.params_string()}")

# %% [markdown]
# ## Metric sanity checks

# %%
flat = np.full((16, 16, 1), 0.5)
print("uniform 0.1 error:", psnr_y(flat + 0.1, flat), "dB")
print("self SSIM:", ssim_y(gt, gt))

# %% [markdown]
# The pixel-wise oracle keeps, per pixel, whichever of two results is closer
# to the ground truth. It can never score below either input.

# %%
lr, _ = degrade(gt, "ideal-bicubic", {}, seed=0)
a = resize_by(lr, 2.0, size=gt.shape[:2])
b = resize_by(lr, 2.0, size=gt.shape[:2], antialias=False)
b = np.clip(b + 0.02 * np.random.default_rng(0).standard_normal(b.shape), 0, 1)
_, row = oracle_combine(a, b, gt, shave=2)
print(f"a {psnr_y(a, gt, 2):.2f}  b {psnr_y(b, gt, 2):.2f}  oracle {row.psnr_db:.2f}")

# %% [markdown]
# ## A small suite
#
# A manifest names ground truths, a degradation and a seed. The suite degrades
# each image, runs the chosen methods and writes a score table with a mean row.
# ZSSR settings are kept tiny here.

# %%
entries = [ManifestEntry(n, str(DATA / f"{n}.png"), "random-gaussian-kernel", i, {})
           for i, n in enumerate(["rocket", "ihc"])]
write_manifest(entries, OUT / "manifest.csv")
cfg = SuiteConfig(ZssrConfig(gradual_steps=1, crop_size=32, max_iterations=300),
                  variants=(BICUBIC, ZSSR_ASSUMED, ZSSR_TRUE))
result = run_suite(OUT / "manifest.csv", cfg, OUT / "scores.csv")
print(result.to_csv())
