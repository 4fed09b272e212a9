"""Zero-shot super-resolution: an image-specific CNN trained at test time on the input alone."""
from .bench import degrade, oracle_combine, psnr_y, run_suite, ssim_y
from .image import ALL_GEOMETRIES, Geometry, apply_geometry, load_image, save_image, to_luma
from .network import NetworkConfig, backward, forward, init_network
from .resample import (Kernel, downscale, downscale_with_kernel, gaussian_kernel, load_kernel, resize_bicubic,
                       resize_by, sample_random_kernel, save_kernel)
from .trainer import ZssrConfig, backproject, predict, run_gradual, zssr

__version__ = "0.1.0"
