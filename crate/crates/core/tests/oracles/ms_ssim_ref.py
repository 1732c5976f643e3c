"""Reference MS-SSIM values for tests/metrics.rs, from pytorch_msssim in float64.

Run: python3 ms_ssim_ref.py
"""
import numpy as np
import torch
from pytorch_msssim import ms_ssim


def pair(k):
    h, w = 161 + 9 * k, 170 + 13 * k
    c, y, x = np.meshgrid(np.arange(3), np.arange(h), np.arange(w), indexing="ij")
    a = (x * x * 3 + y * 7 + x * y * 5 + c * 11 + k * 13) % 256
    n = ((x * 37 + y * 53 + c * 17 + k * 29) * (x + 3)) % 61 - 30
    b = np.clip(a + n * (k + 1) // 3, 0, 255)
    f = lambda v: (v / 255.0).astype(np.float32).astype(np.float64)
    return f(a), f(b)


for k in range(5):
    a, b = pair(k)
    t = lambda v: torch.from_numpy(v)[None]
    print(k, repr(ms_ssim(t(a), t(b), data_range=1.0).item()))
a, _ = pair(0)
print("inverse", repr(ms_ssim(torch.from_numpy(a)[None], torch.from_numpy(1.0 - a)[None], data_range=1.0).item()))
