# %% [markdown]
# # One-point statistics of peaks and up-crossings
#
# How often does a standardized series have a local maximum above a level
# theta, and how often does it cross theta upward?  For white noise the
# answers are exact; for a smooth Gaussian process they follow from the
# spectral moments.

# %%
import numpy as np

from excursor import synth
from excursor.features import density_curve
from excursor.spectral import moments
from excursor.theory import (
    gaussian_upcross_density,
    iid_peak_density,
    iid_upcross_density,
    maxima_rate,
    quadrature_bin_density,
)

# %% [markdown]
# ## White noise
#
# A position is a peak when it beats both neighbours, which happens with
# probability 1/3 for three iid values.  An up-crossing of 0 needs one value
# below and the next at or above, probability 1/4.

# %%
x = synth("white", 10**6, seed=0)[0]
grid = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
pk = density_curve(x, "peak", grid)
up = density_curve(x, "upcross", grid)
print(" theta   peaks>=theta   iid     up-crossings   iid")
for t, a, b in zip(grid, pk.density, up.density):
    print(f"{t:6.1f}   {a:.5f}   {iid_peak_density(t):.5f}   {b:.5f}   {iid_upcross_density(t):.5f}")

# %% [markdown]
# ## A smooth Gaussian process
#
# Smoothing white noise with a Gaussian kernel (width 5 samples) gives a
# process whose derivatives exist.  Its up-crossing rate follows the Rice
# formula and its peak heights follow the closed form in
# `gaussian_peak_density`.  Moments are estimated with differences, the same
# discretisation the feature finders use.

# %%
s = synth("smoothed", 10**6, seed=0, width=5)[0]
m = moments(s)
print(f"sigma0 {m.sigma0:.4f}  sigma1 {m.sigma1:.4f}  sigma2 {m.sigma2:.5f}  Gamma {m.gamma_big:.4f}")

up = density_curve(s, "upcross", grid)
print("\n theta   measured   Rice")
for t, v in zip(grid, up.density):
    print(f"{t:6.1f}   {v:.5f}   {gaussian_upcross_density(t, m):.5f}")

# %%
band = 0.5
edges = np.arange(-2.0, 2.0, band)
pk = density_curve(s, "peak", edges, band=band)
print("\n bin           measured   theory    peaks in bin")
for lo, v, c in zip(edges, pk.density, pk.counts):
    th = quadrature_bin_density(lo, lo + band, m)
    print(f"[{lo:+.1f},{lo + band:+.1f})   {v:.5f}   {th:.5f}   {int(c)}")

# %% [markdown]
# The lowest bins hold a few hundred peaks, so their relative scatter is
# several percent even with a million samples.  The total rate of maxima is
# much better determined:

# %%
from excursor.features import find_peaks

rate = len(find_peaks(s)) / (len(s) - 2)
print(f"maxima per sample {rate:.5f}, sigma2/(2 pi sigma1) = {maxima_rate(m):.5f}")
