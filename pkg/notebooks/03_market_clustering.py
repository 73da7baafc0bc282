# %% [markdown]
# # Clustering markets by how their peaks line up
#
# Psi[l, m] = 1 + max over |tau| <= 10 of the peak cross-correlation between
# markets l and m.  Each market is then a point (its row of Psi) and Ward's
# method merges the closest clusters until one remains.

# %%
import numpy as np

from excursor import synth
from excursor.cluster import ahc, export_dendrogram
from excursor.matrices import build_psi

# %% [markdown]
# Twelve synthetic markets in three regions: each region shares a factor
# with loading 0.6, regions are independent of each other.

# %%
data = synth("factor", 6511, 12, seed=0, groups=3, loading=0.6)
psi = build_psi(data, "peak", theta=0.0, tau_mode="max", tau_window=10)
np.set_printoptions(precision=2, suppress=True, linewidth=120)
print(psi.values)

# %%
tree = ahc(psi)
for a, b, h, size in tree.merges:
    print(f"merge {a:2d} + {b:2d} at height {h:6.2f} -> size {size}")
print("three clusters:", tree.cut(3))

# %%
print(export_dendrogram(tree, "newick"))
