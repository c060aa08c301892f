# %% [markdown]
# Dyadic tour: the binary Cantor set seen as the path space of the 1-graph [[2]].
# Build the tree, look at the measure and weight, then the Laplacian spectrum
# and the heat kernel.

# %%
import numpy as np

from kbratteli import SpectralParams, annotate_lambda, annotate_measure, build_tree, validate
from kbratteli.heat import heat_closed, heat_matrix
from kbratteli.measures import WeightParams, annotate_weight
from kbratteli.spectral import closed_form_spectrum, matrix_spectrum

vk = validate([[[2]]])
print("rho =", vk.perron.rho, "kappa =", vk.perron.kappa)
tree = build_tree(vk, depth=8)
print("level sizes:", tree.level_sizes())

# %% [markdown]
# Cylinders at level n carry mass 2^-n; with delta = 1/2 the weight is 4^-n.

# %%
mu = annotate_measure(tree)
w = annotate_weight(tree, WeightParams(0.5))
for n in range(4):
    node = tree.level_ids(n)[0]
    print(f"level {n}: mu = {mu[node]:.6g}, w = {w[node]:.6g}")

# %% [markdown]
# Eigenvalues sit on the nodes. They become more negative with depth, by a
# factor approaching 2^((2-s)/delta + 1) per level.

# %%
p = SpectralParams(s=1.0, delta=0.5)
lam = annotate_lambda(tree, p)
mins = [lam[tree.level_ids(n)].min() for n in range(tree.depth + 1)]
print("level-min eigenvalues:", np.array(mins))
print("successive ratios:", np.array(mins[1:]) / np.array(mins[:-1]))

# %% [markdown]
# The node eigenvalues reproduce the spectrum of the finite-level Laplacian matrix.

# %%
eig, n_zero = matrix_spectrum(tree, p, 4)
ref = closed_form_spectrum(tree, p, 4)
nz = ref != 0
print("zero modes:", n_zero, " max relative error:", np.max(np.abs(eig[nz] / ref[nz] - 1)))

# %% [markdown]
# The heat kernel is a finite sum along the common prefix of two points.

# %%
leaves = tree.leaves()
for t in (1e-3, 1e-2, 1e-1, 1.0):
    on = heat_closed(tree, p, t, leaves[0], leaves[0]).value
    off = heat_closed(tree, p, t, leaves[0], leaves[-1]).value
    print(f"t={t:g}: p(x,x) = {on:.6g}, p(x,y far) = {off:.6g}")

P = heat_matrix(tree, p, 0.1, 4)
print("row sums (times mu):", (P @ mu[tree.level_ids(4)])[:4])
