# %% [markdown]
# Moments of the displacement d_w(x, Y_t) on the binary Cantor set.
# Exact sums along the path of x give E[d_w^(beta*gamma)] for every t.
# On t in [1e-2, 1] the chain has almost relaxed (the slowest nonzero rate is
# 4, independent of s and delta), so log-log slopes flatten. Well below the
# relaxation time the slopes approach min(gamma, 1) when beta = 2 + delta - s.

# %%
import numpy as np

from kbratteli import SpectralParams, build_tree, validate
from kbratteli.jump import moments

tree = build_tree(validate([[[2]]]), depth=12)
p = SpectralParams(s=1.0, delta=0.5)
x = int(tree.leaves()[0])

for label, t in (("t in [1e-2, 1]", np.logspace(-2, 0, 21)),
                 ("t in [1e-7, 1e-5]", np.logspace(-7, -5, 9))):
    res = moments(tree, p, x, t, [0.5, 1.0, 2.0], tail_tol=np.inf)
    print(label)
    for name, block in res["table"].items():
        slopes = {g: round(row["slope"], 3) for g, row in block["rows"].items()}
        print(f"  beta={block['beta']:.3g} ({name}): slopes by gamma {slopes}")

# %% [markdown]
# Metric comparison: log d_s against log d_w over all leaf pairs.

# %%
from kbratteli.heat import regress_exponent

for s in (1.25, 1.5, 1.75):
    r = regress_exponent(build_tree(validate([[[2]]]), depth=10), SpectralParams(s, 0.5))
    print(f"s={s}: slope {r['slope']:.4f}, candidates {r['candidates']}")
