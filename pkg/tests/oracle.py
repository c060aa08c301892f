"""Exact rational reference values computed by direct path enumeration.

Independent of the package: paths are enumerated recursively and every
quantity is evaluated from its defining formula in Fraction arithmetic.
Only delta = 1/2 is supported so that weights stay rational.
"""

from fractions import Fraction
from itertools import permutations


def enumerate_paths(mats, depth):
    """Dict path -> source vertex; a path is (root, (w0, j0), (w1, j1), ...)."""
    k = len(mats)
    n_vert = len(mats[0])
    out = {}
    frontier = [((v,), v) for v in range(n_vert)]
    for p, v in frontier:
        out[p] = v
    for n in range(depth):
        a = mats[n % k]
        nxt = []
        for p, v in frontier:
            for w in range(n_vert):
                for j in range(a[v][w]):
                    q = p + ((w, j),)
                    out[q] = w
                    nxt.append((q, w))
        frontier = nxt
    return out


def children(paths, p):
    return sorted(q for q in paths if len(q) == len(p) + 1 and q[: len(p)] == p)


def rho_product(rho, n):
    prod = Fraction(1)
    for j in range(n):
        prod *= rho[j % len(rho)]
    return prod


def mu(paths, kappa, rho, p):
    return kappa[paths[p]] / rho_product(rho, len(p) - 1)


def weight_half(paths, kappa, rho, p):
    """w_delta at delta = 1/2: (prod rho)^{-2} kappa."""
    return kappa[paths[p]] / rho_product(rho, len(p) - 1) ** 2


def G_s1(paths, kappa, rho, p, kids):
    """G_s at s = 1, delta = 1/2: 1/2 w^{1} sum over ordered distinct child pairs."""
    kids = kids(p)
    total = sum(mu(paths, kappa, rho, a) * mu(paths, kappa, rho, b) for a, b in permutations(kids, 2))
    return Fraction(1, 2) * weight_half(paths, kappa, rho, p) * total


def lambda_s1(paths, kappa, rho, p, kids):
    """lambda at s = 1, delta = 1/2 from the prefix-sum formula."""
    chain = [p[: j + 1] for j in range(len(p))]
    total = Fraction(0)
    for a, b in zip(chain[:-1], chain[1:]):
        total += (mu(paths, kappa, rho, b) - mu(paths, kappa, rho, a)) / G_s1(paths, kappa, rho, a, kids)
    return total - mu(paths, kappa, rho, p) / G_s1(paths, kappa, rho, p, kids)


def child_lister(paths):
    """Children lookup; enumerate one level past the depth where G is needed."""
    table = {}
    for q in paths:
        if len(q) > 1:
            table.setdefault(q[:-1], []).append(q)

    def kids(p):
        return sorted(table.get(p, []))
    return kids


def dyadic_lambda(n, s, delta):
    """Closed form on the binary tree: a = (2-s)/delta + 2, r = 2^(a-1)."""
    r = 2.0 ** ((2.0 - s) / delta + 1.0)
    return -2.0 * (r ** n - 1.0) / (r - 1.0) - 4.0 * r ** n
