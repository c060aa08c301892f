"""Depth-n truncation of the stationary k-Bratteli diagram as a path tree.

Nodes are finite paths rooted at V_0, stored level by level in contiguous
arrays. The edge from level n to level n+1 is drawn from A_i with
i = (n mod k) + 1. Children of a node occupy a contiguous id range and are
ordered lexicographically by (new source vertex, multiplicity index).
"""

import csv
import hashlib

import numpy as np

from .errors import BudgetExceeded, NotBranching
from .kgraph import ValidatedKGraph, validate

DEFAULT_NODE_BUDGET = 5_000_000


class PathTree:
    """Arena storage for all finite paths of length <= depth.

    Attributes are flat arrays indexed by global node id. ``offsets[n]`` is
    the first id on level n; level n occupies ``offsets[n]:offsets[n+1]``.
    """

    def __init__(self, vk, depth, parent, level, source, root, edge_w, edge_mult,
                 child_start, child_count, offsets):
        self.vk = vk
        self.perron = vk.perron
        self.depth = depth
        self.parent = parent
        self.level = level
        self.source = source
        self.root = root
        self.edge_w = edge_w
        self.edge_mult = edge_mult
        self.child_start = child_start
        self.child_count = child_count
        self.offsets = offsets
        self._cache = {}
        for a in (parent, level, source, root, edge_w, edge_mult, child_start,
                  child_count, offsets):
            a.setflags(write=False)

    def __repr__(self):
        sizes = ",".join(str(s) for s in self.level_sizes())
        return f"PathTree(k={self.vk.k}, N={self.vk.N}, depth={self.depth}, levels=[{sizes}])"

    @property
    def n_nodes(self):
        return int(self.offsets[-1])

    @property
    def k(self):
        return self.vk.k

    @property
    def N(self):
        return self.vk.N

    def level_sizes(self):
        return np.diff(self.offsets)

    def level_ids(self, n):
        return np.arange(self.offsets[n], self.offsets[n + 1])

    def leaves(self):
        return self.level_ids(self.depth)

    def children(self, node):
        start = int(self.child_start[node])
        return np.arange(start, start + int(self.child_count[node]))

    def matrix_index(self, n):
        """0-based index of the vertex matrix used for edges leaving level n."""
        return n % self.k

    def ancestors(self, n):
        """(|level n|, n+1) array; row j lists the chain x(0,0), ..., x(0,n) of node j."""
        key = ("anc", n)
        if key not in self._cache:
            ids = self.level_ids(n)
            out = np.empty((ids.size, n + 1), dtype=np.int64)
            out[:, n] = ids
            for j in range(n, 0, -1):
                out[:, j - 1] = self.parent[out[:, j]]
            out.setflags(write=False)
            self._cache[key] = out
        return self._cache[key]

    def ancestor_at(self, node, n):
        node = int(node)
        while self.level[node] > n:
            node = int(self.parent[node])
        return node

    def path_labels(self, node):
        """(root vertex, [(w, j), ...]) identifying the path of a node."""
        chain = []
        node = int(node)
        while self.level[node] > 0:
            chain.append((int(self.edge_w[node]), int(self.edge_mult[node])))
            node = int(self.parent[node])
        return int(self.root[node]), chain[::-1]

    def find(self, root_vertex, labels):
        """Node id for a root vertex and a sequence of (w, j) edge labels."""
        node = int(self.offsets[0]) + int(root_vertex)
        for w, j in labels:
            kids = self.children(node)
            hit = kids[(self.edge_w[kids] == w) & (self.edge_mult[kids] == j)]
            if hit.size != 1:
                raise KeyError(f"no edge ({w}, {j}) below node {node}")
            node = int(hit[0])
        return node

    def cache(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]


def _edge_tables(mat):
    """Padded per-vertex edge lists of one vertex matrix: (w, j) in lex order."""
    n = mat.shape[0]
    deg = mat.sum(axis=1)
    width = max(int(deg.max()), 1)
    w_tab = np.zeros((n, width), dtype=np.int64)
    j_tab = np.zeros((n, width), dtype=np.int64)
    for v in range(n):
        pos = 0
        for w in range(n):
            for j in range(int(mat[v, w])):
                w_tab[v, pos] = w
                j_tab[v, pos] = j
                pos += 1
    return deg.astype(np.int64), w_tab, j_tab


def estimate_node_count(vk, depth):
    counts = np.ones(vk.N, dtype=object)
    total = vk.N
    for n in range(depth):
        a = np.array(vk.matrices[n % vk.k].tolist(), dtype=object)
        counts = counts.dot(a)
        total += int(sum(counts))
    return total


def build_tree(vk, perron=None, depth=1, budget=DEFAULT_NODE_BUDGET):
    """Enumerate all finite paths of length <= depth rooted at V_0."""
    if not isinstance(vk, ValidatedKGraph):
        vk = validate(vk)
    if perron is not None and perron is not vk.perron:
        vk = ValidatedKGraph(spec=vk.spec, perron=perron)
    if depth < 1:
        raise ValueError("depth must be >= 1")
    est = estimate_node_count(vk, depth)
    if est > budget:
        raise BudgetExceeded(est, budget)

    tables = [_edge_tables(a) for a in vk.matrices]
    N = vk.N
    src = [np.arange(N, dtype=np.int64)]
    par = [np.full(N, -1, dtype=np.int64)]
    rt = [np.arange(N, dtype=np.int64)]
    ew = [np.full(N, -1, dtype=np.int64)]
    em = [np.full(N, -1, dtype=np.int64)]
    offsets = [0, N]
    cstart, ccount = [], []
    for n in range(depth):
        deg, w_tab, j_tab = tables[n % vk.k]
        cur_src = src[-1]
        counts = deg[cur_src]
        total = int(counts.sum())
        parent_local = np.repeat(np.arange(cur_src.size), counts)
        first = np.concatenate(([0], np.cumsum(counts)[:-1]))
        slot = np.arange(total) - first[parent_local]
        psrc = cur_src[parent_local]
        cstart.append(offsets[-1] + first)
        ccount.append(counts)
        par.append(offsets[-2] + parent_local)
        src.append(w_tab[psrc, slot])
        em.append(j_tab[psrc, slot])
        ew.append(w_tab[psrc, slot])
        rt.append(rt[-1][parent_local])
        offsets.append(offsets[-1] + total)
    leaves = src[-1].size
    cstart.append(np.full(leaves, offsets[-1], dtype=np.int64))
    ccount.append(np.zeros(leaves, dtype=np.int64))
    level = np.concatenate([np.full(s.size, n, dtype=np.int64) for n, s in enumerate(src)])
    return PathTree(
        vk, depth,
        parent=np.concatenate(par),
        level=level,
        source=np.concatenate(src),
        root=np.concatenate(rt),
        edge_w=np.concatenate(ew),
        edge_mult=np.concatenate(em),
        child_start=np.concatenate(cstart).astype(np.int64),
        child_count=np.concatenate(ccount).astype(np.int64),
        offsets=np.asarray(offsets, dtype=np.int64),
    )


def ext1_pairs(tree, node):
    """Ordered pairs (e, e') of distinct child edges of a node, as child ids."""
    kids = tree.children(node)
    if kids.size < 2:
        raise NotBranching(int(node), int(kids.size))
    return [(int(a), int(b)) for a in kids for b in kids if a != b]


def common_prefix(tree, x, y):
    """Deepest common ancestor of two nodes, or None if their roots differ."""
    x, y = int(x), int(y)
    if tree.root[x] != tree.root[y]:
        return None
    while tree.level[x] > tree.level[y]:
        x = int(tree.parent[x])
    while tree.level[y] > tree.level[x]:
        y = int(tree.parent[y])
    while x != y:
        x, y = int(tree.parent[x]), int(tree.parent[y])
    return x


def meet_level_matrix(tree, n):
    """|x ^ y| for all pairs of level-n nodes; -1 where the roots differ."""
    def build():
        anc = tree.ancestors(n)
        same = anc[:, None, :] == anc[None, :, :]
        # prefixes agree on an initial run of levels
        run = np.cumprod(same, axis=2).sum(axis=2) - 1
        run.setflags(write=False)
        return run
    return tree.cache(("meetlev", n), build)


def meet_matrix(tree, n):
    """Node id of x ^ y for all pairs of level-n nodes; -1 where roots differ."""
    def build():
        anc = tree.ancestors(n)
        lev = meet_level_matrix(tree, n)
        rows = np.arange(anc.shape[0])[:, None]
        out = np.where(lev >= 0, anc[rows, np.maximum(lev, 0)], -1)
        out.setflags(write=False)
        return out
    return tree.cache(("meet", n), build)


def transition_probabilities(tree, node):
    """P(child | node) = mu[child] / mu[node] = kappa_w / (rho_i kappa_v)."""
    kappa = tree.perron.kappa
    rho = tree.perron.rho[tree.matrix_index(int(tree.level[node]))]
    kids = tree.children(node)
    return kids, kappa[tree.source[kids]] / (rho * kappa[tree.source[node]])


def derive_seed(base_seed, index):
    """Independent 64-bit stream seed for a parallel task."""
    h = hashlib.blake2b(f"{int(base_seed)}:{int(index)}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def sample_path(tree, rng_seed, count):
    """Draw ``count`` leaves with P(leaf) = mu[leaf cylinder].

    Root vertex v is drawn with probability kappa_v, then each edge with the
    Markov rule kappa_{s(e)} / (rho_i kappa_{s(gamma)}).
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(rng_seed) & (2**64 - 1))))
    kappa = tree.perron.kappa
    cur = rng.choice(tree.N, size=count, p=kappa) + int(tree.offsets[0])
    for n in range(tree.depth):
        rho = tree.perron.rho[tree.matrix_index(n)]
        start = tree.child_start[cur]
        cnt = tree.child_count[cur]
        width = int(cnt.max())
        slots = start[:, None] + np.arange(width)[None, :]
        valid = np.arange(width)[None, :] < cnt[:, None]
        slots = np.where(valid, slots, start[:, None])
        probs = np.where(valid, kappa[tree.source[slots]] / (rho * kappa[tree.source[cur]])[:, None], 0.0)
        cdf = np.cumsum(probs, axis=1)
        u = rng.random(count) * cdf[:, -1]
        pick = (cdf <= u[:, None]).sum(axis=1)
        pick = np.minimum(pick, cnt - 1)
        cur = start + pick
    return cur


def dump_tree_csv(tree, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["id", "parent", "level", "source_vertex", "root_vertex", "edge_label"])
        for i in range(tree.n_nodes):
            label = "" if tree.level[i] == 0 else f"{tree.edge_w[i]}:{tree.edge_mult[i]}"
            wr.writerow([i, int(tree.parent[i]), int(tree.level[i]), int(tree.source[i]),
                         int(tree.root[i]), label])
