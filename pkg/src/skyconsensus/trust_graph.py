"""Directed trust graphs: ``u -> v`` means *u follows (trusts) v*.

Graphs are stored as two CSR adjacency structures over dense ids ``0..n-1``:
followees (out-edges) and followers (the exact inverse).  Both are read-only
numpy arrays, so a graph can be shared across runs and worker processes.
"""

import math
from dataclasses import dataclass, field

import numpy as np


class EdgeListParseError(ValueError):
    def __init__(self, lineno, line, reason):
        super().__init__(f"line {lineno}: {reason}: {line!r}")
        self.lineno = lineno
        self.reason = f"{reason}: {line!r}"


class GraphAnnihilated(ValueError):
    """Min-followee filtering removed every node."""


@dataclass(frozen=True)
class ParseReport:
    lines: int
    duplicates: int
    self_loops: int


@dataclass(frozen=True)
class GraphStats:
    node_count: int
    edge_count: int
    average_degree: float
    density: float

    def to_json(self):
        return {
            "nodes": self.node_count,
            "edges": self.edge_count,
            "average_degree": self.average_degree,
            "density": self.density,
        }


def _csr(n, src, dst):
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return indptr, dst.astype(np.int64)


def _readonly(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TrustGraph:
    n: int
    followee_ptr: np.ndarray
    followee_idx: np.ndarray
    follower_ptr: np.ndarray
    follower_idx: np.ndarray
    original_ids: np.ndarray
    parse_report: ParseReport | None = field(default=None, compare=False)

    @classmethod
    def from_edges(cls, n, src, dst, original_ids=None, parse_report=None):
        """Build from (follower, followee) arrays.  Caller guarantees no
        duplicates and no self-loops."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if src.size and (src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= n):
            raise ValueError("edge endpoint outside 0..n-1")
        fptr, fidx = _csr(n, src, dst)
        rptr, ridx = _csr(n, dst, src)
        if original_ids is None:
            original_ids = np.arange(n, dtype=np.int64)
        return cls(
            n,
            _readonly(fptr),
            _readonly(fidx),
            _readonly(rptr),
            _readonly(ridx),
            _readonly(np.asarray(original_ids, dtype=np.int64).copy()),
            parse_report,
        )

    @property
    def edge_count(self):
        return int(self.followee_idx.size)

    def followees(self, u):
        return self.followee_idx[self.followee_ptr[u] : self.followee_ptr[u + 1]]

    def followers(self, v):
        return self.follower_idx[self.follower_ptr[v] : self.follower_ptr[v + 1]]

    def followee_counts(self):
        return np.diff(self.followee_ptr)

    def follower_counts(self):
        return np.diff(self.follower_ptr)

    def edges(self):
        """(src, dst) arrays in canonical (src, dst)-sorted order."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.followee_counts())
        return src, np.asarray(self.followee_idx)

    def stats(self):
        return graph_stats(self)

    def same_as(self, other):
        return (
            self.n == other.n
            and np.array_equal(self.followee_ptr, other.followee_ptr)
            and np.array_equal(self.followee_idx, other.followee_idx)
        )

    def to_bytes(self):
        return self.followee_ptr.tobytes() + self.followee_idx.tobytes()


def graph_stats(g):
    n, e = g.n, g.edge_count
    return GraphStats(
        node_count=n,
        edge_count=e,
        average_degree=e / n if n else 0.0,
        density=e / (n * (n - 1)) if n > 1 else 0.0,
    )


def parse_edge_list(text):
    """Parse a SNAP-style edge list.

    Ids are re-mapped to dense indices in ascending order of the original ids;
    ``graph.original_ids[i]`` recovers the file id.  Duplicate edges and
    self-loops are dropped and counted in ``graph.parse_report``.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    src, dst = [], []
    nodes = set()
    lines = self_loops = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 2:
            raise EdgeListParseError(lineno, line, f"expected 2 ids, found {len(parts)}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListParseError(lineno, line, "non-integer node id") from None
        lines += 1
        nodes.add(u)
        nodes.add(v)
        if u == v:
            self_loops += 1
            continue
        src.append(u)
        dst.append(v)

    original = np.array(sorted(nodes), dtype=np.int64)
    s = np.searchsorted(original, np.array(src, dtype=np.int64))
    d = np.searchsorted(original, np.array(dst, dtype=np.int64))
    pairs = np.unique(np.stack([s, d], axis=1), axis=0) if len(src) else np.empty((0, 2), np.int64)
    report = ParseReport(lines=lines, duplicates=len(src) - len(pairs), self_loops=self_loops)
    return TrustGraph.from_edges(len(original), pairs[:, 0], pairs[:, 1], original, report)


def read_edge_list(path):
    with open(path, encoding="utf-8") as fh:
        return parse_edge_list(fh.read())


def format_edge_list(g, header=()):
    """Canonical text form: dense ids, edges sorted by (follower, followee)."""
    src, dst = g.edges()
    out = [f"# {line}" for line in header]
    out.append(f"# nodes={g.n} edges={g.edge_count}")
    out.extend(f"{u} {v}" for u, v in zip(src.tolist(), dst.tolist()))
    return "\n".join(out) + "\n"


def induced_subgraph(g, keep):
    """Subgraph on the nodes where boolean mask ``keep`` is set, re-indexed
    densely in ascending old-id order."""
    keep = np.asarray(keep, dtype=bool)
    new_id = np.full(g.n, -1, dtype=np.int64)
    new_id[keep] = np.arange(int(keep.sum()))
    src, dst = g.edges()
    sel = keep[src] & keep[dst]
    return TrustGraph.from_edges(
        int(keep.sum()), new_id[src[sel]], new_id[dst[sel]], g.original_ids[keep]
    )


def enforce_min_followees(g, minimum):
    """Peel nodes with fewer than ``minimum`` followees until none remain.

    Removing a node deletes its incident edges, which can push its followers
    under the threshold, so this runs to a fixed point (like a k-core peel on
    out-degree).  Raises :class:`GraphAnnihilated` if nothing survives.
    """
    if minimum < 0:
        raise ValueError("minimum followee count must be >= 0")
    outdeg = g.followee_counts().copy()
    alive = np.ones(g.n, dtype=bool)
    stack = [int(u) for u in np.flatnonzero(outdeg < minimum)]
    alive[stack] = False
    while stack:
        v = stack.pop()
        for u in g.followers(v).tolist():
            if alive[u]:
                outdeg[u] -= 1
                if outdeg[u] < minimum:
                    alive[u] = False
                    stack.append(u)
    if not alive.any():
        raise GraphAnnihilated(f"no node keeps {minimum} followees")
    return induced_subgraph(g, alive)


def generate_uniform(n, degree, seed):
    """Every node follows exactly ``degree`` distinct other nodes chosen
    uniformly at random."""
    if not 0 < degree < n:
        raise ValueError(f"need 0 < degree < n, got degree={degree}, n={n}")
    rng = np.random.default_rng(seed)
    dst = np.empty(n * degree, dtype=np.int64)
    for u in range(n):
        pick = rng.choice(n - 1, size=degree, replace=False)
        pick[pick >= u] += 1
        dst[u * degree : (u + 1) * degree] = pick
    src = np.repeat(np.arange(n, dtype=np.int64), degree)
    return TrustGraph.from_edges(n, src, dst)


def _fraction_count(fraction, n, rounding):
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    # round() first so 0.07*100 does not ceil to 8
    x = round(fraction * n, 9)
    return min(n, math.ceil(x) if rounding == "ceil" else math.floor(x + 0.5))


def top_influential(g, fraction):
    """First ``ceil(fraction * n)`` nodes by follower count, descending; ties
    go to the lower id."""
    k = _fraction_count(fraction, g.n, "ceil")
    order = np.lexsort((np.arange(g.n), -g.follower_counts()))
    return frozenset(order[:k].tolist())


def random_selection(g, fraction, seed):
    k = _fraction_count(fraction, g.n, "round")
    rng = np.random.default_rng(seed)
    return frozenset(rng.choice(g.n, size=k, replace=False).tolist())


def involved_relationships(g, faulty):
    """Trust edges pointing at the faulty set.

    Returns ``(from_correct, total)``: edges from correct followers into the
    set, and all edges into the set.
    """
    mask = np.zeros(g.n, dtype=bool)
    mask[list(faulty)] = True
    src, dst = g.edges()
    into = mask[dst]
    return int((into & ~mask[src]).sum()), int(into.sum())
