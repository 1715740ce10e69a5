"""Undirected simple graphs, edge-list I/O, BA generation and exact assortativity."""

from __future__ import annotations

import hashlib
import io
import logging
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Iterable

import numpy as np

from .errors import ParameterError, ParseError, RejectedEdgeError, UndefinedStatisticError

logger = logging.getLogger(__name__)

# Written by save_edge_list; a file carrying it keeps its ids verbatim on load.
_HEADER_RE = re.compile(r"^#\s*dpassort edge list:\s*n=(\d+)\s+M=(\d+)")
_SPLIT_RE = re.compile(r"[\s,]+")


class Graph:
    """Immutable undirected simple graph on nodes ``0..n-1``.

    Edges are stored once, canonically as ``(i, j)`` with ``i > j`` sorted by
    ``i`` then ``j`` (the lower triangle of the adjacency matrix). A CSR
    neighbour structure and the degree vector are derived from it.
    """

    __slots__ = ("_n", "_edges", "_degrees", "_indptr", "_indices", "_remap", "_digest")

    def __init__(self, n: int, edges: np.ndarray, remap: list | None = None):
        n = int(n)
        if n < 0:
            raise ParameterError("node count must be non-negative")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ParameterError(f"edge endpoint outside 0..{n - 1}")
        if np.any(edges[:, 0] == edges[:, 1]):
            bad = edges[edges[:, 0] == edges[:, 1]][0]
            raise RejectedEdgeError((int(bad[0]), int(bad[1])))
        hi = np.maximum(edges[:, 0], edges[:, 1])
        lo = np.minimum(edges[:, 0], edges[:, 1])
        key = np.unique(hi * n + lo)
        canon = np.empty((key.size, 2), dtype=np.int64)
        if n:
            canon[:, 0] = key // n
            canon[:, 1] = key % n

        degrees = np.bincount(canon.ravel(), minlength=n).astype(np.int64)
        src = np.concatenate([canon[:, 0], canon[:, 1]])
        dst = np.concatenate([canon[:, 1], canon[:, 0]])
        order = np.lexsort((dst, src))
        indices = dst[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(degrees, out=indptr[1:])

        for arr in (canon, degrees, indices, indptr):
            arr.setflags(write=False)
        self._n = n
        self._edges = canon
        self._degrees = degrees
        self._indptr = indptr
        self._indices = indices
        self._remap = None if remap is None else list(remap)
        self._digest = None

    @classmethod
    def from_edges(cls, n: int, pairs: Iterable[tuple[int, int]]) -> "Graph":
        pairs = list(pairs)
        return cls(n, np.array(pairs, dtype=np.int64).reshape(-1, 2))

    # basic quantities
    @property
    def n(self) -> int:
        return self._n

    @property
    def M(self) -> int:
        return int(self._edges.shape[0])

    @property
    def edges(self) -> np.ndarray:
        """``(M, 2)`` array of canonical ``(i, j)`` pairs with ``i > j``."""
        return self._edges

    @property
    def degrees(self) -> np.ndarray:
        return self._degrees

    @property
    def d_max(self) -> int:
        return int(self._degrees.max()) if self._n else 0

    @property
    def d_avg(self) -> float:
        return 2.0 * self.M / self._n if self._n else 0.0

    @property
    def remap(self) -> list | None:
        """Original token for each dense id, when the graph was loaded from text."""
        return self._remap

    def neighbors(self, i: int) -> np.ndarray:
        self._check_node(i)
        return self._indices[self._indptr[i]:self._indptr[i + 1]]

    def has_edge(self, i: int, j: int) -> bool:
        nb = self.neighbors(i)
        k = np.searchsorted(nb, j)
        return bool(k < nb.size and nb[k] == j)

    def neighbor_degree_sums(self) -> np.ndarray:
        """Vector of ``T_i = sum_j a_ij d_j`` for every node."""
        contrib = self._degrees[self._indices]
        out = np.zeros(self._n, dtype=np.int64)
        np.add.at(out, np.repeat(np.arange(self._n), self._degrees), contrib)
        return out

    def lower_flat_index(self) -> np.ndarray:
        """Position of each edge in the row-major flattened strict lower triangle.

        Row ``i`` holds columns ``0..i-1`` and starts at ``i*(i-1)/2``; the
        returned array is sorted because edges are stored canonically.
        """
        i = self._edges[:, 0]
        return i * (i - 1) // 2 + self._edges[:, 1]

    def digest(self) -> str:
        if self._digest is None:
            h = hashlib.sha256()
            h.update(str(self._n).encode())
            h.update(self._edges.tobytes())
            self._digest = h.hexdigest()
        return self._digest

    def relabel(self, perm) -> "Graph":
        """Return the graph with node ``v`` renamed to ``perm[v]``."""
        perm = np.asarray(perm, dtype=np.int64)
        if perm.shape != (self._n,) or not np.array_equal(np.sort(perm), np.arange(self._n)):
            raise ParameterError("relabeling must be a permutation of 0..n-1")
        return Graph(self._n, perm[self._edges])

    def _check_node(self, i: int) -> None:
        if not 0 <= i < self._n:
            raise ParameterError(f"node id {i} outside 0..{self._n - 1}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self._n == other._n and np.array_equal(self._edges, other._edges)

    def __hash__(self) -> int:
        return hash(self.digest())

    def __repr__(self) -> str:
        return f"Graph(n={self._n}, M={self.M})"


@dataclass(frozen=True)
class GraphStats:
    n: int
    M: int
    d_max: int
    d_avg: float
    r_u: float
    r_d: float
    r: float | None  # None when r_d == 0

    @property
    def r_defined(self) -> bool:
        return self.r is not None


def load_edge_list(
    source: IO | str | bytes,
    *,
    one_indexed: bool = False,
    self_loops: str = "reject",
    skip_header: bool = False,
) -> Graph:
    """Parse a SNAP-style edge list.

    Lines starting with ``#`` are comments; every other non-blank line holds
    two node tokens separated by whitespace or a comma. Duplicate edges (in
    either orientation) collapse. Node tokens are remapped to dense ids in
    first-appearance order, except for files written by :func:`save_edge_list`,
    whose ids are kept as-is.

    ``one_indexed`` only matters for such files. ``self_loops`` is
    ``"reject"`` (raise :class:`RejectedEdgeError`) or ``"skip"`` (log a
    warning and drop the line). ``skip_header`` drops the first non-comment
    line, as in the CSV exports of the Deezer and GitHub datasets.
    """
    if self_loops not in ("reject", "skip"):
        raise ParameterError("self_loops must be 'reject' or 'skip'")
    if isinstance(source, bytes):
        source = io.StringIO(source.decode())
    elif isinstance(source, str):
        source = io.StringIO(source)

    ids: dict[int, int] = {}
    pairs: list[tuple[int, int]] = []
    declared_n = None
    header_pending = skip_header
    for lineno, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode()
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _HEADER_RE.match(line)
            if m and not pairs and declared_n is None:
                declared_n = int(m.group(1))
            continue
        if header_pending:
            header_pending = False
            continue
        tokens = [t for t in _SPLIT_RE.split(line) if t]
        if len(tokens) < 2:
            raise ParseError(f"expected two node ids, got {line!r}", lineno)
        try:
            u, v = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise ParseError(f"non-integer node id in {line!r}", lineno) from None
        if u == v:
            if self_loops == "reject":
                raise RejectedEdgeError((u, v), lineno)
            logger.warning("skipping self-loop %d-%d on line %d", u, v, lineno)
            continue
        if declared_n is not None:
            off = 1 if one_indexed else 0
            u, v = u - off, v - off
            if not (0 <= u < declared_n and 0 <= v < declared_n):
                raise ParseError(f"node id outside declared range 0..{declared_n - 1}", lineno)
            pairs.append((u, v))
            continue
        a = ids.setdefault(u, len(ids))
        b = ids.setdefault(v, len(ids))
        pairs.append((a, b))

    if declared_n is not None:
        return Graph(declared_n, np.array(pairs, dtype=np.int64).reshape(-1, 2))
    remap = list(ids)
    return Graph(len(ids), np.array(pairs, dtype=np.int64).reshape(-1, 2), remap=remap)


def load_edge_list_file(path, **options) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        return load_edge_list(fh, **options)


def save_edge_list(g: Graph, stream: IO[str]) -> None:
    """Write ``g`` in canonical order: one ``j i`` line per edge, ``i > j``."""
    stream.write(f"# dpassort edge list: n={g.n} M={g.M}\n")
    buf = io.StringIO()
    np.savetxt(buf, g.edges[:, ::-1], fmt="%d", delimiter=" ")
    stream.write(buf.getvalue())


def generate_ba(n: int, m: int, seed: int) -> Graph:
    """Barabasi-Albert graph grown from ``m`` isolated seed nodes.

    Each new node attaches to ``m`` distinct existing nodes drawn with
    probability proportional to degree, by sampling uniformly from the list of
    edge endpoints and redrawing on collision. Yields exactly ``(n - m) * m``
    edges.
    """
    n, m = int(n), int(m)
    if m < 1 or m >= n:
        raise ParameterError(f"BA generator needs 1 <= m < n, got n={n}, m={m}")
    rng = np.random.default_rng(seed)
    edges = np.empty(((n - m) * m, 2), dtype=np.int64)
    # repeated endpoints list, grown in place
    repeated = np.empty(2 * (n - m) * m, dtype=np.int64)
    filled = 0
    targets = list(range(m))
    pos = 0
    for source in range(m, n):
        edges[pos:pos + m, 0] = source
        edges[pos:pos + m, 1] = targets
        pos += m
        repeated[filled:filled + m] = targets
        repeated[filled + m:filled + 2 * m] = source
        filled += 2 * m
        if source == n - 1:
            break
        chosen: set[int] = set()
        picked: list[int] = []
        while len(picked) < m:
            for idx in rng.integers(0, filled, size=m - len(picked)):
                node = int(repeated[idx])
                if node not in chosen:
                    chosen.add(node)
                    picked.append(node)
                    if len(picked) == m:
                        break
        targets = picked
    return Graph(n, edges)


def _int_sum(values: np.ndarray) -> int:
    """Exact integer sum, immune to int64 overflow."""
    if values.size == 0:
        return 0
    peak = int(np.abs(values).max())
    if peak * values.size < 2**62:
        return int(values.sum(dtype=np.int64))
    return sum(int(v) for v in values)


def _degree_sums(g: Graph):
    d = g.degrees
    i, j = g.edges[:, 0], g.edges[:, 1]
    s_prod = _int_sum(d[i] * d[j])
    s2 = _int_sum(d * d)
    s3 = _int_sum(d * d * d)
    return s_prod, s2, s3


def exact_stats(g: Graph) -> GraphStats:
    """Exact assortativity factor, denominator and coefficient of ``g``.

    All degree sums are integers, so the statistics are evaluated in exact
    rational arithmetic and rounded once at the end.
    """
    M = g.M
    if M == 0:
        raise UndefinedStatisticError("assortativity is undefined for a graph without edges")
    s_prod, s2, s3 = _degree_sums(g)
    mean_end = Fraction(s2, 2 * M)  # M^-1 sum_edges (d_i + d_j)/2
    r_u = Fraction(s_prod, M) - mean_end**2
    r_d = Fraction(s3, 2 * M) - mean_end**2
    r = None if r_d == 0 else float(r_u / r_d)
    return GraphStats(
        n=g.n, M=M, d_max=g.d_max, d_avg=g.d_avg,
        r_u=float(r_u), r_d=float(r_d), r=r,
    )


def denominator_edge_form(g: Graph) -> float:
    """``r_d`` evaluated directly from per-edge terms in floating point."""
    M = g.M
    if M == 0:
        raise UndefinedStatisticError("assortativity is undefined for a graph without edges")
    d = g.degrees.astype(np.float64)
    di, dj = d[g.edges[:, 0]], d[g.edges[:, 1]]
    sq = math.fsum(0.5 * (di * di + dj * dj)) / M
    mean = math.fsum(0.5 * (di + dj)) / M
    return sq - mean * mean


def assortativity_factor_edge_form(g: Graph) -> float:
    """``r_u`` evaluated directly from per-edge terms in floating point."""
    M = g.M
    if M == 0:
        raise UndefinedStatisticError("assortativity is undefined for a graph without edges")
    d = g.degrees.astype(np.float64)
    di, dj = d[g.edges[:, 0]], d[g.edges[:, 1]]
    return math.fsum(di * dj) / M - (math.fsum(0.5 * (di + dj)) / M) ** 2


def neighbor_degree_sum(g: Graph, i: int) -> int:
    return int(g.degrees[g.neighbors(i)].sum())
