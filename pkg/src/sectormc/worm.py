"""Worm process for the even-subgraph measure.

States are edge sets with zero or two odd-degree vertices.  From a
defect-free state a uniformly chosen vertex opens a worm along a uniformly
chosen incident edge; a worm moves one of its two ends, picked uniformly,
along a uniform incident edge.  Metropolis ratios use e^{-beta |A|}, with a
degree correction for moves that relocate an end.  The extended stationary
weight is e^{-beta |A|} on defect-free states and (2/|V|) e^{-beta |A|} on
two-defect states, so restricting to defect-free states gives the even-subgraph
measure.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .codes import Code, GuardError
from .distribution import Distribution, boltzmann
from .gf2 import BitVector, Echelon, Gf2Matrix, bits_of, kernel_basis, mask_of, span_enumerate


class UnsupportedCodeError(ValueError):
    pass


@dataclass
class BlockGraph:
    """Multigraph given by edge endpoints; ``check_ids`` maps edges back to code checks.

    ``tests`` lists edge subsets whose parity must vanish for an even subgraph
    to count (used to drop topologically nontrivial cycles of a block).
    """

    n_vertices: int
    edges: list[tuple[int, int]]
    check_ids: list[int] = field(default_factory=list)
    vertex_ids: list[int] = field(default_factory=list)
    tests: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        if any(a == b for a, b in self.edges):
            raise ValueError("self-loops are not supported")
        self.eu = np.array([a for a, _ in self.edges], dtype=np.int64)
        self.ev = np.array([b for _, b in self.edges], dtype=np.int64)
        inc: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for k, (a, b) in enumerate(self.edges):
            inc[a].append(k)
            inc[b].append(k)
        self.incidence = inc
        self.inc_ptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        np.cumsum([len(x) for x in inc], out=self.inc_ptr[1:])
        self.inc_idx = np.array(list(itertools.chain.from_iterable(inc)), dtype=np.int64)
        self.test_ptr = np.zeros(len(self.tests) + 1, dtype=np.int64)
        np.cumsum([len(t) for t in self.tests], out=self.test_ptr[1:])
        self.test_idx = np.array(list(itertools.chain.from_iterable(self.tests)), dtype=np.int64)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degree(self, v: int) -> int:
        return len(self.incidence[v])

    def incidence_matrix(self) -> Gf2Matrix:
        return Gf2Matrix.from_supports(self.n_edges, self.incidence)

    def odd_vertices(self, edges_mask: int) -> list[int]:
        deg = [0] * self.n_vertices
        for k in bits_of(edges_mask):
            a, b = self.edges[k]
            deg[a] ^= 1
            deg[b] ^= 1
        return [v for v in range(self.n_vertices) if deg[v]]

    def passes_tests(self, edges_mask: int) -> bool:
        return all(not (mask_of(t) & edges_mask).bit_count() & 1 for t in self.tests)


def cycle_graph(k: int) -> BlockGraph:
    return BlockGraph(k, [(i, (i + 1) % k) for i in range(k)])


def torus_graph(side: int) -> BlockGraph:
    """Nearest-neighbour graph of the periodic side x side square lattice."""
    def v(x, y):
        return (x % side) * side + (y % side)
    edges = []
    for x in range(side):
        for y in range(side):
            edges.append((v(x, y), v(x + 1, y)))
            edges.append((v(x, y), v(x, y + 1)))
    return BlockGraph(side * side, edges)


def complete_graph(k: int) -> BlockGraph:
    return BlockGraph(k, list(itertools.combinations(range(k), 2)))


def block_to_graph(code: Code, interior: Sequence[int]) -> BlockGraph:
    """Graph whose edges are the checks of ``interior`` and whose vertices are the metachecks touching them."""
    if not code.cycle_structured:
        raise UnsupportedCodeError(f"{code.name}: checks are not edges of a metacheck graph")
    B = sorted(interior)
    if not B:
        return BlockGraph(0, [])
    inc = code.metacheck_incidence
    verts = sorted({v for c in B for v in inc[c]})
    vpos = {v: i for i, v in enumerate(verts)}
    edges = [(vpos[inc[c][0]], vpos[inc[c][1]]) for c in B]
    return BlockGraph(len(verts), edges, check_ids=B, vertex_ids=verts, tests=local_validity_tests(code, B))


def local_validity_tests(code: Code, B: Sequence[int]) -> list[list[int]]:
    """Parity tests on the block's edges that, together with evenness, certify validity.

    Each cycle of the block graph is mapped to its parity-test syndrome; the
    pivot coordinates of the span of those images are the only tests an even
    subgraph can fail, so they are returned restricted to B (local positions).
    """
    B = sorted(B)
    inc = code.metacheck_incidence
    verts = sorted({v for c in B for v in inc[c]})
    vpos = {v: i for i, v in enumerate(verts)}
    graph = BlockGraph(len(verts), [(vpos[inc[c][0]], vpos[inc[c][1]]) for c in B])
    tc = code.test_columns
    images = [code.test_syndrome(B[i] for i in bits_of(z)) for z in even_subgraph_basis(graph)]
    ntests = len(code.parity_tests)
    pivots = Echelon(Gf2Matrix(ntests, images)).pivots
    return [[i for i, c in enumerate(B) if (tc[c] >> p) & 1] for p in pivots]


def even_subgraph_basis(graph: BlockGraph) -> list[int]:
    return [v.bits for v in kernel_basis(graph.incidence_matrix())]


def exact_even_distribution(graph: BlockGraph, beta: float, max_dim: int = 22,
                            valid_only: bool = True) -> Distribution:
    """Exact even-subgraph measure, enumerated over the cycle space in Gray-code order."""
    basis = even_subgraph_basis(graph)
    if len(basis) > max_dim:
        raise GuardError(f"cycle-space dimension {len(basis)} exceeds {max_dim}")
    states = span_enumerate(basis)
    if valid_only and graph.tests:
        states = [s for s in states if graph.passes_tests(s)]
    probs = boltzmann([s.bit_count() for s in states], beta)
    return Distribution(states, probs)


@dataclass
class WormState:
    graph: BlockGraph
    edges: np.ndarray
    defects: np.ndarray
    ndef: int = 0
    last_valid: np.ndarray | None = None

    @classmethod
    def empty(cls, graph: BlockGraph) -> "WormState":
        e = np.zeros(graph.n_edges, dtype=np.uint8)
        return cls(graph, e, np.zeros(2, dtype=np.int64), 0, e.copy())

    @classmethod
    def from_mask(cls, graph: BlockGraph, mask: int) -> "WormState":
        st = cls.empty(graph)
        st.edges[bits_of(mask)] = 1
        st.last_valid[:] = st.edges
        odd = graph.odd_vertices(mask)
        if odd:
            if len(odd) != 2:
                raise ValueError("worm states have zero or two odd vertices")
            st.defects[:] = odd
            st.ndef = 2
        return st

    def mask(self) -> int:
        return mask_of(np.flatnonzero(self.edges).tolist())

    def check(self) -> None:
        odd = self.graph.odd_vertices(self.mask())
        want = sorted(self.defects[: self.ndef].tolist()) if self.ndef else []
        if odd != want:
            raise AssertionError(f"defects {want} but odd vertices {odd}")


@dataclass
class WormStats:
    steps: int = 0
    accepted: int = 0
    visits: int = 0

    @property
    def acceptance(self) -> float:
        return self.accepted / self.steps if self.steps else 0.0

    @property
    def defect_free_fraction(self) -> float:
        return self.visits / self.steps if self.steps else 0.0


_NO_KEYS = np.zeros(0, dtype=np.int64)


def _seed_from(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))


def advance(state: WormState, beta: float, visits: int, rng: np.random.Generator,
            stats: WormStats | None = None, keys: np.ndarray = _NO_KEYS,
            burn_in: int = 0, thinning: int = 1) -> int:
    """Run the worm until ``visits`` defect-free visits have occurred; returns samples recorded."""
    g = state.graph
    if g.n_edges == 0 or visits <= 0:
        return 0
    steps, acc, rec, ndef = _kernels.worm_run(
        g.eu, g.ev, g.inc_ptr, g.inc_idx, float(np.exp(-beta)), state.edges, state.defects, state.ndef,
        state.last_valid, g.test_ptr, g.test_idx, visits, burn_in, thinning, keys, _seed_from(rng))
    state.ndef = int(ndef)
    if stats is not None:
        stats.steps += int(steps)
        stats.accepted += int(acc)
        stats.visits += visits
    return int(rec)


def worm_step(state: WormState, beta: float, rng: np.random.Generator) -> WormState:
    """One move of the worm chain (pure Python; mirrors the compiled kernel)."""
    g = state.graph
    x = float(np.exp(-beta))
    if g.n_vertices == 0:
        return state
    if state.ndef == 0:
        v = int(rng.integers(g.n_vertices))
        if not g.incidence[v]:
            return state
        ed = g.incidence[v][int(rng.integers(len(g.incidence[v])))]
        a, b = g.edges[ed]
        y = b if a == v else a
        ratio = x if state.edges[ed] == 0 else 1.0 / x
        if rng.random() < ratio:
            state.edges[ed] ^= 1
            state.defects[:] = (v, y)
            state.ndef = 2
        return state
    k = int(rng.integers(2))
    d, other = int(state.defects[k]), int(state.defects[1 - k])
    ed = g.incidence[d][int(rng.integers(len(g.incidence[d])))]
    a, b = g.edges[ed]
    y = b if a == d else a
    ratio = x if state.edges[ed] == 0 else 1.0 / x
    if y != other:
        ratio *= g.degree(d) / g.degree(y)
    if rng.random() < ratio:
        state.edges[ed] ^= 1
        if y == other:
            state.ndef = 0
        else:
            state.defects[k] = y
    return state


def sample_even_subgraph(graph: BlockGraph, beta: float, burn_in: int, thinning: int = 1,
                         rng: np.random.Generator | None = None, n_samples: int | None = None):
    """Even-subgraph samples from the worm, taken at defect-free visits.

    Burn-in and thinning count defect-free visits.  With ``n_samples`` None a
    single BitVector is returned, otherwise an int64 array of packed samples
    (graphs with at most 62 edges).
    """
    rng = np.random.default_rng() if rng is None else rng
    st = WormState.empty(graph)
    if n_samples is None:
        advance(st, beta, burn_in, rng)
        return BitVector(graph.n_edges, st.mask())
    if graph.n_edges > 62:
        raise GuardError("packed sample recording needs at most 62 edges")
    keys = np.zeros(n_samples, dtype=np.int64)
    if graph.n_edges == 0:
        return keys
    total = burn_in + thinning * n_samples
    rec = advance(st, beta, total, rng, keys=keys, burn_in=burn_in, thinning=thinning)
    assert rec == n_samples
    return keys


def worm_state_space(graph: BlockGraph) -> list[tuple[int, tuple[int, ...]]]:
    """All (edge mask, sorted defects) with zero or two odd vertices."""
    out = []
    for mask in range(1 << graph.n_edges):
        odd = graph.odd_vertices(mask)
        if len(odd) in (0, 2):
            out.append((mask, tuple(odd)))
    return out


def worm_kernel(graph: BlockGraph, beta: float, max_edges: int = 10):
    """Exact transition matrix of the worm chain, with its claimed stationary weights.

    Returns (states, pi, K) where states are (mask, defects) pairs.
    """
    if graph.n_edges > max_edges:
        raise GuardError(f"worm kernel enumeration limited to {max_edges} edges")
    x = float(np.exp(-beta))
    states = worm_state_space(graph)
    index = {s: i for i, s in enumerate(states)}
    N = len(states)
    K = np.zeros((N, N))
    nv = graph.n_vertices

    def target(mask, defects_):
        return index[(mask, tuple(sorted(defects_)))]

    for i, (mask, odd) in enumerate(states):
        if not odd:
            for v in range(nv):
                inc = graph.incidence[v]
                if not inc:
                    K[i, i] += 1.0 / nv
                    continue
                for ed in inc:
                    p = 1.0 / nv / len(inc)
                    a, b = graph.edges[ed]
                    y = b if a == v else a
                    acc = min(1.0, x if not (mask >> ed) & 1 else 1.0 / x)
                    K[i, target(mask ^ (1 << ed), (v, y))] += p * acc
                    K[i, i] += p * (1 - acc)
        else:
            for k in range(2):
                d, other = odd[k], odd[1 - k]
                inc = graph.incidence[d]
                for ed in inc:
                    p = 0.5 / len(inc)
                    a, b = graph.edges[ed]
                    y = b if a == d else a
                    ratio = x if not (mask >> ed) & 1 else 1.0 / x
                    if y == other:
                        j = target(mask ^ (1 << ed), ())
                    else:
                        ratio *= len(inc) / graph.degree(y)
                        j = target(mask ^ (1 << ed), (y, other))
                    acc = min(1.0, ratio)
                    K[i, j] += p * acc
                    K[i, i] += p * (1 - acc)
    w = np.array([x ** mask.bit_count() * (1.0 if not odd else 2.0 / nv) for mask, odd in states])
    return states, w / w.sum(), K
