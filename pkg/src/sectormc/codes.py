"""Lattice codes, metachecks and the syndrome network."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .gf2 import BitVector, Echelon, Gf2Matrix, bits_of, mask_of, span_enumerate


class GuardError(RuntimeError):
    """An operation was asked to exceed one of its size guards."""


@dataclass(frozen=True)
class SparsityProfile:
    ell: int
    d: int
    nu: int
    chi: float


class SyndromeNetwork:
    """Graph on checks: adjacent iff some metacheck touches both."""

    def __init__(self, m: int, neighbors: Sequence[Iterable[int]]):
        self.m = m
        self.neighbors: list[tuple[int, ...]] = [tuple(sorted(set(nb))) for nb in neighbors]
        lens = np.fromiter((len(nb) for nb in self.neighbors), dtype=np.int64, count=m)
        self.indptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(lens, out=self.indptr[1:])
        self.indices = np.fromiter(itertools.chain.from_iterable(self.neighbors), dtype=np.int64,
                                   count=int(self.indptr[-1]))

    @classmethod
    def from_metachecks(cls, M: Gf2Matrix) -> "SyndromeNetwork":
        nb: list[set[int]] = [set() for _ in range(M.ncols)]
        for row in M.row_supports():
            for a in row:
                nb[a].update(row)
        for a in range(M.ncols):
            nb[a].discard(a)
        return cls(M.ncols, nb)

    @classmethod
    def from_edges(cls, m: int, edges: Iterable[tuple[int, int]]) -> "SyndromeNetwork":
        nb: list[set[int]] = [set() for _ in range(m)]
        for a, b in edges:
            if a != b:
                nb[a].add(b)
                nb[b].add(a)
        return cls(m, nb)

    @classmethod
    def cycle(cls, m: int) -> "SyndromeNetwork":
        return cls.from_edges(m, [(i, (i + 1) % m) for i in range(m)])

    @property
    def max_degree(self) -> int:
        return max((len(nb) for nb in self.neighbors), default=0)

    def distances_from(self, U: Iterable[int], limit: int | None = None) -> dict[int, int]:
        dist = {u: 0 for u in U}
        queue = deque(dist)
        while queue:
            a = queue.popleft()
            da = dist[a]
            if limit is not None and da >= limit:
                continue
            for b in self.neighbors[a]:
                if b not in dist:
                    dist[b] = da + 1
                    queue.append(b)
        return dist

    def ball(self, U: Iterable[int], R: int) -> set[int]:
        return set(self.distances_from(U, R))

    def boundary(self, U: Iterable[int], R: int, w: int = 1) -> set[int]:
        return {v for v, d in self.distances_from(U, R + w).items() if d > R}

    def neighborhood(self, V: Iterable[int]) -> set[int]:
        """Vertices adjacent to V and not in V."""
        V = set(V)
        out = set()
        for a in V:
            out.update(self.neighbors[a])
        return out - V

    def components(self, vertices: Iterable[int]) -> list[list[int]]:
        """Connected components of the induced subgraph, each sorted, ordered by minimum."""
        todo = set(vertices)
        out = []
        for start in sorted(todo):
            if start not in todo:
                continue
            todo.discard(start)
            comp = [start]
            stack = [start]
            while stack:
                a = stack.pop()
                for b in self.neighbors[a]:
                    if b in todo:
                        todo.discard(b)
                        comp.append(b)
                        stack.append(b)
            out.append(sorted(comp))
        return out

    def amenability_profile(self, radii: Iterable[int], widths: Iterable[int] = (1,)) -> list[tuple[int, int, float]]:
        rows = []
        widths = list(widths)
        for R in radii:
            for w in widths:
                ball_w = max(len(self.ball([u], w)) for u in range(self.m))
                dists = [self.distances_from([u], R + w) for u in range(self.m)]
                ball_R = min(sum(1 for d in dd.values() if d <= R) for dd in dists)
                bnd = max(sum(1 for d in dd.values() if d > R) for dd in dists)
                rows.append((R, w, ball_w * bnd / ball_R))
        return rows


@dataclass(eq=False)
class Code:
    """Classical code, or one sector of a CSS code.

    ``stabilizers`` (CSS only) spans the errors that act trivially; for a
    classical code every nonzero undetectable error is logical.
    """

    name: str
    H: Gf2Matrix
    M: Gf2Matrix
    check_coords: list[tuple]
    symbol_coords: list[tuple]
    profile: SparsityProfile
    geometry: dict = field(default_factory=dict)
    stabilizers: Gf2Matrix | None = None

    def __post_init__(self):
        if not (self.M @ self.H).is_zero():
            raise ValueError("metachecks do not annihilate the checks")
        if any(r == 0 for r in self.H.rows):
            raise ValueError("empty check")

    @property
    def n(self) -> int:
        return self.H.ncols

    @property
    def m(self) -> int:
        return self.H.nrows

    @property
    def t(self) -> int:
        return self.M.nrows

    @cached_property
    def network(self) -> SyndromeNetwork:
        return SyndromeNetwork.from_metachecks(self.M)

    @cached_property
    def echelon(self) -> Echelon:
        return Echelon(self.H)

    @cached_property
    def rank(self) -> int:
        return self.echelon.rank

    @cached_property
    def parity_tests(self) -> list[int]:
        """Basis of Ker(Hᵀ): s is a valid syndrome iff it is orthogonal to all of them."""
        return self.echelon.left_kernel()

    @cached_property
    def check_supports(self) -> list[list[int]]:
        return self.H.row_supports()

    @cached_property
    def symbol_checks(self) -> list[list[int]]:
        return self.H.col_supports()

    @cached_property
    def metacheck_incidence(self) -> list[list[int]]:
        """Metachecks containing each check."""
        return self.M.col_supports()

    @property
    def cycle_structured(self) -> bool:
        """Every check lies in exactly two metachecks, so checks are edges of a graph."""
        return all(len(c) == 2 for c in self.metacheck_incidence)

    @cached_property
    def H_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Symbol -> checks incidence as (indptr, indices) arrays."""
        cols = self.symbol_checks
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum([len(c) for c in cols], out=indptr[1:])
        indices = np.fromiter(itertools.chain.from_iterable(cols), dtype=np.int64, count=int(indptr[-1]))
        return indptr, indices

    def measured_profile(self) -> tuple[int, int]:
        ell = max(max(len(r) for r in self.check_supports), max(len(c) for c in self.symbol_checks))
        return ell, self.network.max_degree

    def syndrome(self, e: int | BitVector) -> int:
        if isinstance(e, BitVector):
            if e.length != self.n:
                raise ValueError("error length mismatch")
            e = e.bits
        s = 0
        for j in bits_of(e):
            for c in self.symbol_checks[j]:
                s ^= 1 << c
        return s

    @cached_property
    def test_columns(self) -> list[int]:
        """For each check, the packed set of parity tests containing it."""
        cols = [0] * self.m
        for t, y in enumerate(self.parity_tests):
            for c in bits_of(y):
                cols[c] |= 1 << t
        return cols

    def test_syndrome(self, checks: Iterable[int]) -> int:
        acc = 0
        tc = self.test_columns
        for c in checks:
            acc ^= tc[c]
        return acc

    def is_valid(self, s: int) -> bool:
        return self.test_syndrome(bits_of(s)) == 0

    def is_erasable(self, V: Iterable[int] | int) -> bool:
        return self.is_valid(V if isinstance(V, int) else mask_of(V))

    def connected_components(self, s: int) -> list[list[int]]:
        return self.network.components(bits_of(s))

    def local_valid_basis(self, B: Iterable[int], local: bool = False) -> list[int]:
        """Basis of valid syndromes supported inside B.

        These are the linear dependencies among the test columns of B.  With
        ``local`` the vectors are packed over positions in sorted(B), otherwise
        over all m checks.
        """
        cols = sorted(B)
        tc = self.test_columns
        combos = Echelon(Gf2Matrix(len(self.parity_tests), [tc[c] for c in cols])).left_kernel()
        if local:
            return combos
        return [mask_of(cols[i] for i in bits_of(v)) for v in combos]

    def enumerate_valid_syndromes(self, max_rank: int = 22) -> list[int]:
        """All of Im(H) in Gray-code order over a fixed basis."""
        if self.rank > max_rank:
            raise GuardError(f"rank(H)={self.rank} exceeds enumeration guard {max_rank}")
        basis = [self.syndrome(1 << j) for j in self.image_basis_symbols]
        return span_enumerate(basis)

    @cached_property
    def image_basis_symbols(self) -> list[int]:
        """Symbols whose syndromes form a basis of Im(H) (pivot columns of H)."""
        return self.echelon.pivots

    def describe(self) -> dict:
        p = self.profile
        return {"name": self.name, **self.geometry,
                "profile": {"ell": p.ell, "d": p.d, "nu": p.nu, "chi": p.chi}}


@dataclass(eq=False)
class CssCode:
    x_sector: Code
    z_sector: Code

    def __post_init__(self):
        if not (self.x_sector.H @ self.z_sector.H.transpose()).is_zero():
            raise ValueError("H_X H_Zᵀ != 0")

    @property
    def n(self) -> int:
        return self.x_sector.n

    @cached_property
    def k(self) -> int:
        return self.n - self.x_sector.rank - self.z_sector.rank

    def sector(self, name: str) -> Code:
        return {"x": self.x_sector, "z": self.z_sector}[name.lower()]


ISING_2D = SparsityProfile(ell=4, d=6, nu=2, chi=0.5)
TORIC_4D = SparsityProfile(ell=6, d=14, nu=4, chi=0.25)


def build_ising_torus(side: int, dims: int = 2, width: int | None = None) -> Code:
    """Ising model on the periodic lattice of shape (side, width) (or a cycle when dims=1).

    Symbols are spins, checks are nearest-neighbour bonds.  In two dimensions the
    metachecks are plaquettes.  A cycle has a single redundancy, the all-ones
    row, so its syndrome network is complete.
    """
    if dims not in (1, 2):
        raise ValueError("dims must be 1 or 2")
    width = side if width is None else width
    if side < 3 or width < 3:
        raise ValueError("torus side must be at least 3")
    if dims == 1:
        n = side
        H = Gf2Matrix.from_supports(n, [(i, (i + 1) % n) for i in range(n)])
        M = Gf2Matrix(n, [(1 << n) - 1])
        return Code(
            name=f"ising1d-{side}", H=H, M=M,
            check_coords=[(i + 0.5,) for i in range(n)],
            symbol_coords=[(i,) for i in range(n)],
            profile=SparsityProfile(ell=2, d=n - 1, nu=1, chi=0.0),
            geometry={"code": "ising1d", "side": side},
        )
    rows_, cols_ = side, width

    def vid(x, y):
        return (x % rows_) * cols_ + (y % cols_)

    def eid(x, y, d):
        return 2 * vid(x, y) + d

    n = rows_ * cols_
    checks, ccoords = [], []
    for x in range(rows_):
        for y in range(cols_):
            checks.append((vid(x, y), vid(x + 1, y)))
            ccoords.append((x + 0.5, y))
            checks.append((vid(x, y), vid(x, y + 1)))
            ccoords.append((x, y + 0.5))
    plaquettes = [(eid(x, y, 0), eid(x, y, 1), eid(x + 1, y, 1), eid(x, y + 1, 0))
                  for x in range(rows_) for y in range(cols_)]
    code = Code(
        name=f"ising2d-{side}x{width}",
        H=Gf2Matrix.from_supports(n, checks),
        M=Gf2Matrix.from_supports(2 * n, plaquettes),
        check_coords=ccoords,
        symbol_coords=[(x, y) for x in range(rows_) for y in range(cols_)],
        profile=ISING_2D,
        geometry={"code": "ising2d", "side": side, "width": width},
    )
    return code


def build_toric_4d(w: int) -> CssCode:
    """4D toric code on (Z/w)^4 with qubits on faces."""
    if w < 3:
        raise ValueError("torus side must be at least 3")
    D = 4
    nv = w ** D
    units = [tuple(int(i == d) for i in range(D)) for d in range(D)]
    verts = list(itertools.product(range(w), repeat=D))

    def vid(p):
        out = 0
        for c in p:
            out = out * w + (c % w)
        return out

    def shift(p, d, k=1):
        return tuple((c + k * u) % w for c, u in zip(p, units[d]))

    pairs = list(itertools.combinations(range(D), 2))
    triples = list(itertools.combinations(range(D), 3))

    def edge(p, d):
        return vid(p) * D + d

    def face(p, pair):
        return vid(p) * len(pairs) + pairs.index(pair)

    def cube(p, tri):
        return vid(p) * len(triples) + triples.index(tri)

    hx, hz, mx, mz = [], [], [], []
    for p in verts:
        for d in range(D):
            sup = []
            for a in range(D):
                if a == d:
                    continue
                pr = tuple(sorted((a, d)))
                sup += [face(p, pr), face(shift(p, a, -1), pr)]
            hx.append(sup)
    for p in verts:
        for tri in triples:
            sup = []
            for x in tri:
                pr = tuple(c for c in tri if c != x)
                sup += [face(p, pr), face(shift(p, x), pr)]
            hz.append(sup)
        mx.append([edge(p, d) for d in range(D)] + [edge(shift(p, d, -1), d) for d in range(D)])
        mz.append([cube(p, tri) for tri in triples]
                  + [cube(shift(p, x), tri) for tri in triples for x in range(D) if x not in tri])
    n = nv * len(pairs)
    HX = Gf2Matrix.from_supports(n, hx)
    HZ = Gf2Matrix.from_supports(n, hz)
    edge_coords = [tuple(c + 0.5 * (i == d) for i, c in enumerate(p)) for p in verts for d in range(D)]
    cube_coords = [tuple(c + 0.5 * (i in tri) for i, c in enumerate(p)) for p in verts for tri in triples]
    face_coords = [tuple(c + 0.5 * (i in pr) for i, c in enumerate(p)) for p in verts for pr in pairs]
    geo = {"code": "toric4d", "w": w}
    xs = Code(f"toric4d-{w}-X", HX, Gf2Matrix.from_supports(len(hx), mx), edge_coords, face_coords,
              TORIC_4D, {**geo, "sector": "x"}, stabilizers=HZ)
    zs = Code(f"toric4d-{w}-Z", HZ, Gf2Matrix.from_supports(len(hz), mz), cube_coords, face_coords,
              TORIC_4D, {**geo, "sector": "z"}, stabilizers=HX)
    return CssCode(xs, zs)


def toric4d_face_index(w: int, p: Sequence[int], pair: tuple[int, int]) -> int:
    pairs = list(itertools.combinations(range(4), 2))
    v = 0
    for c in p:
        v = v * w + (c % w)
    return v * len(pairs) + pairs.index(tuple(sorted(pair)))


def build_code(spec: dict) -> Code | CssCode:
    """Construct a code from a descriptor such as ``{"code": "ising2d", "side": 4}``."""
    kind = spec.get("code")
    if kind == "ising2d":
        return build_ising_torus(int(spec["side"]), 2, spec.get("width") and int(spec["width"]))
    if kind == "ising1d":
        return build_ising_torus(int(spec["side"]), 1)
    if kind == "toric4d":
        return build_toric_4d(int(spec["w"]))
    raise ValueError(f"unknown code kind {kind!r}")


def build_sector(spec: dict) -> Code:
    """Like build_code but always returns a single Code (CSS sector from ``sector``)."""
    code = build_code(spec)
    if isinstance(code, CssCode):
        return code.sector(spec.get("sector", "x"))
    return code
