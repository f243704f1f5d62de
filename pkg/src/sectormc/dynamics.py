"""Glauber, syndrome and conditional block dynamics."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .codes import Code, CssCode, GuardError
from .decoder import Decoder, LogicalVerdict, NotErasableError, decoder_for
from .gf2 import BitVector, bits_of, mask_of
from .worm import WormState, advance, block_to_graph

log = logging.getLogger(__name__)

SAMPLER_MODES = ("exact", "worm", "nested-glauber")


class SamplerFailure(RuntimeError):
    pass


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; ``stream`` separates replicas sharing a seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream,))))


def kernel_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))


def heat_bath_table(beta: float, ell: int) -> np.ndarray:
    """1/(1+e^{beta k}) for k = -ell..ell, written to avoid overflow."""
    k = np.arange(-ell, ell + 1, dtype=float)
    return 0.5 * (1.0 - np.tanh(0.5 * beta * k))


@dataclass
class ChainState:
    code: Code
    e: np.ndarray
    s: np.ndarray
    rng: np.random.Generator
    seed: int
    stream: int = 0
    steps: int = 0
    time: float = 0.0

    @classmethod
    def ground(cls, code: Code, seed: int, stream: int = 0) -> "ChainState":
        return cls(code, np.zeros(code.n, dtype=np.uint8), np.zeros(code.m, dtype=np.uint8),
                   make_rng(seed, stream), seed, stream)

    def copy(self) -> "ChainState":
        import copy
        return ChainState(self.code, self.e.copy(), self.s.copy(), copy.deepcopy(self.rng), self.seed,
                          self.stream, self.steps, self.time)

    @property
    def error(self) -> BitVector:
        return BitVector(self.code.n, mask_of(np.flatnonzero(self.e).tolist()))

    @property
    def syndrome_bits(self) -> int:
        return mask_of(np.flatnonzero(self.s).tolist())

    @property
    def energy(self) -> int:
        return int(self.s.sum())

    def components(self) -> list[list[int]]:
        return self.code.network.components(np.flatnonzero(self.s).tolist())

    def check(self) -> None:
        if self.code.syndrome(self.error) != self.syndrome_bits:
            raise AssertionError("cached syndrome out of sync with error")

    def record(self, verdict: LogicalVerdict | None = None) -> dict:
        comps = self.components()
        rec = {"step": self.steps, "time": round(self.time, 12), "energy": self.energy,
               "component_count": len(comps), "largest_component": max((len(c) for c in comps), default=0)}
        if verdict is not None:
            rec["verdict"] = verdict.kind
        rec["seed"] = self.seed
        return rec


def _accept(code: Code, beta: float) -> np.ndarray:
    ell = max(len(c) for c in code.symbol_checks)
    return heat_bath_table(beta, ell)


def glauber_run(state: ChainState, beta: float, steps: int) -> int:
    ptr, idx = state.code.H_csr
    acc = _kernels.glauber_sweep(state.e, state.s, ptr, idx, _accept(state.code, beta), steps, kernel_seed(state.rng))
    state.steps += steps
    return int(acc)


def glauber_step(state: ChainState, beta: float) -> ChainState:
    glauber_run(state, beta, 1)
    return state


def syndrome_run(state: ChainState, beta: float, steps: int) -> int:
    """The induced syndrome chain; the error vector is not touched."""
    ptr, idx = state.code.H_csr
    acc = _kernels.syndrome_sweep(state.s, ptr, idx, _accept(state.code, beta), steps, kernel_seed(state.rng))
    state.steps += steps
    return int(acc)


def syndrome_step(state: ChainState, beta: float) -> ChainState:
    syndrome_run(state, beta, 1)
    return state


def syndrome_trajectory(state: ChainState, beta: float, steps: int) -> np.ndarray:
    """Packed syndrome after every step (codes with at most 62 checks)."""
    code = state.code
    if code.m > 62:
        raise GuardError("packed trajectories need m <= 62")
    ptr, idx = code.H_csr
    out = _kernels.syndrome_trace(state.s, ptr, idx, _accept(code, beta), steps, kernel_seed(state.rng),
                                  np.int64(state.syndrome_bits))
    state.steps += steps
    return out


# ---------------------------------------------------------------- block samplers

def _pack_rows(bits: np.ndarray) -> np.ndarray:
    """uint8 0/1 rows -> little-endian uint64 words."""
    bits = np.atleast_2d(bits)
    nb = bits.shape[1]
    words = max(1, (nb + 63) // 64)
    padded = np.zeros((bits.shape[0], words * 64), dtype=np.uint8)
    padded[:, :nb] = bits
    return np.packbits(padded, axis=1, bitorder="little").view(np.uint64)


def _unpack_row(words: np.ndarray, nb: int) -> np.ndarray:
    return np.unpackbits(np.ascontiguousarray(words).view(np.uint8), bitorder="little")[:nb]


def _span(vecs: np.ndarray) -> np.ndarray:
    k, w = vecs.shape
    table = np.zeros((1 << k, w), dtype=np.uint64)
    for i in range(k):
        half = 1 << i
        table[half:2 * half] = table[:half] ^ vecs[i]
    return table


class ExactBlockSampler:
    """Heat-bath draw from e^{-beta|x|} over valid configurations of a block.

    The valid set is enumerated from a basis of locally supported valid
    syndromes.  Up to 2^12 configurations are tabulated outright; larger
    blocks split the basis into a high and a low half and sample the high
    index from row totals before resolving the low index.
    """

    exact = True

    def __init__(self, code: Code, interior: Sequence[int], beta: float, max_dim: int = 20):
        self.interior = np.asarray(interior, dtype=np.int64)
        self.nb = len(self.interior)
        self.beta = beta
        basis = code.local_valid_basis(self.interior.tolist(), local=True)
        self.dim = len(basis)
        if self.dim > max_dim:
            raise GuardError(f"block cycle-space dimension {self.dim} exceeds exact sampler limit {max_dim}")
        local = np.zeros((self.dim, self.nb), dtype=np.uint8)
        for r, v in enumerate(basis):
            local[r, bits_of(v)] = 1
        vecs = _pack_rows(local) if self.dim else np.zeros((0, max(1, (self.nb + 63) // 64)), dtype=np.uint64)
        self.k_lo = min(self.dim, 12)
        self.low = _span(vecs[: self.k_lo])
        self.high = _span(vecs[self.k_lo:])
        self.test_cols = [code.test_columns[c] for c in self.interior.tolist()]
        self._tables(np.zeros(self.low.shape[1], dtype=np.uint64))
        if self.high.shape[0] == 1:
            self.configs = np.array([_unpack_row(r, self.nb) for r in self.low], dtype=np.uint8)

    def _tables(self, offset: np.ndarray) -> None:
        low = self.low ^ offset
        pc = np.stack([np.bitwise_count(low ^ h).sum(axis=1) for h in self.high]).astype(np.int32)
        self.pc = pc
        self.pc_min = int(pc.min())
        w = np.exp(-self.beta * (pc - self.pc_min))
        self.row_cdf = np.cumsum(w.sum(axis=1))
        self.cdf0 = np.cumsum(w[0]) if pc.shape[0] == 1 else None
        self.offset = offset

    def contains(self, local_bits: np.ndarray) -> bool:
        acc = 0
        for i in np.flatnonzero(local_bits).tolist():
            acc ^= self.test_cols[i]
        return acc == 0

    def draw_index(self, rng: np.random.Generator) -> tuple[int, int]:
        if self.cdf0 is not None:
            return 0, int(np.searchsorted(self.cdf0, rng.random() * self.cdf0[-1], side="right"))
        h = int(np.searchsorted(self.row_cdf, rng.random() * self.row_cdf[-1], side="right"))
        cdf = np.cumsum(np.exp(-self.beta * (self.pc[h] - self.pc_min)))
        lo = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        return h, lo

    def draw(self, old: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.dim == 0:
            return old.copy()
        if not self.contains(old):
            # Coset of a non-valid block configuration: reweight on the fly.
            saved = (self.pc, self.pc_min, self.row_cdf, self.cdf0, self.offset)
            self._tables(_pack_rows(old)[0])
            h, lo = self.draw_index(rng)
            out = _unpack_row(self.low[lo] ^ self.high[h] ^ self.offset, self.nb)
            self.pc, self.pc_min, self.row_cdf, self.cdf0, self.offset = saved
            return out
        h, lo = self.draw_index(rng)
        if h == 0 and self.high.shape[0] == 1:
            return self.configs[lo].copy()
        return _unpack_row(self.low[lo] ^ self.high[h], self.nb)

    def distribution(self) -> dict[int, float]:
        """Exact conditional probabilities keyed by the packed local configuration."""
        if self.nb > 62:
            raise GuardError("packed keys need at most 62 block checks")
        w = np.exp(-self.beta * (self.pc - self.pc_min))
        w /= w.sum()
        out = {}
        for h in range(self.high.shape[0]):
            keys = (self.low ^ self.high[h])[:, 0].astype(np.int64)
            for k, p in zip(keys.tolist(), w[h].tolist()):
                out[k] = out.get(k, 0.0) + p
        return out


class WormBlockSampler:
    """Block update by running the worm from the current block configuration.

    The worm's defect-free trace chain, with invalid arrivals rejected, leaves
    the block conditional invariant, so every draw is a stationary move.
    """

    exact = False

    def __init__(self, code: Code, interior: Sequence[int], beta: float, visits: int | None = None,
                 visits_per_edge: float = 4.0):
        self.interior = np.asarray(interior, dtype=np.int64)
        self.graph = block_to_graph(code, self.interior.tolist())
        self.beta = beta
        self.visits = visits if visits is not None else max(1, int(visits_per_edge * len(self.interior)))
        self.test_cols = [code.test_columns[c] for c in self.interior.tolist()]
        self.state = WormState.empty(self.graph)

    def draw(self, old: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.graph.n_edges == 0:
            return old.copy()
        acc = 0
        for i in np.flatnonzero(old).tolist():
            acc ^= self.test_cols[i]
        if acc:
            raise SamplerFailure("worm sampler needs a valid block configuration to start from")
        st = self.state
        st.edges[:] = old
        st.last_valid[:] = old
        st.ndef = 0
        advance(st, self.beta, self.visits, rng)
        return st.edges.copy()


class NestedGlauberSampler:
    """Syndrome-chain moves using only symbols whose checks all lie in the block."""

    exact = False

    def __init__(self, code: Code, interior: Sequence[int], beta: float, sweeps: int = 10):
        self.interior = np.asarray(interior, dtype=np.int64)
        pos = {c: i for i, c in enumerate(self.interior.tolist())}
        inside = [j for j in sorted({j for c in self.interior.tolist() for j in code.check_supports[c]})
                  if all(c in pos for c in code.symbol_checks[j])]
        cols = [[pos[c] for c in code.symbol_checks[j]] for j in inside]
        self.ptr = np.zeros(len(cols) + 1, dtype=np.int64)
        np.cumsum([len(c) for c in cols], out=self.ptr[1:])
        self.idx = np.array([c for col in cols for c in col], dtype=np.int64)
        ell = max((len(c) for c in cols), default=1)
        self.accept = heat_bath_table(beta, ell)
        self.steps = sweeps * len(inside)

    def draw(self, old: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        new = old.copy()
        if self.steps:
            _kernels.syndrome_sweep(new, self.ptr, self.idx, self.accept, self.steps, kernel_seed(rng))
        return new


# ---------------------------------------------------------------- block dynamics

@dataclass(frozen=True)
class RestrictionParams:
    R: int
    L: int

    def __post_init__(self):
        if self.R <= 0 or self.L <= 0:
            raise ValueError("R and L must be positive")


@dataclass
class BlockSpec:
    u: int
    L: int
    block: np.ndarray
    frozen: list[list[int]]
    interior: np.ndarray


@dataclass
class StepInfo:
    u: int
    interior_size: int
    changed: bool = False
    aborted: str | None = None
    rejected: bool = False
    new_components: list[list[int]] = field(default_factory=list)


class BlockEngine:
    """Conditional block dynamics for one code, block radius and temperature."""

    def __init__(self, code: Code, L: int, beta: float, sampler_mode: str = "exact", *,
                 exact_max_dim: int = 20, worm_visits: int | None = None, worm_visits_per_edge: float = 4.0,
                 nested_sweeps: int = 10, decoder: Decoder | None = None, cache_size: int = 4096,
                 track_errors: bool = True):
        if sampler_mode not in SAMPLER_MODES:
            raise ValueError(f"unknown sampler mode {sampler_mode!r}")
        if L < 0:
            raise ValueError("block radius must be nonnegative")
        self.code = code
        self.L = L
        self.beta = beta
        self.mode = sampler_mode
        self.exact_max_dim = exact_max_dim
        self.worm_visits = worm_visits
        self.worm_visits_per_edge = worm_visits_per_edge
        self.nested_sweeps = nested_sweeps
        self.decoder = decoder or decoder_for(code)
        self.track_errors = track_errors
        self.cache_size = cache_size
        self._geom: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._samplers: dict[bytes, object] = {}
        self._erasable: dict[frozenset, bool] = {}
        self._corr_idx: dict[frozenset, np.ndarray] = {}
        self.guard_violations = 0
        self.sampler_failures = 0
        self.identity_steps = 0

    def geometry(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        g = self._geom.get(u)
        if g is None:
            dist = self.code.network.distances_from([u], self.L + 1)
            ball = np.array(sorted(v for v, d in dist.items() if d <= self.L), dtype=np.int64)
            shell = np.array(sorted(v for v, d in dist.items() if d == self.L + 1), dtype=np.int64)
            g = self._geom[u] = (ball, shell)
        return g

    def block_spec(self, s: np.ndarray, u: int) -> BlockSpec:
        ball, shell = self.geometry(u)
        hot = shell[s[shell] != 0]
        if hot.size == 0:
            return BlockSpec(u, self.L, ball, [], ball)
        net = self.code.network
        frozen: list[list[int]] = []
        seen: set[int] = set()
        for start in hot.tolist():
            if start in seen:
                continue
            comp = [start]
            seen.add(start)
            stack = [start]
            while stack:
                a = stack.pop()
                for b in net.neighbors[a]:
                    if s[b] and b not in seen:
                        seen.add(b)
                        comp.append(b)
                        stack.append(b)
            frozen.append(sorted(comp))
        excluded = set(seen) | net.neighborhood(seen)
        interior = np.array([c for c in ball.tolist() if c not in excluded], dtype=np.int64)
        return BlockSpec(u, self.L, ball, frozen, interior)

    def sampler_for(self, interior: np.ndarray):
        key = interior.tobytes()
        smp = self._samplers.get(key)
        if smp is None:
            if len(self._samplers) >= self.cache_size:
                self._samplers.pop(next(iter(self._samplers)))
            B = interior.tolist()
            if self.mode == "exact":
                smp = ExactBlockSampler(self.code, B, self.beta, self.exact_max_dim)
            elif self.mode == "worm":
                smp = WormBlockSampler(self.code, B, self.beta, self.worm_visits, self.worm_visits_per_edge)
            else:
                smp = NestedGlauberSampler(self.code, B, self.beta, self.nested_sweeps)
            self._samplers[key] = smp
        return smp

    def is_erasable(self, comp: Sequence[int]) -> bool:
        key = frozenset(comp)
        ok = self._erasable.get(key)
        if ok is None:
            ok = self._erasable[key] = self.code.is_erasable(comp)
        return ok

    def correction_support(self, comp: Sequence[int]) -> np.ndarray:
        key = frozenset(comp)
        idx = self._corr_idx.get(key)
        if idx is None:
            idx = self._corr_idx[key] = np.array(bits_of(self.decoder.component(key).error.bits), dtype=np.int64)
        return idx

    def propose(self, state: ChainState, u: int | None = None):
        """Draw a block and its resampled configuration without applying it."""
        m = self.code.m
        if u is None:
            u = int(state.rng.integers(m))
        spec = self.block_spec(state.s, u)
        info = StepInfo(u, int(spec.interior.size))
        if spec.interior.size == 0:
            return spec, None, None, info
        old = state.s[spec.interior]
        try:
            new = self.sampler_for(spec.interior).draw(old, state.rng)
        except SamplerFailure as exc:
            self.sampler_failures += 1
            info.aborted = f"sampler: {exc}"
            log.warning("block step at u=%d aborted: %s", u, exc)
            return spec, None, None, info
        return spec, old, new, info

    def apply(self, state: ChainState, spec: BlockSpec, old: np.ndarray, new: np.ndarray, info: StepInfo,
              max_component: int | None = None) -> StepInfo:
        B = spec.interior
        diff = old != new
        if not diff.any():
            return info
        net = self.code.network
        old_c = net.components(B[old != 0].tolist())
        new_c = net.components(B[new != 0].tolist())
        info.new_components = new_c
        if max_component is not None and any(len(c) > max_component for c in new_c):
            info.rejected = True
            return info
        old_set = {frozenset(c) for c in old_c}
        new_set = {frozenset(c) for c in new_c}
        touched = (old_set ^ new_set)
        for comp in list(touched) + [frozenset(c) for c in spec.frozen]:
            if not self.is_erasable(comp):
                self.guard_violations += 1
                info.aborted = f"guard: non-erasable component of size {len(comp)}"
                log.warning("block step at u=%d aborted: %s", info.u, info.aborted)
                return info
        if self.track_errors:
            for comp in touched:
                state.e[self.correction_support(comp)] ^= 1
        state.s[B] = new
        info.changed = True
        return info

    def step(self, state: ChainState, max_component: int | None = None, u: int | None = None) -> StepInfo:
        spec, old, new, info = self.propose(state, u)
        if new is None:
            if info.aborted is None:
                self.identity_steps += 1
        else:
            self.apply(state, spec, old, new, info, max_component)
        state.steps += 1
        return info

    def run(self, state: ChainState, steps: int, max_component: int | None = None) -> None:
        for _ in range(steps):
            self.step(state, max_component)


_ENGINES: dict[tuple, BlockEngine] = {}


def engine_for(code: Code, L: int, beta: float, sampler_mode: str = "exact", **kw) -> BlockEngine:
    key = (id(code), L, float(beta), sampler_mode, tuple(sorted(kw.items())))
    eng = _ENGINES.get(key)
    if eng is None or eng.code is not code:
        eng = _ENGINES[key] = BlockEngine(code, L, beta, sampler_mode, **kw)
    return eng


def conditional_block_step(state: ChainState, beta: float, L: int, sampler_mode: str = "exact", **kw) -> ChainState:
    engine_for(state.code, L, beta, sampler_mode, **kw).step(state)
    return state


def in_omega_R(state: ChainState, R: int) -> bool:
    return all(len(c) <= R for c in state.components())


def restricted_step_Q(state: ChainState, beta: float, params: RestrictionParams,
                      sampler_mode: str = "exact", check_start: bool = False, **kw) -> ChainState:
    """Block step whose proposals leaving the small-loop set are rejected.

    Only the resampled block can change, so only its new components are
    inspected.  ``check_start`` asserts the starting state is in the set.
    """
    if check_start and not in_omega_R(state, params.R):
        raise ValueError("restricted chain started outside the small-loop set")
    engine_for(state.code, params.L, beta, sampler_mode, **kw).step(state, max_component=params.R)
    return state


def poisson_steps(rng: np.random.Generator, rate: float, t: float) -> int:
    return int(rng.poisson(rate * t)) if t > 0 else 0


def continuous_run(state: ChainState, beta: float, t: float, chain_kind: str = "glauber",
                   L: int = 2, sampler_mode: str = "exact", engine: BlockEngine | None = None,
                   **kw) -> ChainState:
    """Run for continuous time t: Poisson(rate t) discrete steps, rate n for Glauber and m otherwise.

    ``engine`` overrides the shared block engine, e.g. one per worker thread.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    code = state.code
    if chain_kind == "glauber":
        k = poisson_steps(state.rng, code.n, t)
        if k:
            glauber_run(state, beta, k)
    elif chain_kind == "syndrome":
        k = poisson_steps(state.rng, code.m, t)
        if k:
            syndrome_run(state, beta, k)
    elif chain_kind == "block":
        k = poisson_steps(state.rng, code.m, t)
        (engine or engine_for(code, L, beta, sampler_mode, **kw)).run(state, k)
    else:
        raise ValueError(f"unknown chain kind {chain_kind!r}")
    state.time += t
    return state


def css_memory_run(css: CssCode, beta: float, t: float, chain_kind: str = "glauber", seed: int = 0,
                   stream: int = 0, **kw) -> tuple[LogicalVerdict, LogicalVerdict]:
    """Evolve both sectors independently from the ground state and classify each residual."""
    verdicts = []
    for k, sector in enumerate((css.x_sector, css.z_sector)):
        st = ChainState.ground(sector, seed, 2 * stream + k)
        continuous_run(st, beta, t, chain_kind, **kw)
        verdicts.append(decoder_for(sector).classify(st.error.bits))
    return verdicts[0], verdicts[1]


def component_set(code: Code, s: int) -> set[frozenset]:
    return {frozenset(c) for c in code.connected_components(s)}


def cluster_distance_proxy(x: int, y: int, code: Code) -> int:
    """Upper bound on the cluster distance: components present in exactly one of x, y.

    Removing each component of x missing from y and then adding each component
    of y missing from x is a valid path when every component is erasable.
    """
    return len(component_set(code, x) ^ component_set(code, y))


def write_jsonl(records: Iterable[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=False) + "\n")
