"""Canonical corrections and logical classification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .codes import Code, GuardError
from .gf2 import BitVector, ColumnSolver, Echelon, Gf2Matrix, bits_of, kernel_basis, mask_of

EXACT = "exact"
GREEDY = "greedy-fallback"


class NotErasableError(ValueError):
    """A syndrome component is topologically nontrivial and has no local correction."""

    def __init__(self, component: Sequence[int]):
        self.component = list(component)
        super().__init__(f"topologically nontrivial component {self.component}")


@dataclass(frozen=True)
class Correction:
    error: BitVector
    target: BitVector
    weight: int
    mode: str = EXACT

    @property
    def bits(self) -> int:
        return self.error.bits


@dataclass(frozen=True)
class LogicalVerdict:
    kind: str  # identity | stabilizer | logical | undecodable
    undecodable: bool = False
    offending: tuple[int, ...] = ()

    def __str__(self) -> str:
        return self.kind


@dataclass
class CriticalReport:
    critical: bool
    witnesses: list[int] = field(default_factory=list)
    indeterminate: list[int] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.critical


def _lex_key(x: int, nbits: int) -> int:
    # Smaller key = lexicographically smaller as (bit 0, bit 1, ...).
    return int(format(x, f"0{nbits}b")[::-1], 2) if nbits else 0


def _pack_words(vectors: Sequence[int], nbits: int) -> np.ndarray:
    words = max(1, (nbits + 63) // 64)
    out = np.zeros((len(vectors), words), dtype=np.uint64)
    mask = (1 << 64) - 1
    for i, v in enumerate(vectors):
        for w in range(words):
            out[i, w] = (v >> (64 * w)) & mask
    return out


def _span_table(vectors: np.ndarray) -> np.ndarray:
    """All 2^k XOR combinations of packed rows; row index bit i selects vector i."""
    k, words = vectors.shape
    table = np.zeros((1 << k, words), dtype=np.uint64)
    for i in range(k):
        half = 1 << i
        table[half:2 * half] = table[:half] ^ vectors[i]
    return table


def _unpack_words(row: np.ndarray) -> int:
    return sum(int(w) << (64 * i) for i, w in enumerate(row))


def exhaustive_min_weight(x0: int, kernel: Sequence[int], nbits: int) -> int:
    """Minimum-weight element of the coset x0 + span(kernel), ties to the lexicographically smallest."""
    k = len(kernel)
    if k == 0:
        return x0
    vecs = _pack_words(list(kernel), nbits)
    k_lo = min(k, 12)
    low = _span_table(vecs[:k_lo]) ^ _pack_words([x0], nbits)[0]
    high = _span_table(vecs[k_lo:]) if k > k_lo else np.zeros((1, vecs.shape[1]), dtype=np.uint64)
    best_w = None
    cands: list[int] = []
    for h in high:
        block = low ^ h
        wts = np.bitwise_count(block).sum(axis=1)
        wmin = int(wts.min())
        if best_w is None or wmin < best_w:
            best_w = wmin
            cands = []
        if wmin == best_w:
            cands.extend(_unpack_words(r) for r in block[wts == wmin])
    return min(cands, key=lambda c: _lex_key(c, nbits))


def greedy_min_weight(x0: int, kernel: Sequence[int]) -> int:
    """Local descent: add kernel vectors (singly or in pairs) while that lowers the weight."""
    x = x0
    moves = list(kernel) + [a ^ b for i, a in enumerate(kernel) for b in kernel[i + 1:]]
    improved = True
    while improved:
        improved = False
        for v in moves:
            if (x ^ v).bit_count() < x.bit_count():
                x ^= v
                improved = True
    return x


class Decoder:
    """Per-code decoder with memoized component corrections.

    A component's correction depends only on the component, so dynamics that
    erase and recreate the same small loops hit the cache almost every time.
    """

    def __init__(self, code: Code, hint_radius: int = 1, max_kernel_dim: int = 24, mode: str = "auto"):
        self.code = code
        self.hint_radius = hint_radius
        self.max_kernel_dim = max_kernel_dim
        if mode not in ("auto", EXACT, GREEDY):
            raise ValueError(f"unknown decoder mode {mode!r}")
        self.mode = mode
        self._cache: dict[frozenset, Correction] = {}
        self._stab: Echelon | None = Echelon(code.stabilizers) if code.stabilizers is not None else None

    def default_hint(self, V: Iterable[int]) -> list[int]:
        ball = self.code.network.ball(V, self.hint_radius)
        return sorted({j for c in ball for j in self.code.check_supports[c]})

    def min_weight(self, V: Iterable[int], support_hint: Iterable[int] | None = None,
                   mode: str | None = None) -> Correction:
        code = self.code
        V = sorted(set(V))
        mode = mode or self.mode
        target = mask_of(V)
        if not V:
            return Correction(BitVector(code.n), BitVector(code.m), 0, EXACT)
        if not code.is_valid(target):
            raise NotErasableError(V)
        S = sorted(set(self.default_hint(V) if support_hint is None else support_hint))
        rows = sorted({c for j in S for c in code.symbol_checks[j]} | set(V))
        local = code.H.select_rows(rows).select_columns(S)
        row_pos = {c: i for i, c in enumerate(rows)}
        b = mask_of(row_pos[c] for c in V)
        x0 = ColumnSolver(local).solve(b)
        if x0 is None:
            raise NotErasableError(V)
        kernel = [v.bits for v in kernel_basis(local)]
        if mode == EXACT or (mode == "auto" and len(kernel) <= self.max_kernel_dim):
            if len(kernel) > self.max_kernel_dim:
                raise GuardError(f"restricted kernel dimension {len(kernel)} exceeds {self.max_kernel_dim}")
            x, used = exhaustive_min_weight(x0, kernel, len(S)), EXACT
        else:
            x, used = greedy_min_weight(x0, kernel), GREEDY
        err = mask_of(S[i] for i in bits_of(x))
        assert code.syndrome(err) == target
        return Correction(BitVector(code.n, err), BitVector(code.m, target), err.bit_count(), used)

    def component(self, V: Iterable[int]) -> Correction:
        key = frozenset(V)
        hit = self._cache.get(key)
        if hit is None:
            hit = self.min_weight(key)
            self._cache[key] = hit
        return hit

    def contract(self, s: int) -> Correction:
        code = self.code
        err = 0
        modes = set()
        for comp in code.connected_components(s):
            c = self.component(comp)
            err ^= c.error.bits
            modes.add(c.mode)
        mode = GREEDY if GREEDY in modes else EXACT
        return Correction(BitVector(code.n, err), BitVector(code.m, s), err.bit_count(), mode)

    def is_trivial(self, r: int) -> str:
        if r == 0:
            return "identity"
        if self._stab is not None and self._stab.contains(r):
            return "stabilizer"
        return "logical"

    def classify(self, e: int) -> LogicalVerdict:
        try:
            c = self.contract(self.code.syndrome(e))
        except NotErasableError as exc:
            return LogicalVerdict("undecodable", True, tuple(exc.component))
        return LogicalVerdict(self.is_trivial(e ^ c.error.bits))

    def critical(self, s: int, symbols: Iterable[int] | None = None) -> CriticalReport:
        code = self.code
        base = self.contract(s).error.bits
        report = CriticalReport(False)
        for i in range(code.n) if symbols is None else symbols:
            s2 = s ^ code.syndrome(1 << i)
            try:
                other = self.contract(s2).error.bits
            except NotErasableError:
                report.indeterminate.append(i)
                continue
            if self.is_trivial(base ^ (1 << i) ^ other) == "logical":
                report.critical = True
                report.witnesses.append(i)
        return report


_DECODERS: dict[int, Decoder] = {}


def decoder_for(code: Code) -> Decoder:
    dec = _DECODERS.get(id(code))
    if dec is None or dec.code is not code:
        dec = _DECODERS[id(code)] = Decoder(code)
    return dec


def _as_int(x) -> int:
    if isinstance(x, BitVector):
        return x.bits
    if isinstance(x, (set, frozenset, list, tuple)):
        return mask_of(x)
    return int(x)


def min_weight_correction(code: Code, V: Iterable[int], support_hint: Iterable[int] | None = None,
                          mode: str = "auto") -> Correction:
    return decoder_for(code).min_weight(V, support_hint, mode)


def corr_contract(code: Code, s) -> Correction:
    return decoder_for(code).contract(_as_int(s))


def is_critical(code: Code, s, symbols: Iterable[int] | None = None) -> CriticalReport:
    return decoder_for(code).critical(_as_int(s), symbols)


def classify_residual(code: Code, cumulative_error) -> LogicalVerdict:
    return decoder_for(code).classify(_as_int(cumulative_error))
