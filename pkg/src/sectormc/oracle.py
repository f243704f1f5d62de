"""Brute-force ground truth on enumerable instances.

Nothing here calls into the dynamics module: adjacency is rebuilt from the
metacheck rows, components come from a local BFS, and block kernels are
formed by filtering the enumerated valid set rather than through any sampler.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .codes import Code, GuardError
from .distribution import Distribution, logsumexp
from .gf2 import Echelon, bits_of, mask_of, span_enumerate

MAX_RANK = 22
MAX_STATES = 4096
CHAIN_KINDS = ("syndrome", "glauber", "block", "Q")


class ScreeningError(ValueError):
    pass


class NotErasable(ValueError):
    pass


def _adjacency(code: Code) -> list[set[int]]:
    adj: list[set[int]] = [set() for _ in range(code.m)]
    for row in code.M.rows:
        sup = bits_of(row)
        for a in sup:
            adj[a].update(sup)
    for a in range(code.m):
        adj[a].discard(a)
    return adj


def _components(s: int, adj: Sequence[set[int]]) -> list[int]:
    """Connected components of the violated set, as packed masks."""
    out = []
    left = s
    while left:
        start = (left & -left).bit_length() - 1
        comp = 1 << start
        queue = deque([start])
        while queue:
            a = queue.popleft()
            for b in adj[a]:
                bit = 1 << b
                if (s & bit) and not (comp & bit):
                    comp |= bit
                    queue.append(b)
        out.append(comp)
        left &= ~comp
    return out


def _distances(src: Iterable[int], adj: Sequence[set[int]]) -> dict[int, int]:
    dist = {u: 0 for u in src}
    queue = deque(dist)
    while queue:
        a = queue.popleft()
        for b in adj[a]:
            if b not in dist:
                dist[b] = dist[a] + 1
                queue.append(b)
    return dist


@dataclass
class ValidSet:
    """Im(H) enumerated in Gray-code order over a fixed echelon basis."""

    code: Code
    states: np.ndarray
    basis: list[int]

    def __post_init__(self):
        self.index = {int(s): i for i, s in enumerate(self.states.tolist())}
        self.weights = np.array([int(s).bit_count() for s in self.states.tolist()])

    def __len__(self) -> int:
        return len(self.states)

    def contains(self, s: int) -> bool:
        return s in self.index


_VALID: dict[int, ValidSet] = {}


def valid_set(code: Code, max_rank: int = MAX_RANK) -> ValidSet:
    vs = _VALID.get(id(code))
    if vs is not None and vs.code is code:
        return vs
    ech = Echelon(code.H.transpose())
    if ech.rank > max_rank:
        raise GuardError(f"rank(H) = {ech.rank} exceeds the enumeration cutoff {max_rank}")
    basis = list(ech.rows)
    states = np.array(span_enumerate(basis), dtype=np.int64 if code.m <= 63 else object)
    vs = _VALID[id(code)] = ValidSet(code, states, basis)
    return vs


def exact_gibbs(code: Code, beta: float) -> Distribution:
    vs = valid_set(code)
    logw = -beta * vs.weights.astype(float)
    p = np.exp(logw - logsumexp(logw))
    return Distribution([int(s) for s in vs.states.tolist()], p)


# ---------------------------------------------------------------- kernels

def _heat_bath(beta: float, de: int) -> float:
    return 0.5 * (1.0 - np.tanh(0.5 * beta * de))


def _syndrome_kernel(code: Code, beta: float, vs: ValidSet) -> np.ndarray:
    N = len(vs)
    K = np.zeros((N, N))
    cols = [mask_of(c) for c in code.symbol_checks]
    for i, s in enumerate(vs.states.tolist()):
        w = s.bit_count()
        for c in cols:
            t = s ^ c
            p = _heat_bath(beta, t.bit_count() - w) / code.n
            K[i, vs.index[t]] += p
            K[i, i] += 1.0 / code.n - p
    return K


def _glauber_kernel(code: Code, beta: float) -> tuple[list[int], np.ndarray]:
    n = code.n
    if 1 << n > MAX_STATES:
        raise GuardError(f"Glauber kernel over 2^{n} errors exceeds {MAX_STATES} states")
    cols = [mask_of(c) for c in code.symbol_checks]
    synd = [0] * (1 << n)
    for e in range(1, 1 << n):
        j = (e & -e).bit_length() - 1
        synd[e] = synd[e ^ (1 << j)] ^ cols[j]
    K = np.zeros((1 << n, 1 << n))
    for e in range(1 << n):
        w = synd[e].bit_count()
        for j in range(n):
            f = e ^ (1 << j)
            p = _heat_bath(beta, synd[f].bit_count() - w) / n
            K[e, f] += p
            K[e, e] += 1.0 / n - p
    return list(range(1 << n)), K


def _block_kernel(code: Code, beta: float, vs: ValidSet, L: int, R: int | None) -> np.ndarray:
    m = code.m
    adj = _adjacency(code)
    N = len(vs)
    states = vs.states
    K = np.zeros((N, N))
    geo = []
    for u in range(m):
        d = _distances([u], adj)
        ball = mask_of(v for v, k in d.items() if k <= L)
        shell = mask_of(v for v, k in d.items() if k == L + 1)
        geo.append((ball, shell))
    comps = [set(_components(int(s), adj)) for s in states.tolist()]
    bad = [{c for c in cs if c not in vs.index} for cs in comps]
    logw = -beta * vs.weights.astype(float)
    for i, s in enumerate(states.tolist()):
        for ball, shell in geo:
            hot = s & shell
            frozen = [c for c in comps[i] if c & hot]
            excl = 0
            for c in frozen:
                excl |= c
                for a in bits_of(c):
                    excl |= mask_of(adj[a])
            interior = ball & ~excl
            if not interior:
                K[i, i] += 1.0 / m
                continue
            cand = np.flatnonzero(((states ^ s) & ~interior) == 0)
            w = np.exp(logw[cand] - logsumexp(logw[cand]))
            frozen_bad = any(c in bad[i] for c in frozen)
            for j, p in zip(cand.tolist(), w.tolist()):
                if j == i:
                    K[i, i] += p / m
                    continue
                touched = comps[i] ^ comps[j]
                reject = frozen_bad or any(c in bad[i] or c in bad[j] for c in touched)
                if not reject and R is not None:
                    reject = any(c.bit_count() > R for c in comps[j] if c & interior)
                K[(i, i) if reject else (i, j)] += p / m
    return K


def exact_kernel(code: Code, beta: float, chain_kind: str, L: int = 1, R: int | None = None
                 ) -> tuple[list[int], np.ndarray]:
    """Full transition matrix; returns (state labels, K).

    Labels are packed syndromes except for ``glauber``, whose states are errors.
    ``block`` is the conditional block chain with radius ``L``; ``Q`` adds
    the rejection of moves creating a component larger than ``R``.
    """
    if chain_kind not in CHAIN_KINDS:
        raise ValueError(f"unknown chain kind {chain_kind!r}")
    if chain_kind == "glauber":
        return _glauber_kernel(code, beta)
    vs = valid_set(code)
    if len(vs) > MAX_STATES:
        raise GuardError(f"|Omega| = {len(vs)} exceeds the kernel cutoff {MAX_STATES}")
    labels = [int(s) for s in vs.states.tolist()]
    if chain_kind == "syndrome":
        return labels, _syndrome_kernel(code, beta, vs)
    if chain_kind == "Q":
        if R is None:
            raise ValueError("the restricted chain needs R")
        return labels, _block_kernel(code, beta, vs, L, R)
    return labels, _block_kernel(code, beta, vs, L, None)


def reach_set(K: np.ndarray, start: int = 0) -> list[int]:
    """Indices reachable from ``start`` along positive-probability moves."""
    seen = {start}
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(K[i] > 0).tolist():
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return sorted(seen)


def restricted_target(pi: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    out = np.zeros_like(pi)
    out[list(keep)] = pi[list(keep)]
    return out / out.sum()


def stationarity_defect(pi: np.ndarray, K: np.ndarray) -> float:
    return float(np.abs(pi @ K - pi).sum())


def detailed_balance_defect(pi: np.ndarray, K: np.ndarray, keep: Sequence[int] | None = None) -> float:
    if keep is not None:
        idx = np.asarray(keep)
        pi, K = pi[idx], K[np.ix_(idx, idx)]
    flow = pi[:, None] * K
    return float(np.abs(flow - flow.T).max())


def kernel_power_tv(K: np.ndarray, pi: np.ndarray, start: int, times: Sequence[int]) -> list[float]:
    """‖P^t(start, .) − pi‖₁ at each requested t (nondecreasing t)."""
    row = np.zeros(len(pi))
    row[start] = 1.0
    out, t = [], 0
    for target in times:
        while t < target:
            row = row @ K
            t += 1
        out.append(float(np.abs(row - pi).sum()))
    return out


def kernel_digest(K: np.ndarray) -> str:
    return hashlib.sha256(np.round(K, 12).astype("<f8").tobytes()).hexdigest()


# ---------------------------------------------------------------- checks

def peierls_check(code: Code, beta: float, V: Iterable[int]) -> tuple[float, float]:
    """(P[sample contains V], e^{-beta|V|}) by enumeration."""
    vs = valid_set(code)
    v = mask_of(V)
    if not vs.contains(v):
        raise NotErasable(f"violation set {bits_of(v)} is not erasable")
    pi = exact_gibbs(code, beta).probs
    hit = (vs.states & v) == v
    return float(pi[hit].sum()), float(np.exp(-beta * v.bit_count()))


def erasable_subsets(code: Code, max_size: int) -> list[int]:
    """Every nonempty valid syndrome of weight at most ``max_size``."""
    vs = valid_set(code)
    return [int(s) for s, w in zip(vs.states.tolist(), vs.weights.tolist()) if 0 < w <= max_size]


def _eras_mask(code: Code, vs: ValidSet) -> np.ndarray:
    adj = _adjacency(code)
    return np.array([all(c in vs.index for c in _components(int(s), adj)) for s in vs.states.tolist()])


def markov_property_check(code: Code, beta: float, A: Iterable[int], B: Iterable[int], C: Iterable[int],
                          eras: bool = True) -> float:
    """Largest |P(a, c) − P(a)P(c)| given s_B = 0 (and E_eras when ``eras``)."""
    A, B, C = sorted(set(A)), sorted(set(B)), sorted(set(C))
    if set(A) & set(B) or set(A) & set(C) or set(B) & set(C) or len(A) + len(B) + len(C) != code.m:
        raise ValueError("A, B, C must partition the checks")
    adj = _adjacency(code)
    cset = set(C)
    if any(adj[a] & cset for a in A):
        raise ScreeningError("B does not screen A from C")
    if not A or not C:
        return 0.0
    vs = valid_set(code)
    pi = exact_gibbs(code, beta).probs
    keep = (vs.states & mask_of(B)) == 0
    if eras:
        keep &= _eras_mask(code, vs)
    p = pi[keep] / pi[keep].sum()
    sa = vs.states[keep] & mask_of(A)
    sc = vs.states[keep] & mask_of(C)
    ua, ia = np.unique(sa, return_inverse=True)
    uc, ic = np.unique(sc, return_inverse=True)
    joint = np.zeros((len(ua), len(uc)))
    np.add.at(joint, (ia, ic), p)
    prod = np.outer(joint.sum(axis=1), joint.sum(axis=0))
    return float(np.abs(joint - prod).max())


def conditional_marginal(code: Code, beta: float, A: Sequence[int], pinned: Iterable[int],
                         eras: bool = False) -> dict[int, float]:
    """Exact law of s_A (packed over A's order) given s = 0 on ``pinned``."""
    vs = valid_set(code)
    pi = exact_gibbs(code, beta).probs
    keep = (vs.states & mask_of(pinned)) == 0
    if eras:
        keep &= _eras_mask(code, vs)
    p = pi[keep] / pi[keep].sum()
    sub = vs.states[keep]
    key = np.zeros(len(sub), dtype=np.int64)
    for k, a in enumerate(A):
        key |= ((sub >> a) & 1) << k
    out: dict[int, float] = {}
    for kk, pp in zip(key.tolist(), p.tolist()):
        out[kk] = out.get(kk, 0.0) + pp
    return out


def exact_state_graph_distance(code: Code, R: int) -> tuple[list[int], np.ndarray]:
    """All-pairs cluster distance on Ω_R; -1 marks unreachable pairs."""
    vs = valid_set(code)
    adj = _adjacency(code)
    comps = {}
    small = []
    for s in vs.states.tolist():
        cs = _components(int(s), adj)
        if all(c.bit_count() <= R for c in cs):
            small.append(int(s))
            comps[int(s)] = cs
    if len(small) > MAX_STATES:
        raise GuardError(f"|Omega_R| = {len(small)} exceeds {MAX_STATES}")
    idx = {s: i for i, s in enumerate(small)}
    nbrs: list[set[int]] = [set() for _ in small]
    for s in small:
        for c in comps[s]:
            t = s ^ c
            if t in idx:
                nbrs[idx[s]].add(idx[t])
                nbrs[idx[t]].add(idx[s])
    N = len(small)
    D = np.full((N, N), -1, dtype=np.int64)
    for i in range(N):
        D[i, i] = 0
        queue = deque([i])
        while queue:
            a = queue.popleft()
            for b in nbrs[a]:
                if D[i, b] < 0:
                    D[i, b] = D[i, a] + 1
                    queue.append(b)
    return small, D


# ---------------------------------------------------------------- fixtures

def fixture(code: Code, beta: float, chain: str, L: int = 1, R: int | None = None, top: int = 8,
            spec: dict | None = None) -> dict:
    """Regression record: kernel digest plus the most likely states under π_β."""
    labels, K = exact_kernel(code, beta, chain, L, R)
    pi = exact_gibbs(code, beta)
    order = np.argsort(-pi.probs, kind="stable")[:top]
    return {
        "code": code.name,
        "beta": beta,
        "chain": chain if chain not in ("block", "Q") else f"{chain}(L={L}{'' if R is None else f',R={R}'})",
        "kernel_sha256": kernel_digest(K),
        "states": len(labels),
        "key_probabilities": {format(pi.states[i], "x"): round(float(pi.probs[i]), 14) for i in order.tolist()},
        "chain_kind": chain,
        "L": L,
        "R": R,
        **({"spec": spec} if spec is not None else {}),
    }


def write_fixture(obj: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
