"""Experiment drivers: configs in, fixed-schema tables out.

Every driver is a pure function of its config.  Replica ``r`` at temperature
index ``b`` draws from stream ``stream_id(b, role, r)`` of the config seed, so
results do not depend on the thread count or on the order replicas finish.
"""

from __future__ import annotations

import csv
import json
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels, oracle
from .codes import Code, CssCode, GuardError, build_code, build_sector
from .decoder import classify_residual
from .dynamics import (SAMPLER_MODES, BlockEngine, ChainState, continuous_run, heat_bath_table,
                       kernel_seed, make_rng, syndrome_run, glauber_run)
from .gf2 import bits_of, mask_of

SCHEMA_VERSION = 1

SCHEMAS: dict[str, list[str]] = {
    "mixing": ["beta", "t", "tv_exact", "tv_reach", "energy_density", "tv_energy", "tv_component_count",
               "replicas"],
    "memory": ["beta", "sector", "t", "failure_fraction", "undecodable_fraction", "replicas"],
    "escape": ["beta", "t", "survival", "replicas"],
    "lcc_tail": ["beta", "ell", "tail", "exact_tail", "bound"],
    "ssm": ["beta", "d", "regions", "size_C", "discrepancy", "stderr"],
    "surface": ["beta", "r", "trials", "found_fraction"],
    "dichotomy": ["t", "block_energy_density", "band_lo", "band_hi", "in_band"],
}

CHAIN_KINDS = ("glauber", "syndrome", "block", "Q")


class ConfigError(ValueError):
    pass


def _listify(x) -> list:
    if x is None:
        return []
    return list(x) if isinstance(x, (list, tuple)) else [x]


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    code: dict
    beta: list[float]
    chain: str = "block"
    L: int = 2
    R: int | None = None
    sampler_mode: str = "exact"
    replicas: int = 1
    times: list[float] = field(default_factory=lambda: [0.0])
    observables: list[str] = field(default_factory=list)
    output: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.beta = [float(b) for b in _listify(self.beta)]
        self.times = [float(t) for t in _listify(self.times)]
        self.observables = [str(o) for o in _listify(self.observables)]

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {sorted(EXPERIMENTS)}")
        if self.seed is None or isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed is mandatory and must be a nonnegative integer")
        if not isinstance(self.code, dict) or "code" not in self.code:
            raise ConfigError("code.code is required (ising1d, ising2d or toric4d)")
        if not self.beta or any(b < 0 for b in self.beta):
            raise ConfigError("beta must be a nonempty list of nonnegative numbers")
        if self.chain not in CHAIN_KINDS:
            raise ConfigError(f"unknown chain kind {self.chain!r}")
        if self.sampler_mode not in SAMPLER_MODES:
            raise ConfigError(f"unknown sampler mode {self.sampler_mode!r}")
        if self.L < 0:
            raise ConfigError("chain.L must be nonnegative")
        if self.R is not None and self.R <= 0:
            raise ConfigError("chain.R must be positive")
        if self.chain == "Q" and self.R is None:
            raise ConfigError("the restricted chain needs chain.R")
        if self.replicas < 1:
            raise ConfigError("replicas must be positive")
        if any(t < 0 for t in self.times) or any(b < a for a, b in zip(self.times, self.times[1:])):
            raise ConfigError("times must be nonnegative and nondecreasing")
        return self

    def to_flat(self) -> dict:
        flat = {"experiment": self.experiment, "seed": self.seed}
        for k, v in self.code.items():
            flat[f"code.{k}"] = v
        flat.update({"beta": list(self.beta), "chain.kind": self.chain, "chain.L": self.L, "chain.R": self.R,
                     "chain.sampler_mode": self.sampler_mode, "replicas": self.replicas,
                     "times": list(self.times), "observables": list(self.observables), "output": self.output})
        for k, v in self.params.items():
            flat[f"params.{k}"] = v
        return flat

    @classmethod
    def from_flat(cls, flat: dict) -> "ExperimentConfig":
        flat = dict(flat)
        code = {k[5:]: flat.pop(k) for k in list(flat) if k.startswith("code.")}
        params = {k[7:]: flat.pop(k) for k in list(flat) if k.startswith("params.")}
        chain = {k[6:]: flat.pop(k) for k in list(flat) if k.startswith("chain.")}
        unknown = set(flat) - {"experiment", "seed", "beta", "replicas", "times", "observables", "output"}
        unknown |= set(chain) - {"kind", "L", "R", "sampler_mode"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in flat:
            raise ConfigError("experiment is required")
        if flat.get("seed") is None:
            raise ConfigError("seed is mandatory")
        try:
            cfg = cls(experiment=flat["experiment"], seed=flat["seed"], code=code, beta=flat.get("beta", []),
                      chain=chain.get("kind", "block"), L=int(chain.get("L", 2)),
                      R=None if chain.get("R") is None else int(chain["R"]),
                      sampler_mode=chain.get("sampler_mode", "exact"), replicas=int(flat.get("replicas", 1)),
                      times=flat.get("times", [0.0]), observables=flat.get("observables", []),
                      output=flat.get("output"), params=params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cfg.validate()


@dataclass
class ExperimentResult:
    name: str
    rows: list[dict]
    summary: dict = field(default_factory=dict)
    raw: list[dict] = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        return SCHEMAS[self.name]

    def csv_text(self) -> str:
        lines = []

        class _Sink:
            def write(self, s):
                lines.append(s)

        w = csv.writer(_Sink(), lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r.get(c)) for c in self.columns])
        return "".join(lines)

    def write(self, out_dir) -> list[str]:
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        p = os.path.join(out_dir, f"{self.name}.csv")
        _atomic_write(p, self.csv_text())
        paths.append(p)
        p = os.path.join(out_dir, f"{self.name}.jsonl")
        _atomic_write(p, "".join(json.dumps(r, default=_jsonable) + "\n" for r in self.raw))
        paths.append(p)
        p = os.path.join(out_dir, f"{self.name}.summary.json")
        _atomic_write(p, json.dumps({"schema_version": SCHEMA_VERSION, **self.summary}, indent=2,
                                    sort_keys=True, default=_jsonable) + "\n")
        paths.append(p)
        return paths


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not serialisable: {type(v)}")


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------- replica plumbing

ROLE_MAIN, ROLE_REFERENCE, ROLE_PARTNER = 0, 1, 2


def stream_id(beta_index: int, role: int, replica: int) -> int:
    return (beta_index * 4 + role) * 1_000_000 + replica


_local = threading.local()


def thread_engine(code: Code, L: int, beta: float, sampler_mode: str) -> BlockEngine:
    """One engine per worker thread; samplers carry scratch state."""
    cache = getattr(_local, "engines", None)
    if cache is None:
        cache = _local.engines = {}
    key = (id(code), L, float(beta), sampler_mode)
    eng = cache.get(key)
    if eng is None or eng.code is not code:
        eng = cache[key] = BlockEngine(code, L, beta, sampler_mode)
    return eng


def map_replicas(fn: Callable[[int], object], count: int, threads: int = 1) -> list:
    if threads <= 1 or count <= 1:
        return [fn(r) for r in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def _advance(state: ChainState, beta: float, dt: float, cfg: ExperimentConfig) -> None:
    if cfg.chain in ("block", "Q"):
        eng = thread_engine(state.code, cfg.L, beta, cfg.sampler_mode)
        k = int(state.rng.poisson(state.code.m * dt)) if dt > 0 else 0
        for _ in range(k):
            eng.step(state, max_component=cfg.R if cfg.chain == "Q" else None)
        state.time += dt
    else:
        continuous_run(state, beta, dt, cfg.chain)


def _median(times: Sequence[float]) -> float:
    """Median with +inf for censored runs; the lower middle for even counts."""
    xs = sorted(times)
    return float(xs[(len(xs) - 1) // 2]) if xs else math.inf


def _hist_tv(a: Sequence[float], b: Sequence[float], width: float = 1.0) -> float:
    ka = np.floor(np.asarray(a, dtype=float) / width).astype(np.int64)
    kb = np.floor(np.asarray(b, dtype=float) / width).astype(np.int64)
    keys = np.union1d(ka, kb)
    pa = np.array([(ka == k).mean() for k in keys])
    pb = np.array([(kb == k).mean() for k in keys])
    return float(0.5 * np.abs(pa - pb).sum())


def _observe(state: ChainState) -> tuple[int, int, int]:
    comps = state.components()
    return state.energy, len(comps), max((len(c) for c in comps), default=0)


# ---------------------------------------------------------------- mixing

def mixing_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """TV to equilibrium from the ground state.

    Enumerable instances use kernel powers (times are discrete steps).
    Otherwise the TV is a lower bound from energy and component-count
    histograms against equilibrated reference replicas (times in sweeps).
    """
    code = build_sector(cfg.code)
    rows, raw = [], []
    exact = cfg.chain in ("syndrome", "block", "Q") and _enumerable(code)
    for b, beta in enumerate(cfg.beta):
        if exact:
            labels, K = oracle.exact_kernel(code, beta, cfg.chain, cfg.L, cfg.R)
            pi = oracle.exact_gibbs(code, beta).probs
            start = labels.index(0)
            reach = oracle.reach_set(K, start)
            pir = oracle.restricted_target(pi, reach)
            steps = [int(round(t)) for t in cfg.times]
            tv = oracle.kernel_power_tv(K, pi, start, steps)
            tvr = oracle.kernel_power_tv(K, pir, start, steps)
            for t, a, r in zip(steps, tv, tvr):
                rows.append({"beta": beta, "t": t, "tv_exact": a, "tv_reach": r, "replicas": 0})
            continue
        ref_n = int(cfg.params.get("reference_replicas", cfg.replicas))
        ref_sweeps = float(cfg.params.get("reference_sweeps", 100.0))

        def reference(r, b=b, beta=beta):
            st = ChainState.ground(code, cfg.seed, stream_id(b, ROLE_REFERENCE, r))
            _advance(st, beta, ref_sweeps, cfg)
            return _observe(st)

        def replica(r, b=b, beta=beta):
            st = ChainState.ground(code, cfg.seed, stream_id(b, ROLE_MAIN, r))
            out = []
            for t in cfg.times:
                _advance(st, beta, t - st.time, cfg)
                out.append(_observe(st))
            return out

        ref = map_replicas(reference, ref_n, threads)
        runs = map_replicas(replica, cfg.replicas, threads)
        ref_e = [o[0] for o in ref]
        ref_c = [o[1] for o in ref]
        width = float(cfg.params.get("energy_bin", 1.0))
        for k, t in enumerate(cfg.times):
            e = [run[k][0] for run in runs]
            c = [run[k][1] for run in runs]
            rows.append({"beta": beta, "t": t, "energy_density": float(np.mean(e)) / code.m,
                         "tv_energy": _hist_tv(e, ref_e, width), "tv_component_count": _hist_tv(c, ref_c),
                         "replicas": cfg.replicas})
            for r, run in enumerate(runs):
                raw.append({"beta": beta, "replica": r, "time": t, "energy": run[k][0],
                            "component_count": run[k][1], "largest_component": run[k][2]})
    summary = {"mode": "exact" if exact else "observable-lower-bound",
               "observables": [] if exact else ["energy", "component_count"]}
    return ExperimentResult("mixing", rows, summary, raw)


def _enumerable(code: Code) -> bool:
    try:
        vs = oracle.valid_set(code)
    except GuardError:
        return False
    return len(vs) <= oracle.MAX_STATES


# ---------------------------------------------------------------- memory

def memory_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Logical failure fraction at each checkpoint, per sector for CSS codes.

    A replica's first failure is its first checkpoint classified ``logical``;
    ``undecodable`` checkpoints are tallied separately and also reported as
    a first-unsafe time (logical or undecodable).
    """
    built = build_code(cfg.code)
    sectors = [("x", built.x_sector), ("z", built.z_sector)] if isinstance(built, CssCode) else [("-", built)]
    rows, raw, summary = [], [], {"sectors": {}}
    for b, beta in enumerate(cfg.beta):
        for si, (name, code) in enumerate(sectors):
            def replica(r, b=b, beta=beta, si=si, code=code):
                st = ChainState.ground(code, cfg.seed, stream_id(b, ROLE_MAIN, r) * 2 + si)
                out = []
                for t in cfg.times:
                    _advance(st, beta, t - st.time, cfg)
                    out.append(classify_residual(code, st.error.bits).kind)
                return out

            verdicts = map_replicas(replica, cfg.replicas, threads)
            first_log, first_bad = [], []
            for run in verdicts:
                fl = next((t for t, v in zip(cfg.times, run) if v == "logical"), math.inf)
                fb = next((t for t, v in zip(cfg.times, run) if v in ("logical", "undecodable")), math.inf)
                first_log.append(fl)
                first_bad.append(fb)
            for k, t in enumerate(cfg.times):
                col = [run[k] for run in verdicts]
                rows.append({"beta": beta, "sector": name, "t": t,
                             "failure_fraction": col.count("logical") / len(col),
                             "undecodable_fraction": col.count("undecodable") / len(col),
                             "replicas": cfg.replicas})
                for r, v in enumerate(col):
                    raw.append({"beta": beta, "sector": name, "replica": r, "time": t, "verdict": v})
            summary["sectors"][f"{beta}:{name}"] = {
                "median_first_logical": _median(first_log), "median_first_unsafe": _median(first_bad),
                "any_logical": any(math.isfinite(x) for x in first_log)}
    return ExperimentResult("memory", rows, summary, raw)


# ---------------------------------------------------------------- escape

def escape_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """First sweep at which the unrestricted block chain creates a component larger than R."""
    code = build_sector(cfg.code)
    if cfg.R is None:
        raise ConfigError("escape experiment needs chain.R")
    R = cfg.R
    cap = float(cfg.params.get("max_sweeps", 1000.0))
    cap_steps = int(round(cap * code.m))
    rows, raw, summary = [], [], {"cap_sweeps": cap, "R": R, "by_beta": {}}
    for b, beta in enumerate(cfg.beta):
        def replica(r, b=b, beta=beta):
            st = ChainState.ground(code, cfg.seed, stream_id(b, ROLE_MAIN, r))
            if R >= code.m:
                return math.inf
            eng = thread_engine(code, cfg.L, beta, cfg.sampler_mode)
            for k in range(1, cap_steps + 1):
                info = eng.step(st)
                if info.changed and any(len(c) > R for c in info.new_components):
                    return k / code.m
            return math.inf

        times = map_replicas(replica, cfg.replicas, threads)
        for t in cfg.times:
            rows.append({"beta": beta, "t": t, "survival": sum(x > t for x in times) / len(times),
                         "replicas": cfg.replicas})
        for r, x in enumerate(times):
            raw.append({"beta": beta, "replica": r, "escape_sweeps": x})
        summary["by_beta"][repr(beta)] = {"median": _median(times),
                                          "escaped": sum(math.isfinite(x) for x in times)}
    return ExperimentResult("escape", rows, summary, raw)


# ---------------------------------------------------------------- largest component

def lcc_sizes(code: Code, states: Iterable[int]) -> np.ndarray:
    net = code.network
    return np.array([max((len(c) for c in net.components(bits_of(s))), default=0) for s in states],
                    dtype=np.int64)


def tail_bound(code: Code, beta: float, ell: int) -> float:
    p = code.profile
    q = p.d * math.exp(1.0 - beta)
    if q >= 1.0:
        return math.inf
    return code.m ** p.nu * q ** ell / (1.0 - q)


def largest_component_tail(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """P[|LCC| >= ell] from exact draws (``sampler: oracle``) or the syndrome chain."""
    code = build_sector(cfg.code)
    sampler = cfg.params.get("sampler", "oracle")
    n_samples = int(cfg.params.get("samples", 10000))
    ell_max = int(cfg.params.get("ell_max", code.m))
    rows, summary = [], {"sampler": sampler, "samples": n_samples, "slopes": {}}
    enumerable = _enumerable(code)
    for b, beta in enumerate(cfg.beta):
        rng = make_rng(cfg.seed, stream_id(b, ROLE_MAIN, 0))
        if sampler == "oracle":
            dist = oracle.exact_gibbs(code, beta)
            draws = rng.choice(len(dist), size=n_samples, p=dist.probs)
            lcc = lcc_sizes(code, [dist.states[i] for i in draws.tolist()])
        elif sampler == "syndrome":
            burn = float(cfg.params.get("burn_sweeps", 100.0))
            thin = float(cfg.params.get("thin_sweeps", 1.0))
            st = ChainState.ground(code, cfg.seed, stream_id(b, ROLE_MAIN, 0))
            syndrome_run(st, beta, int(burn * code.n))
            states = []
            for _ in range(n_samples):
                syndrome_run(st, beta, max(1, int(thin * code.n)))
                states.append(st.syndrome_bits)
            lcc = lcc_sizes(code, states)
        else:
            raise ConfigError(f"unknown tail sampler {sampler!r}")
        exact = None
        if enumerable:
            dist = oracle.exact_gibbs(code, beta)
            exact_l = lcc_sizes(code, dist.states)
        tails = []
        for ell in range(1, ell_max + 1):
            tail = float((lcc >= ell).mean())
            tails.append(tail)
            if enumerable:
                exact = float(dist.probs[exact_l >= ell].sum())
            rows.append({"beta": beta, "ell": ell, "tail": tail, "exact_tail": exact,
                         "bound": tail_bound(code, beta, ell)})
        pos = [(ell, t) for ell, t in zip(range(1, ell_max + 1), tails) if t > 0]
        if len(pos) >= 2:
            x = np.array([p[0] for p in pos], dtype=float)
            y = np.log([p[1] for p in pos])
            summary["slopes"][repr(beta)] = float(np.polyfit(x, y, 1)[0])
    return ExperimentResult("lcc_tail", rows, summary)


# ---------------------------------------------------------------- spatial mixing

def outer_boundary(code: Code, region: Iterable[int]) -> list[int]:
    region = set(region)
    return sorted(code.network.neighborhood(region) - region)


def domain_ssm_discrepancy(code: Code, beta: float, A: Sequence[int], B: Sequence[int], C: Sequence[int],
                           eras: bool = False) -> float:
    """Exact ‖π(s_A | s_∂B = 0) − π(s_A | s_∂(B∖C) = 0)‖₁ by enumeration."""
    A, B, C = list(A), set(B), set(C)
    if not set(A) <= B or not C <= B or set(A) & C:
        raise ValueError("need A, C inside B and disjoint")
    p = oracle.conditional_marginal(code, beta, A, outer_boundary(code, B), eras)
    q = oracle.conditional_marginal(code, beta, A, outer_boundary(code, B - C), eras)
    return float(sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in set(p) | set(q)))


def _spin_tables(code: Code) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Neighbour table and bond endpoints for a code whose checks are pairs of symbols."""
    sup = code.check_supports
    if any(len(s) != 2 for s in sup):
        raise ConfigError("sampled spatial mixing needs an Ising-type code")
    bu = np.array([s[0] for s in sup], dtype=np.int64)
    bv = np.array([s[1] for s in sup], dtype=np.int64)
    nbr = np.array([[sup[c][0] if sup[c][1] == i else sup[c][1] for c in code.symbol_checks[i]]
                    for i in range(code.n)], dtype=np.int64)
    return nbr, bu, bv


def _ising_accept(beta: float, z: int) -> np.ndarray:
    # indexed by (change in unsatisfied bonds) + z
    return heat_bath_table(beta, z)


def sampled_pair_discrepancy(code: Code, beta: float, sweeps: int, batches: int, burn: int,
                             rng: np.random.Generator, max_distance: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean of 2|P(s_u=1) − P(s_u=1 | s_c=0)| over pairs at each distance, with batch-means errors.

    Uses translation invariance of the 2D torus: pairs are pooled by bond
    orientations and displacement, so one sweep contributes every translate.
    Returns (distances, means, standard errors).
    """
    geo = code.geometry
    rows_, cols_ = geo["side"], geo["width"]
    nbr, bu, bv = _spin_tables(code)
    m = code.m
    orient = np.arange(m) % 2
    x = (np.arange(m) // 2) // cols_
    y = (np.arange(m) // 2) % cols_
    pair_cls = (((orient[:, None] * 2 + orient[None, :]) * rows_ + (x[None, :] - x[:, None]) % rows_) * cols_
                + (y[None, :] - y[:, None]) % cols_).astype(np.int64)
    n_pair = 4 * rows_ * cols_
    cls_dist = np.full(n_pair, -1, dtype=np.int64)
    for o in (0, 1):
        dist = code.network.distances_from([o])
        for c, d in dist.items():
            cls_dist[pair_cls[o, c]] = d
    spins = np.zeros(code.n, dtype=np.uint8)
    acc = _ising_accept(beta, nbr.shape[1])
    if burn:
        _kernels.ising_sweeps(spins, nbr, acc, burn, kernel_seed(rng), burn)
    pairs, singles = _kernels.ising_bond_pairs(spins, nbr, acc, bu, bv, pair_cls, n_pair,
                                               orient.astype(np.int64), 2, sweeps, batches, kernel_seed(rng))
    per = (sweeps // batches) * code.n  # sweeps x translates, per batch and class
    p1 = singles / per
    p2 = pairs / per
    oa = (np.arange(n_pair) // (rows_ * cols_)) // 2
    ob = (np.arange(n_pair) // (rows_ * cols_)) % 2
    pc = p1[:, ob]
    disc = 2 * np.abs(p2 - p1[:, oa] * pc) / (1 - pc)
    ds = np.arange(1, max_distance + 1)
    means, errs = [], []
    for d in ds:
        sel = cls_dist == d
        per_batch = disc[:, sel].mean(axis=1) if sel.any() else np.zeros(batches)
        means.append(float(per_batch.mean()))
        errs.append(float(per_batch.std(ddof=1) / math.sqrt(batches)) if batches > 1 else math.nan)
    return ds, np.array(means), np.array(errs)


def fit_log_slope(ds: Sequence[int], means: Sequence[float], errs: Sequence[float], z: float = 3.0
                  ) -> tuple[float, list[int]]:
    """Least-squares slope of log(mean) over the leading run of significant distances."""
    used = []
    for d, mu, se in zip(ds, means, errs):
        if mu > 0 and mu > z * se:
            used.append((int(d), float(mu)))
        else:
            break
    if len(used) < 2:
        return math.nan, [u[0] for u in used]
    x = np.array([u[0] for u in used], dtype=float)
    yv = np.log([u[1] for u in used])
    return float(np.polyfit(x, yv, 1)[0]), [u[0] for u in used]


def ssm_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Discrepancy versus d(A, C).

    ``params.mode``: ``exact`` enumerates; ``sampled`` estimates on a 2D Ising
    torus.  ``params.region`` chooses C: ``pair`` (one check at distance d,
    averaged over all such checks; A = {u}, B = all), ``sphere`` (all checks
    at distance d; the weak-mixing shape), or ``explicit`` (params.A/B/C).
    The raw discrepancy and |C| are reported separately.
    """
    code = build_sector(cfg.code)
    mode = cfg.params.get("mode", "exact")
    region = cfg.params.get("region", "pair")
    eras = bool(cfg.params.get("eras", False))
    rows, summary = [], {"mode": mode, "region": region, "slopes": {}, "fitted_distances": {}}
    u = int(cfg.params.get("u", 0))
    for b, beta in enumerate(cfg.beta):
        if mode == "exact":
            oracle.valid_set(code)  # raises GuardError when Gibbs enumeration is out of reach
            if region == "explicit":
                A, B, C = (list(cfg.params[k]) for k in ("A", "B", "C"))
                dist = code.network.distances_from(A)
                d = min((dist.get(c, math.inf) for c in C), default=math.inf)
                rows.append({"beta": beta, "d": d, "regions": 1, "size_C": len(C),
                             "discrepancy": domain_ssm_discrepancy(code, beta, A, B, C, eras), "stderr": 0.0})
                continue
            dist = code.network.distances_from([u])
            allB = list(range(code.m))
            for d in range(1, max(dist.values()) + 1):
                shell = sorted(c for c, k in dist.items() if k == d)
                if region == "sphere":
                    vals, size = [domain_ssm_discrepancy(code, beta, [u], allB, shell, eras)], len(shell)
                elif region == "pair":
                    vals, size = [domain_ssm_discrepancy(code, beta, [u], allB, [c], eras) for c in shell], 1
                else:
                    raise ConfigError(f"unknown region shape {region!r}")
                rows.append({"beta": beta, "d": d, "regions": len(vals), "size_C": size,
                             "discrepancy": float(np.mean(vals)), "stderr": 0.0})
        elif mode == "sampled":
            rng = make_rng(cfg.seed, stream_id(b, ROLE_MAIN, 0))
            ds, means, errs = sampled_pair_discrepancy(
                code, beta, int(cfg.params.get("sweeps", 100000)), int(cfg.params.get("batches", 20)),
                int(cfg.params.get("burn_sweeps", 1000)), rng, int(cfg.params.get("max_distance", 6)))
            for d, mu, se in zip(ds.tolist(), means.tolist(), errs.tolist()):
                rows.append({"beta": beta, "d": d, "regions": -1, "size_C": 1, "discrepancy": mu, "stderr": se})
            slope, used = fit_log_slope(ds, means, errs)
            summary["slopes"][repr(beta)] = slope
            summary["fitted_distances"][repr(beta)] = used
        else:
            raise ConfigError(f"unknown spatial mixing mode {mode!r}")
        dd = code.profile.d
        summary.setdefault("reference_rate", {})[repr(beta)] = (beta - (1 + 2 * math.log(4 * dd))) / 2
    return ExperimentResult("ssm", rows, summary)


# ---------------------------------------------------------------- separating surfaces

@dataclass
class SurfaceProbe:
    found: bool
    surface: list[int]
    path: list[int]
    revealed: list[int]


def separating_surface_probe(code: Code, x: int, y: int, C: Iterable[int], B: Iterable[int] | None, r: int
                             ) -> SurfaceProbe:
    """Reveal outward from C through checks violated in x or y.

    Starting from the radius-1 ball of C inside B, the violated check on the
    inner boundary of the revealed set that is closest to C is expanded until
    none remain.  The inner boundary is then an unviolated surface.  If a
    violated check at distance r-1 or more is reached first, the chain of
    violations leading to it is returned instead.
    """
    if r < 2:
        raise ValueError("surface radius must be at least 2")
    net = code.network
    C = sorted(set(C))
    B = set(range(code.m)) if B is None else set(B)
    hot = x | y
    dist = net.distances_from(C)
    revealed = {c for c in net.ball(C, 1) if c in B}
    parent: dict[int, int] = {}
    expanded: set[int] = set()

    def inner_boundary():
        return sorted(v for v in revealed if any(w in B and w not in revealed for w in net.neighbors[v]))

    while True:
        cand = [v for v in inner_boundary() if (hot >> v) & 1 and v not in expanded]
        if not cand:
            break
        v = min(cand, key=lambda a: (dist.get(a, math.inf), a))
        if dist[v] >= r - 1:
            path = [v]
            while path[-1] in parent:
                path.append(parent[path[-1]])
            return SurfaceProbe(False, [], path[::-1], sorted(revealed))
        expanded.add(v)
        for w in net.neighbors[v]:
            if w in B and w not in revealed:
                revealed.add(w)
                parent[w] = v
    surface = inner_boundary()
    probe = SurfaceProbe(True, surface, [], sorted(revealed))
    if not verify_surface(code, x, y, C, B, r, surface):
        raise AssertionError("revealed surface failed verification")
    return probe


def verify_surface(code: Code, x: int, y: int, C: Sequence[int], B: Iterable[int], r: int,
                   surface: Sequence[int]) -> bool:
    """Check the two surface conditions directly: unviolated, and C cut off from distance r within B."""
    B = set(B)
    S = set(surface)
    hot = x | y
    if any((hot >> v) & 1 for v in S):
        return False
    dist = code.network.distances_from(C)
    if any(dist.get(v, math.inf) > r or v not in B for v in S):
        return False
    seen = {c for c in C if c not in S}
    stack = list(seen)
    while stack:
        a = stack.pop()
        if dist.get(a) == r:
            return False
        for b in code.network.neighbors[a]:
            if b in B and b not in S and b not in seen:
                seen.add(b)
                stack.append(b)
    return True


def surface_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Surface-found frequency on pairs of independent equilibrated samples."""
    code = build_sector(cfg.code)
    rs = [int(v) for v in _listify(cfg.params.get("r", [2, 5]))]
    trials = int(cfg.params.get("trials", 200))
    burn = float(cfg.params.get("burn_sweeps", 200.0))
    spacing = float(cfg.params.get("spacing_sweeps", 5.0))
    C = [int(v) for v in _listify(cfg.params.get("C", [0]))]
    rows, raw = [], []
    for b, beta in enumerate(cfg.beta):
        sx = ChainState.ground(code, cfg.seed, stream_id(b, ROLE_MAIN, 0))
        sy = ChainState.ground(code, cfg.seed, stream_id(b, ROLE_PARTNER, 0))
        for st in (sx, sy):
            glauber_run(st, beta, int(burn * code.n))
        found = {r: 0 for r in rs}
        for k in range(trials):
            for st in (sx, sy):
                glauber_run(st, beta, max(1, int(spacing * code.n)))
            x, y = sx.syndrome_bits, sy.syndrome_bits
            for r in rs:
                ok = separating_surface_probe(code, x, y, C, None, r).found
                found[r] += ok
                raw.append({"beta": beta, "trial": k, "r": r, "found": ok})
        for r in rs:
            rows.append({"beta": beta, "r": r, "trials": trials, "found_fraction": found[r] / trials})
    return ExperimentResult("surface", rows, {"C": C}, raw)


# ---------------------------------------------------------------- dichotomy

def majority_flips(mags: np.ndarray, n: int) -> int:
    """Sign changes of (up-count - n/2), ignoring exact ties."""
    sign = np.sign(2 * np.asarray(mags, dtype=np.int64) - n)
    sign = sign[sign != 0]
    return int((sign[1:] != sign[:-1]).sum())


def dichotomy_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Block chain reaching the equilibrium energy band versus Glauber magnetisation flips.

    Reference: ``reference_replicas`` Glauber replicas burned in for
    ``reference_sweeps`` sweeps from all-zero (so inside the starting
    sector), then sampled every sweep for ``reference_window`` sweeps.  The
    band is mu ± z·sigma/sqrt(replicas·window), matching the statistic it is
    compared with: the block-replica mean energy density averaged over
    ``window`` consecutive grid points.  The crossing time is the first grid
    time t >= ``min_time`` whose window lies in the band.
    """
    code = build_sector(cfg.code)
    beta = cfg.beta[0]
    p = cfg.params
    nbr, _, _ = _spin_tables(code)
    acc = _ising_accept(beta, nbr.shape[1])
    ref_n = int(p.get("reference_replicas", 10))
    ref_burn = int(p.get("reference_sweeps", 1_000_000))
    ref_win = int(p.get("reference_window", 10_000))
    window = int(p.get("window", 4))
    z = float(p.get("band_z", 3.0))
    min_time = float(p.get("min_time", 1.0))

    def reference(r):
        rng = make_rng(cfg.seed, stream_id(0, ROLE_REFERENCE, r))
        spins = np.zeros(code.n, dtype=np.uint8)
        _kernels.ising_sweeps(spins, nbr, acc, ref_burn, kernel_seed(rng), ref_burn)
        _, energy = _kernels.ising_sweeps(spins, nbr, acc, ref_win, kernel_seed(rng), 1)
        return energy / code.m

    ref = np.concatenate(map_replicas(reference, ref_n, threads))
    mu, sigma = float(ref.mean()), float(ref.std(ddof=1))
    half = z * sigma / math.sqrt(cfg.replicas * window)
    lo, hi = mu - half, mu + half

    def replica(r):
        st = ChainState.ground(code, cfg.seed, stream_id(0, ROLE_MAIN, r))
        out = []
        for t in cfg.times:
            _advance(st, beta, t - st.time, cfg)
            out.append(st.energy / code.m)
        return out

    dens = np.array(map_replicas(replica, cfg.replicas, threads)).mean(axis=0)
    rows, crossing = [], math.inf
    for k, t in enumerate(cfg.times):
        if k + window > len(cfg.times):
            break
        val = float(dens[k:k + window].mean())
        inside = lo <= val <= hi
        rows.append({"t": t, "block_energy_density": val, "band_lo": lo, "band_hi": hi, "in_band": inside})
        if inside and t >= min_time and not math.isfinite(crossing):
            crossing = t
    horizon = float(p.get("horizon", crossing if math.isfinite(crossing) else cfg.times[-1]))
    g_n = int(p.get("glauber_replicas", 100))
    g_sweeps = max(1, int(math.ceil(horizon)))

    def glauber(r):
        rng = make_rng(cfg.seed, stream_id(0, ROLE_PARTNER, r))
        spins = np.zeros(code.n, dtype=np.uint8)
        mags, _ = _kernels.ising_sweeps(spins, nbr, acc, g_sweeps, kernel_seed(rng), 1)
        return majority_flips(np.concatenate([[0], mags]), code.n)

    flips = map_replicas(glauber, g_n, threads)
    summary = {"reference_mean": mu, "reference_sd": sigma, "band": [lo, hi], "crossing_sweeps": crossing,
               "horizon_sweeps": horizon, "glauber_replicas": g_n,
               "glauber_replicas_without_flip": sum(f == 0 for f in flips)}
    return ExperimentResult("dichotomy", rows, summary, [{"replica": r, "flips": f} for r, f in enumerate(flips)])


EXPERIMENTS: dict[str, Callable[..., ExperimentResult]] = {
    "mixing": mixing_experiment,
    "memory": memory_experiment,
    "escape": escape_experiment,
    "lcc_tail": largest_component_tail,
    "ssm": ssm_experiment,
    "surface": surface_experiment,
    "dichotomy": dichotomy_experiment,
}


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    cfg.validate()
    return EXPERIMENTS[cfg.experiment](cfg, threads)
