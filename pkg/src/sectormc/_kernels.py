"""Compiled inner loops.  Each kernel reseeds numba's generator from a caller-supplied seed."""

import numpy as np
from numba import njit


@njit(cache=True)
def seed(s):
    np.random.seed(s)


@njit(cache=True)
def glauber_sweep(e, s, sym_ptr, sym_idx, accept, steps, rng_seed):
    """Single-site Glauber on the code; maintains s = H e incrementally.

    ``accept[k + ell]`` is the acceptance probability for an energy change k.
    Returns the number of accepted flips.
    """
    np.random.seed(rng_seed)
    n = e.shape[0]
    ell = (accept.shape[0] - 1) // 2
    acc = 0
    for _ in range(steps):
        i = np.random.randint(n)
        u = np.random.random()
        de = 0
        for p in range(sym_ptr[i], sym_ptr[i + 1]):
            de += 1 - 2 * s[sym_idx[p]]
        if u < accept[de + ell]:
            e[i] ^= 1
            for p in range(sym_ptr[i], sym_ptr[i + 1]):
                s[sym_idx[p]] ^= 1
            acc += 1
    return acc


@njit(cache=True)
def syndrome_sweep(s, sym_ptr, sym_idx, accept, steps, rng_seed):
    """The induced chain on syndromes; same draws as glauber_sweep."""
    np.random.seed(rng_seed)
    n = sym_ptr.shape[0] - 1
    ell = (accept.shape[0] - 1) // 2
    acc = 0
    for _ in range(steps):
        i = np.random.randint(n)
        u = np.random.random()
        de = 0
        for p in range(sym_ptr[i], sym_ptr[i + 1]):
            de += 1 - 2 * s[sym_idx[p]]
        if u < accept[de + ell]:
            for p in range(sym_ptr[i], sym_ptr[i + 1]):
                s[sym_idx[p]] ^= 1
            acc += 1
    return acc


@njit(cache=True)
def syndrome_trace(s, sym_ptr, sym_idx, accept, steps, rng_seed, key0):
    """Syndrome chain recording the packed state (m <= 62) after every step."""
    np.random.seed(rng_seed)
    n = sym_ptr.shape[0] - 1
    ell = (accept.shape[0] - 1) // 2
    out = np.empty(steps, dtype=np.int64)
    key = key0
    for t in range(steps):
        i = np.random.randint(n)
        u = np.random.random()
        de = 0
        for p in range(sym_ptr[i], sym_ptr[i + 1]):
            de += 1 - 2 * s[sym_idx[p]]
        if u < accept[de + ell]:
            for p in range(sym_ptr[i], sym_ptr[i + 1]):
                c = sym_idx[p]
                s[c] ^= 1
                key ^= np.int64(1) << c
        out[t] = key
    return out


@njit(cache=True)
def ising_sweeps(spins, nbr, accept, sweeps, rng_seed, track_every):
    """Glauber on a spin lattice given as a neighbour table; records magnetisation and energy.

    Energy is the number of unsatisfied bonds.  ``accept`` is indexed by the
    change in unsatisfied bonds plus the coordination number.
    """
    np.random.seed(rng_seed)
    n, z = nbr.shape
    nrec = sweeps // track_every
    mags = np.empty(nrec, dtype=np.int64)
    energy = np.empty(nrec, dtype=np.int64)
    en = 0
    for i in range(n):
        for k in range(z):
            en += spins[i] ^ spins[nbr[i, k]]
    en //= 2
    r = 0
    for sw in range(sweeps):
        for _ in range(n):
            i = np.random.randint(n)
            bad = 0
            for k in range(z):
                bad += spins[i] ^ spins[nbr[i, k]]
            de = z - 2 * bad
            if np.random.random() < accept[de + z]:
                spins[i] ^= 1
                en += de
        if (sw + 1) % track_every == 0:
            mags[r] = spins.sum()
            energy[r] = en
            r += 1
    return mags, energy


@njit(cache=True)
def ising_pinned_samples(spins, nbr, accept, sweeps, thin, rng_seed, probes_a, probes_b):
    """Glauber sweeps returning, every ``thin`` sweeps, the bond states at two probe lists."""
    np.random.seed(rng_seed)
    n, z = nbr.shape
    nrec = sweeps // thin
    na = probes_a.shape[0]
    out = np.zeros((nrec, na), dtype=np.uint8)
    r = 0
    for sw in range(sweeps):
        for _ in range(n):
            i = np.random.randint(n)
            bad = 0
            for k in range(z):
                bad += spins[i] ^ spins[nbr[i, k]]
            de = z - 2 * bad
            if np.random.random() < accept[de + z]:
                spins[i] ^= 1
        if (sw + 1) % thin == 0:
            for k in range(na):
                out[r, k] = spins[probes_a[k]] ^ spins[probes_b[k]]
            r += 1
    return out


@njit(cache=True)
def worm_run(eu, ev, inc_ptr, inc_idx, x, state, defects, ndef, last_valid,
             test_ptr, test_idx, n_visits, burn_in, thinning, keys, rng_seed):
    """Advance the worm chain through ``n_visits`` visits to the defect-free stratum.

    On return the chain sits at its next defect-free time, so ``state`` is an
    even subgraph.  ``state`` holds the edge occupation, ``defects``/``ndef`` the odd vertices.
    When ``test_ptr`` is non-trivial, arrivals at defect-free states that fail a
    parity test are rejected (the chain returns to ``last_valid``).  When
    ``keys`` is non-empty, packed states are recorded every ``thinning`` visits
    after ``burn_in``.  Returns (steps, accepted, recorded, ndef).
    """
    np.random.seed(rng_seed)
    nv = inc_ptr.shape[0] - 1
    ne = state.shape[0]
    ntests = test_ptr.shape[0] - 1
    visits = 0
    steps = 0
    accepted = 0
    rec = 0
    nkeys = keys.shape[0]
    while visits < n_visits or ndef != 0:
        steps += 1
        if ndef == 0:
            if nkeys > 0 and visits >= burn_in and (visits - burn_in) % thinning == 0 and rec < nkeys:
                key = np.int64(0)
                for j in range(ne):
                    if state[j]:
                        key |= np.int64(1) << j
                keys[rec] = key
                rec += 1
            visits += 1
            v = np.random.randint(nv)
            dv = inc_ptr[v + 1] - inc_ptr[v]
            if dv == 0:
                continue
            ed = inc_idx[inc_ptr[v] + np.random.randint(dv)]
            y = ev[ed] if eu[ed] == v else eu[ed]
            ratio = x if state[ed] == 0 else 1.0 / x
            if np.random.random() < ratio:
                state[ed] ^= 1
                defects[0] = v
                defects[1] = y
                ndef = 2
                accepted += 1
        else:
            k = np.random.randint(2)
            d = defects[k]
            other = defects[1 - k]
            dd = inc_ptr[d + 1] - inc_ptr[d]
            ed = inc_idx[inc_ptr[d] + np.random.randint(dd)]
            y = ev[ed] if eu[ed] == d else eu[ed]
            ratio = x if state[ed] == 0 else 1.0 / x
            if y != other:
                ratio *= dd / (inc_ptr[y + 1] - inc_ptr[y])
            if np.random.random() < ratio:
                state[ed] ^= 1
                accepted += 1
                if y == other:
                    ndef = 0
                    ok = True
                    for t in range(ntests):
                        par = 0
                        for p in range(test_ptr[t], test_ptr[t + 1]):
                            par ^= state[test_idx[p]]
                        if par:
                            ok = False
                            break
                    if ntests > 0:
                        if ok:
                            last_valid[:] = state
                        else:
                            state[:] = last_valid
                else:
                    defects[k] = y
    return steps, accepted, rec, ndef


@njit(cache=True)
def ising_bond_pairs(spins, nbr, accept, bond_u, bond_v, pair_cls, n_pair, single_cls, n_single,
                     sweeps, batches, rng_seed):
    """Glauber sweeps tallying violated bonds and ordered violated pairs per class.

    Bond b is violated when spins at ``bond_u[b]`` and ``bond_v[b]`` differ.
    After every sweep the violated bonds are listed; singles are binned by
    ``single_cls`` and ordered pairs by ``pair_cls``.  Tallies are split into
    ``batches`` consecutive blocks of sweeps for batch-means error bars.
    """
    np.random.seed(rng_seed)
    n, z = nbr.shape
    nb = bond_u.shape[0]
    pairs = np.zeros((batches, n_pair), dtype=np.int64)
    singles = np.zeros((batches, n_single), dtype=np.int64)
    per = sweeps // batches
    hot = np.empty(nb, dtype=np.int64)
    for sw in range(per * batches):
        for _ in range(n):
            i = np.random.randint(n)
            bad = 0
            for k in range(z):
                bad += spins[i] ^ spins[nbr[i, k]]
            if np.random.random() < accept[z - 2 * bad + z]:
                spins[i] ^= 1
        b = sw // per
        nh = 0
        for e in range(nb):
            if spins[bond_u[e]] != spins[bond_v[e]]:
                hot[nh] = e
                nh += 1
        for a in range(nh):
            singles[b, single_cls[hot[a]]] += 1
            for c in range(nh):
                if a != c:
                    pairs[b, pair_cls[hot[a], hot[c]]] += 1
    return pairs, singles
