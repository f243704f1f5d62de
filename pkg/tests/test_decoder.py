import pytest
from hypothesis import given, settings, strategies as st

from sectormc.codes import build_ising_torus, build_toric_4d
from sectormc.decoder import (Decoder, NotErasableError, classify_residual, corr_contract, exhaustive_min_weight,
                              greedy_min_weight, is_critical, min_weight_correction)
from sectormc.gf2 import bits_of, mask_of

ISING3 = build_ising_torus(3)
ISING5 = build_ising_torus(5)
TORIC = build_toric_4d(3)


def spin_loop(code, spin):
    return code.symbol_checks[spin]


def test_single_spin_loop_has_weight_one():
    corr = min_weight_correction(ISING3, spin_loop(ISING3, 4))
    assert corr.weight == 1 and corr.error.support() == [4]


def test_domino_has_weight_two():
    V = sorted(set(ISING5.symbol_checks[0]) ^ set(ISING5.symbol_checks[1]))
    assert min_weight_correction(ISING5, V).weight == 2


def test_global_flip_is_logical():
    assert classify_residual(ISING3, (1 << 9) - 1).kind == "logical"
    assert classify_residual(ISING3, 0).kind == "identity"


def test_stabilizer_residual_in_css_sector():
    z = TORIC.z_sector
    assert classify_residual(z, z.stabilizers.rows[0]).kind == "stabilizer"


def test_non_erasable_component_raises():
    with pytest.raises(NotErasableError):
        Decoder(ISING3).min_weight([0])
    # two domain walls around a 4x4 torus: valid together, each one wraps
    c = build_ising_torus(4)
    walls = [2 * (x * 4 + y) + 1 for x in range(4) for y in (0, 2)]
    s = mask_of(walls)
    assert c.is_valid(s) and len(c.connected_components(s)) == 2
    with pytest.raises(NotErasableError):
        corr_contract(c, s)
    e = mask_of(x * 4 + y for x in range(4) for y in (1, 2))
    assert c.syndrome(e) == s
    assert classify_residual(c, e).kind == "undecodable"


def test_antipodal_syndrome_on_cycle_is_critical():
    c = build_ising_torus(4, dims=1)
    assert bool(is_critical(c, mask_of([0, 2])))


def test_single_loop_in_4d_is_not_critical():
    x = TORIC.x_sector
    s = x.syndrome(1)
    assert not bool(is_critical(x, s))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 24), min_size=0, max_size=4, unique=True))
def test_contract_reproduces_sparse_syndromes(spins):
    e = mask_of(spins)
    s = ISING5.syndrome(e)
    corr = corr_contract(ISING5, s)
    assert ISING5.syndrome(corr.error.bits) == s
    assert corr.weight <= len(spins)
    assert classify_residual(ISING5, e).kind == "identity"


@settings(max_examples=40, deadline=None)
@given(st.integers(0, (1 << 10) - 1), st.lists(st.integers(1, (1 << 10) - 1), max_size=6))
def test_exhaustive_beats_greedy(x0, kernel):
    best = exhaustive_min_weight(x0, kernel, 10)
    assert best.bit_count() <= greedy_min_weight(x0, kernel).bit_count()
    span = {0}
    for v in kernel:
        span |= {a ^ v for a in span}
    assert best.bit_count() == min((x0 ^ a).bit_count() for a in span)


def test_corrections_are_deterministic():
    V = spin_loop(ISING5, 7)
    a = Decoder(ISING5).min_weight(V)
    b = Decoder(ISING5).min_weight(V)
    assert a == b
