import pytest
from hypothesis import given, settings, strategies as st

from sectormc.codes import (GuardError, SyndromeNetwork, build_code, build_ising_torus, build_toric_4d,
                            toric4d_face_index)
from sectormc.gf2 import Gf2Matrix, bits_of, mask_of, rank

ISING3 = build_ising_torus(3)
ISING4 = build_ising_torus(4)
TORIC = build_toric_4d(3)


def test_ising_3x3_parameters():
    c = ISING3
    assert (c.n, c.m, c.t, c.rank) == (9, 18, 9, 8)
    assert c.n - c.rank == 1
    assert c.measured_profile() == (4, 6)
    assert len(c.parity_tests) == c.m - c.rank


def test_toric_4d_parameters():
    assert TORIC.n == 486 and TORIC.k == 6
    for sec in (TORIC.x_sector, TORIC.z_sector):
        assert (sec.n, sec.m, sec.t, sec.rank) == (486, 324, 81, 240)
        assert sec.measured_profile() == (6, 14)
        assert len(sec.parity_tests) == 84


def test_css_orthogonality_and_metachecks():
    x, z = TORIC.x_sector, TORIC.z_sector
    assert (x.H @ z.H.T).is_zero()
    assert (x.M @ x.H).is_zero() and (z.M @ z.H).is_zero()


def test_face_index_is_bijective():
    seen = set()
    for p in [(a, b, c, d) for a in range(3) for b in range(3) for c in range(3) for d in range(3)]:
        for pair in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]:
            seen.add(toric4d_face_index(3, p, pair))
    assert seen == set(range(486))


def test_one_dimensional_cycle():
    c = build_ising_torus(6, dims=1)
    assert c.rank == 5
    assert all(len(nb) == 5 for nb in c.network.neighbors)


def test_local_valid_basis_dimensions():
    # radius-1 blocks carry no valid cycle; radius-2 blocks do
    assert ISING3.local_valid_basis(sorted(ISING3.network.ball([0], 1))) == []
    assert len(ISING3.local_valid_basis(sorted(ISING3.network.ball([0], 2)))) == 7
    x = TORIC.x_sector
    B = sorted(x.network.ball([0], 2))
    assert len(B) == 93 and len(x.local_valid_basis(B)) == 45


def test_enumeration_guard():
    with pytest.raises(GuardError):
        build_ising_torus(8).enumerate_valid_syndromes()
    assert len(ISING3.enumerate_valid_syndromes()) == 256


def test_build_code_errors():
    with pytest.raises(ValueError):
        build_code({"code": "nope"})
    with pytest.raises(ValueError):
        build_ising_torus(2)


@settings(max_examples=50)
@given(st.integers(0, (1 << 16) - 1))
def test_syndromes_are_valid_and_metacheck_closed(e):
    s = ISING4.syndrome(e)
    assert ISING4.is_valid(s)
    assert ISING4.M.matvec(s) == 0


@settings(max_examples=50)
@given(st.integers(0, (1 << 32) - 1))
def test_validity_matches_metacheck_kernel_on_planar_directions(s):
    # valid implies metacheck-closed (Ker M contains Im H)
    if ISING4.is_valid(s):
        assert ISING4.M.matvec(s) == 0


@settings(max_examples=50)
@given(st.integers(0, (1 << 18) - 1))
def test_components_partition_violations(s):
    comps = ISING3.connected_components(s)
    flat = [c for comp in comps for c in comp]
    assert sorted(flat) == bits_of(s)
    net = ISING3.network
    for comp in comps:
        inside = set(comp)
        for a in comp:
            for b in net.neighbors[a]:
                if (s >> b) & 1:
                    assert b in inside


def test_network_distances_and_balls():
    net = SyndromeNetwork.cycle(8)
    assert net.distances_from([0])[4] == 4
    assert net.ball([0], 1) == {7, 0, 1}
    assert net.boundary([0], 1) == {2, 6}
    assert net.components([0, 1, 3, 4, 6]) == [[0, 1], [3, 4], [6]]


def test_amenability_profile_shrinks_with_radius():
    prof = build_ising_torus(12).network.amenability_profile([1, 2, 4])
    ratios = [r for _, _, r in prof]
    assert ratios[0] > ratios[1] > ratios[2]
