"""Placement heuristic: weighted demand, affine cost, three-phase packing."""

from dataclasses import replace

import numpy as np
import pytest

from conftest import hand_scenario, identity_mapping
from oranslice.oracle import exhaustive_placement
from oranslice.placement import (PlacementWeights, admitted_ratio, cost_phi,
                                 cost_psi, normalized_resource_consumption,
                                 place, weighted_capacity, weighted_demand)
from oranslice.radio import SliceMapping
from oranslice.scenario import GeneratorConfig, generate_scenario


def one_on_one():
    return SliceMapping(a=np.ones((1, 1), dtype=np.int8))


# ------------------------------------------------------------- weighting


def test_weighted_demand_mean_slice():
    # (100 GB, 10 TB, 32 GHz) under weights (1, 100, 320):
    # 100 + 1000 + 10240 = 11340; the mean DC is ten such slices
    sc = hand_scenario()
    d = weighted_demand(sc.slices[0])
    assert d.weighted == pytest.approx(11340.0)
    assert weighted_capacity(sc.dcs[0]) == pytest.approx(113400.0)


def test_weighted_demand_memory_only():
    sc = hand_scenario()
    d = weighted_demand(sc.slices[0], PlacementWeights(1.0, 0.0, 0.0))
    assert d.weighted == pytest.approx(100.0)


def test_weighted_demand_zero():
    sc = hand_scenario(vnf_demand=(0.0, 0.0, 0.0))
    assert weighted_demand(sc.slices[0]).weighted == 0.0


# ------------------------------------------------------------------ cost


def test_cost_psi_empty_placement():
    sc = hand_scenario()
    mapping = SliceMapping(a=np.zeros((1, 1), dtype=np.int8))
    placement = place(sc, mapping)
    assert placement.admitted == [] and placement.unadmitted == []
    assert cost_psi(sc, mapping, placement) == (0.0, 0.0)


def memory_ten_scenario(phi_idle=5.0):
    # weighted demand collapses to 10 under memory-only weights
    return hand_scenario(vnf_demand=(10.0, 0.0, 0.0), phi_idle=phi_idle,
                         phi_per_unit=1.0)


def test_cost_phi_hand_affine():
    sc = memory_ten_scenario()
    mapping = one_on_one()
    placement = place(sc, mapping, weights=PlacementWeights(1.0, 0.0, 0.0))
    phi, psi = cost_psi(sc, mapping, placement)
    assert phi == pytest.approx(15.0)     # idle 5 + 1 * 10
    assert psi == pytest.approx(15.0)     # nu = 0


def test_cost_psi_admission_credit():
    sc = memory_ten_scenario()
    mapping = one_on_one()
    placement = place(sc, mapping, weights=PlacementWeights(1.0, 0.0, 0.0))
    phi, psi = cost_psi(sc, mapping, placement, nu=100.0)
    assert phi == pytest.approx(15.0)
    assert psi == pytest.approx(-85.0)    # one hosting pair, one service


# ------------------------------------------------------------- heuristic


def many_mean_slices(n):
    """n identical mean slices, one mean DC, one service per slice."""
    return hand_scenario(ue_counts=(1,) * n,
                         slice_rus=tuple((s,) for s in range(n)))


def test_place_ten_mean_slices_fill_the_dc():
    sc = many_mean_slices(10)
    mapping = identity_mapping(sc)
    placement = place(sc, mapping)
    assert placement.admitted == list(range(10))
    assert placement.unadmitted == []
    # 10 x (100 GB, 10 TB, 32 GHz) consumes (1000, 100, 320) exactly
    assert np.all(placement.residuals(sc) == 0.0)


def test_place_eleventh_slice_rejected():
    sc = many_mean_slices(11)
    mapping = identity_mapping(sc)
    placement = place(sc, mapping, single_dc=True)
    assert len(placement.admitted) == 10
    assert len(placement.unadmitted) == 1
    ratio = admitted_ratio(sc, mapping, placement, single_dc_mode=True)
    assert ratio == pytest.approx(10.0 / 11.0)


def test_place_split_slice_counts_only_in_multi_dc_mode():
    # demand exceeds each DC alone but fits their pool
    sc = hand_scenario(vnf_demand=(30.0, 3.0, 9.6),
                       dc_specs=((20.0, 2.0, 6.4), (20.0, 2.0, 6.4)))
    mapping = one_on_one()
    placement = place(sc, mapping)
    assert placement.admitted == [0]
    assert placement.dcs_of_slice(0) == [0, 1]
    got = sum(placement.contributions[(0, d)] for d in (0, 1))
    assert np.allclose(got, [30.0, 3.0, 9.6])
    assert admitted_ratio(sc, mapping, placement) == 1.0
    assert admitted_ratio(sc, mapping, placement, single_dc_mode=True) == 0.0


def test_place_single_dc_mode_never_splits():
    sc = hand_scenario(vnf_demand=(30.0, 3.0, 9.6),
                       dc_specs=((20.0, 2.0, 6.4), (20.0, 2.0, 6.4)))
    placement = place(sc, one_on_one(), single_dc=True)
    assert placement.admitted == []
    assert placement.unadmitted == [0]


def consolidation_scenario(small_idle):
    sc = hand_scenario(vnf_demand=(10.0, 1.0, 3.2),
                       dc_specs=((1000.0, 100.0, 320.0), (20.0, 2.0, 6.4)),
                       phi_per_unit=1.0)
    dcs = tuple(replace(dc, phi_idle=idle)
                for dc, idle in zip(sc.dcs, (100.0, small_idle)))
    return replace(sc, dcs=dcs)


def test_place_consolidates_onto_smaller_dc():
    # phase 1 lands on the big DC; the cheap small one holds the slice
    # entirely, so the consolidation pass moves it and power drops
    sc = consolidation_scenario(small_idle=1.0)
    placement = place(sc, one_on_one())
    assert placement.dcs_of_slice(0) == [1]
    omega = weighted_demand(sc.slices[0]).weighted
    assert cost_phi(sc, placement) == pytest.approx(1.0 + omega)


def test_place_rejects_costlier_consolidation():
    sc = consolidation_scenario(small_idle=1e6)
    placement = place(sc, one_on_one())
    assert placement.dcs_of_slice(0) == [0]


def scarce_config():
    return GeneratorConfig(n_services=3, n_slices=3, n_dcs=2, mean_ues=1.0,
                           max_ues=2, n_rus=6, rus_per_slice=2,
                           slice_cv=0.25, dc_memory_gb=200.0,
                           dc_storage_tb=20.0, dc_cpu_ghz=64.0)


def test_place_seed17_admits_within_one_of_oracle():
    sc = generate_scenario(scarce_config(), seed=17)
    mapping = identity_mapping(sc)
    placement = place(sc, mapping, single_dc=True)
    oracle = exhaustive_placement(sc, mapping, nu=1e6, single_dc=True,
                                  require_all=False)
    assert oracle.feasible
    assert len(placement.unadmitted) > 0          # capacity actually binds
    assert len(placement.admitted) <= oracle.admitted_count
    assert len(placement.admitted) >= oracle.admitted_count - 1


def test_place_deterministic():
    sc = generate_scenario(scarce_config(), seed=3)
    mapping = identity_mapping(sc)
    a = place(sc, mapping)
    b = place(sc, mapping)
    assert np.array_equal(a.y, b.y)
    assert a.admitted == b.admitted
    assert set(a.contributions) == set(b.contributions)
    for key, amount in a.contributions.items():
        assert np.array_equal(amount, b.contributions[key])


def test_place_residuals_and_coverage():
    cfg = scarce_config()
    for seed in range(8):
        sc = generate_scenario(cfg, seed=seed)
        mapping = identity_mapping(sc)
        placement = place(sc, mapping)
        assert np.all(placement.residuals(sc) >= -1e-9)
        for s in placement.admitted:
            got = sum(placement.contributions[(s, d)]
                      for d in placement.dcs_of_slice(s))
            assert np.allclose(got, sc.slices[s].total_demand())
        for s in placement.unadmitted:
            assert not placement.y[s].any()


# ---------------------------------------------------------- normalization


def test_normalized_consumption_parity_and_empty():
    sc = memory_ten_scenario()
    mapping = one_on_one()
    placement = place(sc, mapping)
    oracle = exhaustive_placement(sc, mapping, nu=0.0, require_all=True)
    assert oracle.feasible
    ratio = normalized_resource_consumption(sc, placement,
                                            reference_phi=oracle.phi)
    assert ratio == pytest.approx(1.0)

    empty = place(sc, SliceMapping(a=np.zeros((1, 1), dtype=np.int8)))
    assert normalized_resource_consumption(sc, empty) == 0.0


def test_normalized_consumption_near_oracle_in_the_mean():
    cfg = GeneratorConfig(n_services=10, n_slices=10, n_dcs=2, mean_ues=1.0,
                          max_ues=2, n_rus=20, rus_per_slice=2,
                          slice_cv=0.25)
    ratios = []
    for seed in range(1, 21):
        sc = generate_scenario(cfg, seed=seed)
        mapping = identity_mapping(sc)
        placement = place(sc, mapping)
        assert not placement.unadmitted
        oracle = exhaustive_placement(sc, mapping, nu=0.0, require_all=True)
        assert oracle.feasible
        ratios.append(normalized_resource_consumption(
            sc, placement, reference_phi=oracle.phi))
        assert ratios[-1] >= 1.0 - 1e-9       # the oracle is optimal
    assert np.mean(ratios) <= 1.20
