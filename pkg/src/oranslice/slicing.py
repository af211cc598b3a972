"""Greedy assignment of network slices to services.

Services are ranked by how demanding they are (UE count, then summed
arrival rate); slices are ranked by a weighted count of their resources
(PRBs, radio units, VNFs).  The sweep walks slices in rank order and
gives each slice to the first service for which the tentative assignment
keeps the whole system feasible when every UE transmits at the per-RU
power cap under the worst-case interference bound.  A second pass then
tries to cover services that the first pass left without any slice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario import Scenario
from .radio import (BeamformerSet, ChannelSet, PowerAllocation, SliceMapping,
                    fronthaul_rates_all, interference_upper_bound,
                    ru_powers_all, ue_rates)
from .queueing import UnstableQueueError, slice_delay

# Relative slack applied to every feasibility comparison so boundary
# cases (a rate exactly at the minimum, a RU exactly at its cap) are not
# rejected over float rounding.
CHECK_RTOL = 1e-9


@dataclass(frozen=True)
class RankingWeights:
    """Weights of the slice resource score: PRBs, RUs, VNFs."""

    w_prb: float = 1.0
    w_ru: float = 1.0
    w_vnf: float = 1.0


def rank_services(sc: Scenario) -> list[int]:
    """Service ids, most demanding first.

    Sort key is (UE count, summed arrival rate) descending with lower id
    breaking ties.
    """
    def key(sv):
        return (-sv.n_ues, -sum(ue.arrival_rate for ue in sv.ues), sv.id)
    return [sv.id for sv in sorted(sc.services, key=key)]


def rank_slices(sc: Scenario,
                weights: RankingWeights = RankingWeights()) -> list[int]:
    """Slice ids, highest resource score first; lower id breaks ties."""
    def key(sl):
        score = (weights.w_prb * len(sl.prb_ids)
                 + weights.w_ru * sl.n_rus
                 + weights.w_vnf * (sl.m_du + sl.m_cu))
        return (-score, sl.id)
    return [sl.id for sl in sorted(sc.slices, key=key)]


@dataclass
class FeasibilityReport:
    """Outcome of checking one mapping at full power."""

    ok: bool
    violations: list[str] = field(default_factory=list)


def check_feasibility(sc: Scenario, ch: ChannelSet, bf: BeamformerSet,
                      mapping: SliceMapping,
                      powers: PowerAllocation | None = None,
                      ) -> FeasibilityReport:
    """Evaluate the mapped system against all operating constraints.

    With no explicit power allocation every UE is charged the per-RU
    cap, matching how the mapping sweep judges candidates.  Checks, in
    order: per-slot RU power cap, power nonnegativity, per-UE minimum
    rate (only UEs whose service is mapped somewhere), per-slot
    fronthaul cap, and per-active-slice delay budget.  Rates use the
    interference upper bound, so a pass here is conservative.
    """
    if powers is None:
        powers = PowerAllocation.uniform(sc, sc.params.p_max)
    violations: list[str] = []
    params = sc.params

    if np.any(powers.p < 0):
        bad = np.nonzero(powers.p < 0)[0]
        violations.append(f"negative transmit power at UE index {bad.tolist()}")

    p_bar = ru_powers_all(sc, mapping, bf, powers)
    cap = params.p_max * (1.0 + CHECK_RTOL)
    for k, (s, j, rid) in enumerate(sc.ru_slots()):
        if p_bar[k] > cap:
            violations.append(
                f"RU power cap: slice {s} RU {rid} at {p_bar[k]:.6g} W "
                f"> {params.p_max:.6g} W")

    ibar = interference_upper_bound(sc, mapping, ch, bf)
    rates = ue_rates(sc, mapping, ch, bf, powers, ibar)
    covered = mapping.covered()
    r_floor = params.r_min * (1.0 - CHECK_RTOL)
    for sv in sc.services:
        if not covered[sv.id]:
            continue
        for ue, u in zip(sv.ues, sc.service_ue_indices(sv.id)):
            if rates[u] < r_floor:
                violations.append(
                    f"minimum rate: service {sv.id} UE {ue.id} at "
                    f"{rates[u]:.6g} bit/s < {params.r_min:.6g} bit/s")

    fh = fronthaul_rates_all(sc, mapping, bf, powers)
    fh_cap = params.c_max * (1.0 + CHECK_RTOL)
    for k, (s, j, rid) in enumerate(sc.ru_slots()):
        if fh[k] > fh_cap:
            violations.append(
                f"fronthaul cap: slice {s} RU {rid} at {fh[k]:.6g} "
                f"bit/s/Hz > {params.c_max:.6g} bit/s/Hz")

    for sl in sc.slices:
        if not mapping.services_on_slice(sl.id):
            continue
        try:
            delay = slice_delay(sc, mapping, rates, sl.id)
        except UnstableQueueError as exc:
            violations.append(f"delay: {exc}")
            continue
        if delay.total > params.d_max * (1.0 + CHECK_RTOL):
            violations.append(
                f"delay budget: slice {sl.id} at {delay.total:.6g} s > "
                f"{params.d_max:.6g} s")

    return FeasibilityReport(ok=not violations, violations=violations)


@dataclass
class MappingResult:
    mapping: SliceMapping
    uncovered_services: list[int]
    rejections: list[tuple[int, int, str]]   # (slice, service, first reason)

    @property
    def all_covered(self) -> bool:
        return not self.uncovered_services


def map_slices_to_services(sc: Scenario, ch: ChannelSet, bf: BeamformerSet,
                           weights: RankingWeights = RankingWeights(),
                           ) -> MappingResult:
    """Two-pass greedy mapping sweep.

    Pass 1: walk slices in rank order; each slice tentatively serves the
    highest-ranked service that keeps the system feasible at full power
    and stops at the first success.  Pass 2: for each service still
    uncovered, walk slices in rank order again and accept any additional
    feasible assignment.  Services that remain uncovered are reported,
    not raised.
    """
    service_order = rank_services(sc)
    slice_order = rank_slices(sc, weights)
    mapping = SliceMapping.empty(sc)
    rejections: list[tuple[int, int, str]] = []

    def try_pair(v: int, s: int) -> bool:
        if (s, v) in bf.unmappable:
            rejections.append((s, v, bf.unmappable[(s, v)]))
            return False
        mapping.a[v, s] = 1
        report = check_feasibility(sc, ch, bf, mapping)
        if report.ok:
            return True
        mapping.a[v, s] = 0
        rejections.append((s, v, report.violations[0]))
        return False

    for s in slice_order:
        for v in service_order:
            if try_pair(v, s):
                break

    for v in service_order:
        if mapping.covered()[v]:
            continue
        for s in slice_order:
            if mapping.a[v, s]:
                continue
            if try_pair(v, s):
                break

    uncovered = [v for v in service_order if not mapping.covered()[v]]
    return MappingResult(mapping=mapping, uncovered_services=sorted(uncovered),
                         rejections=rejections)
