"""Queueing model: per-slice M/M/1 VNF layers plus a transmission stage.

Every slice runs two VNF layers (distributed-unit and central-unit
processing).  Packets of all services mapped onto the slice arrive as a
pooled Poisson stream and are load-balanced across the layer's VNFs, so
each layer behaves as an M/M/1 queue with arrival rate alpha/M and mean
sojourn 1/(mu - alpha/M).  A third stage models radio transmission as an
M/M/1 queue whose service capacity is the slice's summed downlink rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Scenario
from .radio import SliceMapping


class UnstableQueueError(ValueError):
    """A queueing stage is at or beyond its stability limit."""


@dataclass(frozen=True)
class SliceDelay:
    """Per-slice delay breakdown, seconds."""

    slice_id: int
    alpha: float          # pooled packet arrival rate, packet/s
    du_delay: float       # mean sojourn in the DU VNF layer
    cu_delay: float       # mean sojourn in the CU VNF layer
    tx_delay: float       # mean sojourn in the transmission stage
    r_tot: float          # summed rate of the slice's UEs, bit/s

    @property
    def total(self) -> float:
        return self.du_delay + self.cu_delay + self.tx_delay


def slice_arrival_rate(sc: Scenario, mapping: SliceMapping,
                       slice_id: int) -> float:
    """Pooled arrival rate of every UE of every service mapped to the
    slice, packet/s."""
    lam = sc.arrival_rates()
    total = 0.0
    for v in mapping.services_on_slice(slice_id):
        for u in sc.service_ue_indices(v):
            total += lam[u]
    return total


def layer_delays(sc: Scenario, alpha: float, slice_id: int,
                 ) -> tuple[float, float]:
    """Mean sojourn times (DU, CU) of the two VNF layers, seconds.

    Each layer spreads the pooled arrivals evenly over its VNFs; a layer
    is only stable while mu > alpha / M.
    """
    sl = sc.slices[slice_id]
    out = []
    for mu, m_vnfs, label in ((sc.params.mu1, sl.m_du, "DU"),
                              (sc.params.mu2, sl.m_cu, "CU")):
        per_vnf = alpha / m_vnfs
        if per_vnf >= mu:
            raise UnstableQueueError(
                f"slice {slice_id} {label} layer unstable: per-VNF load "
                f"{per_vnf:.6g} >= service rate {mu:.6g} packet/s")
        out.append(1.0 / (mu - per_vnf))
    return (out[0], out[1])


def transmission_delay(r_tot_s: float, alpha: float) -> float:
    """Mean sojourn of the transmission stage, 1 / (R_tot - alpha).

    Both arguments must already be in a common unit (bit/s against
    packets converted to bits); the stage is stable only if R_tot_s
    exceeds alpha.
    """
    if r_tot_s <= alpha:
        raise UnstableQueueError(
            f"transmission stage unstable: slice rate {r_tot_s:.6g} <= "
            f"offered load {alpha:.6g}")
    return 1.0 / (r_tot_s - alpha)


def slice_rate_total(sc: Scenario, mapping: SliceMapping,
                     rates: np.ndarray, slice_id: int) -> float:
    """Summed downlink rate of every UE served by the slice, bit/s."""
    total = 0.0
    for v in mapping.services_on_slice(slice_id):
        for u in sc.service_ue_indices(v):
            total += float(rates[u])
    return total


def slice_delay(sc: Scenario, mapping: SliceMapping, rates: np.ndarray,
                slice_id: int) -> SliceDelay:
    """Full three-stage delay of one slice.

    `rates` is the per-UE rate vector in global order.  Packet arrivals
    are converted to bits with the configured packet size before the
    transmission stage.
    """
    alpha = slice_arrival_rate(sc, mapping, slice_id)
    du, cu = layer_delays(sc, alpha, slice_id)
    r_tot = slice_rate_total(sc, mapping, rates, slice_id)
    tx = transmission_delay(r_tot, alpha * sc.params.packet_size_bits)
    return SliceDelay(slice_id=slice_id, alpha=alpha, du_delay=du,
                      cu_delay=cu, tx_delay=tx, r_tot=r_tot)
