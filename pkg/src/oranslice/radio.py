"""Physical-layer model: channels, beamforming, rates, and RU power.

The downlink is a cell-free arrangement: each slice owns a set of radio
units that jointly beamform to the UEs of every service mapped onto the
slice.  Beamforming is zero-forcing per (slice, service) pair, so within
a pair each UE sees unit gain from its own stream and (numerically) zero
gain from its peers.

Interference is evaluated as an upper bound: every interfering stream is
charged at the full per-RU power cap, which makes the bound independent
of the power allocation and lets the admission and power stages reason
about worst-case rates.  The exact power-dependent interference is also
available for reporting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario import Scenario

# Beyond this condition number the normal equations of the zero-forcing
# design are considered numerically untrustworthy and the (slice,
# service) pair is treated as unmappable.
CONDITION_CAP = 1e8


class SingularChannelError(ValueError):
    """Channel matrix cannot support zero-forcing for the requested pair."""


@dataclass
class ChannelSet:
    """Complex gains between every radio unit and every UE.

    `gains` has shape (n_rus, n_ues) with UEs in global scenario order.
    Per-(slice, service) matrices are views selected by the slice's RU
    list and the service's UE indices, so a RU shared by two slices sees
    the same physical channel in both.
    """

    gains: np.ndarray
    _sc: Scenario

    def pair_matrix(self, slice_id: int, service_id: int) -> np.ndarray:
        sl = self._sc.slices[slice_id]
        cols = self._sc.service_ue_indices(service_id)
        return self.gains[np.ix_(list(sl.ru_ids), cols)]

    def ue_column(self, slice_id: int, ue_global: int) -> np.ndarray:
        sl = self._sc.slices[slice_id]
        return self.gains[list(sl.ru_ids), ue_global]


def build_channels(sc: Scenario) -> ChannelSet:
    """Sample small-scale fading and combine with distance-based gain.

    Deterministic in the scenario: the fading seed is stored in the
    scenario's channel model.
    """
    rng = np.random.default_rng(sc.channel.seed)
    ru_pos = sc.ru_positions()
    ue_pos = sc.ue_positions()
    d = np.linalg.norm(ru_pos[:, None, :] - ue_pos[None, :, :], axis=2)
    large = sc.channel.gain(d)
    small = (rng.standard_normal(d.shape)
             + 1j * rng.standard_normal(d.shape)) / np.sqrt(2.0)
    return ChannelSet(gains=np.sqrt(large) * small, _sc=sc)


def zf_beamformer(channel_matrix: np.ndarray,
                  pair: tuple[int, int] | None = None) -> np.ndarray:
    """Zero-forcing precoder W = H (H^H H)^(-1) for an R x U channel.

    Satisfies H^H W = I when R >= U and the normal matrix is well
    conditioned.  Raises SingularChannelError otherwise; `pair` only
    decorates the error message with the (slice, service) involved.
    """
    h = np.asarray(channel_matrix, dtype=complex)
    if h.ndim != 2:
        raise SingularChannelError("channel matrix must be 2-D")
    n_rus, n_ues = h.shape
    label = "" if pair is None else f" for slice {pair[0]}, service {pair[1]}"
    if n_rus < n_ues:
        raise SingularChannelError(
            f"{n_rus} radio units cannot zero-force {n_ues} UEs{label}")
    normal = h.conj().T @ h
    if n_ues > 0:
        cond = np.linalg.cond(normal)
        if not np.isfinite(cond) or cond > CONDITION_CAP:
            raise SingularChannelError(
                f"channel normal matrix condition {cond:.3g} exceeds "
                f"{CONDITION_CAP:.0e}{label}")
    return h @ np.linalg.inv(normal)


@dataclass
class BeamformerSet:
    """Zero-forcing precoders for every mappable (slice, service) pair.

    `w[(slice_id, service_id)]` is the R_s x U_v precoder;
    `unmappable[(slice_id, service_id)]` records why a pair has none.
    """

    w: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    unmappable: dict[tuple[int, int], str] = field(default_factory=dict)

    def has(self, slice_id: int, service_id: int) -> bool:
        return (slice_id, service_id) in self.w


def build_beamformers(sc: Scenario, ch: ChannelSet) -> BeamformerSet:
    out = BeamformerSet()
    for sl in sc.slices:
        for sv in sc.services:
            try:
                out.w[(sl.id, sv.id)] = zf_beamformer(
                    ch.pair_matrix(sl.id, sv.id), pair=(sl.id, sv.id))
            except SingularChannelError as exc:
                out.unmappable[(sl.id, sv.id)] = str(exc)
    return out


@dataclass
class SliceMapping:
    """Service-to-slice assignment matrix a[v, s] in {0, 1}."""

    a: np.ndarray                 # shape (n_services, n_slices), int8

    def __post_init__(self):
        self.a = np.ascontiguousarray(self.a, dtype=np.int8)

    @classmethod
    def empty(cls, sc: Scenario) -> "SliceMapping":
        return cls(a=np.zeros((sc.n_services, sc.n_slices), dtype=np.int8))

    def copy(self) -> "SliceMapping":
        return SliceMapping(a=self.a.copy())

    def services_on_slice(self, slice_id: int) -> list[int]:
        return [v for v in range(self.a.shape[0]) if self.a[v, slice_id]]

    def slices_of_service(self, service_id: int) -> list[int]:
        return [s for s in range(self.a.shape[1]) if self.a[service_id, s]]

    def covered(self) -> np.ndarray:
        return self.a.sum(axis=1) >= 1


@dataclass
class PowerAllocation:
    """Per-UE transmit powers p[u] >= 0 in global UE order, W."""

    p: np.ndarray

    def __post_init__(self):
        self.p = np.ascontiguousarray(self.p, dtype=float)

    @classmethod
    def uniform(cls, sc: Scenario, level: float) -> "PowerAllocation":
        return cls(p=np.full(sc.n_ues, float(level)))


# --------------------------------------------------------------------------
# Interference
# --------------------------------------------------------------------------


def _shared_prb_counts(sc: Scenario, slice_id: int) -> np.ndarray:
    """counts[u, u'] = number of PRBs of the slice both UEs may use."""
    z = sc.prb_assignment.zeta[:, :, slice_id].astype(np.int64)
    return z @ z.T


def interference_upper_bound(sc: Scenario, mapping: SliceMapping,
                             ch: ChannelSet, bf: BeamformerSet) -> np.ndarray:
    """Worst-case co-channel interference per UE, W.

    Three contributions per victim UE i of service v:

    * leakage from other UEs of the same service through any slice
      mapped to v, counted once per PRB both UEs share in that slice
      (numerically ~0 under exact zero-forcing, kept for fidelity);
    * leakage from UEs of other services y through any slice mapped to
      y, again gated by shared PRBs of that slice;
    * quantization noise of every RU of every slice mapped to v, scaled
      by the victim's channel gain to that RU.

    Every interfering transmit power is replaced by the per-RU cap, so
    the result does not depend on the power allocation.
    """
    p_max = sc.params.p_max
    out = np.zeros(sc.n_ues)
    shared = {sl.id: _shared_prb_counts(sc, sl.id) for sl in sc.slices}

    for sv in sc.services:
        v_idx = sc.service_ue_indices(sv.id)
        for pos_i, u_i in enumerate(v_idx):
            total = 0.0
            for sl in sc.slices:
                s = sl.id
                h_i = ch.ue_column(s, u_i)
                # same-service leakage, gated by the victim service's mapping
                if mapping.a[sv.id, s] and bf.has(s, sv.id):
                    w_own = bf.w[(s, sv.id)]
                    cross = np.abs(h_i.conj() @ w_own) ** 2
                    for pos_l, u_l in enumerate(v_idx):
                        if pos_l == pos_i:
                            continue
                        n_shared = shared[s][u_i, u_l]
                        if n_shared:
                            total += p_max * cross[pos_l] * n_shared
                # other-service leakage, gated by the interferer's mapping
                for sy in sc.services:
                    if sy.id == sv.id or not mapping.a[sy.id, s]:
                        continue
                    if not bf.has(s, sy.id):
                        continue
                    w_other = bf.w[(s, sy.id)]
                    cross = np.abs(h_i.conj() @ w_other) ** 2
                    for pos_l, u_l in enumerate(sc.service_ue_indices(sy.id)):
                        n_shared = shared[s][u_i, u_l]
                        if n_shared:
                            total += p_max * cross[pos_l] * n_shared
                # quantization noise of the serving slice's RUs
                if mapping.a[sv.id, s]:
                    sig = np.array([sc.rus[rid].sigma_q2 for rid in sl.ru_ids])
                    total += float(sig @ (np.abs(h_i) ** 2))
            out[u_i] = total
    return out


def interference_actual(sc: Scenario, mapping: SliceMapping, ch: ChannelSet,
                        bf: BeamformerSet,
                        powers: PowerAllocation) -> np.ndarray:
    """Same accounting as the upper bound but with the actual powers."""
    out = np.zeros(sc.n_ues)
    shared = {sl.id: _shared_prb_counts(sc, sl.id) for sl in sc.slices}
    p = powers.p
    for sv in sc.services:
        v_idx = sc.service_ue_indices(sv.id)
        for pos_i, u_i in enumerate(v_idx):
            total = 0.0
            for sl in sc.slices:
                s = sl.id
                h_i = ch.ue_column(s, u_i)
                if mapping.a[sv.id, s] and bf.has(s, sv.id):
                    cross = np.abs(h_i.conj() @ bf.w[(s, sv.id)]) ** 2
                    for pos_l, u_l in enumerate(v_idx):
                        if pos_l != pos_i and shared[s][u_i, u_l]:
                            total += p[u_l] * cross[pos_l] * shared[s][u_i, u_l]
                for sy in sc.services:
                    if sy.id == sv.id or not mapping.a[sy.id, s]:
                        continue
                    if not bf.has(s, sy.id):
                        continue
                    cross = np.abs(h_i.conj() @ bf.w[(s, sy.id)]) ** 2
                    for pos_l, u_l in enumerate(sc.service_ue_indices(sy.id)):
                        if shared[s][u_i, u_l]:
                            total += p[u_l] * cross[pos_l] * shared[s][u_i, u_l]
                if mapping.a[sv.id, s]:
                    sig = np.array([sc.rus[rid].sigma_q2 for rid in sl.ru_ids])
                    total += float(sig @ (np.abs(h_i) ** 2))
            out[u_i] = total
    return out


# --------------------------------------------------------------------------
# Signal model
# --------------------------------------------------------------------------


def beam_gains(sc: Scenario, mapping: SliceMapping, ch: ChannelSet,
               bf: BeamformerSet) -> np.ndarray:
    """Per-UE sum of |h^H w|^2 over the slices mapped to the UE's service.

    Under exact zero-forcing each mapped slice contributes 1, so the
    value counts mapped slices; computed from the actual products so
    imperfect conditioning shows up honestly.
    """
    out = np.zeros(sc.n_ues)
    for sv in sc.services:
        idx = sc.service_ue_indices(sv.id)
        for s in mapping.slices_of_service(sv.id):
            if not bf.has(s, sv.id):
                continue
            h = ch.pair_matrix(s, sv.id)
            w = bf.w[(s, sv.id)]
            diag = np.abs(np.einsum("ru,ru->u", h.conj(), w)) ** 2
            for pos, u in enumerate(idx):
                out[u] += diag[pos]
    return out


def snr(sc: Scenario, mapping: SliceMapping, ch: ChannelSet,
        bf: BeamformerSet, powers: PowerAllocation, ue_global: int,
        interference: np.ndarray) -> float:
    """SINR of one UE: own power times beam gain over noise + interference."""
    gains = beam_gains(sc, mapping, ch, bf)
    noise = sc.params.bandwidth_hz * sc.params.noise_psd
    return float(powers.p[ue_global] * gains[ue_global]
                 / (noise + interference[ue_global]))


def achievable_rate(rho: float | np.ndarray,
                    bandwidth_hz: float) -> float | np.ndarray:
    """Shannon rate B log2(1 + rho) in bit/s; rho must be >= 0."""
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(rho_arr < 0):
        raise ValueError("SINR must be nonnegative")
    out = bandwidth_hz * np.log2(1.0 + rho_arr)
    return float(out) if np.isscalar(rho) else out


def ue_rates(sc: Scenario, mapping: SliceMapping, ch: ChannelSet,
             bf: BeamformerSet, powers: PowerAllocation,
             interference: np.ndarray) -> np.ndarray:
    """Vector of per-UE rates under the given interference budget."""
    gains = beam_gains(sc, mapping, ch, bf)
    noise = sc.params.bandwidth_hz * sc.params.noise_psd
    rho = powers.p * gains / (noise + interference)
    return achievable_rate(rho, sc.params.bandwidth_hz)


# --------------------------------------------------------------------------
# RU power and fronthaul
# --------------------------------------------------------------------------


def slot_weight_matrix(sc: Scenario, mapping: SliceMapping,
                       bf: BeamformerSet) -> np.ndarray:
    """weights[slot, u] = |w|^2 of UE u at that (slice, RU) slot.

    Only (slice, service) pairs that are actually mapped contribute, so
    `weights @ p + sigma_q2` yields every slot's transmit power at once.
    """
    slots = sc.ru_slots()
    out = np.zeros((len(slots), sc.n_ues))
    slot_of = {(s, j): k for k, (s, j, _r) in enumerate(slots)}
    for sl in sc.slices:
        for sv in sc.services:
            if not mapping.a[sv.id, sl.id] or not bf.has(sl.id, sv.id):
                continue
            w2 = np.abs(bf.w[(sl.id, sv.id)]) ** 2
            cols = sc.service_ue_indices(sv.id)
            for j in range(sl.n_rus):
                out[slot_of[(sl.id, j)], cols] += w2[j, :]
    return out


def slot_sigma(sc: Scenario) -> np.ndarray:
    """Quantization noise variance per (slice, RU) slot."""
    return np.array([sc.rus[rid].sigma_q2 for _s, _j, rid in sc.ru_slots()])


def ru_power(sc: Scenario, mapping: SliceMapping, bf: BeamformerSet,
             powers: PowerAllocation, slice_id: int,
             local_ru_index: int) -> float:
    """Transmit power of one slice's RU: beam-weighted UE powers plus
    quantization noise."""
    slots = sc.ru_slots()
    weights = slot_weight_matrix(sc, mapping, bf)
    for k, (s, j, rid) in enumerate(slots):
        if s == slice_id and j == local_ru_index:
            return float(weights[k] @ powers.p + sc.rus[rid].sigma_q2)
    raise KeyError(f"slice {slice_id} has no RU slot {local_ru_index}")


def ru_powers_all(sc: Scenario, mapping: SliceMapping, bf: BeamformerSet,
                  powers: PowerAllocation) -> np.ndarray:
    """Vector of every (slice, RU) slot's transmit power, W."""
    return slot_weight_matrix(sc, mapping, bf) @ powers.p + slot_sigma(sc)


def fronthaul_rate(sc: Scenario, mapping: SliceMapping, bf: BeamformerSet,
                   powers: PowerAllocation, slice_id: int,
                   local_ru_index: int) -> float:
    """Fronthaul load of one RU slot, bit/s/Hz.

    log2 of one plus the ratio of beamformed signal power to the RU's
    quantization noise; equals log2(p_bar / sigma_q2) since the slot
    power is signal + quantization noise.
    """
    sl = sc.slices[slice_id]
    sigma2 = sc.rus[sl.ru_ids[local_ru_index]].sigma_q2
    p_bar = ru_power(sc, mapping, bf, powers, slice_id, local_ru_index)
    signal = p_bar - sigma2
    return float(np.log2(1.0 + signal / sigma2))


def fronthaul_rates_all(sc: Scenario, mapping: SliceMapping,
                        bf: BeamformerSet,
                        powers: PowerAllocation) -> np.ndarray:
    p_bar = ru_powers_all(sc, mapping, bf, powers)
    sigma2 = slot_sigma(sc)
    return np.log2(1.0 + (p_bar - sigma2) / sigma2)


# --------------------------------------------------------------------------
# Energy efficiency
# --------------------------------------------------------------------------


def energy_efficiency(sc: Scenario, mapping: SliceMapping, ch: ChannelSet,
                      bf: BeamformerSet, powers: PowerAllocation,
                      interference: np.ndarray | None = None,
                      ) -> tuple[float, float, float]:
    """(eta, total_rate, total_power) for the whole system.

    Rates use the interference upper bound unless an interference vector
    is supplied; total power sums every (slice, RU) slot.
    """
    if interference is None:
        interference = interference_upper_bound(sc, mapping, ch, bf)
    rates = ue_rates(sc, mapping, ch, bf, powers, interference)
    r_tot = float(rates.sum())
    p_tot = float(ru_powers_all(sc, mapping, bf, powers).sum())
    return (r_tot / p_tot if p_tot > 0 else 0.0, r_tot, p_tot)
