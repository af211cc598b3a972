"""Scenario model for a sliced ORAN downlink.

A scenario bundles everything the solvers need: system-wide radio and
queueing parameters, services with their user equipments (UEs), network
slices (radio units, PRBs, VNF chains), the PRB eligibility tensor, and
the data centers that host VNFs.  Scenarios are plain data: generation,
validation and (de)serialization live here, all physics lives elsewhere.

Units are SI throughout the radio/queueing side (W, Hz, bit/s, s,
packet/s, m).  Compute resources follow the slicing literature's habit:
memory in GB, storage in TB, CPU in GHz.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

SCHEMA_VERSION = 1

# Fixed unit declarations written into every scenario file so readers do
# not have to guess.  Values are strings, purely documentary.
UNITS = {
    "power": "W",
    "bandwidth": "Hz",
    "noise_psd": "W/Hz",
    "rate": "bit/s",
    "fronthaul": "bit/s/Hz",
    "delay": "s",
    "arrival": "packet/s",
    "service_rate": "packet/s",
    "position": "m",
    "memory": "GB",
    "storage": "TB",
    "cpu": "GHz",
}


class ScenarioError(ValueError):
    """Raised when a scenario or generator config is structurally invalid."""


# --------------------------------------------------------------------------
# Core value types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemParams:
    """System-wide constants shared by every slice and service."""

    bandwidth_hz: float = 120e3          # per-UE bandwidth B
    noise_psd: float = 10 ** (-174 / 10) * 1e-3   # N0, -174 dBm/Hz in W/Hz
    p_max: float = 10.0                  # per-RU transmit power cap, 40 dBm
    r_min: float = 10.0 * 120e3          # per-UE minimum rate, 10 bit/s/Hz * B
    c_max: float = 200.0                 # fronthaul capacity cap, bit/s/Hz
    d_max: float = 300e-6                # per-slice delay budget, 300 usec
    mu1: float = 1e4                     # DU-layer VNF service rate, packet/s
    mu2: float = 1e4                     # CU-layer VNF service rate, packet/s
    nu: float = 0.0                      # admission weight in the placement objective
    sigma_q_default: float = 1e-4 * 10.0  # default quantization noise variance, W
    packet_size_bits: float = 1.0        # payload per queueing packet, bits

    def __post_init__(self):
        for name in ("bandwidth_hz", "noise_psd", "p_max", "r_min", "c_max",
                     "d_max", "mu1", "mu2", "sigma_q_default",
                     "packet_size_bits"):
            if getattr(self, name) <= 0:
                raise ScenarioError(f"SystemParams.{name} must be > 0")
        if self.nu < 0:
            raise ScenarioError("SystemParams.nu must be >= 0")


@dataclass(frozen=True)
class UserEquipment:
    id: int                       # unique within its service
    arrival_rate: float           # packet arrival rate, packet/s
    position: tuple[float, float]  # (x, y) in meters


@dataclass(frozen=True)
class Service:
    id: int
    ues: tuple[UserEquipment, ...]

    @property
    def n_ues(self) -> int:
        return len(self.ues)


@dataclass(frozen=True)
class RadioUnit:
    id: int
    position: tuple[float, float]
    sigma_q2: float               # quantization noise variance at this RU, W


@dataclass(frozen=True)
class VnfRequirement:
    memory_gb: float
    storage_tb: float
    cpu_ghz: float

    def __post_init__(self):
        if min(self.memory_gb, self.storage_tb, self.cpu_ghz) < 0:
            raise ScenarioError("VNF resource demands must be >= 0")


@dataclass(frozen=True)
class Slice:
    id: int
    ru_ids: tuple[int, ...]       # radio units owned by this slice
    prb_ids: tuple[int, ...]      # PRBs this slice may schedule
    m_du: int                     # number of DU-layer VNFs
    m_cu: int                     # number of CU-layer VNFs
    vnf_demands: tuple[VnfRequirement, ...]   # one entry per VNF, DU first

    @property
    def n_rus(self) -> int:
        return len(self.ru_ids)

    def total_demand(self) -> tuple[float, float, float]:
        """Summed (memory_gb, storage_tb, cpu_ghz) over the VNF chain."""
        mem = sum(v.memory_gb for v in self.vnf_demands)
        sto = sum(v.storage_tb for v in self.vnf_demands)
        cpu = sum(v.cpu_ghz for v in self.vnf_demands)
        return (mem, sto, cpu)


@dataclass(frozen=True)
class DataCenter:
    id: int
    memory_gb: float
    storage_tb: float
    cpu_ghz: float
    phi_idle: float               # power drawn once the DC hosts anything, W
    phi_per_unit: float           # power per unit of weighted demand, W


@dataclass(frozen=True)
class ChannelModel:
    """Distance-based large-scale fading plus seeded Rayleigh small-scale."""

    pl0: float = 1.0              # gain at the reference distance
    d0_m: float = 250.0           # reference distance
    d_min_m: float = 150.0        # near-field clamp: distances below are clipped
    exponent: float = 3.5         # path loss exponent
    seed: int = 0                 # small-scale fading seed

    def gain(self, distance_m: np.ndarray) -> np.ndarray:
        d = np.maximum(np.asarray(distance_m, dtype=float), self.d_min_m)
        return self.pl0 * (d / self.d0_m) ** (-self.exponent)


@dataclass
class PrbAssignment:
    """Eligibility tensor: zeta[u, k, s] = 1 iff UE u may use PRB k of slice s.

    UEs are indexed in global order (services sorted by id, UEs by id
    within each service).  The array is stored read-only.
    """

    n_prbs: int
    zeta: np.ndarray              # uint8, shape (n_ues, n_prbs, n_slices)

    def __post_init__(self):
        self.zeta = np.ascontiguousarray(self.zeta, dtype=np.uint8)
        self.zeta.flags.writeable = False


@dataclass
class Scenario:
    params: SystemParams
    services: tuple[Service, ...]
    slices: tuple[Slice, ...]
    rus: tuple[RadioUnit, ...]
    dcs: tuple[DataCenter, ...]
    prb_assignment: PrbAssignment
    channel: ChannelModel = field(default_factory=ChannelModel)

    # ---- derived indexing helpers -------------------------------------

    @property
    def n_services(self) -> int:
        return len(self.services)

    @property
    def n_slices(self) -> int:
        return len(self.slices)

    @property
    def n_ues(self) -> int:
        return sum(s.n_ues for s in self.services)

    def ue_keys(self) -> list[tuple[int, int]]:
        """Global UE order as (service_id, ue_id) pairs."""
        return [(sv.id, ue.id) for sv in self.services for ue in sv.ues]

    def ue_index(self, service_id: int, ue_id: int) -> int:
        return self._ue_lookup()[(service_id, ue_id)]

    def _ue_lookup(self) -> dict[tuple[int, int], int]:
        if not hasattr(self, "_ue_lookup_cache"):
            self._ue_lookup_cache = {
                key: i for i, key in enumerate(self.ue_keys())
            }
        return self._ue_lookup_cache

    def service_ue_indices(self, service_id: int) -> list[int]:
        lookup = self._ue_lookup()
        sv = self.services[service_id]
        return [lookup[(sv.id, ue.id)] for ue in sv.ues]

    def ru_slots(self) -> list[tuple[int, int, int]]:
        """All (slice_id, local_ru_index, ru_id) triples, slice-major.

        A radio unit shared by two slices appears once per slice; per-RU
        powers and fronthaul loads are accounted per slot.
        """
        return [(sl.id, j, rid)
                for sl in self.slices for j, rid in enumerate(sl.ru_ids)]

    def ue_positions(self) -> np.ndarray:
        return np.array([ue.position for sv in self.services for ue in sv.ues],
                        dtype=float)

    def ru_positions(self) -> np.ndarray:
        return np.array([ru.position for ru in self.rus], dtype=float)

    def arrival_rates(self) -> np.ndarray:
        return np.array([ue.arrival_rate
                         for sv in self.services for ue in sv.ues], dtype=float)


# --------------------------------------------------------------------------
# Generator
# --------------------------------------------------------------------------


@dataclass
class GeneratorConfig:
    """Knobs for random scenario generation.

    Radio defaults follow the simulation table of the modeled system
    (120 kHz bandwidth, -174 dBm/Hz noise, 40 dBm RU power, 10 bit/s/Hz
    minimum spectral efficiency, 200 bit/s/Hz fronthaul cap, 300 usec
    delay budget); compute defaults follow its resource table (DC mean
    320 GHz / 1000 GB / 100 TB, slice mean 32 GHz / 100 GB / 10 TB).
    """

    n_services: int = 3
    mean_ues: float = 2.0          # mean UEs per service (clamped Poisson)
    max_ues: int = 8               # hard per-service UE cap
    n_slices: int = 4
    n_rus: int = 24                # global RU pool size
    rus_per_slice: int = 12        # RUs drawn (without replacement) per slice
    prb_mode: str = "dedicated"    # "dedicated": one private PRB per UE per slice
    prbs_per_slice: Optional[int] = None   # shared mode: pool size (default 4)
    prbs_per_ue: int = 1           # shared mode: eligible PRBs per UE per slice
    m_du: int = 2                  # DU-layer VNFs per slice
    m_cu: int = 2                  # CU-layer VNFs per slice
    arrival_rate_mean: float = 100.0   # packet/s
    arrival_rate_spread: float = 0.5   # uniform +-spread fraction around mean
    region_m: float = 500.0        # square region side
    n_dcs: int = 2
    dc_memory_gb: float = 1000.0
    dc_storage_tb: float = 100.0
    dc_cpu_ghz: float = 320.0
    dc_cv: float = 0.0             # coefficient of variation for DC draws
    slice_memory_gb: float = 100.0
    slice_storage_tb: float = 10.0
    slice_cpu_ghz: float = 32.0
    slice_cv: float = 0.0          # coefficient of variation for slice demands
    phi_idle: float = 200.0        # W
    phi_per_unit: float = 0.05     # W per weighted-demand unit
    bandwidth_hz: float = 120e3
    noise_psd: float = 10 ** (-174 / 10) * 1e-3
    p_max: float = 10.0
    r_min_per_hz: float = 10.0     # minimum spectral efficiency, bit/s/Hz
    c_max: float = 200.0
    d_max: float = 300e-6
    mu1: float = 1e4
    mu2: float = 1e4
    nu: float = 0.0
    sigma_q_frac: float = 1e-5     # sigma_q^2 = frac * p_max at every RU
    packet_size_bits: float = 1.0
    pl0: float = 1.0
    pl_d0_m: float = 250.0
    pl_d_min_m: float = 150.0
    pl_exponent: float = 3.5

    def __post_init__(self):
        if self.n_services < 1:
            raise ScenarioError("n_services must be >= 1")
        if self.n_slices < 1:
            raise ScenarioError("n_slices must be >= 1")
        if self.n_dcs < 1:
            raise ScenarioError("n_dcs must be >= 1")
        if self.mean_ues < 1 or self.max_ues < 1:
            raise ScenarioError("mean_ues and max_ues must be >= 1")
        if self.rus_per_slice < 1 or self.rus_per_slice > self.n_rus:
            raise ScenarioError("need 1 <= rus_per_slice <= n_rus")
        if self.prb_mode not in ("dedicated", "shared"):
            raise ScenarioError("prb_mode must be 'dedicated' or 'shared'")
        if self.m_du < 1 or self.m_cu < 1:
            raise ScenarioError("m_du and m_cu must be >= 1")
        if self.sigma_q_frac <= 0:
            raise ScenarioError("sigma_q_frac must be > 0")
        if min(self.dc_cv, self.slice_cv) < 0:
            raise ScenarioError("coefficient of variation must be >= 0")

    def system_params(self) -> SystemParams:
        return SystemParams(
            bandwidth_hz=self.bandwidth_hz,
            noise_psd=self.noise_psd,
            p_max=self.p_max,
            r_min=self.r_min_per_hz * self.bandwidth_hz,
            c_max=self.c_max,
            d_max=self.d_max,
            mu1=self.mu1,
            mu2=self.mu2,
            nu=self.nu,
            sigma_q_default=self.sigma_q_frac * self.p_max,
            packet_size_bits=self.packet_size_bits,
        )


def _positive_draw(rng: np.random.Generator, mean: float, cv: float,
                   size: int) -> np.ndarray:
    # cv = 0 degenerates to the exact mean; otherwise clip at 10% of mean
    # so resource draws stay strictly positive.
    if cv == 0.0:
        return np.full(size, mean, dtype=float)
    draws = rng.normal(mean, cv * mean, size)
    return np.maximum(draws, 0.1 * mean)


def generate_scenario(config: GeneratorConfig, seed: int) -> Scenario:
    """Draw a random scenario; a pure function of (config, seed)."""
    rng = np.random.default_rng(seed)
    params = config.system_params()

    # Services and UEs.  UE counts are Poisson with the configured mean,
    # clamped into [1, max_ues].
    services = []
    for v in range(config.n_services):
        n_ues = int(np.clip(rng.poisson(config.mean_ues), 1, config.max_ues))
        ues = []
        for i in range(n_ues):
            lo = 1.0 - config.arrival_rate_spread
            hi = 1.0 + config.arrival_rate_spread
            rate = config.arrival_rate_mean * rng.uniform(lo, hi)
            pos = tuple(rng.uniform(0.0, config.region_m, 2))
            ues.append(UserEquipment(id=i, arrival_rate=float(rate),
                                     position=(float(pos[0]), float(pos[1]))))
        services.append(Service(id=v, ues=tuple(ues)))
    services = tuple(services)
    n_ues_total = sum(s.n_ues for s in services)

    # Radio units: shared pool, positions uniform over the region.
    sigma_q2 = config.sigma_q_frac * config.p_max
    rus = tuple(
        RadioUnit(id=r,
                  position=(float(rng.uniform(0, config.region_m)),
                            float(rng.uniform(0, config.region_m))),
                  sigma_q2=sigma_q2)
        for r in range(config.n_rus)
    )

    # PRB pool.  In "dedicated" mode every slice exposes the whole pool
    # and each UE holds exactly one private PRB per slice, so no two UEs
    # ever collide inside a slice.  In "shared" mode each UE draws
    # prbs_per_ue eligible PRBs per slice and collisions are expected.
    if config.prb_mode == "dedicated":
        n_prbs = n_ues_total
    else:
        n_prbs = config.prbs_per_slice or 4

    slice_demand_mem = _positive_draw(rng, config.slice_memory_gb,
                                      config.slice_cv, config.n_slices)
    slice_demand_sto = _positive_draw(rng, config.slice_storage_tb,
                                      config.slice_cv, config.n_slices)
    slice_demand_cpu = _positive_draw(rng, config.slice_cpu_ghz,
                                      config.slice_cv, config.n_slices)

    slices = []
    for s in range(config.n_slices):
        ru_ids = tuple(sorted(rng.choice(config.n_rus, config.rus_per_slice,
                                         replace=False).tolist()))
        n_vnfs = config.m_du + config.m_cu
        # Per-VNF demands split the slice total evenly; only totals matter
        # to placement.
        vnfs = tuple(VnfRequirement(
            memory_gb=float(slice_demand_mem[s] / n_vnfs),
            storage_tb=float(slice_demand_sto[s] / n_vnfs),
            cpu_ghz=float(slice_demand_cpu[s] / n_vnfs),
        ) for _ in range(n_vnfs))
        slices.append(Slice(id=s, ru_ids=ru_ids,
                            prb_ids=tuple(range(n_prbs)),
                            m_du=config.m_du, m_cu=config.m_cu,
                            vnf_demands=vnfs))
    slices = tuple(slices)

    zeta = np.zeros((n_ues_total, n_prbs, config.n_slices), dtype=np.uint8)
    if config.prb_mode == "dedicated":
        for u in range(n_ues_total):
            zeta[u, u, :] = 1
    else:
        for s in range(config.n_slices):
            for u in range(n_ues_total):
                picks = rng.choice(n_prbs, min(config.prbs_per_ue, n_prbs),
                                   replace=False)
                zeta[u, picks, s] = 1
    prb_assignment = PrbAssignment(n_prbs=n_prbs, zeta=zeta)

    dc_mem = _positive_draw(rng, config.dc_memory_gb, config.dc_cv, config.n_dcs)
    dc_sto = _positive_draw(rng, config.dc_storage_tb, config.dc_cv, config.n_dcs)
    dc_cpu = _positive_draw(rng, config.dc_cpu_ghz, config.dc_cv, config.n_dcs)
    dcs = tuple(DataCenter(id=d, memory_gb=float(dc_mem[d]),
                           storage_tb=float(dc_sto[d]),
                           cpu_ghz=float(dc_cpu[d]),
                           phi_idle=config.phi_idle,
                           phi_per_unit=config.phi_per_unit)
                for d in range(config.n_dcs))

    channel = ChannelModel(pl0=config.pl0, d0_m=config.pl_d0_m,
                           d_min_m=config.pl_d_min_m,
                           exponent=config.pl_exponent,
                           seed=seed)

    return Scenario(params=params, services=services, slices=slices,
                    rus=rus, dcs=dcs, prb_assignment=prb_assignment,
                    channel=channel)


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


def validate(sc: Scenario) -> list[str]:
    """Structural checks; returns a list of human-readable violations.

    An empty list means the scenario is well-formed.  Checks cover id
    uniqueness/denseness, cross-references, sign constraints, and the
    PRB eligibility consistency rule (a UE may only be eligible for a
    PRB of a slice if that slice actually owns the PRB).
    """
    problems: list[str] = []

    def check_dense_ids(items, label):
        ids = [it.id for it in items]
        if ids != list(range(len(ids))):
            problems.append(f"{label} ids must be dense 0..{len(ids) - 1}, "
                            f"got {ids}")

    check_dense_ids(sc.services, "service")
    check_dense_ids(sc.slices, "slice")
    check_dense_ids(sc.rus, "radio unit")
    check_dense_ids(sc.dcs, "data center")

    for sv in sc.services:
        if sv.n_ues < 1:
            problems.append(f"service {sv.id} has no UEs")
        if [ue.id for ue in sv.ues] != list(range(sv.n_ues)):
            problems.append(f"service {sv.id} UE ids must be dense")
        for ue in sv.ues:
            if ue.arrival_rate < 0:
                problems.append(
                    f"service {sv.id} UE {ue.id} arrival rate is negative")

    ru_ids = {ru.id for ru in sc.rus}
    for ru in sc.rus:
        if ru.sigma_q2 <= 0:
            problems.append(f"radio unit {ru.id} sigma_q2 must be > 0")

    n_prbs = sc.prb_assignment.n_prbs
    for sl in sc.slices:
        if sl.n_rus < 1:
            problems.append(f"slice {sl.id} owns no radio units")
        if len(set(sl.ru_ids)) != len(sl.ru_ids):
            problems.append(f"slice {sl.id} lists a radio unit twice")
        if not set(sl.ru_ids) <= ru_ids:
            problems.append(f"slice {sl.id} references unknown radio units")
        if len(sl.prb_ids) < 1:
            problems.append(f"slice {sl.id} owns no PRBs")
        if not all(0 <= k < n_prbs for k in sl.prb_ids):
            problems.append(f"slice {sl.id} references unknown PRBs")
        if sl.m_du < 1 or sl.m_cu < 1:
            problems.append(f"slice {sl.id} needs at least one VNF per layer")
        if len(sl.vnf_demands) != sl.m_du + sl.m_cu:
            problems.append(
                f"slice {sl.id} must list exactly m_du+m_cu VNF demands")

    for dc in sc.dcs:
        if min(dc.memory_gb, dc.storage_tb, dc.cpu_ghz) < 0:
            problems.append(f"data center {dc.id} has negative capacity")
        if dc.phi_idle < 0 or dc.phi_per_unit < 0:
            problems.append(f"data center {dc.id} has negative power model")

    zeta = sc.prb_assignment.zeta
    expect_shape = (sc.n_ues, n_prbs, sc.n_slices)
    if zeta.shape != expect_shape:
        problems.append(f"zeta shape {zeta.shape} != expected {expect_shape}")
    else:
        if not np.isin(zeta, (0, 1)).all():
            problems.append("zeta entries must be 0 or 1")
        for sl in sc.slices:
            owned = np.zeros(n_prbs, dtype=bool)
            owned[list(sl.prb_ids)] = True
            stray = zeta[:, ~owned, sl.id]
            if stray.any():
                problems.append(
                    f"slice {sl.id}: zeta marks PRBs the slice does not own")

    return problems


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def scenario_to_dict(sc: Scenario) -> dict:
    zeta_entries = np.argwhere(sc.prb_assignment.zeta == 1)
    return {
        "schema": SCHEMA_VERSION,
        "units": dict(UNITS),
        "params": asdict(sc.params),
        "channel": asdict(sc.channel),
        "services": [
            {"id": sv.id,
             "ues": [{"id": ue.id, "arrival_rate": ue.arrival_rate,
                      "position": list(ue.position)} for ue in sv.ues]}
            for sv in sc.services
        ],
        "slices": [
            {"id": sl.id, "ru_ids": list(sl.ru_ids),
             "prb_ids": list(sl.prb_ids),
             "m_du": sl.m_du, "m_cu": sl.m_cu,
             "vnf_demands": [asdict(v) for v in sl.vnf_demands]}
            for sl in sc.slices
        ],
        "rus": [{"id": ru.id, "position": list(ru.position),
                 "sigma_q2": ru.sigma_q2} for ru in sc.rus],
        "prbs": {"count": sc.prb_assignment.n_prbs},
        "zeta": [[int(u), int(k), int(s)] for u, k, s in zeta_entries],
        "dcs": [asdict(dc) for dc in sc.dcs],
    }


def scenario_from_dict(data: dict) -> Scenario:
    if data.get("schema") != SCHEMA_VERSION:
        raise ScenarioError(
            f"unsupported scenario schema {data.get('schema')!r}")
    params = SystemParams(**data["params"])
    channel = ChannelModel(**data["channel"])
    services = tuple(
        Service(id=sv["id"], ues=tuple(
            UserEquipment(id=ue["id"], arrival_rate=ue["arrival_rate"],
                          position=tuple(ue["position"]))
            for ue in sv["ues"]))
        for sv in data["services"]
    )
    slices = tuple(
        Slice(id=sl["id"], ru_ids=tuple(sl["ru_ids"]),
              prb_ids=tuple(sl["prb_ids"]), m_du=sl["m_du"], m_cu=sl["m_cu"],
              vnf_demands=tuple(VnfRequirement(**v)
                                for v in sl["vnf_demands"]))
        for sl in data["slices"]
    )
    rus = tuple(RadioUnit(id=ru["id"], position=tuple(ru["position"]),
                          sigma_q2=ru["sigma_q2"]) for ru in data["rus"])
    dcs = tuple(DataCenter(**dc) for dc in data["dcs"])
    n_ues = sum(len(sv.ues) for sv in services)
    n_prbs = data["prbs"]["count"]
    zeta = np.zeros((n_ues, n_prbs, len(slices)), dtype=np.uint8)
    for u, k, s in data["zeta"]:
        zeta[u, k, s] = 1
    sc = Scenario(params=params, services=services, slices=slices, rus=rus,
                  dcs=dcs,
                  prb_assignment=PrbAssignment(n_prbs=n_prbs, zeta=zeta),
                  channel=channel)
    problems = validate(sc)
    if problems:
        raise ScenarioError("invalid scenario: " + "; ".join(problems))
    return sc


def save_scenario(sc: Scenario, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(sc), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_scenario(path: str) -> Scenario:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("scenario file must hold a JSON object")
    try:
        return scenario_from_dict(data)
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario file: {exc!r}") from exc
