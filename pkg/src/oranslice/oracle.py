"""Reference implementations used to validate the fast paths.

Everything here recomputes results from first principles: interference,
RU power and efficiency are re-derived with literal nested loops over
the scenario structures (sharing no evaluation code with the radio or
queueing modules), mappings and placements are found by exhaustive
enumeration, and the queueing formula is checked against an actual
discrete-event simulation.  All functions guard their input size, since
enumeration is only meant for desk-scale verification.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario
from .radio import BeamformerSet, ChannelSet, PowerAllocation, SliceMapping
from .placement import PlacementWeights

RTOL = 1e-9


class OracleSizeError(ValueError):
    """Instance too large for exhaustive verification."""


@dataclass
class OracleReport:
    """One heuristic-vs-reference comparison, CSV-friendly."""

    instance: str
    kind: str
    oracle_value: float
    heuristic_value: float
    wall_time_s: float

    @property
    def rel_gap(self) -> float:
        if self.oracle_value == 0.0:
            return 0.0 if self.heuristic_value == 0.0 else math.inf
        return ((self.oracle_value - self.heuristic_value)
                / abs(self.oracle_value))

    CSV_HEADER = "instance,kind,oracle_value,heuristic_value,rel_gap,wall_time_s"

    def csv_row(self) -> str:
        # numpy scalars sneak in from callers; float() keeps the CSV parseable
        return (f"{self.instance},{self.kind},{float(self.oracle_value)!r},"
                f"{float(self.heuristic_value)!r},{float(self.rel_gap)!r},"
                f"{self.wall_time_s:.3f}")


# --------------------------------------------------------------------------
# Naive system evaluation (independent of the radio module)
# --------------------------------------------------------------------------


def _cross_gain(sc: Scenario, ch: ChannelSet, bf: BeamformerSet,
                slice_id: int, victim_global: int, service_id: int,
                ue_pos: int) -> float:
    """|h_victim^H w_(service, ue)|^2 through one slice, by explicit sum."""
    sl = sc.slices[slice_id]
    w = bf.w[(slice_id, service_id)]
    acc = 0.0 + 0.0j
    for j, rid in enumerate(sl.ru_ids):
        acc += np.conj(ch.gains[rid, victim_global]) * w[j, ue_pos]
    return float(abs(acc) ** 2)


def _naive_interference(sc: Scenario, mapping: SliceMapping, ch: ChannelSet,
                        bf: BeamformerSet,
                        powers: PowerAllocation | None = None) -> np.ndarray:
    """Per-UE interference by literal (slice, PRB, interferer) loops.

    With `powers` omitted every interfering stream is charged the per-RU
    cap (the worst-case bound); otherwise actual powers are used.
    """
    zeta = sc.prb_assignment.zeta
    n_prbs = sc.prb_assignment.n_prbs
    out = np.zeros(sc.n_ues)
    for sv in sc.services:
        v = sv.id
        idx_v = sc.service_ue_indices(v)
        for pos_i, u_i in enumerate(idx_v):
            total = 0.0
            # same-service leakage
            for sl in sc.slices:
                s = sl.id
                if not mapping.a[v, s] or (s, v) not in bf.w:
                    continue
                for n in range(n_prbs):
                    for pos_l, u_l in enumerate(idx_v):
                        if pos_l == pos_i:
                            continue
                        if zeta[u_i, n, s] and zeta[u_l, n, s]:
                            p_l = (sc.params.p_max if powers is None
                                   else powers.p[u_l])
                            total += p_l * _cross_gain(
                                sc, ch, bf, s, u_i, v, pos_l)
            # other-service leakage
            for sy in sc.services:
                y = sy.id
                if y == v:
                    continue
                idx_y = sc.service_ue_indices(y)
                for sl in sc.slices:
                    s = sl.id
                    if not mapping.a[y, s] or (s, y) not in bf.w:
                        continue
                    for n in range(n_prbs):
                        for pos_l, u_l in enumerate(idx_y):
                            if zeta[u_i, n, s] and zeta[u_l, n, s]:
                                p_l = (sc.params.p_max if powers is None
                                       else powers.p[u_l])
                                total += p_l * _cross_gain(
                                    sc, ch, bf, s, u_i, y, pos_l)
            # quantization noise of serving slices
            for sl in sc.slices:
                if not mapping.a[v, sl.id]:
                    continue
                for rid in sl.ru_ids:
                    total += (sc.rus[rid].sigma_q2
                              * abs(ch.gains[rid, u_i]) ** 2)
            out[u_i] = total
    return out


def _naive_beam_gain(sc: Scenario, mapping: SliceMapping, ch: ChannelSet,
                     bf: BeamformerSet, service_id: int, ue_pos: int,
                     ue_global: int) -> float:
    total = 0.0
    for sl in sc.slices:
        if mapping.a[service_id, sl.id] and (sl.id, service_id) in bf.w:
            total += _cross_gain(sc, ch, bf, sl.id, ue_global, service_id,
                                 ue_pos)
    return total


def _naive_rates(sc: Scenario, mapping: SliceMapping, ch: ChannelSet,
                 bf: BeamformerSet, powers: PowerAllocation,
                 interference: np.ndarray) -> np.ndarray:
    noise = sc.params.bandwidth_hz * sc.params.noise_psd
    out = np.zeros(sc.n_ues)
    for sv in sc.services:
        for pos, u in enumerate(sc.service_ue_indices(sv.id)):
            g = _naive_beam_gain(sc, mapping, ch, bf, sv.id, pos, u)
            rho = powers.p[u] * g / (noise + interference[u])
            out[u] = sc.params.bandwidth_hz * math.log2(1.0 + rho)
    return out


def _naive_slot_powers(sc: Scenario, mapping: SliceMapping,
                       bf: BeamformerSet,
                       powers: PowerAllocation) -> np.ndarray:
    out = []
    for s, j, rid in sc.ru_slots():
        total = sc.rus[rid].sigma_q2
        for sv in sc.services:
            if not mapping.a[sv.id, s] or (s, sv.id) not in bf.w:
                continue
            w = bf.w[(s, sv.id)]
            for pos, u in enumerate(sc.service_ue_indices(sv.id)):
                total += abs(w[j, pos]) ** 2 * powers.p[u]
        out.append(total)
    return np.array(out)


def summation_oracle(expression_id: str, sc: Scenario, mapping: SliceMapping,
                     ch: ChannelSet, bf: BeamformerSet,
                     powers: PowerAllocation):
    """Recompute a named quantity with naive loops.

    * "interference": per-UE worst-case interference vector (W);
    * "ru_power": per-(slice, RU) slot transmit power vector (W);
    * "ee": scalar efficiency (total rate / total slot power, bit/J),
      rates taken under the worst-case interference.
    """
    if expression_id == "interference":
        return _naive_interference(sc, mapping, ch, bf)
    if expression_id == "ru_power":
        return _naive_slot_powers(sc, mapping, bf, powers)
    if expression_id == "ee":
        ibar = _naive_interference(sc, mapping, ch, bf)
        rates = _naive_rates(sc, mapping, ch, bf, powers, ibar)
        p_tot = float(_naive_slot_powers(sc, mapping, bf, powers).sum())
        return float(rates.sum()) / p_tot if p_tot > 0 else 0.0
    raise ValueError(f"unknown expression id {expression_id!r}")


# --------------------------------------------------------------------------
# Brute-force mapping + power grid search
# --------------------------------------------------------------------------


@dataclass
class BruteForceResult:
    feasible: bool
    eta: float
    mapping: SliceMapping | None
    powers: PowerAllocation | None
    mappings_tried: int
    mappings_feasible: int


def _naive_delay_floors(sc: Scenario, mapping: SliceMapping,
                        ) -> dict[int, float] | None:
    """Per-active-slice minimum summed rate keeping the delay budget.

    Returns None when some active slice cannot meet the budget at any
    rate (VNF layers unstable or already over budget).
    """
    floors: dict[int, float] = {}
    for sl in sc.slices:
        served = [v for v in range(sc.n_services) if mapping.a[v, sl.id]]
        if not served:
            continue
        alpha = 0.0
        for v in served:
            for ue in sc.services[v].ues:
                alpha += ue.arrival_rate
        d_layers = 0.0
        for mu, m in ((sc.params.mu1, sl.m_du), (sc.params.mu2, sl.m_cu)):
            if alpha / m >= mu:
                return None
            d_layers += 1.0 / (mu - alpha / m)
        slack = sc.params.d_max - d_layers
        if slack <= 0:
            return None
        floors[sl.id] = 1.0 / slack + alpha * sc.params.packet_size_bits
    return floors


def brute_force_mapping(sc: Scenario, ch: ChannelSet, bf: BeamformerSet,
                        power_grid_n: int = 64) -> BruteForceResult:
    """Best (mapping, power) pair by full enumeration.

    Every coverage-complete mapping is enumerated; for each one, powers
    run over a uniform per-UE grid on [0, p_max] and the best feasible
    efficiency is kept.  The grid has power_grid_n uniform steps
    (power_grid_n + 1 points including both endpoints) so that doubling
    power_grid_n refines the grid in place and can only improve the
    result.  Guards: n_services * n_slices <= 12 and at most 4 UEs
    overall.  Feasibility uses the worst-case interference bound,
    matching the solver's constraint set.
    """
    n_v, n_s = sc.n_services, sc.n_slices
    if n_v * n_s > 12:
        raise OracleSizeError(
            f"mapping enumeration limited to V*S <= 12, got {n_v * n_s}")
    if sc.n_ues > 4:
        raise OracleSizeError(
            f"power grid limited to 4 UEs, got {sc.n_ues}")
    if power_grid_n < 2:
        raise ValueError("power_grid_n must be >= 2")

    params = sc.params
    noise = params.bandwidth_hz * params.noise_psd
    grid = np.linspace(0.0, params.p_max, power_grid_n + 1)
    slice_subsets = [tuple(c)
                     for r in range(1, n_s + 1)
                     for c in itertools.combinations(range(n_s), r)]

    best_eta = -np.inf
    best_mapping = None
    best_powers = None
    tried = 0
    feasible_mappings = 0

    for combo in itertools.product(slice_subsets, repeat=n_v):
        a = np.zeros((n_v, n_s), dtype=np.int8)
        for v, subset in enumerate(combo):
            a[v, list(subset)] = 1
        if any((s, v) not in bf.w
               for v in range(n_v) for s in range(n_s) if a[v, s]):
            continue
        tried += 1
        mapping = SliceMapping(a=a)

        floors = _naive_delay_floors(sc, mapping)
        if floors is None:
            continue
        ibar = _naive_interference(sc, mapping, ch, bf)
        gains = np.array([
            _naive_beam_gain(sc, mapping, ch, bf, sv.id, pos, u)
            for sv in sc.services
            for pos, u in enumerate(sc.service_ue_indices(sv.id))])
        z = noise + ibar
        slot_w = np.zeros((len(sc.ru_slots()), sc.n_ues))
        for k, (s, j, rid) in enumerate(sc.ru_slots()):
            for sv in sc.services:
                if not mapping.a[sv.id, s] or (s, sv.id) not in bf.w:
                    continue
                w = bf.w[(s, sv.id)]
                for pos, u in enumerate(sc.service_ue_indices(sv.id)):
                    slot_w[k, u] += abs(w[j, pos]) ** 2
        sigma2 = np.array([sc.rus[rid].sigma_q2
                           for _s, _j, rid in sc.ru_slots()])
        fh_cap = sigma2 * np.exp2(params.c_max)
        slice_rows = {
            s: [u for v in range(n_v) if mapping.a[v, s]
                for u in sc.service_ue_indices(v)]
            for s in floors}

        # vectorized sweep of the full power grid, chunked by flat index
        # so the full mesh is never materialized
        n_pts = grid.size
        total = n_pts ** sc.n_ues
        shape = (n_pts,) * sc.n_ues
        found = False
        for start in range(0, total, 65536):
            idx = np.arange(start, min(total, start + 65536))
            chunk = grid[np.stack(np.unravel_index(idx, shape), axis=1)]
            rates = params.bandwidth_hz * np.log2(
                1.0 + chunk * gains / z)
            p_bar = chunk @ slot_w.T + sigma2
            ok = np.all(rates >= params.r_min * (1 - RTOL), axis=1)
            ok &= np.all(p_bar <= params.p_max * (1 + RTOL), axis=1)
            ok &= np.all(p_bar <= fh_cap * (1 + RTOL), axis=1)
            for s, floor in floors.items():
                ok &= (rates[:, slice_rows[s]].sum(axis=1)
                       >= floor * (1 - RTOL))
            if not ok.any():
                continue
            found = True
            eta = rates[ok].sum(axis=1) / p_bar[ok].sum(axis=1)
            j = int(np.argmax(eta))
            if eta[j] > best_eta:
                best_eta = float(eta[j])
                best_mapping = SliceMapping(a=a.copy())
                best_powers = PowerAllocation(p=chunk[ok][j].copy())
        if found:
            feasible_mappings += 1

    return BruteForceResult(feasible=best_mapping is not None,
                            eta=(best_eta if best_mapping is not None
                                 else 0.0),
                            mapping=best_mapping, powers=best_powers,
                            mappings_tried=tried,
                            mappings_feasible=feasible_mappings)


# --------------------------------------------------------------------------
# Exhaustive placement
# --------------------------------------------------------------------------


@dataclass
class ExhaustivePlacementResult:
    feasible: bool
    psi: float
    phi: float
    admitted_count: int
    y: np.ndarray | None
    leaves_checked: int = 0


def _transport_feasible(demands: list[float], caps: list[float],
                        allowed: list[list[int]]) -> bool:
    """Can each demand be split over its allowed bins within capacities?

    Small float max-flow (Ford-Fulkerson with BFS) on the bipartite
    graph; exact enough at these sizes with a relative tolerance.
    """
    n, m = len(demands), len(caps)
    total = sum(demands)
    if total <= 0:
        return True
    # nodes: 0 = source, 1..n = demands, n+1..n+m = bins, n+m+1 = sink
    size = n + m + 2
    cap = [[0.0] * size for _ in range(size)]
    for i, dem in enumerate(demands):
        cap[0][1 + i] = dem
    for i, bins in enumerate(allowed):
        for b in bins:
            cap[1 + i][1 + n + b] = math.inf
    for b, c in enumerate(caps):
        cap[1 + n + b][n + m + 1] = c
    flow = 0.0
    tol = max(total, 1.0) * 1e-12
    while True:
        parent = [-1] * size
        parent[0] = 0
        queue = [0]
        while queue:
            node = queue.pop(0)
            for nxt in range(size):
                if parent[nxt] < 0 and cap[node][nxt] > tol:
                    parent[nxt] = node
                    queue.append(nxt)
        if parent[n + m + 1] < 0:
            break
        # bottleneck along the path
        path = []
        node = n + m + 1
        while node != 0:
            path.append((parent[node], node))
            node = parent[node]
        push = min(cap[a][b] for a, b in path)
        for a, b in path:
            cap[a][b] -= push
            cap[b][a] += push
        flow += push
    return flow >= total * (1 - 1e-9)


def exhaustive_placement(sc: Scenario, mapping: SliceMapping,
                         weights: PlacementWeights = PlacementWeights(),
                         nu: float | None = None, single_dc: bool = False,
                         require_all: bool = True,
                         ) -> ExhaustivePlacementResult:
    """Optimal placement of active slices by exhaustive enumeration.

    By default every active slice must be hosted somewhere (the
    coupling constraint of the placement problem) and the result
    minimizes psi = phi - nu * admission credit; reporting infeasible
    when capacities cannot host all active slices.  With
    `require_all=False` slices may be dropped, which is only meaningful
    together with nu > 0 and single_dc (admission-maximizing mode).

    Candidate rows per slice: singletons, plus minimal multi-DC subsets
    when splitting is allowed; a superset of a covering subset can only
    raise the power charge, so minimal subsets suffice at nu = 0.
    Joint feasibility of a full assignment is decided per resource by a
    transportation check.  Ties broken by the lexicographically
    smallest assignment matrix.  Guards: <= 10 active slices, <= 5 data
    centers, and nu > 0 requires single_dc (with splits the minimal-
    subset pruning would not be exact).
    """
    if nu is None:
        nu = sc.params.nu
    active = [sl.id for sl in sc.slices
              if any(mapping.a[v, sl.id] for v in range(sc.n_services))]
    n_dcs = len(sc.dcs)
    if len(active) > 10:
        raise OracleSizeError(
            f"placement enumeration limited to 10 active slices, "
            f"got {len(active)}")
    if n_dcs > 5:
        raise OracleSizeError(
            f"placement enumeration limited to 5 DCs, got {n_dcs}")
    if nu > 0 and not single_dc:
        raise OracleSizeError(
            "admission-weighted search requires single_dc placements")

    demands = {}
    for s in active:
        mem, sto, cpu = sc.slices[s].total_demand()
        demands[s] = np.array([mem, sto, cpu])
    caps = np.array([[dc.memory_gb, dc.storage_tb, dc.cpu_ghz]
                     for dc in sc.dcs])
    omega = {s: weights.combine(*demands[s]) for s in active}
    services_per_slice = mapping.a.sum(axis=0)

    rows_of: dict[int, list[tuple[int, ...]]] = {}
    for s in active:
        rows: list[tuple[int, ...]] = [] if require_all else [()]
        for d in range(n_dcs):
            if np.all(demands[s] <= caps[d] + 1e-9):
                rows.append((d,))
        if not single_dc:
            for r in range(2, n_dcs + 1):
                for combo in itertools.combinations(range(n_dcs), r):
                    pooled = caps[list(combo)].sum(axis=0)
                    if not np.all(demands[s] <= pooled + 1e-9):
                        continue
                    minimal = all(
                        not np.all(demands[s]
                                   <= caps[list(sub)].sum(axis=0) + 1e-9)
                        for sub in itertools.combinations(combo, r - 1))
                    if minimal:
                        rows.append(combo)
        if require_all and not rows:
            return ExhaustivePlacementResult(
                feasible=False, psi=math.inf, phi=math.inf,
                admitted_count=0, y=None)
        rows_of[s] = rows

    best_key = None
    best = ExhaustivePlacementResult(feasible=False, psi=math.inf,
                                     phi=math.inf, admitted_count=0, y=None)
    leaves = 0

    for combo in itertools.product(*(rows_of[s] for s in active)):
        leaves += 1
        assign = dict(zip(active, combo))
        # fast necessary check: whole (singleton) demands per DC
        whole = np.zeros((n_dcs, 3))
        split_slices = []
        for s, row in assign.items():
            if len(row) == 1:
                whole[row[0]] += demands[s]
            elif len(row) > 1:
                split_slices.append(s)
        if np.any(whole > caps + 1e-9):
            continue
        if split_slices:
            residual = caps - whole
            ok = True
            for z in range(3):
                if not _transport_feasible(
                        [float(demands[s][z]) for s in split_slices],
                        [float(residual[d][z]) for d in range(n_dcs)],
                        [list(assign[s]) for s in split_slices]):
                    ok = False
                    break
            if not ok:
                continue
        phi = 0.0
        active_dcs = set()
        credit = 0.0
        for s, row in assign.items():
            for d in row:
                active_dcs.add(d)
                phi += sc.dcs[d].phi_per_unit * omega[s]
            credit += len(row) * float(services_per_slice[s])
        phi += sum(sc.dcs[d].phi_idle for d in active_dcs)
        psi = phi - nu * credit
        y = np.zeros((sc.n_slices, n_dcs), dtype=np.int8)
        for s, row in assign.items():
            for d in row:
                y[s, d] = 1
        key = (psi, tuple(y.flatten().tolist()))
        if best_key is None or key < best_key:
            best_key = key
            best = ExhaustivePlacementResult(
                feasible=True, psi=psi, phi=phi,
                admitted_count=sum(1 for row in assign.values() if row),
                y=y)
    best.leaves_checked = leaves
    return best


# --------------------------------------------------------------------------
# Queueing simulation
# --------------------------------------------------------------------------


def mm1_simulate(arrival_rate: float, service_rate: float,
                 n_arrivals: int = 1_000_000, seed: int = 0) -> float:
    """Mean sojourn time of an M/M/1 FIFO queue by simulation.

    Single-server discrete-event dynamics via the waiting-time
    recursion: each customer's wait is the previous customer's wait
    plus service, minus the interarrival gap, floored at zero; sojourn
    is wait plus own service.  Requires a stable queue and at least
    1e5 arrivals for a meaningful average.
    """
    if arrival_rate <= 0 or service_rate <= 0:
        raise ValueError("rates must be positive")
    if arrival_rate >= service_rate:
        raise ValueError(
            f"unstable queue: arrival rate {arrival_rate} >= service rate "
            f"{service_rate}")
    if n_arrivals < 100_000:
        raise ValueError("need at least 1e5 arrivals")
    rng = np.random.default_rng(seed)
    gaps = rng.exponential(1.0 / arrival_rate, n_arrivals)
    services = rng.exponential(1.0 / service_rate, n_arrivals)
    wait = 0.0
    total = 0.0
    for k in range(n_arrivals):
        if k:
            wait = max(0.0, wait + services[k - 1] - gaps[k])
        total += wait + services[k]
    return total / n_arrivals
