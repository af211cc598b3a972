"""Sliced downlink simulator: scenario generation, mapping, power
control and VNF placement for disaggregated RAN deployments."""

from .scenario import (GeneratorConfig, Scenario, ScenarioError,
                       SystemParams, generate_scenario, load_scenario,
                       save_scenario, validate)
from .radio import (BeamformerSet, ChannelSet, PowerAllocation,
                    SingularChannelError, SliceMapping, build_beamformers,
                    build_channels, energy_efficiency,
                    interference_upper_bound, ue_rates, zf_beamformer)
from .queueing import SliceDelay, UnstableQueueError, slice_delay
from .slicing import (FeasibilityReport, MappingResult, RankingWeights,
                      check_feasibility, map_slices_to_services,
                      rank_services, rank_slices)
from .power import (InfeasibleMappingError, JointResult, SolverOptions,
                    solve_joint)
from .placement import (Placement, PlacementWeights, admitted_ratio,
                        cost_phi, cost_psi, place)

__version__ = "0.1.0"

__all__ = [
    "GeneratorConfig", "Scenario", "ScenarioError", "SystemParams",
    "generate_scenario", "load_scenario", "save_scenario", "validate",
    "BeamformerSet", "ChannelSet", "PowerAllocation",
    "SingularChannelError", "SliceMapping", "build_beamformers",
    "build_channels", "energy_efficiency", "interference_upper_bound",
    "ue_rates", "zf_beamformer",
    "SliceDelay", "UnstableQueueError", "slice_delay",
    "FeasibilityReport", "MappingResult", "RankingWeights",
    "check_feasibility", "map_slices_to_services", "rank_services",
    "rank_slices",
    "InfeasibleMappingError", "JointResult", "SolverOptions", "solve_joint",
    "Placement", "PlacementWeights", "admitted_ratio", "cost_phi",
    "cost_psi", "place",
    "__version__",
]
