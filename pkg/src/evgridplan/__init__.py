"""Two-stage EV charging infrastructure planning and grid-constrained dispatch."""

from .grid import (
    Branch,
    Bus,
    GridNetwork,
    NetworkError,
    bundled_network_path,
    load_bundled_network,
    load_network,
    nodal_admittance,
    serialize_network,
    validate_network,
)
from .chargers import (
    ChargerType,
    InfrastructurePlan,
    capex,
    default_catalog,
    load_catalog,
    nodal_capacity,
    read_plan_csv,
    serialize_catalog,
    write_plan_csv,
)
from .fleet import (
    AvailabilityWindows,
    ClockWindow,
    EvProfile,
    FleetScenario,
    ScenarioError,
    TimeGrid,
    availability,
    base_load,
    generate_fleet,
    scenario_from_config,
    scenario_table,
)
from .milp import MilpModel, FEASIBILITY_TOL, INTEGRALITY_TOL
from .builder import BuildConfig, BuildMode, build
from .solver import (
    ExternalMipBackend,
    GlpkBackend,
    HighsBackend,
    Solution,
    SolveOptions,
    SolverError,
    brute_force_oracle,
    export_model,
    get_backend,
    read_mps,
    solve,
)
from .planning import PlanOptions, plan_infrastructure, plan_summary
from .dispatch import (
    DispatchSolution,
    DispatchWeights,
    dispatch,
    uniform_redistribute,
)
from .metrics import (
    ComparisonReport,
    compare,
    nodal_power_matrix,
    power_shift,
    shortfall,
    shortfall_reduction,
)

__version__ = "0.1.0"
