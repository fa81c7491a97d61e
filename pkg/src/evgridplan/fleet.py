"""Deterministic commute-structured EV fleet scenarios.

Each EV owns a (home, work) pair of consumer buses and follows fixed clock
windows: parked at home overnight, at work during the day, away otherwise.
SOC stays constant while away (charging-side model, no driving depletion).
Initial SOC is sampled uniformly; everything is reproducible bit-for-bit from
the seed (numpy ``default_rng``, PCG64, fixed draw order: homes, works, SOCs).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .grid import GridNetwork

SCENARIO_SCHEMA_VERSION = 1

DEFAULT_EFFICIENCY = 0.85
DEFAULT_TARGET_SOC = 1.0
DEFAULT_SOC_INIT_RANGE = (0.10, 0.40)
DEFAULT_PEAK_FRACTION = 0.40
DEFAULT_POWER_FACTOR = 0.95

# Normalized daily shape, peak 1.0 in the evening with a morning shoulder.
DEFAULT_BASE_PROFILE = (
    0.38, 0.35, 0.33, 0.32, 0.33, 0.36,
    0.45, 0.62, 0.85, 0.78, 0.68, 0.63,
    0.60, 0.58, 0.57, 0.60, 0.68, 0.80,
    0.92, 1.00, 0.95, 0.82, 0.62, 0.45,
)


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Uniform discrete horizon. Daily scenarios cover exactly 24 h."""

    step_hours: float = 1.0
    horizon_steps: int = 24
    start_hour: float = 0.0

    def __post_init__(self):
        if self.step_hours <= 0:
            raise ScenarioError("step_hours must be positive")
        if self.horizon_steps < 1:
            raise ScenarioError("horizon_steps must be at least 1")

    @property
    def covers_full_day(self) -> bool:
        return math.isclose(self.step_hours * self.horizon_steps, 24.0)

    def clock_interval(self, t: int) -> tuple[float, float]:
        """Clock-hour interval [start, start + step) covered by step t."""
        start = (self.start_hour + t * self.step_hours) % 24.0
        return start, start + self.step_hours

    @property
    def steps(self) -> range:
        return range(self.horizon_steps)


@dataclass(frozen=True)
class ClockWindow:
    """Half-open clock window [start, end) in hours, wrap-aware."""

    start: float
    end: float

    def intervals(self) -> list[tuple[float, float]]:
        if self.start == self.end:
            return []
        if self.start < self.end:
            return [(self.start, self.end)]
        return [(self.start, 24.0), (0.0, self.end)]

    def covers(self, lo: float, hi: float) -> bool:
        """True if the clock interval [lo, hi) (hi may wrap past 24) fits inside."""
        pieces = [(lo % 24.0, min(hi - lo, 24.0) + lo % 24.0)]
        if pieces[0][1] > 24.0:
            a, b = pieces[0]
            pieces = [(a, 24.0), (0.0, b - 24.0)]
        own = self.intervals()
        eps = 1e-9
        for a, b in pieces:
            if b - a <= eps:
                continue
            if not any(wa - eps <= a and b <= wb + eps for wa, wb in own):
                return False
        return True


@dataclass(frozen=True)
class AvailabilityWindows:
    home: ClockWindow = ClockWindow(22.0, 6.0)
    work: ClockWindow = ClockWindow(8.0, 18.0)


@dataclass(frozen=True)
class EvProfile:
    id: int
    battery_kwh: float
    home_node: int
    work_node: int
    initial_soc: float
    target_soc: float = DEFAULT_TARGET_SOC
    efficiency: float = DEFAULT_EFFICIENCY

    def __post_init__(self):
        if self.battery_kwh <= 0:
            raise ScenarioError(f"EV {self.id}: battery capacity must be positive")
        if not (0.0 <= self.initial_soc <= self.target_soc <= 1.0):
            raise ScenarioError(f"EV {self.id}: need 0 <= initial <= target <= 1")
        if self.home_node == self.work_node:
            raise ScenarioError(f"EV {self.id}: home and work nodes must differ")
        if not (0.0 < self.efficiency <= 1.0):
            raise ScenarioError(f"EV {self.id}: efficiency must be in (0, 1]")


@dataclass(frozen=True)
class FleetScenario:
    """Immutable scenario: fleet, clock structure, and nodal base load."""

    evs: tuple[EvProfile, ...]
    time: TimeGrid
    windows: AvailabilityWindows
    home_nodes: tuple[int, ...]
    work_nodes: tuple[int, ...]
    transformer_kva: dict[int, float]
    consumer_ids: tuple[int, ...]
    base_profile: tuple[float, ...] = DEFAULT_BASE_PROFILE
    peak_fraction: float = DEFAULT_PEAK_FRACTION
    power_factor: float = DEFAULT_POWER_FACTOR
    seed: int = 0

    def __post_init__(self):
        if len(self.base_profile) != 24:
            raise ScenarioError("base profile must have 24 points")
        if any(not (0.0 <= v <= 1.0) for v in self.base_profile):
            raise ScenarioError("base profile values must lie in [0, 1]")
        if not (0.0 <= self.peak_fraction <= 1.0):
            raise ScenarioError("peak_fraction must lie in [0, 1]")
        if not (0.0 < self.power_factor <= 1.0):
            raise ScenarioError("power_factor must lie in (0, 1]")
        for ev in self.evs:
            for node in (ev.home_node, ev.work_node):
                if node not in self.consumer_ids:
                    raise ScenarioError(f"EV {ev.id}: node {node} is not a consumer bus")

    @property
    def n_evs(self) -> int:
        return len(self.evs)

    def ev(self, ev_id: int) -> EvProfile:
        for ev in self.evs:
            if ev.id == ev_id:
                return ev
        raise ScenarioError(f"unknown EV id {ev_id}")

    def availability(self, ev_id: int, t: int) -> Optional[int]:
        """Bus the EV is parked at during step t, or None when away."""
        if t not in self.time.steps:
            raise ScenarioError(f"step {t} outside horizon [0, {self.time.horizon_steps})")
        ev = self.ev(ev_id)
        lo, hi = self.time.clock_interval(t)
        if self.windows.home.covers(lo, hi):
            return ev.home_node
        if self.windows.work.covers(lo, hi):
            return ev.work_node
        return None

    def available_steps(self, ev_id: int) -> list[int]:
        return [t for t in self.time.steps if self.availability(ev_id, t) is not None]

    def terminal_step(self, ev_id: int) -> Optional[int]:
        """Last step of the EV's final parking session (None if never parked)."""
        steps = self.available_steps(ev_id)
        return steps[-1] if steps else None

    def base_load(self, node: int, t: int) -> tuple[float, float]:
        """Base (P kW, Q kVAr) demand at a consumer bus during step t."""
        if node not in self.consumer_ids:
            raise ScenarioError(f"bus {node} is not a consumer bus")
        if t not in self.time.steps:
            raise ScenarioError(f"step {t} outside horizon [0, {self.time.horizon_steps})")
        lo, _ = self.time.clock_interval(t)
        shape = self.base_profile[int(lo) % 24]
        p_kw = self.peak_fraction * self.transformer_kva[node] * shape
        q_kvar = p_kw * math.tan(math.acos(self.power_factor))
        return p_kw, q_kvar

    def evs_at(self, node: int, t: int) -> list[int]:
        return [ev.id for ev in self.evs if self.availability(ev.id, t) == node]


def availability(scenario: FleetScenario, ev_id: int, t: int) -> Optional[int]:
    return scenario.availability(ev_id, t)


def base_load(scenario: FleetScenario, node: int, t: int) -> tuple[float, float]:
    return scenario.base_load(node, t)


def split_consumer_nodes(network: GridNetwork) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Default residential/workplace partition: index-ordered halves."""
    consumers = sorted(network.consumer_ids)
    half = len(consumers) // 2
    return tuple(consumers[:half]), tuple(consumers[half:])


def generate_fleet(
    n_evs: int,
    battery_kwh: float,
    network: GridNetwork,
    seed: int,
    *,
    time: TimeGrid | None = None,
    windows: AvailabilityWindows | None = None,
    home_nodes: Sequence[int] | None = None,
    work_nodes: Sequence[int] | None = None,
    base_profile: Sequence[float] = DEFAULT_BASE_PROFILE,
    peak_fraction: float = DEFAULT_PEAK_FRACTION,
    power_factor: float = DEFAULT_POWER_FACTOR,
    target_soc: float = DEFAULT_TARGET_SOC,
    efficiency: float = DEFAULT_EFFICIENCY,
    soc_init_range: tuple[float, float] = DEFAULT_SOC_INIT_RANGE,
) -> FleetScenario:
    """Sample a reproducible commute scenario on the given network.

    Homes and workplaces are drawn uniformly from the two disjoint node
    subsets (default: index-ordered halves of the consumer buses); initial
    SOC from U(soc_init_range). Identical arguments give a bit-identical
    scenario on every platform.
    """
    if n_evs < 0:
        raise ScenarioError("n_evs must be nonnegative")
    if battery_kwh <= 0:
        raise ScenarioError("battery_kwh must be positive")
    if len(network.consumer_ids) < 2:
        raise ScenarioError("network needs at least 2 consumer buses")
    time = time or TimeGrid()
    if not time.covers_full_day:
        raise ScenarioError("generated scenarios must cover exactly 24 h")
    windows = windows or AvailabilityWindows()
    if home_nodes is None or work_nodes is None:
        auto_home, auto_work = split_consumer_nodes(network)
        home_nodes = home_nodes if home_nodes is not None else auto_home
        work_nodes = work_nodes if work_nodes is not None else auto_work
    home_nodes = tuple(int(n) for n in home_nodes)
    work_nodes = tuple(int(n) for n in work_nodes)
    if not home_nodes or not work_nodes:
        raise ScenarioError("home and work node sets must be nonempty")
    if set(home_nodes) & set(work_nodes):
        raise ScenarioError("home and work node sets must be disjoint")

    rng = np.random.default_rng(seed)
    homes = rng.choice(np.asarray(home_nodes), size=n_evs)
    works = rng.choice(np.asarray(work_nodes), size=n_evs)
    lo, hi = soc_init_range
    socs = rng.uniform(lo, hi, size=n_evs)

    evs = tuple(
        EvProfile(
            id=i,
            battery_kwh=float(battery_kwh),
            home_node=int(homes[i]),
            work_node=int(works[i]),
            initial_soc=float(socs[i]),
            target_soc=float(target_soc),
            efficiency=float(efficiency),
        )
        for i in range(n_evs)
    )
    scenario = FleetScenario(
        evs=evs,
        time=time,
        windows=windows,
        home_nodes=home_nodes,
        work_nodes=work_nodes,
        transformer_kva={b.id: b.transformer_kva for b in network.buses},
        consumer_ids=tuple(network.consumer_ids),
        base_profile=tuple(float(v) for v in base_profile),
        peak_fraction=float(peak_fraction),
        power_factor=float(power_factor),
        seed=int(seed),
    )
    for ev in evs:
        if not scenario.available_steps(ev.id):
            raise ScenarioError(f"EV {ev.id} is never parked under the given windows")
    return scenario


def scenario_table(scenario: FleetScenario) -> str:
    """Audit dump of the sampled fleet as CSV text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["ev", "battery_kwh", "home_node", "work_node", "initial_soc", "target_soc", "efficiency"]
    )
    for ev in scenario.evs:
        writer.writerow(
            [ev.id, ev.battery_kwh, ev.home_node, ev.work_node,
             repr(ev.initial_soc), ev.target_soc, ev.efficiency]
        )
    return buf.getvalue()


def scenario_config_dict(scenario: FleetScenario, n_evs: int | None = None) -> dict:
    """Scenario knobs as a JSON-ready mapping (see cli for the file format)."""
    return {
        "schema_version": SCENARIO_SCHEMA_VERSION,
        "n_evs": n_evs if n_evs is not None else scenario.n_evs,
        "battery_kwh": scenario.evs[0].battery_kwh if scenario.evs else None,
        "seed": scenario.seed,
        "peak_fraction": scenario.peak_fraction,
        "power_factor": scenario.power_factor,
        "profile": list(scenario.base_profile),
        "home_nodes": list(scenario.home_nodes),
        "work_nodes": list(scenario.work_nodes),
        "windows": {
            "home": [scenario.windows.home.start, scenario.windows.home.end],
            "work": [scenario.windows.work.start, scenario.windows.work.end],
        },
    }


def scenario_from_config(doc: dict, network: GridNetwork, **overrides) -> FleetScenario:
    """Build a scenario from a config mapping; kwargs override file values."""
    known = {
        "schema_version", "n_evs", "battery_kwh", "seed", "peak_fraction",
        "power_factor", "profile", "home_nodes", "work_nodes", "windows",
        "target_soc", "efficiency", "soc_init_range",
    }
    unknown = set(doc) - known
    if unknown:
        raise ScenarioError(f"unknown scenario config fields {sorted(unknown)}")
    merged = dict(doc)
    merged.pop("schema_version", None)
    merged.update(overrides)
    windows = None
    if merged.get("windows") is not None:
        w = merged["windows"]
        windows = AvailabilityWindows(
            home=ClockWindow(*[float(v) for v in w["home"]]),
            work=ClockWindow(*[float(v) for v in w["work"]]),
        )
    return generate_fleet(
        n_evs=int(merged["n_evs"]),
        battery_kwh=float(merged["battery_kwh"]),
        network=network,
        seed=int(merged.get("seed", 0)),
        windows=windows,
        home_nodes=merged.get("home_nodes"),
        work_nodes=merged.get("work_nodes"),
        base_profile=merged.get("profile", DEFAULT_BASE_PROFILE),
        peak_fraction=float(merged.get("peak_fraction", DEFAULT_PEAK_FRACTION)),
        power_factor=float(merged.get("power_factor", DEFAULT_POWER_FACTOR)),
        target_soc=float(merged.get("target_soc", DEFAULT_TARGET_SOC)),
        efficiency=float(merged.get("efficiency", DEFAULT_EFFICIENCY)),
        soc_init_range=tuple(merged.get("soc_init_range", DEFAULT_SOC_INIT_RANGE)),
    )


def with_battery(scenario: FleetScenario, battery_kwh: float) -> FleetScenario:
    """Same fleet with a different nominal battery size (sensitivity runs)."""
    evs = tuple(replace(ev, battery_kwh=float(battery_kwh)) for ev in scenario.evs)
    return replace(scenario, evs=evs)
