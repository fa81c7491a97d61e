import math

import pytest

from evgridplan.chargers import ChargerType, default_catalog
from evgridplan.fleet import (
    AvailabilityWindows,
    ClockWindow,
    EvProfile,
    FleetScenario,
    TimeGrid,
)
from evgridplan.grid import Branch, Bus, GridNetwork, load_bundled_network


@pytest.fixture(scope="session")
def cigre():
    return load_bundled_network()


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


def tiny_network(n_consumers: int = 1) -> GridNetwork:
    """Slack bus 0 plus a chain of consumer buses, generous limits."""
    buses = [Bus(0, True, 1000.0, False)]
    branches = []
    for i in range(1, n_consumers + 1):
        buses.append(Bus(i, False, 1000.0, True))
        branches.append(Branch(i - 1, i, 100.0, -200.0))
    return GridNetwork(
        buses=tuple(buses),
        branches=tuple(branches),
        v_min=0.95,
        v_max=1.05,
        theta_min=-math.pi / 6,
        theta_max=math.pi / 6,
        base_kv=20.0,
        base_kva=1000.0,
    )


def micro_scenario(
    network: GridNetwork,
    evs: list[dict],
    horizon: int = 4,
    home_window=(0.0, 12.0),
    work_window=(12.0, 24.0),
    peak_fraction: float = 0.0,
) -> FleetScenario:
    """Hand-built scenario for oracle-sized instances.

    Steps are 24/horizon hours long; default windows make every step parked
    (home for the first half of the day, work for the second).
    """
    consumers = tuple(network.consumer_ids)
    profiles = []
    for spec in evs:
        profiles.append(
            EvProfile(
                id=spec.get("id", len(profiles)),
                battery_kwh=spec.get("battery", 40.0),
                home_node=spec["home"],
                work_node=spec["work"],
                initial_soc=spec.get("initial", 0.2),
                target_soc=spec.get("target", 1.0),
                efficiency=spec.get("efficiency", 0.85),
            )
        )
    return FleetScenario(
        evs=tuple(profiles),
        time=TimeGrid(step_hours=24.0 / horizon, horizon_steps=horizon),
        windows=AvailabilityWindows(
            home=ClockWindow(*home_window), work=ClockWindow(*work_window)
        ),
        home_nodes=consumers,
        work_nodes=consumers,
        transformer_kva={b.id: b.transformer_kva for b in network.buses},
        consumer_ids=consumers,
        peak_fraction=peak_fraction,
        seed=0,
    )


def slow_only():
    return [
        ChargerType("slow_single", "slow", 7.5, 1, 1500.0),
        ChargerType("slow_multi", "slow", 7.5, 4, 5000.0),
    ]
