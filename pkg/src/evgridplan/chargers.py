"""Charger technology catalog and infrastructure-plan aggregates.

Multi-port units share one rated power budget across their ports, so the
catalog stores per-port power; per-unit capacity is recovered as
``rated_power_per_port_kw * port_multiplier``. Plans map (bus, type) to
integer unit counts and only ever live on consumer, non-slack buses.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

CATALOG_SCHEMA_VERSION = 1

FAST = "fast"
SLOW = "slow"


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class ChargerType:
    id: str
    speed_class: str  # "fast" | "slow"
    rated_power_per_port_kw: float
    port_multiplier: int
    unit_cost_eur: float

    def __post_init__(self):
        if self.speed_class not in (FAST, SLOW):
            raise CatalogError(f"{self.id}: speed_class must be fast or slow")
        if self.rated_power_per_port_kw <= 0:
            raise CatalogError(f"{self.id}: per-port power must be positive")
        if self.port_multiplier < 1 or self.port_multiplier != int(self.port_multiplier):
            raise CatalogError(f"{self.id}: port multiplier must be a positive integer")
        if self.unit_cost_eur < 0:
            raise CatalogError(f"{self.id}: unit cost must be nonnegative")

    @property
    def unit_power_kw(self) -> float:
        """Total rated power of one installed unit (all ports together)."""
        return self.rated_power_per_port_kw * self.port_multiplier


def default_catalog() -> list[ChargerType]:
    """The four stock technologies: slow/fast in single- and 4-port builds.

    Multi-port totals (30 kW, 200 kW) are stored as per-port power so that
    capacity aggregation ``P_j * alpha_j * N`` reproduces the unit totals.
    """
    return [
        ChargerType("slow_single", SLOW, 7.5, 1, 1500.0),
        ChargerType("slow_multi", SLOW, 30.0 / 4, 4, 5000.0),
        ChargerType("fast_single", FAST, 50.0, 1, 50000.0),
        ChargerType("fast_multi", FAST, 200.0 / 4, 4, 150000.0),
    ]


def catalog_by_id(catalog: Iterable[ChargerType]) -> dict[str, ChargerType]:
    out: dict[str, ChargerType] = {}
    for ct in catalog:
        if ct.id in out:
            raise CatalogError(f"duplicate charger type id {ct.id!r}")
        out[ct.id] = ct
    return out


def class_port_power(catalog: Iterable[ChargerType], speed_class: str) -> float:
    """Largest per-port rating among catalog entries of one speed class."""
    powers = [ct.rated_power_per_port_kw for ct in catalog if ct.speed_class == speed_class]
    return max(powers) if powers else 0.0


def load_catalog(source) -> list[ChargerType]:
    """Read a catalog file mirroring the stock technology table columns."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = source
    if not isinstance(doc, Mapping) or set(doc) != {"schema_version", "charger_types"}:
        raise CatalogError("catalog document must have schema_version and charger_types")
    if doc["schema_version"] != CATALOG_SCHEMA_VERSION:
        raise CatalogError(f"unsupported schema_version {doc['schema_version']}")
    out = []
    for rec in doc["charger_types"]:
        if set(rec) != {"id", "speed_class", "power_kw", "ports", "cost_eur"}:
            raise CatalogError(f"bad charger record fields: {sorted(rec)}")
        ports = int(rec["ports"])
        out.append(
            ChargerType(
                id=str(rec["id"]),
                speed_class=str(rec["speed_class"]),
                rated_power_per_port_kw=float(rec["power_kw"]) / ports,
                port_multiplier=ports,
                unit_cost_eur=float(rec["cost_eur"]),
            )
        )
    catalog_by_id(out)
    return out


def serialize_catalog(catalog: Iterable[ChargerType]) -> dict:
    return {
        "schema_version": CATALOG_SCHEMA_VERSION,
        "charger_types": [
            {
                "id": ct.id,
                "speed_class": ct.speed_class,
                "power_kw": ct.unit_power_kw,
                "ports": ct.port_multiplier,
                "cost_eur": ct.unit_cost_eur,
            }
            for ct in catalog
        ],
    }


@dataclass(frozen=True)
class InfrastructurePlan:
    """Integer charger counts keyed by (bus id, charger type id)."""

    counts: Mapping[tuple[int, str], int] = field(default_factory=dict)

    def __post_init__(self):
        clean: dict[tuple[int, str], int] = {}
        for (bus, type_id), count in self.counts.items():
            if count != int(count) or count < 0:
                raise CatalogError(f"count for ({bus}, {type_id}) must be a nonnegative integer")
            if count:
                clean[(int(bus), str(type_id))] = int(count)
        object.__setattr__(self, "counts", dict(sorted(clean.items())))

    def count(self, bus: int, type_id: str) -> int:
        return self.counts.get((bus, type_id), 0)

    def buses(self) -> list[int]:
        return sorted({bus for bus, _ in self.counts})

    def type_totals(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for (_, type_id), count in self.counts.items():
            out[type_id] = out.get(type_id, 0) + count
        return dict(sorted(out.items()))

    def is_empty(self) -> bool:
        return not self.counts


def capex(plan: InfrastructurePlan, catalog: Iterable[ChargerType]) -> float:
    """Total installation cost in euro: sum of unit cost times count."""
    by_id = catalog_by_id(catalog)
    total = 0.0
    for (_, type_id), count in plan.counts.items():
        if type_id not in by_id:
            raise CatalogError(f"unknown charger type {type_id!r}")
        total += by_id[type_id].unit_cost_eur * count
    return total


def nodal_capacity(
    plan: InfrastructurePlan, catalog: Iterable[ChargerType], n: int
) -> tuple[float, int]:
    """(P_max kW, port count K) made available at bus n by the plan."""
    by_id = catalog_by_id(catalog)
    p_max = 0.0
    ports = 0
    for (bus, type_id), count in plan.counts.items():
        if type_id not in by_id:
            raise CatalogError(f"unknown charger type {type_id!r}")
        if bus != n:
            continue
        ct = by_id[type_id]
        p_max += ct.rated_power_per_port_kw * ct.port_multiplier * count
        ports += ct.port_multiplier * count
    return p_max, ports


def write_plan_csv(plan: InfrastructurePlan) -> str:
    """Plan export as (bus, type, count) triples, sorted, deterministic."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bus", "type", "count"])
    for (bus, type_id), count in plan.counts.items():
        writer.writerow([bus, type_id, count])
    return buf.getvalue()


def read_plan_csv(text: str) -> InfrastructurePlan:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["bus", "type", "count"]:
        raise CatalogError(f"bad plan header {header}")
    counts: dict[tuple[int, str], int] = {}
    for row in reader:
        if not row:
            continue
        bus, type_id, count = int(row[0]), row[1], int(row[2])
        key = (bus, type_id)
        if key in counts:
            raise CatalogError(f"duplicate plan row for {key}")
        counts[key] = count
    return InfrastructurePlan(counts)
