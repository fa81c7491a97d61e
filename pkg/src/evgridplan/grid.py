"""Medium-voltage network model: buses, branch admittances, operating limits.

The network is the physical substrate for the linearized power-flow rows of
the optimization model. Branches store series conductance/susceptance in per
unit on the network's own (base_kva, base_kv) base; slack buses represent the
upstream grid and are pinned to V = 1.0 p.u., theta = 0 in every solved model.

A bundled 14-bus benchmark file (``data/cigre_mv_14bus.json``) ships with the
package; see :func:`bundled_network_path`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

NETWORK_SCHEMA_VERSION = 1

_HEADER_FIELDS = {
    "schema_version",
    "base_kv",
    "base_kva",
    "v_min",
    "v_max",
    "theta_min",
    "theta_max",
    "buses",
    "branches",
    "provenance",
}
_BUS_FIELDS = {"id", "slack", "transformer_kva", "consumer"}
_BRANCH_FIELDS = {"from", "to", "g_pu", "b_pu"}


class NetworkError(ValueError):
    """Raised for schema violations and invalid network structure."""


@dataclass(frozen=True)
class Bus:
    id: int
    is_slack: bool
    transformer_kva: float
    is_consumer: bool


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    g_pu: float
    b_pu: float


@dataclass(frozen=True)
class GridNetwork:
    """Immutable network container; safe to share across concurrent solves."""

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    v_min: float
    v_max: float
    theta_min: float
    theta_max: float
    base_kv: float
    base_kva: float
    provenance: str = ""
    _admittance: dict[tuple[int, int], tuple[float, float]] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self):
        adm: dict[tuple[int, int], tuple[float, float]] = {}
        for br in self.branches:
            adm[(br.from_bus, br.to_bus)] = (br.g_pu, br.b_pu)
            adm[(br.to_bus, br.from_bus)] = (br.g_pu, br.b_pu)
        object.__setattr__(self, "_admittance", adm)

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    @property
    def slack_ids(self) -> list[int]:
        return [b.id for b in self.buses if b.is_slack]

    @property
    def consumer_ids(self) -> list[int]:
        """Buses eligible for chargers and base load (non-slack consumers)."""
        return [b.id for b in self.buses if b.is_consumer and not b.is_slack]

    def bus(self, bus_id: int) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise NetworkError(f"unknown bus id {bus_id}")

    def neighbors(self, bus_id: int) -> list[int]:
        out = set()
        for br in self.branches:
            if br.from_bus == bus_id:
                out.add(br.to_bus)
            elif br.to_bus == bus_id:
                out.add(br.from_bus)
        return sorted(out)


def nodal_admittance(network: GridNetwork, n: int, m: int) -> tuple[float, float]:
    """Series (G, B) in p.u. of the branch joining buses n and m.

    Returns (0.0, 0.0) when no branch connects the pair. Symmetric by
    construction since branches are undirected.
    """
    ids = set(network.bus_ids)
    if n not in ids:
        raise NetworkError(f"unknown bus id {n}")
    if m not in ids:
        raise NetworkError(f"unknown bus id {m}")
    return network._admittance.get((n, m), (0.0, 0.0))


def _connected(bus_ids: list[int], branches: Iterable[Branch]) -> bool:
    if not bus_ids:
        return False
    adj: dict[int, set[int]] = {b: set() for b in bus_ids}
    for br in branches:
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    seen = {bus_ids[0]}
    stack = [bus_ids[0]]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(bus_ids)


def validate_network(network: GridNetwork) -> list[str]:
    """Collect invariant violations; an empty list means the network is valid."""
    problems: list[str] = []
    ids = [b.id for b in network.buses]
    if len(ids) != len(set(ids)):
        problems.append("duplicate bus ids")
    if not any(b.is_slack for b in network.buses):
        problems.append("missing slack bus")
    for b in network.buses:
        if b.transformer_kva <= 0:
            problems.append(f"bus {b.id}: transformer rating must be positive")
    id_set = set(ids)
    seen_pairs = set()
    for br in network.branches:
        if br.from_bus == br.to_bus:
            problems.append(f"branch {br.from_bus}-{br.to_bus}: self loop")
        if br.from_bus not in id_set or br.to_bus not in id_set:
            problems.append(f"branch {br.from_bus}-{br.to_bus}: unknown bus")
            continue
        key = frozenset((br.from_bus, br.to_bus))
        if key in seen_pairs:
            problems.append(f"branch {br.from_bus}-{br.to_bus}: duplicate pair")
        seen_pairs.add(key)
    if not problems and not _connected(ids, network.branches):
        problems.append("network graph is disconnected")
    if not network.v_min < 1.0:
        problems.append(f"v_min < 1.0 fails (v_min={network.v_min})")
    if not network.v_max > 1.0:
        problems.append(f"v_max > 1.0 fails (v_max={network.v_max})")
    if not network.theta_min < 0.0 < network.theta_max:
        problems.append("theta bounds must straddle 0")
    if network.base_kv <= 0 or network.base_kva <= 0:
        problems.append("base quantities must be positive")
    return problems


def _require_fields(record: Mapping, allowed: set[str], required: set[str], what: str):
    unknown = set(record) - allowed
    if unknown:
        raise NetworkError(f"{what}: unknown fields {sorted(unknown)}")
    missing = required - set(record)
    if missing:
        raise NetworkError(f"{what}: missing fields {sorted(missing)}")


def load_network(source) -> GridNetwork:
    """Build a validated GridNetwork from a schema document.

    ``source`` may be a path to a JSON file or an already-parsed mapping.
    Unknown fields are rejected; all structural invariants are enforced.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = source
    if not isinstance(doc, Mapping):
        raise NetworkError("network document must be a mapping")
    _require_fields(doc, _HEADER_FIELDS, _HEADER_FIELDS - {"provenance"}, "network header")
    if doc["schema_version"] != NETWORK_SCHEMA_VERSION:
        raise NetworkError(f"unsupported schema_version {doc['schema_version']}")

    buses = []
    for rec in doc["buses"]:
        _require_fields(rec, _BUS_FIELDS, _BUS_FIELDS, "bus record")
        buses.append(
            Bus(
                id=int(rec["id"]),
                is_slack=bool(rec["slack"]),
                transformer_kva=float(rec["transformer_kva"]),
                is_consumer=bool(rec["consumer"]),
            )
        )
    branches = []
    for rec in doc["branches"]:
        _require_fields(rec, _BRANCH_FIELDS, _BRANCH_FIELDS, "branch record")
        branches.append(
            Branch(
                from_bus=int(rec["from"]),
                to_bus=int(rec["to"]),
                g_pu=float(rec["g_pu"]),
                b_pu=float(rec["b_pu"]),
            )
        )
    net = GridNetwork(
        buses=tuple(buses),
        branches=tuple(branches),
        v_min=float(doc["v_min"]),
        v_max=float(doc["v_max"]),
        theta_min=float(doc["theta_min"]),
        theta_max=float(doc["theta_max"]),
        base_kv=float(doc["base_kv"]),
        base_kva=float(doc["base_kva"]),
        provenance=str(doc.get("provenance", "")),
    )
    problems = validate_network(net)
    if problems:
        raise NetworkError("; ".join(problems))
    return net


def serialize_network(network: GridNetwork) -> dict:
    """Inverse of :func:`load_network`; round-trips all fields."""
    doc = {
        "schema_version": NETWORK_SCHEMA_VERSION,
        "base_kv": network.base_kv,
        "base_kva": network.base_kva,
        "v_min": network.v_min,
        "v_max": network.v_max,
        "theta_min": network.theta_min,
        "theta_max": network.theta_max,
        "buses": [
            {
                "id": b.id,
                "slack": b.is_slack,
                "transformer_kva": b.transformer_kva,
                "consumer": b.is_consumer,
            }
            for b in network.buses
        ],
        "branches": [
            {"from": br.from_bus, "to": br.to_bus, "g_pu": br.g_pu, "b_pu": br.b_pu}
            for br in network.branches
        ],
    }
    if network.provenance:
        doc["provenance"] = network.provenance
    return doc


def bundled_network_path() -> Path:
    """Path of the shipped 14-bus MV benchmark data file."""
    return Path(resources.files("evgridplan").joinpath("data/cigre_mv_14bus.json"))


def load_bundled_network() -> GridNetwork:
    return load_network(bundled_network_path())


DEFAULT_THETA_LIMIT = math.pi / 6
