"""Replica placement: failure-group disjointness with latency-first ordering.

The first replica lands on the storage node geographically closest to the
data location. Every further slot is filled greedily with the storage node
that has the lowest network latency to that first replica, skipping nodes
whose failure group is already represented. Once every remaining group is
taken (fewer groups than slots), the group constraint is relaxed and the
remaining slots fill in pure latency order; the result is then flagged
``degraded`` rather than rejected, trading strict placement for
availability.

Ties anywhere break on the lexicographically smallest node id, so identical
inputs always yield identical maps.
"""

from __future__ import annotations

from dataclasses import dataclass

from .topology import Coord, Topology, find_closest, network_latency


@dataclass(frozen=True)
class ReplicaMap:
    """Ordered replica set for one key; ``replica_ids[0]`` is the anchor.

    ``degraded`` is True when the failure-group constraint had to be
    relaxed because fewer distinct storage-bearing groups exist than
    replicas requested.
    """

    key: str
    replica_ids: tuple[str, ...]
    replication_factor: int
    degraded: bool = False

    def __post_init__(self) -> None:
        if self.replication_factor < 1:
            raise ValueError("replication_factor must be >= 1")
        if len(set(self.replica_ids)) != len(self.replica_ids):
            raise ValueError("replica_ids must be distinct")

    @property
    def effective_rf(self) -> int:
        """Number of replicas actually holding the key."""
        return len(self.replica_ids)


def place_replicas(
    key: str,
    data_location: Coord,
    topology: Topology,
    replication_factor: int,
) -> ReplicaMap:
    """Choose replica nodes for ``key`` anchored near ``data_location``."""
    if replication_factor < 1:
        raise ValueError("replication_factor must be >= 1")
    anchor = find_closest(topology, data_location)
    target = min(replication_factor, len(topology.storage_ids))

    chosen = [anchor]
    used_groups = {topology.node(anchor).failure_group_id}
    remaining = [nid for nid in topology.storage_ids if nid != anchor]
    remaining.sort(key=lambda nid: (network_latency(topology, anchor, nid), nid))

    degraded = False
    while len(chosen) < target:
        pick = None
        if not degraded:
            for nid in remaining:
                if topology.node(nid).failure_group_id not in used_groups:
                    pick = nid
                    break
            if pick is None:
                degraded = True
        if degraded:
            pick = remaining[0]
        chosen.append(pick)
        used_groups.add(topology.node(pick).failure_group_id)
        remaining.remove(pick)

    return ReplicaMap(
        key=key,
        replica_ids=tuple(chosen),
        replication_factor=replication_factor,
        degraded=degraded,
    )


def placement_csv_rows(maps: list[ReplicaMap]) -> list[str]:
    """Render replica maps as ``key,replica1,...,replicaN,degraded`` rows."""
    return [
        ",".join([m.key, *m.replica_ids, "degraded" if m.degraded else "ok"])
        for m in maps
    ]
