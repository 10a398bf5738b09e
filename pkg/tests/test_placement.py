import random

import pytest

from fogstore_sim.experiment import build_star_topology
from fogstore_sim.placement import ReplicaMap, place_replicas, placement_csv_rows
from fogstore_sim.topology import FogNode, Link, Topology, network_latency

from conftest import (
    STAR_CLIENT,
    brute_force_closest,
    disjoint_selection_exists,
    random_topology,
)


def make_two_group_star():
    # anchor A with B in the same failure group and C in another; latencies
    # from A: B at 2 ms, C at 3 ms
    nodes = [
        FogNode("A", (0, 0), "g1"),
        FogNode("B", (10, 0), "g1"),
        FogNode("C", (20, 0), "g2"),
    ]
    links = [Link("A", "B", 2.0), Link("A", "C", 3.0)]
    return Topology(nodes, links)


class TestPlaceReplicas:
    def test_rf_one_is_just_the_closest(self):
        topo = make_two_group_star()
        rmap = place_replicas("k", (0, 0), topo, 1)
        assert rmap.replica_ids == ("A",)
        assert not rmap.degraded

    def test_same_group_neighbor_skipped(self):
        topo = make_two_group_star()
        rmap = place_replicas("k", (0, 0), topo, 2)
        assert rmap.replica_ids == ("A", "C")  # B shares A's group
        assert not rmap.degraded

    def test_star_rf5_uses_all_nodes_latency_ordered(self):
        topo = build_star_topology((4, 5, 6, 7, 8))
        rmap = place_replicas("k", STAR_CLIENT, topo, 5)
        assert rmap.replica_ids == ("fog-1", "fog-2", "fog-3", "fog-4", "fog-5")
        assert not rmap.degraded

    def test_degraded_when_groups_run_out(self):
        topo = make_two_group_star()
        rmap = place_replicas("k", (0, 0), topo, 3)
        assert rmap.replica_ids == ("A", "C", "B")  # C first (new group), then relax
        assert rmap.degraded

    def test_rf_capped_by_storage_count(self):
        topo = make_two_group_star()
        rmap = place_replicas("k", (0, 0), topo, 10)
        assert len(rmap.replica_ids) == 3
        assert rmap.effective_rf == 3

    def test_rf_must_be_positive(self):
        with pytest.raises(ValueError):
            place_replicas("k", (0, 0), make_two_group_star(), 0)

    def test_replica_map_rejects_duplicates(self):
        with pytest.raises(ValueError):
            ReplicaMap("k", ("a", "a"), 2)


class TestPlacementProperties:
    def test_properties_over_random_topologies(self):
        rng = random.Random(4242)
        for seed in range(200):
            topo = random_topology(seed)
            rf = rng.randint(1, 5)
            location = (rng.uniform(0, 1000), rng.uniform(0, 1000))
            rmap = place_replicas("k", location, topo, rf)
            target = min(rf, len(topo.storage_ids))

            assert len(rmap.replica_ids) == target
            assert len(set(rmap.replica_ids)) == target
            assert rmap.replica_ids[0] == brute_force_closest(topo, location)

            groups = {topo.node(n).failure_group_id for n in rmap.replica_ids}
            storage_groups = {topo.node(n).failure_group_id for n in topo.storage_ids}
            if len(storage_groups) >= rf:
                assert len(groups) == target, "groups must be pairwise distinct"
            # degraded exactly when no same-cardinality disjoint selection exists
            assert rmap.degraded == (
                not disjoint_selection_exists(topo, rmap.replica_ids[0], target)
            )

            again = place_replicas("k", location, topo, rf)
            assert again == rmap

    def test_second_replica_has_minimal_latency_among_eligible(self):
        for seed in range(80):
            topo = random_topology(seed, min_storage=2)
            rmap = place_replicas("k", (500, 500), topo, 3)
            if len(rmap.replica_ids) < 2:
                continue
            anchor = rmap.replica_ids[0]
            anchor_group = topo.node(anchor).failure_group_id
            eligible = [
                nid for nid in topo.storage_ids
                if nid != anchor and topo.node(nid).failure_group_id != anchor_group
            ]
            if not eligible:
                eligible = [nid for nid in topo.storage_ids if nid != anchor]
            best = min(eligible, key=lambda nid: (network_latency(topo, anchor, nid), nid))
            assert rmap.replica_ids[1] == best


class TestPlacementCsv:
    def test_rows(self):
        topo = make_two_group_star()
        rows = placement_csv_rows([
            place_replicas("k1", (0, 0), topo, 2),
            place_replicas("k2", (0, 0), topo, 3),
        ])
        assert rows == ["k1,A,C,ok", "k2,A,C,B,degraded"]
