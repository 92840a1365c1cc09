import pytest
from hypothesis import given
from hypothesis import strategies as st

from occam import fixture_path
from occam.cluster import (
    ApplianceKind,
    Inventory,
    LinkKind,
    NetworkLink,
    NodeClass,
    NodeSpec,
    ResourceVector,
    SpeedMode,
    StorageAppliance,
    Topology,
    capacity,
    default_inventory,
    inventory_from_json,
    inventory_to_json,
    node_speed,
)


def test_default_inventory_counts():
    inv = default_inventory()
    assert len(inv.nodes) == 40
    assert len(inv.nodes_of(NodeClass.LIGHT)) == 32
    assert len(inv.nodes_of(NodeClass.FAT)) == 4
    assert len(inv.nodes_of(NodeClass.GPU)) == 4


def test_default_inventory_node_shapes():
    inv = default_inventory()
    light = inv.node("L01")
    assert (light.logical_cores, light.memory_mib, light.gpus) == (48, 131072, 0)
    fat = inv.node("F01")
    assert (fat.logical_cores, fat.memory_mib) == (96, 786432)
    gpu = inv.node("G01")
    assert (gpu.logical_cores, gpu.memory_mib, gpu.gpus) == (48, 131072, 2)


def test_default_inventory_storage_caps():
    inv = default_inventory()
    assert inv.scratch.read_cap_kibps == 2026246
    assert inv.scratch.write_cap_kibps == 2025983
    assert inv.scratch.capacity_tb == 256
    assert inv.archive.read_cap_kibps == 39314
    assert inv.archive.write_cap_kibps == 39314
    assert inv.archive.capacity_tb == 768
    assert inv.scratch.metadata_rate_ops_per_s is None


def test_default_inventory_links():
    inv = default_inventory()
    ib = inv.link(LinkKind.INFINIBAND)
    assert ib.bandwidth_gbps == 56.0
    assert ib.topology is Topology.NONBLOCKING_FAT_TREE
    assert inv.link(LinkKind.ETH10).bandwidth_gbps == 10.0
    assert inv.link(LinkKind.ETH1).topology is Topology.FLAT


def test_node_speed_values():
    assert node_speed(NodeClass.FAT, SpeedMode.PER_NODE) == 825.6
    assert node_speed(NodeClass.LIGHT, SpeedMode.PER_NODE) == 549.7
    assert node_speed(NodeClass.LIGHT, SpeedMode.PER_LOGICAL_CORE) == pytest.approx(11.452, abs=1e-3)
    # gpu nodes carry the same CPUs as light nodes
    assert node_speed(NodeClass.GPU, SpeedMode.PER_NODE) == 549.7


@pytest.mark.parametrize("node_class", list(NodeClass))
def test_per_core_times_cores_is_per_node(node_class):
    inv = default_inventory()
    node = inv.nodes_of(node_class)[0]
    per_core = node_speed(node_class, SpeedMode.PER_LOGICAL_CORE)
    assert per_core * node.logical_cores == pytest.approx(node_speed(node_class), abs=1e-9)


def test_capacity_examples():
    inv = default_inventory()
    assert capacity(inv.node("L01")) == ResourceVector(48000, 131072, 0)
    assert capacity(inv.node("G01")) == ResourceVector(48000, 131072, 2)
    assert capacity(inv.node("F02")).gpus == 0


def test_capacity_nonnegative_everywhere():
    inv = default_inventory()
    for node in inv.nodes:
        assert capacity(node) >= ResourceVector(0, 0, 0)


def test_default_inventory_is_pure():
    assert default_inventory() == default_inventory()


def test_node_invariants_enforced():
    with pytest.raises(ValueError):
        NodeSpec("X01", NodeClass.LIGHT, 24, 50, 131072, 0, 400, 549.7)
    with pytest.raises(ValueError):
        NodeSpec("X01", NodeClass.LIGHT, 24, 48, 131072, 1, 400, 549.7)
    with pytest.raises(ValueError):
        NodeSpec("X01", NodeClass.FAT, 48, 96, 786432, 2, 800, 825.6)
    with pytest.raises(ValueError):
        NodeSpec("X01", NodeClass.LIGHT, 24, 48, 131072, 0, 400, 0.0)


def test_link_invariants_enforced():
    with pytest.raises(ValueError):
        NetworkLink(LinkKind.INFINIBAND, 40.0, Topology.NONBLOCKING_FAT_TREE)
    with pytest.raises(ValueError):
        NetworkLink(LinkKind.ETH10, 10.0, Topology.NONBLOCKING_FAT_TREE)


def test_archive_has_no_metadata_rate():
    with pytest.raises(ValueError):
        StorageAppliance(ApplianceKind.ARCHIVE, 768, 39314, 39314, metadata_rate_ops_per_s=1.0)


def test_inventory_rejects_duplicate_ids():
    inv = default_inventory()
    with pytest.raises(ValueError):
        Inventory(nodes=[inv.node("L01"), inv.node("L01")], links=inv.links, storage=inv.storage)


def test_inventory_json_round_trip():
    inv = default_inventory()
    assert inventory_from_json(inventory_to_json(inv)) == inv


def test_shipped_inventory_fixture_matches_default():
    text = fixture_path("inventory.json").read_text()
    assert inventory_from_json(text) == default_inventory()


rv = st.builds(
    ResourceVector,
    millicores=st.integers(0, 10**6),
    memory_mib=st.integers(0, 10**7),
    gpus=st.integers(0, 8),
)


@given(rv, rv)
def test_vector_partial_order(a, b):
    assert (a <= b) == (
        a.millicores <= b.millicores and a.memory_mib <= b.memory_mib and a.gpus <= b.gpus
    )
    assert a <= a + b
    assert (a + b) - b == a


@given(st.integers(-100, -1))
def test_vector_rejects_negative(n):
    with pytest.raises(ValueError):
        ResourceVector(millicores=n)
