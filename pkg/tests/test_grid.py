import numpy as np
import pytest

from emir.errors import SolverError
from emir.grid import VIA, WIRE, build_grid, stripe_positions
from emir.schemas import C4Array, CellInstance, Design, DesignConfig, DieBox, LayerSpec, RoutingCapMap


def two_layer_design(cells=(), c4_origin=(-100.0, -100.0)) -> Design:
    """One layer-1 stripe at y=2 crossing layer-2 stripes at x=0 and x=10."""
    return Design(
        die=DieBox(x0=0.0, y0=0.0, x1=10.0, y1=4.0),
        config=DesignConfig(),
        layers=[
            LayerSpec(index=1, direction="horizontal", width=1.0, pitch=5.0, offset=2.0,
                      sheet_resistance=0.05, thickness=0.1, via_resistance_to_above=1.0),
            LayerSpec(index=2, direction="vertical", width=1.0, pitch=10.0, offset=0.0,
                      sheet_resistance=0.05, thickness=0.1),
        ],
        c4=C4Array(pitch=100.0, origin=c4_origin),
        cells=list(cells),
        cap_map=RoutingCapMap(tile_size=2.0, values=[[0.0] * 5 for _ in range(2)]),
    )


def test_stripe_positions_are_die_relative():
    layer = LayerSpec(index=1, direction="vertical", width=0.3, pitch=5.0, offset=2.5,
                      sheet_resistance=0.1, thickness=0.1)
    die = DieBox(x0=100.0, y0=0.0, x1=120.0, y1=10.0)
    assert stripe_positions(layer, die).tolist() == [102.5, 107.5, 112.5, 117.5]


def test_single_crossing_pair():
    grid = build_grid(two_layer_design())
    positions = {(x, y) for _, x, y in grid.nodes()}
    assert positions == {(0.0, 2.0), (10.0, 2.0)}
    kinds = grid.branch_kind
    layer1_wires = (kinds == WIRE) & (grid.branch_layer == 1)
    assert int(layer1_wires.sum()) == 1
    assert int((kinds == VIA).sum()) == 2
    assert int((kinds == WIRE).sum()) == 1


def test_wire_resistance_is_sheet_times_squares():
    grid = build_grid(two_layer_design())
    wire = np.flatnonzero(grid.wire_mask)[0]
    assert grid.branch_resistance[wire] == pytest.approx(0.5)
    assert grid.branch_area[wire] == pytest.approx(0.1)


def test_bump_pins_a_top_layer_node():
    grid = build_grid(two_layer_design())
    assert grid.dirichlet.size == 1
    assert grid.node_layer[grid.dirichlet[0]] == 2
    assert not grid.floating.any()


def test_cell_hangs_on_nearest_layer1_node():
    cell = CellInstance(id="a", x=7.0, y=1.0, width=1.0, height=2.0, power=1e-3)
    grid = build_grid(two_layer_design(cells=[cell]))
    node = grid.cell_node[0]
    assert (grid.node_layer[node], grid.node_x[node], grid.node_y[node]) == (1, 10.0, 2.0)


def test_no_bump_with_load_is_floating():
    cell = CellInstance(id="a", x=4.0, y=1.0, width=1.0, height=2.0, power=1e-3)
    with pytest.raises(SolverError) as err:
        build_grid(two_layer_design(cells=[cell], c4_origin=(-50.0, -50.0)))
    assert err.value.code == "FLOATING_NETWORK"


def test_structural_violation_refused():
    design = two_layer_design()
    layers = [design.layers[0], design.layers[1].model_copy(update={"direction": "horizontal"})]
    with pytest.raises(SolverError) as err:
        build_grid(design.model_copy(update={"layers": layers}))
    assert err.value.code == "INVALID_DESIGN"


def test_layer_without_stripes_is_refused_not_crashed(tiny_design):
    layers = list(tiny_design.layers)
    layers[3] = layers[3].model_copy(update={"pitch": 300.0, "offset": 250.0})
    with pytest.raises(SolverError) as err:
        build_grid(tiny_design.model_copy(update={"layers": layers}))
    assert err.value.code == "INVALID_DESIGN"
    assert "LAYER_NO_STRIPES" in str(err.value)


def test_bump_resistance_adds_pad_branch():
    design = two_layer_design()
    design = design.model_copy(update={"c4": design.c4.model_copy(update={"bump_resistance": 0.01})})
    grid = build_grid(design)
    pad = grid.dirichlet[0]
    assert grid.node_layer[pad] == 3
    assert grid.branch_resistance[-1] == pytest.approx(0.01)


def test_zero_ohm_vias_merge_layers(tiny_design):
    layers = [layer.model_copy(update={"via_resistance_to_above": 0.0}) for layer in tiny_design.layers]
    merged = build_grid(tiny_design.model_copy(update={"layers": layers}))
    full = build_grid(tiny_design)
    assert merged.node_count < full.node_count
    assert not (merged.branch_kind == VIA).any()


def test_generated_grid_is_connected(tiny_design):
    grid = build_grid(tiny_design)
    assert not grid.floating.any()
    assert grid.cell_node.size == len(tiny_design.cells)
