import numpy as np
import pytest

from emir.design import bump_matrix, translate_design
from emir.errors import FeatureError
from emir.schemas import CellInstance, EmViolation, IrViolation, ViolationSet
from emir.solver import signoff
from emir.windows import (
    GridMeta,
    build_dataset,
    bump_displacements,
    dataset_header,
    dataset_to_jsonl,
    extract_features,
    label_window,
    parse_dataset,
    power_density_grid,
    read_dataset,
    tile_windows,
    window_capacitance,
    write_dataset,
)

from .conftest import make_design


def window(design, wid):
    return next(w for w in tile_windows(design) if w.id == wid)


def test_window_counts_on_200um_die():
    windows = tile_windows(make_design())
    assert len(windows) == 1600
    continuous = [w for w in windows if w.dataset_class == "continuous"]
    assert len(continuous) == 1296
    assert len(windows) - len(continuous) == 304


def test_window_classes():
    design = make_design()
    assert window(design, (0, 0)).window_class == "corner"
    assert window(design, (0, 20)).window_class == "boundary"
    assert window(design, (1, 1)).window_class == "corner"
    assert window(design, (2, 2)).window_class == "continuous"


def test_clipped_tile_is_boundary():
    design = make_design(size=202.0, pitch=50.0)
    last = window(design, (20, 40))
    assert last.clipped
    assert last.bbox[2] == 202.0
    assert last.window_class == "boundary"


def test_feature_lengths():
    design = make_design()
    assert len(extract_features(design, window(design, (20, 20)))) == 231
    assert len(extract_features(design, window(design, (0, 0)))) == 235
    assert dataset_header(design, "continuous").dimension == 231
    assert dataset_header(design, "discontinuous").dimension == 235


def test_grid_features_lead_the_vector():
    design = make_design()
    fv = extract_features(design, window(design, (20, 20)))
    expected = [v for layer in design.layers for v in (layer.width, layer.pitch, layer.offset)]
    assert fv[:12] == expected


def test_single_cell_fills_one_pd_bin():
    # cover of window (20, 20) starts at (92.5, 92.5); bin (1, 1) is x 93.5-94.5, y 94.5-96.5
    cell = CellInstance(id="a", x=93.5, y=94.5, width=1.0, height=2.0, power=2e-6)
    design = make_design(cells=[cell])
    w = window(design, (20, 20))
    pd = power_density_grid(GridMeta(design), w.cover_bbox)
    assert pd.shape == (20, 10)
    assert pd[1, 1] == pytest.approx(1e-6)
    pd[1, 1] = 0.0
    assert not pd.any()
    fv = extract_features(design, w)
    assert fv[12 + 1 * 10 + 1] == pytest.approx(1e-6)


def test_cell_straddling_bins_splits_power():
    cell = CellInstance(id="a", x=94.0, y=94.5, width=1.0, height=2.0, power=2e-6)
    design = make_design(cells=[cell])
    pd = power_density_grid(GridMeta(design), window(design, (20, 20)).cover_bbox)
    assert pd[1, 1] == pytest.approx(0.5e-6)
    assert pd[2, 1] == pytest.approx(0.5e-6)


def test_pd_conserves_power_inside_cover(tiny_design):
    meta = GridMeta(tiny_design)
    cfg = tiny_design.config
    for w in tile_windows(tiny_design):
        if w.window_class != "continuous":
            continue
        x0, y0, x1, y1 = w.cover_bbox
        expected = 0.0
        for c in tiny_design.cells:
            ox = max(0.0, min(c.x + c.width, x1) - max(c.x, x0))
            oy = max(0.0, min(c.y + c.height, y1) - max(c.y, y0))
            expected += c.power * ox * oy / (c.width * c.height)
        total = power_density_grid(meta, w.cover_bbox).sum() * cfg.unit_inverter_width * cfg.row_height
        assert total == pytest.approx(expected, rel=1e-9, abs=1e-18)


def test_bump_matrix_centred_on_a_bump():
    design = make_design(pitch=100.0, origin=(-97.5, -97.5))
    fv = extract_features(design, window(design, (20, 20)))
    bumps = np.array(fv[-18:]).reshape(9, 2)
    assert bumps[4].tolist() == [0.0, 0.0]
    assert bumps[0].tolist() == [-100.0, -100.0]
    assert bumps[8].tolist() == [100.0, 100.0]
    assert bumps[2].tolist() == [100.0, -100.0]
    assert bumps[6].tolist() == [-100.0, 100.0]


def test_missing_bump_matrix():
    design = make_design(pitch=100.0, origin=(-97.5, -97.5))
    with pytest.raises(FeatureError) as err:
        extract_features(design, window(design, (39, 39)))
    assert err.value.code == "MISSING_BUMP_MATRIX"


def test_cached_bump_lattice_matches_bump_matrix():
    design = make_design(pitch=50.0)
    meta = GridMeta(design)
    assert (meta.bump_x.size, meta.bump_y.size) == design.c4.lattice_counts(design.die)
    for wid in [(20, 20), (3, 17), (36, 1)]:
        w = window(design, wid)
        cx, cy = w.cover_center
        expected = [v for bx, by in bump_matrix(design.c4, design.die, cx, cy) for v in (bx - cx, by - cy)]
        assert bump_displacements(meta, w).tolist() == expected


def test_empty_window_keeps_grid_features():
    design = make_design()
    fv = extract_features(design, window(design, (20, 20)))
    assert fv[12:12 + 200] == [0.0] * 200
    assert fv[212] == 0.0


def test_capacitance_sums_tiles_under_the_window():
    design = make_design(cap=1.5)
    meta = GridMeta(design)
    assert window_capacitance(meta, window(design, (20, 20)).bbox) == pytest.approx(1.5)
    # half a tile
    assert window_capacitance(meta, (100.0, 100.0, 102.5, 105.0)) == pytest.approx(0.75)


def test_corner_features_prepend_die_corners():
    design = make_design()
    w = window(design, (0, 1))
    fv = extract_features(design, w)
    assert fv[:4] == [-5.0, 0.0, 195.0, 200.0]


def test_translation_by_one_pitch_keeps_continuous_features(tiny_design):
    moved = translate_design(tiny_design, tiny_design.c4.pitch, tiny_design.c4.pitch)
    a_meta, b_meta = GridMeta(tiny_design), GridMeta(moved)
    for a, b in zip(tile_windows(tiny_design), tile_windows(moved)):
        assert a.id == b.id
        if a.window_class == "continuous":
            assert extract_features(tiny_design, a, a_meta) == extract_features(moved, b, b_meta)


def test_labels_follow_cell_centre():
    cell = CellInstance(id="a", x=12.0, y=6.5, width=1.0, height=2.0, power=1e-3)
    design = make_design(cells=[cell])
    found = ViolationSet(ir_violations=[IrViolation(cell="a", drop=0.2)])
    assert label_window(window(design, (1, 2)), found, design) == (1, 0)
    assert label_window(window(design, (1, 1)), found, design) == (0, 0)


def test_labels_are_half_open():
    design = make_design()
    found = ViolationSet(em_violations=[
        EmViolation(branch=0, layer=2, x0=15.0, y0=6.0, x1=15.0, y1=8.0, current=1e-3, density=0.1),
    ])
    assert label_window(window(design, (1, 2)), found, design) == (0, 0)
    assert label_window(window(design, (1, 3)), found, design) == (0, 1)


def test_no_violations_no_labels():
    design = make_design()
    rows = build_dataset(design, ViolationSet())
    assert len(rows["continuous"]) == 1296
    assert len(rows["discontinuous"]) == 304
    assert not any(r.label_ir or r.label_em for cls in rows.values() for r in cls)


def test_unknown_violating_cell():
    design = make_design()
    with pytest.raises(FeatureError) as err:
        build_dataset(design, ViolationSet(ir_violations=[IrViolation(cell="ghost", drop=0.5)]))
    assert err.value.code == "ALIGNMENT_ERROR"


def test_dataset_labels_match_golden(tiny_design):
    golden = signoff(tiny_design)
    rows = build_dataset(tiny_design, golden.violations())
    flagged = sum(r.label_ir for cls in rows.values() for r in cls)
    assert 0 < flagged <= len(golden.ir)
    assert len(rows["continuous"]) == 64
    assert len(rows["discontinuous"]) == 80


def test_dataset_file_round_trip(tiny_design, tmp_path):
    rows = build_dataset(tiny_design, ViolationSet())["continuous"]
    header = dataset_header(tiny_design, "continuous")
    path = write_dataset(tmp_path / "continuous.jsonl", header, rows)
    assert path.read_text(encoding="utf-8").startswith('{"header"')
    again_header, again = read_dataset(path)
    assert again_header == header
    assert again == rows


def test_dataset_dimension_checked(tiny_design):
    rows = build_dataset(tiny_design, ViolationSet())["continuous"]
    wrong = dataset_header(tiny_design, "discontinuous")
    with pytest.raises(FeatureError) as err:
        parse_dataset(dataset_to_jsonl(wrong, rows))
    assert err.value.code == "DIMENSION_MISMATCH"


def test_dataset_header_required():
    with pytest.raises(FeatureError) as err:
        parse_dataset('{"design_id": "x"}\n')
    assert err.value.code == "PARSE_ERROR"
