from typing import List, Optional, Sequence, Tuple

import numpy as np
import pytest

from emir.design import serialize_generator_config
from emir.generator import centred_bump_origin, generate_design
from emir.schemas import (
    C4Array,
    CellInstance,
    DatasetRow,
    Design,
    DesignConfig,
    DieBox,
    GeneratorConfig,
    RoutingCapMap,
    default_layers,
)


def tiny_config(**overrides) -> GeneratorConfig:
    """60x60 die, 144 windows; solves in milliseconds."""
    params = dict(die_width=60.0, die_height=60.0, c4_pitch=20.0, hot_clusters=2, cluster_sigma=10.0)
    params.update(overrides)
    return GeneratorConfig(**params)


def make_design(
    size: float = 200.0,
    pitch: float = 50.0,
    origin: Optional[Tuple[float, float]] = None,
    cells: Sequence[CellInstance] = (),
    cap: float = 0.0,
    **config,
) -> Design:
    die = DieBox(x0=0.0, y0=0.0, x1=size, y1=size)
    tiles = int(size / 5.0)
    return Design(
        die=die,
        config=DesignConfig(**config),
        layers=default_layers(),
        c4=C4Array(pitch=pitch, origin=origin or centred_bump_origin(die, pitch)),
        cells=list(cells),
        cap_map=RoutingCapMap(tile_size=5.0, values=[[cap] * tiles for _ in range(tiles)]),
    )


def make_rows(
    X: np.ndarray,
    ir: Sequence[int],
    em: Optional[Sequence[int]] = None,
    window_class: str = "continuous",
    design_id: str = "d0",
) -> List[DatasetRow]:
    em = [0] * len(ir) if em is None else em
    return [
        DatasetRow(
            design_id=design_id,
            window=(i, 0),
            window_class=window_class,
            features=[float(v) for v in x],
            label_ir=int(a),
            label_em=int(b),
        )
        for i, (x, a, b) in enumerate(zip(X, ir, em))
    ]


@pytest.fixture(scope="session")
def tiny_design() -> Design:
    return generate_design(tiny_config(), seed=3)


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "gen.json"
    path.write_text(serialize_generator_config(tiny_config()), encoding="utf-8")
    return path
