import numpy as np
import pytest

from emir.errors import EvaluationError
from emir.evaluation import (
    best_kind,
    class_scores,
    column_percent,
    compare_models,
    confusion,
    evaluate,
    format_percent,
    render_accuracy_table,
    report_column,
    split_dataset,
)
from emir.schemas import ComparisonCell, ComparisonReport, ConfusionCounts, DatasetRow, PredictionRow, SeedScore

from .conftest import make_rows


def labelled(n, counts, start=0):
    """(labels, predictions) with the given tp/fp/fn laid out from ``start``."""
    tp, fp, fn = counts
    y = np.zeros(n, dtype=int)
    p = np.zeros(n, dtype=int)
    y[start:start + tp] = p[start:start + tp] = 1
    p[start + tp:start + tp + fp] = 1
    y[start + tp + fp:start + tp + fp + fn] = 1
    return y, p


def window_set(n, col, window_class, ir, em):
    (y_ir, p_ir), (y_em, p_em) = ir, em
    rows, preds = [], []
    for i in range(n):
        rows.append(DatasetRow(design_id="d", window=(i, col), window_class=window_class,
                               features=[0.0], label_ir=int(y_ir[i]), label_em=int(y_em[i])))
        for target, p in (("ir", p_ir), ("em", p_em)):
            preds.append(PredictionRow(design_id="d", window=(i, col), window_class=window_class,
                                       target=target, kind="knn", label=int(p[i]), score=float(p[i])))
    return rows, preds


@pytest.fixture
def accuracy_inputs():
    cont_rows, cont_preds = window_set(
        1296, 0, "continuous", labelled(1296, (401, 10, 26)), labelled(1296, (41, 3, 17), start=600),
    )
    disc_rows, disc_preds = window_set(
        304, 1, "boundary", labelled(304, (12, 3, 2)), labelled(304, (0, 0, 0)),
    )
    return cont_rows + disc_rows, cont_preds + disc_preds


def test_accuracy_table_arithmetic(accuracy_inputs):
    rows, preds = accuracy_inputs
    report = evaluate(preds, rows)
    cont, disc = report.columns
    assert (cont.signoff_ir, cont.signoff_em, cont.flagged_ir, cont.flagged_em, cont.false_positives) == (427, 58, 411, 44, 13)
    assert (disc.signoff_ir, disc.signoff_em, disc.flagged_ir, disc.flagged_em, disc.false_positives) == (14, 0, 15, 0, 3)
    assert column_percent(cont) == "91.13%"
    assert column_percent(disc) == "85.71%"
    assert cont.prediction_accuracy == pytest.approx(442 / 485)
    assert (cont.windows, disc.windows) == (1296, 304)


def test_accuracy_table_text(accuracy_inputs):
    rows, preds = accuracy_inputs
    text = render_accuracy_table(evaluate(preds, rows, kind="knn"))
    for label in ("# Analysis windows", "# IR violations", "# EM violations", "# False positive", "Prediction accuracy"):
        assert label in text
    assert "91.13%" in text
    assert "85.71%" in text
    assert "(knn)" in text.splitlines()[0]
    assert "\x1b[" not in text


def test_column_from_counts():
    ir = ConfusionCounts(tp=12, fp=3, fn=2, tn=287)
    em = ConfusionCounts(tn=304)
    column = report_column("discontinuous", 304, ir, em)
    assert column_percent(column) == "85.71%"
    assert column.metrics[0].precision == pytest.approx(0.8)


def test_percent_rounds_half_up():
    assert format_percent(1, 800) == "0.13%"
    assert format_percent(1, 3) == "33.33%"
    assert format_percent(0, 0) == "N/A"


def test_perfect_predictions():
    y = np.array([1, 0, 0, 1, 0])
    rows, preds = window_set(5, 0, "continuous", (y, y), (y, y))
    column = evaluate(preds, rows).columns[0]
    assert column.false_positives == 0
    assert column.prediction_accuracy == 1.0
    for m in column.metrics:
        assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)


def test_no_signoff_violations_is_null_accuracy():
    zero = np.zeros(4, dtype=int)
    rows, preds = window_set(4, 0, "continuous", (zero, zero), (zero, zero))
    column = evaluate(preds, rows).columns[0]
    assert column.prediction_accuracy is None
    assert column_percent(column) == "N/A"


def test_metric_identities():
    c = confusion([1, 1, 0, 0, 1, 0], [1, 0, 1, 0, 1, 0])
    assert (c.tp, c.fp, c.fn, c.tn) == (2, 1, 1, 2)
    assert c.recall == pytest.approx(2 / 3)
    assert c.precision == pytest.approx(2 / 3)
    assert c.f1 == pytest.approx(2 * c.precision * c.recall / (c.precision + c.recall))
    assert c.total == 6


def test_duplicate_prediction_misaligned(accuracy_inputs):
    rows, preds = accuracy_inputs
    with pytest.raises(EvaluationError) as err:
        evaluate(preds + preds[:1], rows)
    assert err.value.code == "ALIGNMENT_ERROR"


def test_missing_prediction_misaligned(accuracy_inputs):
    rows, preds = accuracy_inputs
    with pytest.raises(EvaluationError) as err:
        evaluate(preds[1:], rows)
    assert err.value.code == "ALIGNMENT_ERROR"


def test_orphan_prediction_misaligned(accuracy_inputs):
    rows, preds = accuracy_inputs
    stray = preds[0].model_copy(update={"window": (9999, 9)})
    with pytest.raises(EvaluationError) as err:
        evaluate(preds + [stray], rows)
    assert err.value.code == "ALIGNMENT_ERROR"


# ---------- split ----------

def hundred_rows():
    y = np.zeros(100, dtype=int)
    y[::10] = 1
    return make_rows(np.arange(100.0)[:, None], y)


def test_split_is_stratified():
    train, test = split_dataset(hundred_rows(), 0.2, seed=0)
    assert len(test) == 20
    assert sum(r.label_ir for r in test) == 2
    assert len(train) == 80


def test_split_is_a_deterministic_partition():
    rows = hundred_rows()
    a = split_dataset(rows, 0.2, seed=5)
    b = split_dataset(rows, 0.2, seed=5)
    assert a == b
    train, test = a
    ids = sorted([r.window for r in train] + [r.window for r in test])
    assert ids == sorted(r.window for r in rows)
    assert not {r.window for r in train} & {r.window for r in test}


def test_split_rounds_test_size_down():
    rows = make_rows(np.arange(3.0)[:, None], [0, 1, 0])
    train, test = split_dataset(rows, 0.5, seed=1)
    assert (len(train), len(test)) == (2, 1)


@pytest.mark.parametrize("seed", range(10))
def test_split_stratified_within_one_row(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 200))
    y = (rng.random(n) < rng.uniform(0.05, 0.5)).astype(int)
    rows = make_rows(rng.normal(size=(n, 2)), y)
    fraction = float(rng.uniform(0.1, 0.5))
    _, test = split_dataset(rows, fraction, seed)
    expected = len(test) * y.sum() / n
    assert abs(sum(r.label_ir for r in test) - expected) <= 1


def test_split_errors():
    with pytest.raises(EvaluationError) as err:
        split_dataset(hundred_rows()[:1], 0.2, seed=0)
    assert err.value.code == "EMPTY_DATASET"
    with pytest.raises(EvaluationError) as err:
        split_dataset(hundred_rows(), 1.0, seed=0)
    assert err.value.code == "INVALID_SPLIT"


# ---------- comparison ----------

OVERRIDES = {"forest": {"n_trees": 5, "max_depth": 4}, "mlp": {"hidden": 8, "epochs": 20}}


def class_sets(seed, em_positive=True):
    rng = np.random.default_rng(seed)
    out = {}
    for window_class, name in (("continuous", "continuous"), ("discontinuous", "corner")):
        n = 60
        ir = (np.arange(n) % 4 == 0).astype(int)
        em = (np.arange(n) % 5 == 0).astype(int) if em_positive else np.zeros(n, dtype=int)
        X = rng.normal(size=(n, 3)) + ir[:, None]
        out[window_class] = make_rows(X, ir, em=em, window_class=name)
    return out


def halves(sets):
    train = {k: v[:40] for k, v in sets.items()}
    test = {k: v[40:] for k, v in sets.items()}
    return train, test


def test_comparison_has_twelve_cells():
    train, test = halves(class_sets(0))
    report = compare_models(train, test, seeds=[0], overrides=OVERRIDES)
    assert len(report.cells) == 12
    assert {(c.window_class, c.target, c.kind) for c in report.cells} == {
        (w, t, k) for w in ("continuous", "discontinuous") for t in ("ir", "em") for k in ("knn", "forest", "mlp")
    }
    assert all(c.status == "scored" for c in report.cells)
    assert sorted(report.rankings["continuous/ir"]) == ["forest", "knn", "mlp"]
    assert set(report.observations) == {"knn_best_on_continuous", "mlp_ge_forest_on_discontinuous"}


def test_all_zero_target_is_degenerate():
    train, test = halves(class_sets(1, em_positive=False))
    report = compare_models(train, test, seeds=[0], overrides=OVERRIDES)
    em_cells = [c for c in report.cells if c.target == "em"]
    assert len(em_cells) == 6
    assert all(c.status == "DEGENERATE" and c.mean_accuracy is None for c in em_cells)
    assert report.rankings["continuous/em"] == []


def test_comparison_is_deterministic():
    train, test = halves(class_sets(2))
    a = compare_models(train, test, seeds=[0, 1], overrides=OVERRIDES)
    b = compare_models(train, test, seeds=[0, 1], overrides=OVERRIDES)
    assert a.model_dump_json() == b.model_dump_json()


def scored_cell(window_class, target, kind, tp, fp, fn):
    counts = ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=100)
    score = SeedScore(seed=0, prediction_accuracy=tp / (tp + fn), precision=counts.precision,
                      recall=counts.recall, f1=counts.f1, counts=counts)
    return ComparisonCell(window_class=window_class, target=target, kind=kind, status="scored",
                          mean_accuracy=score.prediction_accuracy, mean_f1=counts.f1 or 0.0, per_seed=[score])


def comparison(*cells):
    return ComparisonReport(seeds=[0], targets=["ir", "em"], rankings={}, observations={}, cells=list(cells))


def test_best_kind_pools_targets():
    report = comparison(
        scored_cell("continuous", "ir", "knn", tp=9, fp=0, fn=1), scored_cell("continuous", "em", "knn", tp=1, fp=0, fn=9),
        scored_cell("continuous", "ir", "mlp", tp=7, fp=0, fn=3), scored_cell("continuous", "em", "mlp", tp=8, fp=0, fn=2),
        scored_cell("discontinuous", "ir", "forest", tp=6, fp=0, fn=4), scored_cell("discontinuous", "ir", "mlp", tp=6, fp=0, fn=4),
        ComparisonCell(window_class="discontinuous", target="em", kind="knn", status="DEGENERATE"),
    )
    assert best_kind(report, "continuous") == "mlp"
    assert best_kind(report, "discontinuous") == "forest"


def test_best_kind_breaks_equal_accuracy_on_false_positives():
    # equal recall on both targets; mlp pays 4 false positives for it
    report = comparison(
        scored_cell("continuous", "ir", "forest", tp=22, fp=0, fn=2), scored_cell("continuous", "em", "forest", tp=4, fp=0, fn=2),
        scored_cell("continuous", "ir", "mlp", tp=22, fp=4, fn=2), scored_cell("continuous", "em", "mlp", tp=4, fp=0, fn=2),
    )
    assert best_kind(report, "continuous") == "forest"


def test_best_kind_prefers_kinds_within_the_fp_budget():
    # mlp recalls more but 12 of its 39 flags are false
    report = comparison(
        scored_cell("continuous", "ir", "mlp", tp=22, fp=8, fn=2), scored_cell("continuous", "em", "mlp", tp=5, fp=4, fn=1),
        scored_cell("continuous", "ir", "forest", tp=21, fp=1, fn=3), scored_cell("continuous", "em", "forest", tp=4, fp=0, fn=2),
    )
    scores = {s.kind: s for s in class_scores(report.cells)}
    assert scores["mlp"].mean_false_positives == 12
    assert scores["mlp"].mean_flagged == 39
    assert not scores["mlp"].within_fp_budget
    assert scores["forest"].within_fp_budget
    assert best_kind(report, "continuous") == "forest"


def test_comparison_ranks_each_class_on_pooled_scores():
    train, test = halves(class_sets(0))
    report = compare_models(train, test, seeds=[0], overrides=OVERRIDES)
    assert sorted(report.rankings["continuous"]) == ["forest", "knn", "mlp"]
    assert {(s.window_class, s.kind) for s in report.class_scores} == {
        (w, k) for w in ("continuous", "discontinuous") for k in ("knn", "forest", "mlp")
    }
    assert best_kind(report, "continuous") == report.rankings["continuous"][0]



def test_best_kind_without_scored_cells():
    report = ComparisonReport(seeds=[0], targets=["ir"], cells=[], rankings={}, observations={})
    assert best_kind(report, "continuous") is None
