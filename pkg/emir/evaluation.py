"""Splits, confusion counts, accuracy reports and the three-model comparison."""
import logging
from decimal import ROUND_HALF_UP, Decimal
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import click
import numpy as np

from .errors import EvaluationError
from .nn.modules import predict_batch, train
from .schemas import (
    ClassScore,
    ComparisonCell,
    ComparisonReport,
    ConfusionCounts,
    DatasetClass,
    DatasetRow,
    ModelSpec,
    PredictionRow,
    ReportColumn,
    SeedScore,
    AccuracyReport,
    Target,
    TargetMetrics,
)

logger = logging.getLogger(__name__)

DATASET_CLASSES: Tuple[DatasetClass, ...] = ("continuous", "discontinuous")
KINDS = ("knn", "forest", "mlp")
# false positives allowed per flagged window when choosing a class's model
FP_BUDGET = 0.10

FOOTER = (
    "Prediction accuracy = (flagged IR + flagged EM - false positives) / "
    "(sign-off IR + sign-off EM); false positives pool IR and EM."
)


def dataset_class_of(row: DatasetRow) -> DatasetClass:
    return "continuous" if row.window_class == "continuous" else "discontinuous"


# ---------- split ----------

def split_dataset(rows: Sequence[DatasetRow], test_fraction: float, seed: int) -> Tuple[List[DatasetRow], List[DatasetRow]]:
    """Stratified on the hotspot label; both sides keep the input order."""
    n = len(rows)
    if n < 2:
        raise EvaluationError("EMPTY_DATASET", f"cannot split {n} row(s) into train and test")
    if not (0 < test_fraction < 1):
        raise EvaluationError("INVALID_SPLIT", f"test fraction {test_fraction} not in (0, 1)")
    n_test = min(max(int(np.floor(n * test_fraction)), 1), n - 1)
    hot = np.array([r.label("hotspot") for r in rows], dtype=int)
    pos = np.flatnonzero(hot == 1)
    neg = np.flatnonzero(hot == 0)
    n_test_pos = int(np.floor(n_test * pos.size / n + 0.5))
    n_test_pos = min(max(n_test_pos, n_test - neg.size, 0), pos.size, n_test)

    rng = np.random.default_rng(seed)
    chosen = np.concatenate([
        rng.permutation(pos)[:n_test_pos],
        rng.permutation(neg)[:n_test - n_test_pos],
    ])
    in_test = np.zeros(n, dtype=bool)
    in_test[chosen] = True
    train_rows = [r for r, t in zip(rows, in_test) if not t]
    test_rows = [r for r, t in zip(rows, in_test) if t]
    return train_rows, test_rows


# ---------- metrics ----------

def confusion(labels: Iterable[int], predicted: Iterable[int]) -> ConfusionCounts:
    tp = fp = fn = tn = 0
    for y, p in zip(labels, predicted):
        if p and y:
            tp += 1
        elif p:
            fp += 1
        elif y:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def target_metrics(target: Target, counts: ConfusionCounts) -> TargetMetrics:
    return TargetMetrics(target=target, counts=counts, precision=counts.precision, recall=counts.recall, f1=counts.f1)


def prediction_accuracy(flagged: int, false_positives: int, signoff: int) -> Optional[float]:
    return (flagged - false_positives) / signoff if signoff else None


def format_percent(numerator: int, denominator: int) -> str:
    """Two decimals, half-up, from the exact ratio."""
    if denominator == 0:
        return "N/A"
    value = Decimal(numerator * 100) / Decimal(denominator)
    return f"{value.quantize(Decimal('0.01'), rounding=ROUND_HALF_UP)}%"


def report_column(
    window_class: DatasetClass,
    windows: int,
    ir: ConfusionCounts,
    em: ConfusionCounts,
    extra: Sequence[TargetMetrics] = (),
) -> ReportColumn:
    signoff = ir.signoff + em.signoff
    flagged = ir.flagged + em.flagged
    fp = ir.fp + em.fp
    return ReportColumn(
        window_class=window_class,
        windows=windows,
        signoff_ir=ir.signoff,
        signoff_em=em.signoff,
        flagged_ir=ir.flagged,
        flagged_em=em.flagged,
        false_positives=fp,
        prediction_accuracy=prediction_accuracy(flagged, fp, signoff),
        metrics=[target_metrics("ir", ir), target_metrics("em", em), *extra],
    )


def column_percent(column: ReportColumn) -> str:
    signoff = column.signoff_ir + column.signoff_em
    flagged = (column.flagged_ir or 0) + (column.flagged_em or 0)
    return format_percent(flagged - column.false_positives, signoff)


def evaluate(
    predictions: Sequence[PredictionRow],
    rows: Sequence[DatasetRow],
    kind: Optional[str] = None,
) -> AccuracyReport:
    """Join predictions to labelled rows on (design, window, target)."""
    by_key: Dict[Tuple[str, Tuple[int, int], str], PredictionRow] = {}
    for p in predictions:
        key = (p.design_id, tuple(p.window), p.target)
        if key in by_key:
            raise EvaluationError("ALIGNMENT_ERROR", f"duplicate prediction for window {p.window} target {p.target}")
        by_key[key] = p
    row_keys = {(r.design_id, tuple(r.window)) for r in rows}
    orphans = [k for k in by_key if (k[0], k[1]) not in row_keys]
    if orphans:
        raise EvaluationError("ALIGNMENT_ERROR", f"{len(orphans)} prediction(s) match no dataset row, e.g. window {orphans[0][1]}")

    columns = []
    for window_class in DATASET_CLASSES:
        class_rows = [r for r in rows if dataset_class_of(r) == window_class]
        if not class_rows:
            continue
        counts = {}
        for target in ("ir", "em", "hotspot"):
            matched = [(r, by_key.get((r.design_id, tuple(r.window), target))) for r in class_rows]
            missing = [r.window for r, p in matched if p is None]
            if target == "hotspot" and len(missing) == len(matched):
                continue
            if missing:
                raise EvaluationError(
                    "ALIGNMENT_ERROR",
                    f"{len(missing)} {window_class} window(s) lack a {target} prediction, e.g. {missing[0]}",
                )
            for r, p in matched:
                if p.window_class != r.window_class:
                    raise EvaluationError("ALIGNMENT_ERROR", f"window {r.window}: class {p.window_class} vs {r.window_class}")
            counts[target] = confusion([r.label(target) for r, _ in matched], [p.label for _, p in matched])
        extra = [target_metrics("hotspot", counts["hotspot"])] if "hotspot" in counts else []
        columns.append(report_column(window_class, len(class_rows), counts["ir"], counts["em"], extra))
    return AccuracyReport(kind=kind, columns=columns, footer=FOOTER)


# ---------- text rendering ----------

def _fmt(value) -> str:
    return "N/A" if value is None else str(value)


def render_accuracy_table(report: AccuracyReport, color: bool = False) -> str:
    header = ["", *[f"{c.window_class} window" for c in report.columns for _ in (0, 1)]]
    sub = ["", *[label for _ in report.columns for label in ("sign-off", "Fast check")]]
    body = [
        ["# Analysis windows", *[str(c.windows) for c in report.columns for _ in (0, 1)]],
        ["# IR violations", *[v for c in report.columns for v in (str(c.signoff_ir), _fmt(c.flagged_ir))]],
        ["# EM violations", *[v for c in report.columns for v in (str(c.signoff_em), _fmt(c.flagged_em))]],
        ["# False positive", *[v for c in report.columns for v in ("N/A", str(c.false_positives))]],
        ["Prediction accuracy", *[v for c in report.columns for v in ("N/A", column_percent(c))]],
    ]
    table = [header, sub, *body]
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    lines = []
    for n, r in enumerate(table):
        cells = [r[0].ljust(widths[0])] + [v.rjust(w) for v, w in zip(r[1:], widths[1:])]
        line = "  ".join(cells).rstrip()
        if color and (n < 2 or r[0] == "Prediction accuracy"):
            line = click.style(line, bold=True)
        lines.append(line)
    title = "Comparison between fast EM/IR check and sign-off"
    if report.kind:
        title += f" ({report.kind})"
    return "\n".join([title, "", *lines, "", report.footer]) + "\n"


# ---------- comparison ----------

def _rows_xy(rows: Sequence[DatasetRow], target: Target) -> Tuple[np.ndarray, np.ndarray]:
    X = np.array([r.features for r in rows], dtype=float)
    y = np.array([r.label(target) for r in rows], dtype=int)
    return X, y


def _degenerate_reason(train_y: np.ndarray, test_y: np.ndarray) -> Optional[str]:
    if train_y.size == 0 or train_y.min() == train_y.max():
        return "training labels are single-class"
    if test_y.sum() == 0:
        return "held-out set has no positives"
    return None


def _mean_fp(cell: ComparisonCell) -> float:
    return float(np.mean([s.counts.fp for s in cell.per_seed])) if cell.per_seed else 0.0


def _rank_key(cell: ComparisonCell):
    acc = cell.mean_accuracy if cell.mean_accuracy is not None else -1.0
    f1 = cell.mean_f1 if cell.mean_f1 is not None else -1.0
    return (-acc, _mean_fp(cell), -f1, cell.kind)


def pooled_count(counts: Sequence[ConfusionCounts]) -> ConfusionCounts:
    return ConfusionCounts(
        tp=sum(c.tp for c in counts), fp=sum(c.fp for c in counts),
        fn=sum(c.fn for c in counts), tn=sum(c.tn for c in counts),
    )


def class_scores(cells: Sequence[ComparisonCell], fp_budget: float = FP_BUDGET) -> List[ClassScore]:
    """Per (class, kind): IR and EM counts summed seed by seed over the scored targets."""
    out = []
    for window_class in DATASET_CLASSES:
        kinds = sorted({c.kind for c in cells if c.window_class == window_class and c.status == "scored"})
        for kind in kinds:
            scored = [c for c in cells if c.window_class == window_class and c.kind == kind and c.status == "scored"]
            per_seed = [pooled_count([s.counts for s in seed_scores]) for seed_scores in zip(*(c.per_seed for c in scored))]
            if not per_seed:
                continue
            flagged = float(np.mean([c.flagged for c in per_seed]))
            fp = float(np.mean([c.fp for c in per_seed]))
            out.append(ClassScore(
                window_class=window_class,
                kind=kind,
                mean_accuracy=float(np.mean([prediction_accuracy(c.flagged, c.fp, c.signoff) for c in per_seed])),
                mean_flagged=flagged,
                mean_false_positives=fp,
                within_fp_budget=fp <= fp_budget * flagged,
                mean_f1=float(np.mean([c.f1 or 0.0 for c in per_seed])),
            ))
    return out


def _class_rank_key(score: ClassScore):
    return (not score.within_fp_budget, -score.mean_accuracy, score.mean_false_positives, -(score.mean_f1 or 0.0), score.kind)


def compare_models(
    train_sets: Mapping[DatasetClass, Sequence[DatasetRow]],
    test_sets: Mapping[DatasetClass, Sequence[DatasetRow]],
    targets: Sequence[Target] = ("ir", "em"),
    seeds: Sequence[int] = (0,),
    kinds: Sequence[str] = KINDS,
    overrides: Optional[Mapping[str, dict]] = None,
) -> ComparisonReport:
    cells: List[ComparisonCell] = []
    for window_class in DATASET_CLASSES:
        train_rows = list(train_sets.get(window_class, []))
        test_rows = list(test_sets.get(window_class, []))
        for target in targets:
            train_X, train_y = _rows_xy(train_rows, target)
            test_X, test_y = _rows_xy(test_rows, target)
            reason = _degenerate_reason(train_y, test_y)
            for kind in kinds:
                if reason:
                    logger.warning("%s/%s/%s DEGENERATE: %s", window_class, target, kind, reason)
                    cells.append(ComparisonCell(window_class=window_class, target=target, kind=kind, status="DEGENERATE", reason=reason))
                    continue
                scores = []
                for seed in seeds:
                    spec = ModelSpec.for_kind(kind, target, window_class, seed=seed, **dict((overrides or {}).get(kind, {})))
                    model = train(spec, train_rows)
                    labels, _ = predict_batch(model, test_X)
                    counts = confusion(test_y, labels)
                    scores.append(SeedScore(
                        seed=seed,
                        prediction_accuracy=prediction_accuracy(counts.flagged, counts.fp, counts.signoff),
                        precision=counts.precision,
                        recall=counts.recall,
                        f1=counts.f1,
                        counts=counts,
                    ))
                mean_acc = float(np.mean([s.prediction_accuracy for s in scores]))
                mean_f1 = float(np.mean([s.f1 if s.f1 is not None else 0.0 for s in scores]))
                logger.info("%s/%s/%s: accuracy %.4f, F1 %.4f", window_class, target, kind, mean_acc, mean_f1)
                cells.append(ComparisonCell(
                    window_class=window_class, target=target, kind=kind, status="scored",
                    mean_accuracy=mean_acc, mean_f1=mean_f1, per_seed=scores,
                ))

    rankings: Dict[str, List[str]] = {}
    for window_class in DATASET_CLASSES:
        for target in targets:
            scored = [c for c in cells if c.window_class == window_class and c.target == target and c.status == "scored"]
            rankings[f"{window_class}/{target}"] = [c.kind for c in sorted(scored, key=_rank_key)]
    pooled = class_scores(cells)
    for window_class in DATASET_CLASSES:
        ranked = sorted((s for s in pooled if s.window_class == window_class), key=_class_rank_key)
        rankings[window_class] = [s.kind for s in ranked]
        for s in ranked:
            logger.info(
                "%s/%s pooled: accuracy %.4f, %.1f of %.1f flagged false",
                window_class, s.kind, s.mean_accuracy, s.mean_false_positives, s.mean_flagged,
            )

    return ComparisonReport(
        seeds=list(seeds),
        targets=list(targets),
        cells=cells,
        rankings=rankings,
        observations=_observations(cells, rankings, targets),
        class_scores=pooled,
    )


def _observations(cells: List[ComparisonCell], rankings: Dict[str, List[str]], targets: Sequence[Target]) -> Dict[str, Optional[bool]]:
    continuous = [rankings[f"continuous/{t}"] for t in targets if rankings.get(f"continuous/{t}")]
    knn_best = all(r[0] == "knn" for r in continuous) if continuous else None

    verdicts = []
    for t in targets:
        found = {c.kind: c for c in cells if c.window_class == "discontinuous" and c.target == t and c.status == "scored"}
        if "mlp" in found and "forest" in found:
            verdicts.append(found["mlp"].mean_accuracy >= found["forest"].mean_accuracy)
    return {
        "knn_best_on_continuous": knn_best,
        "mlp_ge_forest_on_discontinuous": all(verdicts) if verdicts else None,
    }


def best_kind(report: ComparisonReport, window_class: DatasetClass) -> Optional[str]:
    """Kind to deploy on a window class.

    Kinds whose pooled false positives stay within the budget come first, then
    higher pooled accuracy, fewer false positives, higher F1 and the name.
    """
    ranked = sorted(
        (s for s in (report.class_scores or class_scores(report.cells)) if s.window_class == window_class),
        key=_class_rank_key,
    )
    return ranked[0].kind if ranked else None


def predictions_for(model, rows: Sequence[DatasetRow]) -> List[PredictionRow]:
    if not rows:
        return []
    labels, scores = predict_batch(model, [r.features for r in rows])
    return [
        PredictionRow(
            design_id=r.design_id, window=r.window, window_class=r.window_class,
            target=model.spec.target, kind=model.kind, label=int(l), score=float(s),
        )
        for r, l, s in zip(rows, labels, scores)
    ]

