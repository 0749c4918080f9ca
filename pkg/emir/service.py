"""Command operations and the end-to-end pipeline.

Every operation reads and writes through an ``ArtifactStore`` so the pipeline
can run them inside a run directory with relative names, which is also what
makes each manifest step replayable from that directory.
"""
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from pydantic import ValidationError

from .config import settings
from .design import (
    describe_validation_error,
    design_id,
    parse_design,
    parse_generator_config,
    serialize_design,
    serialize_generator_config,
    validate_design,
)
from .errors import DesignError, EmirError, ModelError
from .evaluation import (
    DATASET_CLASSES,
    KINDS,
    best_kind,
    compare_models,
    evaluate,
    predictions_for,
    render_accuracy_table,
    split_dataset,
)
from .generator import generate_design
from .nn.modules import load_model, predict_batch, save_model, train
from .schemas import (
    ComparisonReport,
    GoldenResult,
    Manifest,
    ManifestStep,
    ModelSpec,
    PredictionRow,
    ScanHit,
    ScanReport,
    AccuracyReport,
    Violation,
)
from .solver import signoff
from .storage import ArtifactStore, dump_json, dump_jsonl, sha256_text
from .windows import (
    GridMeta,
    build_dataset,
    dataset_header,
    dataset_to_jsonl,
    extract_features,
    parse_dataset,
    tile_windows,
)

logger = logging.getLogger(__name__)

Name = Union[str, os.PathLike]


def load_design(store: ArtifactStore, name: Name):
    design = parse_design(store.read_text(name))
    violations = validate_design(design)
    for v in violations:
        logger.warning("%s: %s: %s", name, v.code, v.message)
    return design


def load_golden(store: ArtifactStore, name: Name) -> GoldenResult:
    text = store.read_text(name)
    try:
        return GoldenResult.model_validate_json(text)
    except ValidationError as exc:
        raise DesignError("PARSE_ERROR", f"golden result {name}: {describe_validation_error(exc)}") from exc


def read_predictions(text: str, name: Name) -> List[PredictionRow]:
    rows = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(PredictionRow.model_validate_json(line))
        except ValidationError as exc:
            raise EmirError("PARSE_ERROR", f"{name} line {n}: {describe_validation_error(exc)}") from exc
    return rows


# ---------- operations ----------

def run_generate(store: ArtifactStore, config_name: Name, seed: int, out: Name) -> Path:
    config = parse_generator_config(store.read_text(config_name))
    design = generate_design(config, seed)
    return store.write_text(out, serialize_design(design))


def run_validate(store: ArtifactStore, design_name: Name) -> List[Violation]:
    return validate_design(parse_design(store.read_text(design_name)))


def run_solve(store: ArtifactStore, design_name: Name, out: Name, dump_voltages: bool = False) -> GoldenResult:
    golden = signoff(load_design(store, design_name), dump_voltages=dump_voltages)
    store.write_text(out, dump_json(golden.model_dump(mode="json", exclude_none=True)))
    return golden


def run_extract(store: ArtifactStore, design_name: Name, golden_name: Name, outdir: Name) -> Dict[str, Path]:
    design = load_design(store, design_name)
    golden = load_golden(store, golden_name)
    datasets = build_dataset(design, golden.violations())
    written = {}
    for window_class in DATASET_CLASSES:
        header = dataset_header(design, window_class)
        written[window_class] = store.write_text(Path(outdir) / f"{window_class}.jsonl", dataset_to_jsonl(header, datasets[window_class]))
    return written


def run_split(store: ArtifactStore, data_name: Name, test_fraction: float, seed: int, outdir: Name) -> Tuple[Path, Path]:
    header, rows = parse_dataset(store.read_text(data_name))
    train_rows, test_rows = split_dataset(rows, test_fraction, seed)
    stem = Path(data_name).name.rsplit(".", 1)[0]
    logger.info("split %s: %d train / %d test rows", stem, len(train_rows), len(test_rows))
    return (
        store.write_text(Path(outdir) / f"{stem}.train.jsonl", dataset_to_jsonl(header, train_rows)),
        store.write_text(Path(outdir) / f"{stem}.test.jsonl", dataset_to_jsonl(header, test_rows)),
    )


def run_train(
    store: ArtifactStore,
    data_name: Name,
    kind: str,
    target: str,
    out: Name,
    window_class: Optional[str] = None,
    seed: int = 0,
    allow_degenerate: bool = False,
    overrides: Optional[Dict] = None,
) -> Path:
    """Train one model slot; the window class defaults to the dataset header's."""
    header, rows = parse_dataset(store.read_text(data_name))
    window_class = window_class or header.dataset_class
    if header.dataset_class != window_class:
        raise EmirError(
            "DIMENSION_MISMATCH",
            f"{data_name} holds {header.dataset_class} windows, model slot is {window_class}",
        )
    try:
        spec = ModelSpec.for_kind(kind, target, window_class, seed=seed, **(overrides or {}))
    except ValidationError as exc:
        raise ModelError("INVALID_HYPERPARAMETER", describe_validation_error(exc)) from exc
    model = train(spec, rows, allow_degenerate=allow_degenerate)
    return store.write_text(out, save_model(model))


def run_predict(store: ArtifactStore, model_name: Name, data_name: Name, out: Name) -> Path:
    model = load_model(store.read_text(model_name))
    _, rows = parse_dataset(store.read_text(data_name))
    preds = predictions_for(model, rows)
    return store.write_text(out, dump_jsonl(p.model_dump(mode="json", by_alias=True) for p in preds))


def run_evaluate(store: ArtifactStore, inputs: Sequence[Name], out: Name, text: bool = False) -> Tuple[AccuracyReport, str]:
    """Inputs mix dataset files (recognised by their header line) and prediction files."""
    predictions: List[PredictionRow] = []
    rows = []
    for name in inputs:
        content = store.read_text(name)
        first = next((line for line in content.splitlines() if line.strip()), "")
        if first.startswith('{"header"'):
            rows.extend(parse_dataset(content)[1])
        else:
            predictions.extend(read_predictions(content, name))
    if not rows:
        raise EmirError("EMPTY_DATASET", "evaluate needs at least one dataset file")
    kinds = sorted({p.kind for p in predictions})
    report = evaluate(predictions, rows, kind="+".join(kinds) or None)
    store.write_text(out, dump_json(report.model_dump(mode="json")))
    rendered = render_accuracy_table(report)
    if text:
        store.write_text(Path(out).with_suffix(".txt"), rendered)
    return report, rendered


def load_class_datasets(store: ArtifactStore, data_dir: Name):
    out = {}
    for window_class in DATASET_CLASSES:
        name = Path(data_dir) / f"{window_class}.jsonl"
        if store.path(name).exists():
            out[window_class] = parse_dataset(store.read_text(name))[1]
    return out


def run_compare(
    store: ArtifactStore,
    data_dir: Name,
    seeds: Sequence[int],
    out: Name,
    split_seed: int = 0,
    test_fraction: Optional[float] = None,
    targets: Sequence[str] = ("ir", "em"),
    kinds: Sequence[str] = KINDS,
    best_out: Optional[Name] = None,
):
    test_fraction = settings.test_fraction if test_fraction is None else test_fraction
    train_sets, test_sets = {}, {}
    for window_class, rows in load_class_datasets(store, data_dir).items():
        train_sets[window_class], test_sets[window_class] = split_dataset(rows, test_fraction, split_seed)
    report = compare_models(train_sets, test_sets, targets=targets, seeds=seeds, kinds=kinds)
    store.write_text(out, dump_json(report.model_dump(mode="json")))
    if best_out is not None:
        store.write_json(best_out, best_models(report, kinds))
    return report


def best_models(report: ComparisonReport, kinds: Sequence[str]) -> Dict[str, str]:
    """Window class -> kind that scan and the final report use; the first kind when none scored."""
    return {c: best_kind(report, c) or kinds[0] for c in DATASET_CLASSES}


def model_file(kind: str, target: str, window_class: str) -> str:
    return f"{kind}-{target}-{window_class}.json"


def run_scan(store: ArtifactStore, design_name: Name, models_dir: Name, out: Name, kind: Optional[str] = None) -> ScanReport:
    """Classify every window of an unsolved design with trained models."""
    design = load_design(store, design_name)
    if kind is None:
        best_name = Path(models_dir) / "best.json"
        if not store.path(best_name).exists():
            raise EmirError("MISSING_MODEL", f"no --kind given and {best_name} not found")
        chosen = json.loads(store.read_text(best_name))
    else:
        chosen = {c: kind for c in DATASET_CLASSES}

    windows = tile_windows(design)
    meta = GridMeta.from_design(design)
    hits: List[ScanHit] = []
    used: Dict[str, str] = {}
    for window_class in DATASET_CLASSES:
        members = [w for w in windows if w.dataset_class == window_class]
        if not members:
            continue
        X = [extract_features(design, w, meta) for w in members]
        for target in ("ir", "em"):
            name = Path(models_dir) / model_file(chosen[window_class], target, window_class)
            model = load_model(store.read_text(name))
            used[f"{window_class}/{target}"] = name.as_posix()
            labels, scores = predict_batch(model, X)
            hits.extend(
                ScanHit(window=w.id, window_class=w.window_class, target=target, kind=model.kind, score=float(s))
                for w, l, s in zip(members, labels, scores) if l
            )
    hits.sort(key=lambda h: (h.window, h.target))
    report = ScanReport(design_id=design_id(design), models=used, windows=len(windows), flagged=hits)
    store.write_text(out, dump_json(report.model_dump(mode="json", by_alias=True)))
    logger.info("scan: %d flagged window/target pairs out of %d windows", len(hits), len(windows))
    return report


# ---------- pipeline ----------

@dataclass
class Pipeline:
    """generate -> solve -> extract -> split -> compare -> train -> predict -> evaluate."""

    run_dir: Path
    seed: int
    split_seed: int = 0
    test_fraction: float = field(default_factory=lambda: settings.test_fraction)
    kinds: Sequence[str] = KINDS
    steps: List[ManifestStep] = field(default_factory=list)

    def __post_init__(self):
        self.store = ArtifactStore(self.run_dir)

    def _record(self, command: str, argv: List[str], inputs: Sequence[Name], outputs: Sequence[Name]) -> None:
        self.steps.append(ManifestStep(
            command=command,
            argv=argv,
            inputs=self.store.checksums(inputs),
            outputs=self.store.checksums(outputs),
        ))
        logger.info("step %d: %s", len(self.steps), " ".join(argv))

    def run(self, config_text: str) -> Manifest:
        config = parse_generator_config(config_text)
        normalized = serialize_generator_config(config)
        self.store.write_text("config.json", normalized)
        seed = str(self.seed)
        fraction = repr(self.test_fraction)

        run_generate(self.store, "config.json", self.seed, "design.json")
        self._record("generate", ["generate", "--config", "config.json", "--seed", seed, "-o", "design.json"],
                     ["config.json"], ["design.json"])

        run_solve(self.store, "design.json", "golden.json")
        self._record("solve", ["solve", "design.json", "-o", "golden.json"], ["design.json"], ["golden.json"])

        run_extract(self.store, "design.json", "golden.json", "data")
        data = {c: f"data/{c}.jsonl" for c in DATASET_CLASSES}
        self._record("extract", ["extract", "design.json", "golden.json", "-o", "data"],
                     ["design.json", "golden.json"], list(data.values()))

        train_files, test_files = {}, {}
        for c in DATASET_CLASSES:
            run_split(self.store, data[c], self.test_fraction, self.split_seed, "split")
            train_files[c], test_files[c] = f"split/{c}.train.jsonl", f"split/{c}.test.jsonl"
            self._record("split", ["split", data[c], "--test-fraction", fraction, "--seed", str(self.split_seed), "-o", "split"],
                         [data[c]], [train_files[c], test_files[c]])

        comparison = run_compare(
            self.store, "data", [self.seed], "comparison.json", self.split_seed, self.test_fraction,
            kinds=self.kinds, best_out="models/best.json",
        )
        self._record("compare", ["compare", "data", "--seeds", seed, "--split-seed", str(self.split_seed),
                                 "--test-fraction", fraction, "--kinds", ",".join(self.kinds),
                                 "--best-out", "models/best.json", "-o", "comparison.json"],
                     list(data.values()), ["comparison.json", "models/best.json"])

        predictions: Dict[Tuple[str, str], List[str]] = {}
        for kind in self.kinds:
            for c in DATASET_CLASSES:
                for target in ("ir", "em"):
                    model = f"models/{model_file(kind, target, c)}"
                    run_train(self.store, train_files[c], kind, target, model, c, self.seed, allow_degenerate=True)
                    self._record("train", ["train", train_files[c], "--kind", kind, "--target", target,
                                           "--window-class", c, "--seed", seed, "--allow-degenerate", "-o", model],
                                 [train_files[c]], [model])
                    pred = f"predictions/{kind}-{target}-{c}.jsonl"
                    run_predict(self.store, model, test_files[c], pred)
                    self._record("predict", ["predict", model, test_files[c], "-o", pred], [model, test_files[c]], [pred])
                    predictions.setdefault((kind, c), []).append(pred)

        tests = [test_files[c] for c in DATASET_CLASSES]
        for kind in self.kinds:
            preds = [p for c in DATASET_CLASSES for p in predictions[(kind, c)]]
            out = f"reports/{kind}.json"
            run_evaluate(self.store, preds + tests, out, text=True)
            self._record("evaluate", ["evaluate", *preds, *tests, "-o", out, "--text"],
                         preds + tests, [out, f"reports/{kind}.txt"])

        best = best_models(comparison, self.kinds)
        preds = [p for c in DATASET_CLASSES for p in predictions[(best[c], c)]]
        run_evaluate(self.store, preds + tests, "report.json", text=True)
        self._record("evaluate", ["evaluate", *preds, *tests, "-o", "report.json", "--text"],
                     preds + tests, ["report.json", "report.txt"])

        manifest = Manifest(
            seed=self.seed,
            config_sha256=sha256_text(normalized),
            steps=self.steps,
            best_models=best,
        )
        self.store.write_json("manifest.json", manifest.model_dump(mode="json"))
        logger.info("pipeline done: best models %s", best)
        return manifest
