"""Training loop, experiment grid and report rendering.

A run is fully determined by (RunSpec, seed, dataset): the seed drives
independent rng streams for parameter init, dropout, augmentation, batch
shuffling and the PiCO pools, so repeated invocations produce byte-identical
result files. The grid runner fans out over method x ambiguity x LD x
subject x fold x seed and aggregates mean(std) cells in the style used for
benchmark tables.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernel as K
from . import reference_results as ref
from .backbone import BackboneConfig
from .data import Dataset, apply_minmax, assign_folds, minmax_stats
from .labels import CLASS_NAMES, EmotionWheel, generate_for_labels, masks_matrix
from .methods import MethodConfig, MethodRuntime

SCHEDULER_FREE_METHODS = ("supervised", "dnpl")


class HarnessError(ValueError):
    """Inconsistent run specification or grid configuration."""


@dataclass(frozen=True)
class RunSpec:
    method: MethodConfig
    subject: int = 0
    fold: int = 1
    seed: int = 0
    epochs: int = 30
    batch_size: int = 8
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    scheduler: str = "auto"      # auto | none | cosine
    ambiguity: str = "uniform"   # uniform | similarity | none
    q: float | None = None
    wheel_tag: str | None = None
    hidden_units: int = 64
    embed_dim: int = 64
    eval_each_epoch: bool = True  # off: evaluate only after the final epoch

    def __post_init__(self):
        if self.fold not in (1, 2, 3):
            raise HarnessError(f"fold must be 1, 2 or 3, got {self.fold}")
        if self.epochs < 1 or self.batch_size < 2:
            raise HarnessError("need at least 1 epoch and batch size >= 2")
        if self.scheduler not in ("auto", "none", "cosine"):
            raise HarnessError(f"unknown scheduler {self.scheduler!r}")

    def resolved_scheduler(self) -> str:
        # the naive and fully supervised baselines never use the scheduler
        if self.method.method in SCHEDULER_FREE_METHODS:
            return "none"
        return "cosine" if self.scheduler == "auto" else self.scheduler


@dataclass
class RunResult:
    accuracy: float
    per_class_accuracy: list
    loss_curve: list
    accuracy_curve: list
    entropy_curve: list
    best_epoch: int
    counters: dict
    config: dict
    wall_time: float = 0.0

    def to_json_dict(self) -> dict:
        # wall time is deliberately excluded so identical runs yield identical bytes
        return {
            "accuracy": self.accuracy,
            "per_class_accuracy": self.per_class_accuracy,
            "loss_curve": self.loss_curve,
            "accuracy_curve": self.accuracy_curve,
            "entropy_curve": self.entropy_curve,
            "best_epoch": self.best_epoch,
            "counters": self.counters,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=1)


def write_result(path, result: RunResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(result.to_json() + "\n")


def make_batches(n: int, batch_size: int, rng) -> list:
    """Shuffled index batches; a trailing singleton is merged into its neighbor."""
    order = rng.permutation(n)
    batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def _onehot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


class DiagnosticsWriter:
    """Optional per-iteration CSV stream: losses, label entropy, counters."""

    HEADER = ["epoch", "batch", "loss", "label_entropy", "violations", "fallbacks"]

    def __init__(self, path):
        self._fh = open(path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(self.HEADER)

    def row(self, epoch, batch, loss, entropy, violations, fallbacks):
        self._writer.writerow([epoch, batch, repr(loss), repr(entropy),
                               violations, fallbacks])

    def close(self):
        self._fh.close()


def train_run(spec: RunSpec, dataset: Dataset, candidates=None,
              diag_path=None) -> RunResult:
    """One cross-validated training run on a single subject and fold rotation."""
    start = time.perf_counter()
    k = 5
    sub_idx = dataset.subject_indices(spec.subject)
    folds = assign_folds(dataset)[sub_idx]
    train_rows = sub_idx[folds != spec.fold]
    test_rows = sub_idx[folds == spec.fold]

    stats = minmax_stats(dataset.features[train_rows])
    x_train = apply_minmax(dataset.features[train_rows], stats)
    x_test = apply_minmax(dataset.features[test_rows], stats)
    y_train = dataset.labels[train_rows]
    y_test = dataset.labels[test_rows]

    needs_labels = spec.method.method != "supervised"
    provenance = "ground-truth"
    if needs_labels:
        if candidates is None:
            if spec.ambiguity == "uniform" and spec.q is None:
                raise HarnessError("non-supervised runs need candidate labels or q")
            candidates = generate_for_labels(dataset.labels, spec.ambiguity,
                                             q=spec.q, k=k, seed=spec.seed)
        if len(candidates) != dataset.num_samples:
            raise HarnessError(f"{len(candidates)} candidate rows for "
                               f"{dataset.num_samples} samples")
        for row in sub_idx:
            if candidates[row].truth != dataset.labels[row]:
                raise HarnessError(f"candidate truth mismatch at sample {row}")
        masks = masks_matrix(candidates)[train_rows]
        provenance = candidates[train_rows[0]].provenance
    else:
        masks = _onehot(y_train, k).astype(np.int8)

    streams = np.random.SeedSequence(spec.seed).spawn(5)
    init_rng, dropout_rng, augment_rng, shuffle_rng, state_rng = (
        np.random.default_rng(s) for s in streams)

    model_config = BackboneConfig(feature_len=dataset.feature_len, num_classes=k,
                                  hidden_units=spec.hidden_units,
                                  embed_dim=spec.embed_dim)
    runtime = MethodRuntime(spec.method, model_config, init_rng, state_rng=state_rng)
    optimizer = K.OptimizerState(lr=spec.lr, momentum=spec.momentum,
                                 weight_decay=spec.weight_decay,
                                 schedule=spec.resolved_scheduler(),
                                 total_epochs=spec.epochs)

    truth_train = _onehot(y_train, k)
    diag = DiagnosticsWriter(diag_path) if diag_path else None
    loss_curve, accuracy_curve, entropy_curve = [], [], []
    try:
        for epoch in range(spec.epochs):
            optimizer.set_epoch(epoch)
            losses, entropies = [], []
            for b, idx in enumerate(make_batches(len(train_rows), spec.batch_size, shuffle_rng)):
                runtime.model.train()
                loss, info = runtime.step(
                    x_train[idx], masks[idx], truth_train[idx],
                    epoch=epoch, total_epochs=spec.epochs,
                    dropout_rng=dropout_rng, augment_rng=augment_rng)
                grads = K.grads_of(loss, runtime.params)
                K.sgd_step(runtime.params, grads, optimizer)
                losses.append(loss.item())
                entropies.append(info.entropy)
                if diag:
                    diag.row(epoch, b, loss.item(), info.entropy,
                             runtime.violations, runtime.fallbacks)
            loss_curve.append(float(np.mean(losses)))
            entropy_curve.append(float(np.mean(entropies)))
            if spec.eval_each_epoch:
                accuracy_curve.append(_evaluate(runtime, x_test, y_test)[0])
    finally:
        if diag:
            diag.close()

    accuracy, per_class = _evaluate(runtime, x_test, y_test)
    if not accuracy_curve:
        accuracy_curve = [accuracy]
    config_echo = {
        "method": asdict(spec.method),
        "subject": spec.subject, "fold": spec.fold, "seed": spec.seed,
        "epochs": spec.epochs, "batch_size": spec.batch_size,
        "lr": spec.lr, "momentum": spec.momentum, "weight_decay": spec.weight_decay,
        "scheduler": spec.resolved_scheduler(),
        "ambiguity": spec.ambiguity, "q": spec.q, "wheel_tag": spec.wheel_tag,
        "backbone": asdict(model_config),
        "class_order": list(CLASS_NAMES),
        "normalization": "per-feature min-max fit on training folds",
        "label_provenance": provenance,
    }
    return RunResult(
        accuracy=accuracy,
        per_class_accuracy=per_class,
        loss_curve=loss_curve,
        accuracy_curve=accuracy_curve,
        entropy_curve=entropy_curve,
        best_epoch=int(np.argmax(accuracy_curve)),
        counters={"violations": runtime.violations, "fallbacks": runtime.fallbacks,
                  "empty_positive_sets": runtime.empty_pos},
        config=config_echo,
        wall_time=time.perf_counter() - start,
    )


def _evaluate(runtime: MethodRuntime, x_test, y_test):
    runtime.model.eval()
    logits = runtime.model.logits_values(x_test)
    predicted = logits.argmax(axis=-1)
    accuracy = float((predicted == y_test).mean() * 100.0)
    per_class = []
    for c in range(logits.shape[1]):
        members = y_test == c
        per_class.append(float((predicted[members] == c).mean() * 100.0)
                         if members.any() else 0.0)
    return accuracy, per_class


# ---------------------------------------------------------------------------
# experiment grid


METHOD_TOKENS = {
    "supervised": {}, "dnpl": {}, "proden": {}, "cavl": {}, "cr": {},
    "pico": {}, "pico-nocl": {"method": "pico", "contrastive": False},
    "lw": {"method": "lw"},
}


def parse_method_token(token: str) -> MethodConfig:
    """Tokens: supervised dnpl proden cavl cr pico pico-nocl lw lw-<variant>-b<beta>."""
    if token in METHOD_TOKENS:
        kwargs = dict(METHOD_TOKENS[token])
        kwargs.setdefault("method", token)
        return MethodConfig(**kwargs)
    if token.startswith("lw-"):
        parts = token.split("-")
        if len(parts) == 3 and parts[1] in ("sigmoid", "ce") and parts[2].startswith("b"):
            return MethodConfig(method="lw", lw_variant=parts[1], beta=int(parts[2][1:]))
    raise HarnessError(f"cannot parse method token {token!r}")


LD_CAPABLE = ("proden", "cavl", "lw", "cr", "pico")


@dataclass
class GridConfig:
    methods: list
    seeds: list
    mode: str = "uniform"
    qs: list = field(default_factory=lambda: [0.2, 0.4, 0.6, 0.8, 0.9, 0.95])
    wheel_path: str | None = None
    ld: list = field(default_factory=lambda: [False, True])
    subjects: list | None = None     # None: every subject in the dataset
    folds: list = field(default_factory=lambda: [1, 2, 3])
    epochs: int = 30
    batch_size: int = 8
    lr: float = 0.01
    jobs: int = 1


def _parse_bool_list(text: str):
    mapping = {"on": True, "true": True, "1": True,
               "off": False, "false": False, "0": False}
    values = []
    for part in text.split(","):
        part = part.strip().lower()
        if part == "both":
            return [False, True]
        if part not in mapping:
            raise HarnessError(f"cannot parse LD flag {part!r}")
        values.append(mapping[part])
    return values


def parse_grid_config(path) -> GridConfig:
    """Flat key=value file; '#' starts a comment, lists are comma-separated."""
    raw = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise HarnessError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            raw[key] = value
    if "methods" not in raw or "seeds" not in raw:
        raise HarnessError(f"{path}: grid config needs at least methods= and seeds=")
    cfg = GridConfig(
        methods=[tok.strip() for tok in raw["methods"].split(",") if tok.strip()],
        seeds=[int(v) for v in raw["seeds"].split(",")],
    )
    if "mode" in raw:
        cfg.mode = raw["mode"]
    if "q" in raw:
        cfg.qs = [float(v) for v in raw["q"].split(",")]
    if "wheel" in raw:
        cfg.wheel_path = raw["wheel"]
    if "ld" in raw:
        cfg.ld = _parse_bool_list(raw["ld"])
    if "subjects" in raw and raw["subjects"] != "all":
        cfg.subjects = [int(v) for v in raw["subjects"].split(",")]
    if "folds" in raw:
        cfg.folds = [int(v) for v in raw["folds"].split(",")]
    for key in ("epochs", "batch_size", "jobs"):
        if key in raw:
            setattr(cfg, key, int(raw[key]))
    if "lr" in raw:
        cfg.lr = float(raw["lr"])
    for token in cfg.methods:
        parse_method_token(token)
    if cfg.mode not in ("uniform", "similarity"):
        raise HarnessError(f"unknown generation mode {cfg.mode!r}")
    return cfg


@dataclass
class CellStats:
    accuracies: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.accuracies)

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies)) if self.accuracies else float("nan")

    @property
    def std(self) -> float:
        # population std over exactly the runs behind the mean
        return float(np.std(self.accuracies)) if self.accuracies else float("nan")


class AggregateTable:
    """(method label, LD) x ambiguity grid of accuracy cells."""

    def __init__(self):
        self.cells: dict = {}
        self.row_order: list = []
        self.col_order: list = []

    def cell(self, row, col) -> CellStats:
        key = (row, col)
        if key not in self.cells:
            self.cells[key] = CellStats()
            if row not in self.row_order:
                self.row_order.append(row)
            if col not in self.col_order:
                self.col_order.append(col)
        return self.cells[key]

    def add(self, row, col, accuracy: float) -> None:
        self.cell(row, col).accuracies.append(accuracy)

    def add_failure(self, row, col, message: str) -> None:
        self.cell(row, col).failures.append(message)


def _ambiguity_label(mode: str, q, wheel) -> str:
    if mode == "similarity":
        return f"wheel={wheel.tag}"
    return f"q={q:g}"


def grid_runs(grid: GridConfig, dataset: Dataset):
    """Expanded (row, col, RunSpec) list, in deterministic order."""
    subjects = grid.subjects if grid.subjects is not None else dataset.subject_ids()
    wheel = EmotionWheel.from_json(grid.wheel_path) if grid.wheel_path else EmotionWheel.default()
    ambiguities = ([(None, wheel)] if grid.mode == "similarity"
                   else [(q, None) for q in grid.qs])
    runs = []
    for token in grid.methods:
        base = parse_method_token(token)
        ld_options = grid.ld if base.method in LD_CAPABLE else [False]
        for ld in ld_options:
            method = replace(base, ld=ld)
            row = (method.label(), ld)
            for q, amb_wheel in ambiguities:
                col = _ambiguity_label(grid.mode, q, amb_wheel)
                for subject in subjects:
                    for fold in grid.folds:
                        for seed in grid.seeds:
                            runs.append((row, col, RunSpec(
                                method=method, subject=subject, fold=fold, seed=seed,
                                epochs=grid.epochs, batch_size=grid.batch_size,
                                lr=grid.lr, ambiguity=grid.mode, q=q,
                                wheel_tag=amb_wheel.tag if amb_wheel else None)))
    return runs, wheel


def _execute_run(args):
    spec, dataset, wheel = args
    try:
        if spec.method.method == "supervised":
            candidates = None
        else:
            candidates = generate_for_labels(dataset.labels, spec.ambiguity, q=spec.q,
                                             wheel=wheel, seed=spec.seed)
        result = train_run(spec, dataset, candidates)
        return "ok", result.accuracy
    except Exception as exc:  # recorded per cell, never silently dropped
        return f"failed:{type(exc).__name__}:{exc}", float("nan")


def run_grid(grid: GridConfig, dataset: Dataset, runs_csv=None) -> AggregateTable:
    """Execute every cell of the grid; failures are recorded, never dropped."""
    runs, wheel = grid_runs(grid, dataset)
    table = AggregateTable()
    writer = None
    fh = None
    if runs_csv is not None:
        fh = open(runs_csv, "w", encoding="utf-8", newline="")
        writer = csv.writer(fh)
        writer.writerow(["method", "ld", "ambiguity", "subject", "fold",
                         "seed", "accuracy", "status"])
    try:
        if grid.jobs > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=grid.jobs) as pool:
                outcomes = list(pool.map(_execute_run,
                                         [(spec, dataset, wheel) for _, _, spec in runs]))
        else:
            outcomes = [_execute_run((spec, dataset, wheel)) for _, _, spec in runs]
        for (row, col, spec), (status, accuracy) in zip(runs, outcomes):
            if status == "ok":
                table.add(row, col, accuracy)
            else:
                table.add_failure(row, col, status)
            if writer:
                writer.writerow([row[0], "on" if row[1] else "off", col,
                                 spec.subject, spec.fold, spec.seed,
                                 repr(accuracy), status])
    finally:
        if fh:
            fh.close()
    return table


def load_runs_csv(path) -> AggregateTable:
    table = AggregateTable()
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for record in reader:
            row = (record["method"], record["ld"] == "on")
            if record["status"] == "ok":
                table.add(row, record["ambiguity"], float(record["accuracy"]))
            else:
                table.add_failure(row, record["ambiguity"], record["status"])
    return table


# ---------------------------------------------------------------------------
# reporting


def table_csv_rows(table: AggregateTable):
    rows = []
    for row in table.row_order:
        for col in table.col_order:
            key = (row, col)
            if key not in table.cells:
                continue
            cell = table.cells[key]
            rows.append({"method": row[0], "ld": "on" if row[1] else "off",
                         "ambiguity": col, "mean": f"{cell.mean:.6f}",
                         "std": f"{cell.std:.6f}", "n": cell.n,
                         "failures": len(cell.failures)})
    return rows


def render_table_text(table: AggregateTable) -> str:
    if not table.row_order:
        return "method  LD\n(no runs)\n"
    width = max(len(r[0]) for r in table.row_order) + 2
    lines = [f"{'method':{width}s} {'LD':3s}" +
             "".join(f"{col:>15s}" for col in table.col_order)]
    for row in table.row_order:
        text = f"{row[0]:{width}s} {'on' if row[1] else 'off':3s}"
        for col in table.col_order:
            cell = table.cells.get((row, col))
            text += f"{ref.format_cell(cell.mean, cell.std) if cell and cell.n else '-':>15s}"
        lines.append(text)
    return "\n".join(lines) + "\n"


def write_report(table: AggregateTable, out_dir, with_reference: bool = False) -> dict:
    """Emit results.csv + results.txt (+ stored reference tables when asked)."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {"csv": os.path.join(out_dir, "results.csv"),
             "txt": os.path.join(out_dir, "results.txt")}
    with open(paths["csv"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["method", "ld", "ambiguity",
                                                "mean", "std", "n", "failures"])
        writer.writeheader()
        for record in table_csv_rows(table):
            writer.writerow(record)
    text = render_table_text(table)
    if with_reference:
        text += "\n" + ref.render_reference_text()
    with open(paths["txt"], "w", encoding="utf-8") as fh:
        fh.write(text)
    if with_reference:
        paths["reference_csv"] = os.path.join(out_dir, "reference.csv")
        with open(paths["reference_csv"], "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["table", "method", "ld", "q", "mean", "std",
                             "note", "source"])
            for row in ref.reference_rows():
                writer.writerow(list(row) + [ref.REFERENCE_NOTE, ref.REFERENCE_SOURCE])
    return paths


def load_report_csv(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
