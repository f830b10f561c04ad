"""Run-wise cross-validation harness and segmentation metrics.

The experiment mirrors the recorded-hand protocol: one object class is the
held-out tuning class whose data fixed the hyperparameters; every other
class is evaluated in an 11-fold cross-validation where each fold holds
out one complete grasp run.  Folds are independent and can run in worker
processes; the merge order is fixed by (class, fold), so a given seed
always produces the same report.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .scene import GraspError, GraspRun, load_class_runs

QUARTILE_EDGES = (0.25, 0.5, 0.75)  # bins right-open except the last


def pixel_accuracy(predicted: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of pixels on which the two binary masks agree."""
    p = np.asarray(predicted)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise GraspError(f"mask shape mismatch {p.shape} vs {t.shape}")
    for arr in (p, t):
        if arr.dtype != bool and not np.all(np.isin(np.unique(arr), (0, 1))):
            raise GraspError("masks must be binary")
    return float(np.mean(p.astype(bool) == t.astype(bool)))


def intersection_over_union(predicted: np.ndarray, truth: np.ndarray) -> float:
    p = np.asarray(predicted).astype(bool)
    t = np.asarray(truth).astype(bool)
    if p.shape != t.shape:
        raise GraspError(f"mask shape mismatch {p.shape} vs {t.shape}")
    union = np.logical_or(p, t).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, t).sum() / union)


def kfold_by_run(runs: list[GraspRun], k: int = 11) -> list[tuple[list[GraspRun], list[GraspRun]]]:
    """Fold i tests on run i and trains on the other k-1 runs of the class."""
    if len(runs) != k:
        raise GraspError(f"run-wise {k}-fold needs exactly {k} runs, got {len(runs)}")
    classes = {r.object_class for r in runs}
    if len(classes) != 1:
        raise GraspError(f"folds must stay within one class, got {classes}")
    folds = []
    for i in range(k):
        folds.append(([r for j, r in enumerate(runs) if j != i], [runs[i]]))
    return folds


def quartile_index(progress: float) -> int:
    for i, edge in enumerate(QUARTILE_EDGES):
        if progress < edge:
            return i
    return 3


def quartile_accuracy(records) -> list[dict]:
    """Mean/std accuracy binned by grasp-progress quartile.

    ``records`` is an iterable of (progress, accuracy); bins are right-open
    except the last.  An empty bin is reported with count 0 and None stats.
    """
    bins: list[list[float]] = [[], [], [], []]
    for progress, acc in records:
        if not 0.0 <= progress <= 1.0:
            raise GraspError(f"progress {progress} outside [0, 1]")
        bins[quartile_index(progress)].append(acc)
    out = []
    for i, values in enumerate(bins):
        if values:
            arr = np.asarray(values)
            out.append(
                {"quartile": i + 1, "mean": float(arr.mean()),
                 "std": float(arr.std()), "count": len(values)}
            )
        else:
            out.append({"quartile": i + 1, "mean": None, "std": None, "count": 0})
    return out


@dataclass
class ExperimentConfig:
    """Desk-scale experiment parameters; epochs=150 is the full recipe."""

    dataset_dir: str
    classes: tuple[str, ...] = ("bowl", "lemon", "pitcher", "strawberry", "cup")
    tuning_class: str = "bowl"  # hyperparameters were fixed on this class
    folds: int = 11
    epochs: int = 3
    batch_size: int = 8
    learning_rate: float = 2.5e-3
    seed: int = 0
    workers: int = 0  # 0 = one per cpu, capped at fold count


@dataclass
class FoldRecord:
    object_class: str
    fold: int
    run_id: str
    camera_id: int
    frame_index: int
    progress: float
    accuracy: float
    iou: float


@dataclass
class EvalReport:
    config: ExperimentConfig
    records: list[FoldRecord] = field(repr=False, default_factory=list)
    final_losses: dict = field(default_factory=dict)

    # -- aggregations --------------------------------------------------

    def per_fold(self) -> list[dict]:
        out = []
        for object_class in self.eval_classes():
            for fold in range(self.config.folds):
                rs = [r for r in self.records if r.object_class == object_class and r.fold == fold]
                if not rs:
                    continue
                out.append(
                    {
                        "class": object_class,
                        "fold": fold,
                        "run_id": rs[0].run_id,
                        "accuracy": float(np.mean([r.accuracy for r in rs])),
                        "iou": float(np.mean([r.iou for r in rs])),
                        "n_subimages": len(rs),
                    }
                )
        return out

    def per_finger(self) -> list[dict]:
        out = []
        for cam in range(5):
            rs = [r.accuracy for r in self.records if r.camera_id == cam]
            out.append(
                {"camera_id": cam, "accuracy": float(np.mean(rs)) if rs else None, "count": len(rs)}
            )
        return out

    def quartiles(self) -> list[dict]:
        """Frame-weighted quartile stats (primary), plus run-weighted means."""
        frame_stats = quartile_accuracy([(r.progress, r.accuracy) for r in self.records])
        run_bins: dict[tuple[str, int, int], list[float]] = {}
        for r in self.records:
            run_bins.setdefault((r.run_id, r.fold, quartile_index(r.progress)), []).append(r.accuracy)
        per_quartile_run_means: list[list[float]] = [[], [], [], []]
        for (_, _, q), accs in run_bins.items():
            per_quartile_run_means[q].append(float(np.mean(accs)))
        for i, stat in enumerate(frame_stats):
            vals = per_quartile_run_means[i]
            stat["run_weighted_mean"] = float(np.mean(vals)) if vals else None
        return frame_stats

    def per_class_quartiles(self) -> list[dict]:
        out = []
        for object_class in self.eval_classes():
            rs = [(r.progress, r.accuracy) for r in self.records if r.object_class == object_class]
            for stat in quartile_accuracy(rs):
                out.append({"class": object_class, **stat})
        return out

    def eval_classes(self) -> list[str]:
        return [c for c in self.config.classes if c != self.config.tuning_class]

    def overall_accuracy(self) -> float:
        return float(np.mean([r.accuracy for r in self.records]))

    # -- serialization --------------------------------------------------

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self._write_report_txt(out / "report.txt")
        _write_csv(out / "folds.csv", self.per_fold())
        _write_csv(out / "quartiles.csv", self.quartiles())
        _write_csv(out / "fingers.csv", self.per_finger())
        _write_csv(out / "classes.csv", self.per_class_quartiles())
        ordered = sorted(
            self.records,
            key=lambda r: (r.object_class, r.fold, r.camera_id, r.frame_index),
        )
        _write_csv(out / "records.csv", [asdict(r) for r in ordered])

    def _write_report_txt(self, path: Path) -> None:
        lines = ["[experiment]"]
        for key, value in asdict(self.config).items():
            lines.append(f"{key}={value}")
        lines.append("")
        lines.append("[results]")
        lines.append(f"evaluated_subimages={len(self.records)}")
        lines.append(f"overall_accuracy={self.overall_accuracy():.6f}")
        for stat in self.quartiles():
            mean = "none" if stat["mean"] is None else f"{stat['mean']:.6f}"
            std = "none" if stat["std"] is None else f"{stat['std']:.6f}"
            lines.append(
                f"quartile_{stat['quartile']}_mean={mean} std={std} count={stat['count']}"
            )
        for row in self.per_finger():
            acc = "none" if row["accuracy"] is None else f"{row['accuracy']:.6f}"
            lines.append(f"finger_{row['camera_id']}_accuracy={acc}")
        for object_class, loss in sorted(self.final_losses.items()):
            lines.append(f"final_loss_{object_class}={loss:.6f}")
        path.write_text("\n".join(lines) + "\n")


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()}
            )


# --- fold worker -------------------------------------------------------------


def _fold_seed(base_seed: int, class_index: int, fold: int) -> int:
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(1000 + class_index, fold))
    return int(ss.generate_state(1)[0])


def _samples_of(runs: list[GraspRun]):
    samples = []
    for run in runs:
        for frame in run.frames:
            for cam in range(5):
                samples.append(
                    (frame.images[cam].astype(np.float32) / 255.0, frame.masks[cam].astype(np.uint8))
                )
    return samples


_worker_run_cache: dict[tuple[str, str], list[GraspRun]] = {}


def _cached_class_runs(dataset_dir: str, object_class: str) -> list[GraspRun]:
    key = (dataset_dir, object_class)
    if key not in _worker_run_cache:
        _worker_run_cache.clear()  # one class at a time is enough
        _worker_run_cache[key] = load_class_runs(dataset_dir, object_class)
    return _worker_run_cache[key]


def _train_eval_fold(task: dict) -> dict:
    """Worker entry: train on k-1 runs of one class, evaluate the held-out run."""
    from ..segnet import TrainConfig, train, forward  # local import for spawn

    runs = _cached_class_runs(task["dataset_dir"], task["object_class"])
    folds = kfold_by_run(runs, task["folds"])
    train_runs, test_runs = folds[task["fold"]]
    cfg = TrainConfig(
        epochs=task["epochs"],
        batch_size=task["batch_size"],
        learning_rate=task["learning_rate"],
        seed=_fold_seed(task["seed"], task["class_index"], task["fold"]),
    )
    result = train(_samples_of(train_runs), cfg)

    records = []
    for run in test_runs:
        for fi, frame in enumerate(run.frames):
            for cam in range(5):
                res = forward(frame.images[cam].astype(np.float32) / 255.0, result.weights)
                truth = frame.masks[cam]
                records.append(
                    {
                        "object_class": task["object_class"],
                        "fold": task["fold"],
                        "run_id": run.run_id,
                        "camera_id": cam,
                        "frame_index": fi,
                        "progress": frame.progress,
                        "accuracy": pixel_accuracy(res.mask, truth),
                        "iou": intersection_over_union(res.mask, truth),
                    }
                )
    return {
        "object_class": task["object_class"],
        "fold": task["fold"],
        "records": records,
        "final_loss": result.loss_curve[-1],
    }


def run_experiment(config: ExperimentConfig) -> EvalReport:
    """Full protocol over a dataset directory; deterministic for a given config."""
    eval_classes = [c for c in config.classes if c != config.tuning_class]
    if not eval_classes:
        raise GraspError("no classes left to evaluate after holding out the tuning class")
    tasks = []
    for class_index, object_class in enumerate(config.classes):
        if object_class == config.tuning_class:
            continue
        for fold in range(config.folds):
            tasks.append(
                {
                    "dataset_dir": str(config.dataset_dir),
                    "object_class": object_class,
                    "class_index": class_index,
                    "fold": fold,
                    "folds": config.folds,
                    "epochs": config.epochs,
                    "batch_size": config.batch_size,
                    "learning_rate": config.learning_rate,
                    "seed": config.seed,
                }
            )

    workers = config.workers or min(os.cpu_count() or 1, len(tasks))
    if workers > 1:
        # one BLAS thread per worker; threads are oversubscribed otherwise
        ctx = get_context("spawn")
        os.environ["OPENBLAS_NUM_THREADS"] = "1"
        os.environ["OMP_NUM_THREADS"] = "1"
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            results = list(pool.map(_train_eval_fold, tasks))
    else:
        results = [_train_eval_fold(t) for t in tasks]

    results.sort(key=lambda r: (r["object_class"], r["fold"]))
    report = EvalReport(config=config)
    losses: dict[str, list[float]] = {}
    for res in results:
        for rec in res["records"]:
            report.records.append(FoldRecord(**rec))
        losses.setdefault(res["object_class"], []).append(res["final_loss"])
    report.final_losses = {c: float(np.mean(v)) for c, v in losses.items()}
    return report
