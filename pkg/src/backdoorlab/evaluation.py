"""Attack/defense metrics, the defender's utility, and report files.

Metrics here are pure functions of a parameter set plus datasets: clean
accuracy, accuracy of original labels on triggered inputs, the targeted
success rate (fraction of triggered samples classified as the attack
label), and the untargeted rate 1 - A_backdoor/A_clean. Reports round
rates to 3 decimals.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .network import ModelSpec, Parameters, PruneMask, forward


def predict_logits(spec: ModelSpec, params: Parameters, images: np.ndarray,
                   mask: Optional[PruneMask] = None, batch_size: int = 256) -> np.ndarray:
    chunks = []
    for start in range(0, len(images), batch_size):
        logits, _ = forward(spec, params, images[start:start + batch_size], mask=mask)
        chunks.append(logits)
    return np.concatenate(chunks) if chunks else np.zeros((0, spec.num_classes))


def predict(spec: ModelSpec, params: Parameters, images: np.ndarray,
            mask: Optional[PruneMask] = None, batch_size: int = 256) -> np.ndarray:
    """Predicted class per image (argmax of logits, ties to the lowest index)."""
    return predict_logits(spec, params, images, mask, batch_size).argmax(axis=1)


def accuracy(spec: ModelSpec, params: Parameters, data: Dataset,
             mask: Optional[PruneMask] = None) -> float:
    if len(data) == 0:
        raise ValueError("cannot compute accuracy on an empty dataset")
    preds = predict(spec, params, data.images, mask)
    return float(np.mean(preds == data.labels))


def targeted_success(spec: ModelSpec, params: Parameters, bd_test: Dataset,
                     mask: Optional[PruneMask] = None) -> float:
    """Fraction of triggered samples classified as their attack label.

    Samples whose original label already equals the attack label are
    excluded from the denominator: predicting the target there is not
    evidence of a backdoor.
    """
    if len(bd_test) == 0:
        raise ValueError("cannot score an empty backdoored test set")
    if bd_test.true_labels is None:
        raise ValueError("backdoored test set must carry original labels alongside")
    informative = bd_test.labels != bd_test.true_labels
    if not informative.any():
        raise ValueError("no sample has an attack label different from its original label")
    preds = predict(spec, params, bd_test.images, mask)
    return float(np.mean(preds[informative] == bd_test.labels[informative]))


def untargeted_success(a_clean: float, a_backdoor: float) -> float:
    """1 - A_backdoor/A_clean, clamped to [0, 1]."""
    if a_clean <= 0:
        raise ValueError("untargeted success rate is undefined for zero clean accuracy")
    return float(min(1.0, max(0.0, 1.0 - a_backdoor / a_clean)))


def utility(clean_acc: float, bd_success: float) -> float:
    """Defender's utility: clean accuracy minus backdoor success rate."""
    for name, v in (("clean_acc", clean_acc), ("bd_success", bd_success)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}={v} outside [0, 1]")
    return clean_acc - bd_success


@dataclass
class MetricsReport:
    """Clean/backdoor metrics for one model against one trigger."""

    a_clean: float
    a_backdoor: float
    targeted: float
    untargeted: Optional[float]
    per_class_total: list[int]
    per_class_correct: list[int]

    def to_json(self) -> dict:
        return {
            "a_clean": self.a_clean,
            "a_backdoor": self.a_backdoor,
            "targeted_success": self.targeted,
            "untargeted_success": self.untargeted,
            "per_class_total": list(self.per_class_total),
            "per_class_correct": list(self.per_class_correct),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MetricsReport":
        return cls(a_clean=obj["a_clean"], a_backdoor=obj["a_backdoor"],
                   targeted=obj["targeted_success"], untargeted=obj["untargeted_success"],
                   per_class_total=list(obj["per_class_total"]),
                   per_class_correct=list(obj["per_class_correct"]))


def evaluate_model(spec: ModelSpec, params: Parameters, test_clean: Dataset,
                   test_bd: Dataset, mask: Optional[PruneMask] = None) -> MetricsReport:
    preds = predict(spec, params, test_clean.images, mask)
    correct = preds == test_clean.labels
    a_clean = float(np.mean(correct))
    total = np.bincount(test_clean.labels, minlength=spec.num_classes)
    hit = np.bincount(test_clean.labels[correct], minlength=spec.num_classes)

    if test_bd.true_labels is None:
        raise ValueError("backdoored test set must carry original labels alongside")
    preds_bd = predict(spec, params, test_bd.images, mask)
    a_backdoor = float(np.mean(preds_bd == test_bd.true_labels))
    targeted = targeted_success(spec, params, test_bd, mask)
    untargeted = untargeted_success(a_clean, a_backdoor) if a_clean > 0 else None
    return MetricsReport(a_clean=a_clean, a_backdoor=a_backdoor, targeted=targeted,
                         untargeted=untargeted, per_class_total=total.tolist(),
                         per_class_correct=hit.tolist())


@dataclass
class ExperimentCell:
    """One (attack, defense, seed) grid cell for the summary report."""

    experiment_id: str
    attack: str
    defense: str
    seed: int
    cl: Optional[float] = None
    bd: Optional[float] = None
    error: Optional[str] = None

    @property
    def utility(self) -> Optional[float]:
        if self.cl is None or self.bd is None:
            return None
        return self.cl - self.bd


@dataclass
class SweepRecord:
    """One pruning-defense iteration for the sweep-curve CSVs."""

    fraction_pruned: float
    clean_accuracy: float
    backdoor_success: float
    valid_accuracy: float = 0.0
    channel: int = -1


def _round3(v: Optional[float]) -> Optional[float]:
    return None if v is None else round(v, 3)


def write_sweep_csv(records: Sequence[SweepRecord], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["fraction_pruned", "clean_accuracy", "backdoor_success"])
        for r in records:
            writer.writerow([f"{r.fraction_pruned:.6f}", f"{r.clean_accuracy:.6f}",
                             f"{r.backdoor_success:.6f}"])


def build_reports(cells: Sequence[ExperimentCell], out_dir,
                  sweeps: Optional[dict[str, Sequence[SweepRecord]]] = None,
                  expected: Optional[Sequence[tuple[str, str, int]]] = None,
                  runtimes: Optional[dict[str, float]] = None) -> dict[str, str]:
    """Write the summary JSON, the per-seed utility matrix CSV, and sweep CSVs.

    The summary and matrix are deterministic functions of the cells;
    wall-clock runtimes go to a separate sidecar so reruns stay
    byte-identical. Missing grid cells are flagged, not fatal.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, str] = {}

    rows = []
    for c in sorted(cells, key=lambda c: (c.seed, c.attack, c.defense)):
        rows.append({
            "experiment_id": c.experiment_id,
            "attack": c.attack,
            "defense": c.defense,
            "seed": c.seed,
            "cl": _round3(c.cl),
            "bd": _round3(c.bd),
            "utility": _round3(c.utility),
            "error": c.error,
        })
    summary: dict = {"schema_version": 1, "experiments": rows}
    if not rows:
        summary["note"] = "no experiments"
    if expected is not None:
        have = {(c.attack, c.defense, c.seed) for c in cells if c.error is None}
        gaps = [f"{a}/{d}/seed{s}" for (a, d, s) in expected if (a, d, s) not in have]
        if gaps:
            summary["gaps"] = gaps
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    paths["summary"] = str(summary_path)

    by_key = {(c.attack, c.defense, c.seed): c for c in cells if c.error is None}
    seeds = sorted({c.seed for c in cells})
    matrix_rows = []
    for seed in seeds:
        for defense in ("tune", "fine_prune"):
            row = [seed, defense]
            found = False
            for attack in ("baseline", "pruning_aware"):
                cell = by_key.get((attack, defense, seed))
                if cell is not None and cell.utility is not None:
                    row.append(f"{_round3(cell.utility):.3f}")
                    found = True
                else:
                    row.append("")
            if found:
                matrix_rows.append(row)
    if matrix_rows:
        matrix_path = out_dir / "utility_matrix.csv"
        with open(matrix_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["seed", "defense", "baseline", "pruning_aware"])
            writer.writerows(matrix_rows)
        paths["utility_matrix"] = str(matrix_path)

    for name, records in (sweeps or {}).items():
        sweep_path = out_dir / f"sweep_{name}.csv"
        write_sweep_csv(records, sweep_path)
        paths[f"sweep_{name}"] = str(sweep_path)

    if runtimes is not None:
        rt_path = out_dir / "runtimes.json"
        rt_path.write_text(json.dumps(
            {k: round(v, 3) for k, v in sorted(runtimes.items())}, indent=2) + "\n")
        paths["runtimes"] = str(rt_path)
    return paths
