from dataclasses import dataclass, replace
from itertools import combinations
from typing import Dict, List, Sequence, Tuple
import logging
import time

import numpy as np
from dataclasses_json import dataclass_json

from src.degeneration.detectors import assess_instability, assess_redundant_class, build_degeneration_report
from src.metrics.segmentation_metrics import score_segmentation, mean_scores
from src.metrics.wilcoxon import wilcoxon_signed_rank
from src.pipeline.methods import get_method
from src.models.segmentation_model import SegmentationDataset, RunConfig
from src.models.evaluation_model import (
    TrialReport, TrialSummary, MethodSummary, PairwiseComparison,
)
from src.models.errors import InvalidInputError, SegmentationError, TrialError

logger = logging.getLogger(__name__)

DEFAULT_REPEATS = 10


@dataclass_json
@dataclass
class LambdaSweepRow:
    """Итог повторных прогонов для одного значения λ"""
    lam: float
    runs: int
    dice_mean: float
    dice_std: float
    dice_upper_bound: float
    mean_epochs: float


class TrialRunner:
    """Повторные прогоны методов с seed = base_seed + r и сводка по ним"""

    def __init__(self, config: RunConfig, repeats: int = DEFAULT_REPEATS, record_timing: bool = False,
                 redundant: bool = False):
        if repeats < 2:
            raise InvalidInputError(f"repeated trials need at least 2 repeats, got {repeats}")
        self.config = config
        self.repeats = repeats
        self.record_timing = record_timing
        self.redundant = redundant
        self.logger = logging.getLogger(__name__)

    def run(self, dataset: SegmentationDataset, methods: Sequence[str]) -> Tuple[List[TrialReport], TrialSummary]:
        if not dataset.has_ground_truth():
            raise InvalidInputError("repeated trials need ground-truth masks for every image")
        if not methods:
            raise InvalidInputError("no methods selected")
        instances = [get_method(name) for name in methods]

        reports: List[TrialReport] = []
        for method in instances:
            for r in range(self.repeats):
                reports.append(self._run_one(len(reports), method, dataset, replace(self.config, seed=self.config.seed + r)))
        summary = summarize(reports)
        for report in reports:
            report.degeneration.unstable = summary.get_method(report.method).unstable
        if self.redundant:
            self._assess_redundant(dataset, instances, reports)
        return reports, summary

    def _assess_redundant(self, dataset: SegmentationDataset, methods, reports: List[TrialReport]):
        """Парный эксперимент K против K+1 на тех же seed; прирост пишется в отчёты метода"""
        for method in methods:
            try:
                gain = assess_redundant_class(dataset, method, self.config.k, self.config, self.repeats)
            except SegmentationError as e:
                raise TrialError(method.name, self.config.seed, e) from e
            for report in reports:
                if report.method == method.name:
                    report.degeneration.redundant_class_gain = gain

    def _run_one(self, run_id: int, method, dataset: SegmentationDataset, config: RunConfig) -> TrialReport:
        self.logger.info(f"Trial {run_id}: method={method.name}, seed={config.seed}")
        started = time.perf_counter()
        try:
            outcome = method.fit(dataset.images, config)
        except SegmentationError as e:
            raise TrialError(method.name, config.seed, e) from e
        elapsed_ms = int(round((time.perf_counter() - started) * 1000))

        per_image = [
            score_segmentation(mask, sample.mask, sample.instances)
            for mask, sample in zip(outcome.masks, dataset.samples)
        ]
        scores = mean_scores(per_image)
        report = TrialReport(
            run_id=run_id,
            seed=config.seed,
            method=method.name,
            k=config.k,
            lam=config.lam,
            scores=scores,
            degeneration=build_degeneration_report(outcome.masks, config.k),
            epochs=outcome.epochs,
            wall_ms=elapsed_ms if self.record_timing else 0,
            per_image_dice=[s.dice for s in per_image],
        )
        self.logger.info(f"Trial {run_id} finished: dice={scores.dice:.4f}, nmi={scores.nmi:.4f}, epochs={outcome.epochs}")
        return report


def _method_summary(method: str, reports: List[TrialReport]) -> MethodSummary:
    dice = np.array([r.scores.dice for r in reports])
    aji_values = [r.scores.aji_standard for r in reports if r.scores.aji_standard is not None]
    return MethodSummary(
        method=method,
        runs=len(reports),
        dice_mean=float(dice.mean()),
        dice_std=float(dice.std()),
        dice_upper_bound=float(dice.max()),
        precision_mean=float(np.mean([r.scores.precision for r in reports])),
        recall_mean=float(np.mean([r.scores.recall for r in reports])),
        nmi_mean=float(np.mean([r.scores.nmi for r in reports])),
        aji_mean=float(np.mean(aji_values)) if aji_values else None,
        unstable=assess_instability(dice) if len(reports) >= 2 else False,
        collapse_count=sum(r.degeneration.collapse for r in reports),
        empty_class_count=sum(bool(r.degeneration.empty_classes) for r in reports),
        mean_epochs=float(np.mean([r.epochs for r in reports])),
    )


def summarize(reports: List[TrialReport]) -> TrialSummary:
    """Среднее ± std (генеральное), верхняя граница и попарный критерий Уилкоксона"""
    grouped: Dict[str, List[TrialReport]] = {}
    for report in sorted(reports, key=lambda r: r.run_id):
        grouped.setdefault(report.method, []).append(report)

    summary = TrialSummary(methods=[_method_summary(name, runs) for name, runs in grouped.items()])
    for a, b in combinations(grouped, 2):
        dice_a = [d for r in grouped[a] for d in r.per_image_dice]
        dice_b = [d for r in grouped[b] for d in r.per_image_dice]
        if len(dice_a) != len(dice_b):
            logger.warning(f"Skipping Wilcoxon {a} vs {b}: unequal run counts")
            continue
        summary.comparisons.append(PairwiseComparison(a, b, wilcoxon_signed_rank(dice_a, dice_b)))
    return summary


def run_repeated_trials(dataset: SegmentationDataset, methods: Sequence[str], config: RunConfig,
                        repeats: int = DEFAULT_REPEATS,
                        record_timing: bool = False,
                        redundant: bool = False) -> Tuple[List[TrialReport], TrialSummary]:
    """Серия повторных экспериментов: отчёты по прогонам и сводка"""
    return TrialRunner(config, repeats, record_timing, redundant).run(dataset, methods)


def run_lambda_sweep(dataset: SegmentationDataset, method: str, lambdas: Sequence[float],
                     config: RunConfig, repeats: int = DEFAULT_REPEATS) -> List[LambdaSweepRow]:
    """Абляция по λ: для каждого значения серия прогонов с теми же seed"""
    rows = []
    for lam in lambdas:
        _, summary = run_repeated_trials(dataset, [method], replace(config, lam=lam), repeats)
        stats = summary.get_method(method)
        rows.append(LambdaSweepRow(
            lam=float(lam),
            runs=stats.runs,
            dice_mean=stats.dice_mean,
            dice_std=stats.dice_std,
            dice_upper_bound=stats.dice_upper_bound,
            mean_epochs=stats.mean_epochs,
        ))
        logger.info(
            f"lambda={lam}: dice {stats.dice_mean:.4f} ± {stats.dice_std:.4f}, epochs {stats.mean_epochs:.1f}"
        )
    return rows
