from itertools import combinations
from pathlib import Path
from typing import List, Optional, Sequence
import logging

import numpy as np
import pandas as pd

from src.degeneration.detectors import assess_instability
from src.metrics.wilcoxon import wilcoxon_signed_rank
from src.pipeline.dataset_io import palette_overlay, error_overlay, write_png
from src.pipeline.trials import LambdaSweepRow
from src.models.segmentation_model import ImageTensor, SegmentationMask
from src.models.evaluation_model import (
    TrialReport, TrialSummary, MethodSummary, PairwiseComparison, ScoreSet,
)
from src.models.errors import InvalidInputError

TRIAL_COLUMNS = [
    'run_id', 'seed', 'method', 'k', 'lambda', 'precision', 'recall', 'dice',
    'aji_standard', 'aji_paper', 'nmi', 'mi', 'collapse', 'empty_classes', 'redundant_class_gain',
    'epochs', 'wall_ms',
]
# в CSV прежнего формата этих колонок нет
OPTIONAL_TRIAL_COLUMNS = ('redundant_class_gain',)
SUMMARY_COLUMNS = [
    'method', 'runs', 'dice_mean', 'dice_std', 'dice_upper_bound', 'precision_mean',
    'recall_mean', 'nmi_mean', 'aji_mean', 'unstable', 'collapse_count', 'empty_class_count', 'mean_epochs',
]
DEGENERATION_COLUMNS = [
    'method', 'runs', 'collapse_runs', 'empty_class_runs', 'dice_std', 'unstable', 'redundant_class_gain',
]
EMPTY_CLASS_SEPARATOR = ";"


def trials_frame(reports: List[TrialReport]) -> pd.DataFrame:
    """Таблица прогонов в порядке run_id"""
    rows = []
    for r in sorted(reports, key=lambda report: report.run_id):
        rows.append({
            'run_id': r.run_id,
            'seed': r.seed,
            'method': r.method,
            'k': r.k,
            'lambda': r.lam,
            'precision': r.scores.precision,
            'recall': r.scores.recall,
            'dice': r.scores.dice,
            'aji_standard': r.scores.aji_standard,
            'aji_paper': r.scores.aji_paper,
            'nmi': r.scores.nmi,
            'mi': r.scores.mi,
            'collapse': r.degeneration.collapse,
            'empty_classes': EMPTY_CLASS_SEPARATOR.join(str(c) for c in r.degeneration.empty_classes),
            'redundant_class_gain': r.degeneration.redundant_class_gain,
            'epochs': r.epochs,
            'wall_ms': r.wall_ms,
        })
    return pd.DataFrame(rows, columns=TRIAL_COLUMNS)


def read_trials_csv(paths: Sequence[Path]) -> pd.DataFrame:
    """Читает и объединяет CSV прогонов"""
    frames = []
    for path in paths:
        path = Path(path)
        if not path.exists():
            raise InvalidInputError(f"trial CSV not found: {path}")
        frame = pd.read_csv(path, dtype={'empty_classes': str, 'method': str})
        missing = [c for c in TRIAL_COLUMNS if c not in frame.columns and c not in OPTIONAL_TRIAL_COLUMNS]
        if missing:
            raise InvalidInputError(f"{path} is not a trial CSV, missing columns {missing}")
        for column in OPTIONAL_TRIAL_COLUMNS:
            if column not in frame.columns:
                frame[column] = np.nan
        frames.append(frame)
    if not frames:
        raise InvalidInputError("no trial CSV files given")
    frame = pd.concat(frames, ignore_index=True)
    frame['empty_classes'] = frame['empty_classes'].fillna("")
    frame['collapse'] = frame['collapse'].astype(str).str.lower() == "true"
    return frame


def _optional_mean(values: pd.Series) -> Optional[float]:
    values = values.dropna()
    return float(values.mean()) if len(values) else None


def summary_from_frame(frame: pd.DataFrame) -> TrialSummary:
    """Пересчитывает сводку из таблицы прогонов; пары для Уилкоксона образуют прогоны с одинаковым seed"""
    methods = list(dict.fromkeys(frame['method']))
    summary = TrialSummary()
    for method in methods:
        runs = frame[frame['method'] == method]
        dice = runs['dice'].to_numpy(dtype=np.float64)
        summary.methods.append(MethodSummary(
            method=method,
            runs=len(runs),
            dice_mean=float(dice.mean()),
            dice_std=float(dice.std()),
            dice_upper_bound=float(dice.max()),
            precision_mean=float(runs['precision'].mean()),
            recall_mean=float(runs['recall'].mean()),
            nmi_mean=float(runs['nmi'].mean()),
            aji_mean=_optional_mean(runs['aji_standard']),
            unstable=assess_instability(dice) if len(runs) >= 2 else False,
            collapse_count=int(runs['collapse'].sum()),
            empty_class_count=int((runs['empty_classes'] != "").sum()),
            mean_epochs=float(runs['epochs'].mean()),
        ))
    for a, b in combinations(methods, 2):
        paired = pd.merge(frame[frame['method'] == a][['seed', 'dice']],
                          frame[frame['method'] == b][['seed', 'dice']],
                          on='seed', suffixes=('_a', '_b'))
        if paired.empty:
            continue
        summary.comparisons.append(PairwiseComparison(
            a, b, wilcoxon_signed_rank(paired['dice_a'].to_numpy(), paired['dice_b'].to_numpy())))
    return summary


def degeneration_table(frame: pd.DataFrame) -> pd.DataFrame:
    """Число прогонов с коллапсом и пустыми классами, флаг нестабильности и прирост от лишнего класса по методам"""
    rows = []
    for method in dict.fromkeys(frame['method']):
        runs = frame[frame['method'] == method]
        dice = runs['dice'].to_numpy(dtype=np.float64)
        rows.append({
            'method': method,
            'runs': len(runs),
            'collapse_runs': int(runs['collapse'].sum()),
            'empty_class_runs': int((runs['empty_classes'] != "").sum()),
            'dice_std': float(dice.std()),
            'unstable': assess_instability(dice) if len(runs) >= 2 else False,
            'redundant_class_gain': _optional_mean(runs['redundant_class_gain']),
        })
    return pd.DataFrame(rows, columns=DEGENERATION_COLUMNS)


class ReportRenderer:
    """Записывает таблицы результатов и наложения в выходную папку"""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.logger = logging.getLogger(__name__)

    def _write_frame(self, frame: pd.DataFrame, name: str) -> Path:
        path = self.output_dir / name
        frame.to_csv(path, index=False, lineterminator="\n")
        self.logger.info(f"Wrote {path}")
        return path

    def render_trials(self, reports: List[TrialReport], name: str = "trials.csv") -> Path:
        return self._write_frame(trials_frame(reports), name)

    def render_summary(self, summary: TrialSummary, name: str = "summary.csv") -> Path:
        """Сводка по методам: среднее, std, верхняя граница и флаги"""
        frame = pd.DataFrame([m.to_dict() for m in summary.methods], columns=SUMMARY_COLUMNS)
        return self._write_frame(frame, name)

    def render_pairwise(self, summary: TrialSummary, name: str = "pairwise.csv") -> Path:
        """Попарные сравнения с уровнем значимости"""
        frame = pd.DataFrame([{
            'method_a': c.method_a,
            'method_b': c.method_b,
            'statistic': c.result.statistic,
            'p_two_sided': c.result.p_two_sided,
            'n_effective': c.result.n_effective,
            'test': c.result.method,
            'significance': c.significance,
        } for c in summary.comparisons],
            columns=['method_a', 'method_b', 'statistic', 'p_two_sided', 'n_effective', 'test', 'significance'])
        return self._write_frame(frame, name)

    def render_summary_json(self, summary: TrialSummary, name: str = "summary.json") -> Path:
        path = self.output_dir / name
        path.write_text(summary.to_json(indent=2), encoding='utf-8')
        self.logger.info(f"Wrote {path}")
        return path

    def render_degeneration(self, frame: pd.DataFrame, name: str = "degeneration.csv") -> Path:
        return self._write_frame(degeneration_table(frame), name)

    def render_lambda_sweep(self, rows: List[LambdaSweepRow], name: str = "ablation.csv") -> Path:
        frame = pd.DataFrame([row.to_dict() for row in rows],
                             columns=['lam', 'runs', 'dice_mean', 'dice_std', 'dice_upper_bound', 'mean_epochs'])
        return self._write_frame(frame.rename(columns={'lam': 'lambda'}), name)

    def render_scores(self, scores: ScoreSet, name: str = "scores.csv") -> Path:
        return self._write_frame(pd.DataFrame([scores.to_dict()]), name)

    def render_overlay(self, img: ImageTensor, mask: SegmentationMask, name: str) -> Path:
        path = write_png(self.output_dir / name, palette_overlay(img, mask))
        self.logger.info(f"Wrote overlay {path}")
        return path

    def render_error_overlay(self, img: ImageTensor, pred: SegmentationMask, gt: SegmentationMask,
                             name: str) -> Path:
        path = write_png(self.output_dir / name, error_overlay(img, pred, gt))
        self.logger.info(f"Wrote error overlay {path}")
        return path

    def render_all(self, reports: List[TrialReport], summary: TrialSummary) -> List[Path]:
        """Все таблицы серии прогонов"""
        trials_path = self.render_trials(reports)
        return [
            trials_path,
            self.render_summary(summary),
            self.render_pairwise(summary),
            self.render_degeneration(read_trials_csv([trials_path])),
        ]
