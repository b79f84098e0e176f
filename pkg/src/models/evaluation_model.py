from dataclasses import dataclass, field
from typing import List, Optional

from dataclasses_json import dataclass_json


@dataclass_json
@dataclass
class ScoreSet:
    """Метрики качества одного предсказания (или их среднее по серии)"""
    precision: float
    recall: float
    dice: float
    nmi: float
    mi: float
    aji_standard: Optional[float] = None
    aji_paper: Optional[float] = None


@dataclass_json
@dataclass
class WilcoxonResult:
    """Результат знакового рангового критерия Уилкоксона"""
    statistic: float
    p_two_sided: float
    n_effective: int
    method: str
    degenerate: bool = False

    EXACT = "exact"
    NORMAL = "normal-approximation"


@dataclass_json
@dataclass
class DegenerationReport:
    """Флаги вырождения для одного прогона"""
    collapse: bool
    empty_classes: List[int] = field(default_factory=list)
    unstable: bool = False
    redundant_class_gain: Optional[float] = None
    collapsed_images: int = 0
    images_with_empty_classes: int = 0


@dataclass_json
@dataclass
class TrialReport:
    """Один прогон метода с фиксированным seed"""
    run_id: int
    seed: int
    method: str
    k: int
    lam: float
    scores: ScoreSet
    degeneration: DegenerationReport
    epochs: int
    wall_ms: int = 0
    per_image_dice: List[float] = field(default_factory=list)


@dataclass_json
@dataclass
class MethodSummary:
    """Сводка по серии повторных прогонов одного метода"""
    method: str
    runs: int
    dice_mean: float
    dice_std: float
    dice_upper_bound: float
    precision_mean: float
    recall_mean: float
    nmi_mean: float
    aji_mean: Optional[float]
    unstable: bool
    collapse_count: int
    empty_class_count: int
    mean_epochs: float


@dataclass_json
@dataclass
class PairwiseComparison:
    """Сравнение двух методов по критерию Уилкоксона"""
    method_a: str
    method_b: str
    result: WilcoxonResult

    @property
    def significance(self) -> str:
        if self.result.degenerate:
            return "n/a"
        if self.result.p_two_sided < 0.001:
            return "highly significant"
        if self.result.p_two_sided < 0.05:
            return "significant"
        return "not significant"


@dataclass_json
@dataclass
class TrialSummary:
    """Итог серии: сводки по методам и попарные сравнения"""
    methods: List[MethodSummary] = field(default_factory=list)
    comparisons: List[PairwiseComparison] = field(default_factory=list)

    def get_method(self, name: str) -> Optional[MethodSummary]:
        """Находит сводку метода по имени"""
        return next((m for m in self.methods if m.method == name), None)
