class SegmentationError(Exception):
    """Базовая ошибка инструментария сегментации"""


class InvalidInputError(SegmentationError):
    """Некорректные входные данные: формы, значения, параметры"""


class ConfigError(InvalidInputError):
    """Ошибка в файле конфигурации"""


class CovarianceError(SegmentationError):
    """Ковариационная матрица компоненты не положительно определена"""

    def __init__(self, component: int, detail: str = ""):
        self.component = component
        message = f"covariance of component {component} is not positive definite"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class DegenerateResponsibilityError(SegmentationError):
    """Столбец апостериорных вероятностей почти нулевой (коллапс компоненты)"""

    def __init__(self, component: int, mass: float):
        self.component = component
        self.mass = mass
        super().__init__(
            f"degenerate responsibility column {component} (total mass {mass:.3e})"
        )


class TrainingDivergedError(SegmentationError):
    """Функция потерь стала NaN во время обучения"""

    def __init__(self, epoch: int, step: int):
        self.epoch = epoch
        self.step = step
        super().__init__(f"loss became NaN at epoch {epoch} (step {step})")


class MetricError(SegmentationError):
    """Нарушено предусловие метрики"""


class TrialError(SegmentationError):
    """Сбой одного прогона в серии повторных экспериментов"""

    def __init__(self, method: str, seed: int, cause: Exception):
        self.method = method
        self.seed = seed
        self.cause = cause
        super().__init__(f"trial failed for method '{method}' with seed {seed}: {cause}")
