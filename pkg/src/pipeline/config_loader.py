from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional
import logging

import yaml

from src.models.segmentation_model import RunConfig, SyntheticSpec
from src.models.errors import ConfigError, InvalidInputError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path("config") / "config.yaml"
KEY_ALIASES = {'lambda': 'lam'}
RUN_KEYS = {f.name for f in fields(RunConfig)}
SYNTHETIC_KEYS = {f.name for f in fields(SyntheticSpec)}
TRIAL_KEYS = {'repeats', 'methods', 'record_timing', 'redundant'}
LOGGING_KEYS = {'level', 'file'}
SECTIONS = ('logging', 'run', 'synthetic', 'trials')


@dataclass
class TrialSettings:
    repeats: int = 10
    methods: List[str] = field(default_factory=lambda: ["dcgn", "cgmm-em", "gmm", "kmeans"])
    record_timing: bool = False
    redundant: bool = False


@dataclass
class LoggingSettings:
    level: str = "INFO"
    file: str = "segmentation.log"


@dataclass
class AppConfig:
    """Полная конфигурация приложения"""
    run: RunConfig = field(default_factory=RunConfig)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    trials: TrialSettings = field(default_factory=TrialSettings)
    logging: LoggingSettings = field(default_factory=LoggingSettings)


def _canonical_key(key: str) -> str:
    key = key.strip()
    return KEY_ALIASES.get(key, key)


def parse_key_value(text: str, source: str = "<config>") -> Dict[str, Any]:
    """Разбирает строки `key = value`; значения читаются как YAML-скаляры или списки"""
    values: Dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got '{raw.strip()}'")
        key, value = line.split('=', 1)
        key = _canonical_key(key)
        if not key:
            raise ConfigError(f"{source}:{number}: empty key")
        try:
            values[key] = yaml.safe_load(value.strip()) if value.strip() else None
        except yaml.YAMLError as e:
            raise ConfigError(f"{source}:{number}: cannot parse value for '{key}': {e}") from e
    return values


def _flatten_sections(document: Dict[str, Any], source: str) -> Dict[str, Dict[str, Any]]:
    """YAML с секциями logging/run/synthetic/trials → словари по секциям"""
    sections: Dict[str, Dict[str, Any]] = {name: {} for name in SECTIONS}
    for name, body in document.items():
        if name not in SECTIONS:
            raise ConfigError(f"{source}: unknown section '{name}'")
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"{source}: section '{name}' must be a mapping")
        sections[name] = {_canonical_key(str(k)): v for k, v in body.items()}
    return sections


def _route_flat(values: Dict[str, Any], source: str) -> Dict[str, Dict[str, Any]]:
    """Плоские ключи раскладываются по секциям по именам полей; `k` задаёт обе секции"""
    sections: Dict[str, Dict[str, Any]] = {name: {} for name in SECTIONS}
    for key, value in values.items():
        routed = False
        if key in RUN_KEYS:
            sections['run'][key] = value
            routed = True
        if key in SYNTHETIC_KEYS:
            sections['synthetic'][key] = value
            routed = True
        if key in TRIAL_KEYS:
            sections['trials'][key] = value
            routed = True
        if not routed:
            raise ConfigError(f"{source}: unknown key '{key}'")
    return sections


def read_config_file(path: Path) -> Dict[str, Dict[str, Any]]:
    """Читает YAML (по расширению .yaml/.yml) или построчный формат `key = value`"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding='utf-8')
    if path.suffix in ('.yaml', '.yml'):
        try:
            document = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: invalid YAML: {e}") from e
        if not isinstance(document, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        if any(name in SECTIONS for name in document):
            return _flatten_sections(document, str(path))
        return _route_flat({_canonical_key(str(k)): v for k, v in document.items()}, str(path))
    return _route_flat(parse_key_value(text, str(path)), str(path))


def _check_keys(section: str, values: Dict[str, Any], allowed: set):
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in section '{section}': {unknown}")


def _coerce_floats(target, values: Dict[str, Any]) -> Dict[str, Any]:
    """PyYAML читает `5e-5` как строку; для вещественных полей приводим явно"""
    float_fields = {f.name for f in fields(target) if f.type in (float, Optional[float])}
    coerced = dict(values)
    for key, value in values.items():
        if key in float_fields and isinstance(value, str):
            try:
                coerced[key] = float(value)
            except ValueError as e:
                raise ConfigError(f"'{key}' must be a number, got '{value}'") from e
    return coerced


def apply_sections(config: AppConfig, sections: Dict[str, Dict[str, Any]]) -> AppConfig:
    """Накладывает значения секций на конфигурацию"""
    _check_keys('run', sections.get('run', {}), RUN_KEYS)
    _check_keys('synthetic', sections.get('synthetic', {}), SYNTHETIC_KEYS)
    _check_keys('trials', sections.get('trials', {}), TRIAL_KEYS)
    _check_keys('logging', sections.get('logging', {}), LOGGING_KEYS)
    try:
        run = replace(config.run, **_coerce_floats(RunConfig, sections.get('run', {})))
        synthetic = replace(config.synthetic, **_coerce_floats(SyntheticSpec, sections.get('synthetic', {})))
        trials = replace(config.trials, **sections.get('trials', {}))
        logging_settings = replace(config.logging, **sections.get('logging', {}))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid configuration value: {e}") from e
    except InvalidInputError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    return AppConfig(run=run, synthetic=synthetic, trials=trials, logging=logging_settings)


def load_config(config_path: Optional[Path] = None, default_path: Path = DEFAULT_CONFIG_PATH) -> AppConfig:
    """Встроенные значения < файл по умолчанию < явно заданный файл"""
    config = AppConfig()
    default_path = Path(default_path)
    if default_path.exists():
        config = apply_sections(config, read_config_file(default_path))
    else:
        logger.warning(f"Config file {default_path} not found, using defaults")
    if config_path is not None:
        config = apply_sections(config, read_config_file(Path(config_path)))
        logger.info(f"Loaded configuration from {config_path}")
    return config
