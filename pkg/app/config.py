"""Configuration management for the kernel verification pipeline"""

import copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import toml
from dotenv import load_dotenv

logger = logging.getLogger(__name__)


class Config:
    """Configuration manager: defaults, then config file, then environment"""

    def __init__(self, config_file: Optional[str] = None):
        # Load .env first so environment overrides are available
        try:
            load_dotenv()
        except Exception:
            pass
        self.config_data: Dict[str, Any] = {}
        self.config_file = config_file

        self._load_default_config()

        if config_file:
            self._load_config_file(config_file)
        else:
            for config_path in ['config.toml', 'config/config.toml']:
                if Path(config_path).exists():
                    self._load_config_file(config_path)
                    break

        self._load_environment_variables()

    def _load_default_config(self):
        """Load default configuration values"""
        self.config_data = {
            'app': {
                'name': 'kernel-verify',
                'version': '0.1.0',
            },
            'spectral': {
                'rel_tol': 1e-10,
            },
            'learning': {
                'mode': 'dinkelbach',
                'alpha': 1.0,
                'tol': 1e-8,
                'max_iter': 100,
            },
            'cskda': {
                'rank_rel_tol': 1e-10,
                'ridge_condition': 1e12,
                'ridge_scale': 1e-8,
                'normalize_directions': True,
            },
            'evaluation': {
                'decimals': 2,
            },
            'synthetic': {
                'spread': 1.0,
            },
            'logging': {
                'level': 'INFO',
                'log_dir': 'logs',
                'file_logging': True,
            },
            'output': {
                'report_path': 'reports/report.json',
                'roc_path': '',
            },
        }

    def _load_config_file(self, config_file: str):
        """Load configuration from TOML or JSON file"""
        config_path = Path(config_file)
        try:
            if not config_path.exists():
                raise FileNotFoundError(f"Config file not found: {config_file}")

            if config_path.suffix.lower() == '.toml':
                with open(config_path, 'r', encoding='utf-8') as f:
                    file_config = toml.load(f)
            elif config_path.suffix.lower() == '.json':
                with open(config_path, 'r', encoding='utf-8') as f:
                    file_config = json.load(f)
            else:
                raise ValueError(f"Unsupported config file format: {config_path.suffix}")

            self._deep_merge(self.config_data, file_config)
            self.config_file = config_file

        except Exception as e:
            logger.warning("Failed to load config file %s: %s", config_file, e)

    def _load_environment_variables(self):
        """Load configuration from environment variables"""
        env_mappings = {
            'KERNEL_VERIFY_SPECTRAL_REL_TOL': ('spectral', 'rel_tol'),
            'KERNEL_VERIFY_LEARN_MODE': ('learning', 'mode'),
            'KERNEL_VERIFY_LEARN_ALPHA': ('learning', 'alpha'),
            'KERNEL_VERIFY_LEARN_TOL': ('learning', 'tol'),
            'KERNEL_VERIFY_LEARN_MAX_ITER': ('learning', 'max_iter'),
            'KERNEL_VERIFY_RANK_REL_TOL': ('cskda', 'rank_rel_tol'),
            'KERNEL_VERIFY_RIDGE_CONDITION': ('cskda', 'ridge_condition'),
            'KERNEL_VERIFY_RIDGE_SCALE': ('cskda', 'ridge_scale'),
            'KERNEL_VERIFY_DECIMALS': ('evaluation', 'decimals'),
            'KERNEL_VERIFY_SPREAD': ('synthetic', 'spread'),
            'KERNEL_VERIFY_LOG_LEVEL': ('logging', 'level'),
            'KERNEL_VERIFY_LOG_DIR': ('logging', 'log_dir'),
            'KERNEL_VERIFY_FILE_LOGGING': ('logging', 'file_logging'),
            'KERNEL_VERIFY_REPORT_PATH': ('output', 'report_path'),
            'KERNEL_VERIFY_ROC_PATH': ('output', 'roc_path'),
        }

        for env_var, config_path in env_mappings.items():
            value = os.getenv(env_var)
            if value is not None:
                self._set_nested_value(self.config_data, config_path, self._convert_env_value(value))

    def _deep_merge(self, base_dict: Dict, update_dict: Dict):
        """Deep merge two dictionaries"""
        for key, value in update_dict.items():
            if key in base_dict and isinstance(base_dict[key], dict) and isinstance(value, dict):
                self._deep_merge(base_dict[key], value)
            else:
                base_dict[key] = value

    def _set_nested_value(self, data: Dict, path: tuple, value: Any):
        """Set a value in a nested dictionary using a path tuple"""
        current = data
        for key in path[:-1]:
            if key not in current:
                current[key] = {}
            current = current[key]
        current[path[-1]] = value

    def _convert_env_value(self, value: str) -> Union[str, int, bool, float]:
        """Convert environment variable string to appropriate type"""
        if value.lower() in ('true', 'yes', 'on'):
            return True
        elif value.lower() in ('false', 'no', 'off'):
            return False

        try:
            if any(ch in value for ch in '.eE'):
                return float(value)
            return int(value)
        except ValueError:
            pass

        return value

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get configuration value using dot notation

        Args:
            key: Configuration key (e.g., 'spectral.rel_tol')
            default: Default value if key not found
        """
        try:
            value = self.config_data
            for k in key.split('.'):
                value = value[k]
            return value
        except (KeyError, TypeError):
            return default

    def set(self, key: str, value: Any):
        """Set configuration value using dot notation"""
        keys = key.split('.')
        current = self.config_data
        for k in keys[:-1]:
            if k not in current:
                current[k] = {}
            current = current[k]
        current[keys[-1]] = value

    def has_key(self, key: str) -> bool:
        """Check if configuration key exists"""
        sentinel = object()
        return self.get(key, sentinel) is not sentinel

    def get_spectral_tolerance(self) -> float:
        return float(self.get('spectral.rel_tol', 1e-10))

    def get_learn_options(self):
        """Learning options from the [learning] section"""
        from .kernel_learning import LearnOptions
        return LearnOptions.from_dict({
            'mode': self.get('learning.mode', 'dinkelbach'),
            'alpha': self.get('learning.alpha', 1.0),
            'tol': self.get('learning.tol', 1e-8),
            'max_iter': self.get('learning.max_iter', 100),
        })

    def get_fit_options(self):
        """Discriminant fitting options from the [cskda] section"""
        from .cskda import FitOptions
        return FitOptions(
            rank_rel_tol=float(self.get('cskda.rank_rel_tol', 1e-10)),
            ridge_condition=float(self.get('cskda.ridge_condition', 1e12)),
            ridge_scale=float(self.get('cskda.ridge_scale', 1e-8)),
            normalize_directions=bool(self.get('cskda.normalize_directions', True)),
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to dictionary"""
        return copy.deepcopy(self.config_data)

    def save_to_file(self, file_path: str):
        """Save current configuration to file"""
        config_path = Path(file_path)

        if config_path.suffix.lower() == '.toml':
            with open(config_path, 'w', encoding='utf-8') as f:
                toml.dump(self.config_data, f)
        elif config_path.suffix.lower() == '.json':
            with open(config_path, 'w', encoding='utf-8') as f:
                json.dump(self.config_data, f, indent=2)
        else:
            raise ValueError(f"Unsupported file format: {config_path.suffix}")

    def validate(self) -> Dict[str, Any]:
        """Validate configuration and return any issues"""
        issues = {
            'errors': [],
            'warnings': [],
        }

        rel_tol = self.get('spectral.rel_tol')
        if not isinstance(rel_tol, (int, float)) or not 0 < rel_tol < 1:
            issues['errors'].append(f"spectral.rel_tol must lie in (0, 1), got {rel_tol!r}")

        mode = self.get('learning.mode')
        if mode not in ('dinkelbach', 'fixed_alpha'):
            issues['errors'].append(f"learning.mode must be dinkelbach or fixed_alpha, got {mode!r}")

        tol = self.get('learning.tol')
        if not isinstance(tol, (int, float)) or tol <= 0:
            issues['errors'].append(f"learning.tol must be positive, got {tol!r}")

        max_iter = self.get('learning.max_iter')
        if not isinstance(max_iter, int) or isinstance(max_iter, bool) or max_iter < 1:
            issues['errors'].append(f"learning.max_iter must be an integer >= 1, got {max_iter!r}")

        alpha = self.get('learning.alpha')
        if not isinstance(alpha, (int, float)) or alpha <= 0:
            issues['errors'].append(f"learning.alpha must be positive, got {alpha!r}")

        decimals = self.get('evaluation.decimals')
        if not isinstance(decimals, int) or decimals < 0:
            issues['warnings'].append(f"evaluation.decimals should be a non-negative integer, got {decimals!r}")

        return issues


# Singleton instance
_config_instance = None


def get_config() -> Config:
    """Get the global configuration instance"""
    global _config_instance
    if _config_instance is None:
        _config_instance = Config()
    return _config_instance


def load_config() -> dict:
    """Convenience helper returning the merged config as a plain dict."""
    return get_config().to_dict()
