import copy
import logging
import os
from typing import Any, Dict, Iterable, Optional

import yaml

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                                   'config', 'forge_config.yaml')


def load_main_config(path: Optional[str] = None) -> dict:
    """Loads the main YAML configuration; falls back to built-in defaults (empty dict)."""
    path = path or DEFAULT_CONFIG_PATH
    try:
        with open(path, 'r') as f:
            return yaml.safe_load(f) or {}
    except FileNotFoundError:
        logger.warning(f"Config file not found: {path}, using defaults")
        return {}
    except yaml.YAMLError as e:
        logger.error(f"Could not parse {path}: {e}", exc_info=True)
        return {}


def set_dotted(config: Dict[str, Any], dotted_key: str, value: Any) -> Dict[str, Any]:
    """Set config['a']['b'] for key 'a.b', creating sections as needed."""
    parts = dotted_key.split('.')
    if not all(parts):
        raise ValueError(f"Invalid config key '{dotted_key}'")
    section = config
    for part in parts[:-1]:
        if not isinstance(section.get(part), dict):
            section[part] = {}
        section = section[part]
    section[parts[-1]] = value
    return config


def apply_overrides(config: Dict[str, Any], assignments: Iterable[str] = (),
                    **keyed: Any) -> Dict[str, Any]:
    """
    Return a copy of config with overrides applied.

    Args:
        assignments: 'section.key=value' strings; values are parsed as YAML scalars.
        keyed: dotted keys mapped to values; None values are skipped.
    """
    config = copy.deepcopy(config or {})
    for assignment in assignments:
        if '=' not in assignment:
            raise ValueError(f"Override '{assignment}' must look like section.key=value")
        key, raw = assignment.split('=', 1)
        set_dotted(config, key.strip(), yaml.safe_load(raw))
    for key, value in keyed.items():
        if value is not None:
            set_dotted(config, key, value)
    return config


def print_header(title: str):
    """Prints a formatted header."""
    print("\n" + "=" * 70)
    print(f"--- {title.upper()} ---")
    print("=" * 70)
