import tomllib
import os
import logging
from typing import Dict, Any

CONFIG_FILE_PATH = "pyproject.toml"

DEFAULT_SIMULATION_CONFIG = {
    "logging_level": "INFO",
    "max_workers": None,  # If None, will be calculated as min(32, os.cpu_count() + 4)
    "window_length": 50,  # Committed txns per load-control observation window
    "hysteresis": 0.05,
    "confidence": 0.95,
    "batches": 10,  # Batch-means batches per run
    "victim_measure": "locks",  # Options: "locks", "writes"
    "validation_tolerances": {"p_c": 0.10, "beta": 0.25, "R": 0.10, "CR": 0.10},
}

VICTIM_MEASURES = ("locks", "writes")


def get_logging_level_from_string(level_str: str) -> int:
    """Converts a logging level string to its integer value."""
    return getattr(logging, level_str.upper(), logging.INFO)


def _positive_int(value: Any, key: str, default: int) -> int:
    if isinstance(value, int) and not isinstance(value, bool) and value > 0:
        return value
    logging.getLogger(__name__).warning(
        f"Invalid '{key}' in {CONFIG_FILE_PATH}: {value!r}. Using default {default}."
    )
    return default


def _unit_float(value: Any, key: str, default: float, allow_zero: bool = True) -> float:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        low_ok = value >= 0 if allow_zero else value > 0
        if low_ok and value < 1:
            return float(value)
    logging.getLogger(__name__).warning(
        f"Invalid '{key}' in {CONFIG_FILE_PATH}: {value!r}. Using default {default}."
    )
    return default


def load_simulation_config(path: str = CONFIG_FILE_PATH) -> Dict[str, Any]:
    """
    Loads simulation configuration from pyproject.toml.
    Falls back to default values if the file or specific keys are not found.
    Environment variables `CONTENTION_LAB_THREADS` and `CONTENTION_LAB_LOG_LEVEL`
    override the matching settings.
    """
    config = DEFAULT_SIMULATION_CONFIG.copy()
    config["validation_tolerances"] = dict(DEFAULT_SIMULATION_CONFIG["validation_tolerances"])
    defaults = DEFAULT_SIMULATION_CONFIG

    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
            settings = data.get("tool", {}).get("contention_lab", {}).get("simulation", {})

            if settings:
                config["logging_level"] = settings.get("logging_level", config["logging_level"])
                config["max_workers"] = settings.get("max_workers", config["max_workers"])
                config["window_length"] = _positive_int(
                    settings.get("window_length", config["window_length"]),
                    "window_length",
                    defaults["window_length"],
                )
                config["batches"] = _positive_int(
                    settings.get("batches", config["batches"]), "batches", defaults["batches"]
                )
                config["hysteresis"] = _unit_float(
                    settings.get("hysteresis", config["hysteresis"]),
                    "hysteresis",
                    defaults["hysteresis"],
                )
                config["confidence"] = _unit_float(
                    settings.get("confidence", config["confidence"]),
                    "confidence",
                    defaults["confidence"],
                    allow_zero=False,
                )

                config["victim_measure"] = settings.get(
                    "victim_measure", config["victim_measure"]
                )
                if config["victim_measure"] not in VICTIM_MEASURES:
                    logging.getLogger(__name__).warning(
                        f"Invalid 'victim_measure': {config['victim_measure']} in {CONFIG_FILE_PATH}. "
                        f"Using default '{defaults['victim_measure']}'. Allowed values: 'locks', 'writes'."
                    )
                    config["victim_measure"] = defaults["victim_measure"]

                tolerances = settings.get("validation_tolerances", {})
                if isinstance(tolerances, dict):
                    for key, value in tolerances.items():
                        if key in config["validation_tolerances"] and isinstance(
                            value, (int, float)
                        ):
                            config["validation_tolerances"][key] = float(value)
                        else:
                            logging.getLogger(__name__).warning(
                                f"Ignoring validation tolerance '{key}'={value!r} in {CONFIG_FILE_PATH}."
                            )

    except FileNotFoundError:
        logging.getLogger(__name__).info(f"{path} not found. Using default configurations.")
    except tomllib.TOMLDecodeError:
        logging.getLogger(__name__).error(f"Error decoding {path}. Using default configurations.")

    # Environment variables override pyproject.toml settings.
    threads = os.getenv("CONTENTION_LAB_THREADS")
    if threads:
        if threads.isdigit() and int(threads) > 0:
            config["max_workers"] = int(threads)
        else:
            logging.getLogger(__name__).warning(
                f"Ignoring CONTENTION_LAB_THREADS={threads!r}: expected a positive integer."
            )
    config["logging_level"] = os.getenv("CONTENTION_LAB_LOG_LEVEL", config["logging_level"])

    config["logging_level_int"] = get_logging_level_from_string(str(config["logging_level"]))

    return config


# Load configuration once when the module is imported.
SIM_CONFIG = load_simulation_config()


if __name__ == "__main__":
    print("Loaded simulation configuration:")
    for key, value in SIM_CONFIG.items():
        print(f"  {key}: {value}")
