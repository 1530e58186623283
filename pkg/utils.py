# this module includes common utilities like csv handling, config loading and the error types
# shared by every solver module, so that each module does not repeat them
import logging
import os

import numpy as np
import pandas as pd
import toml

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Full double precision for every CSV artifact
CSV_FLOAT_FORMAT = "%.17g"

SNAPSHOT_VERSION = 1


class EigenSolverError(Exception):
    """Base class for every error raised by the eigensolver package."""


class ContractViolation(EigenSolverError, ValueError):
    """A caller broke a precondition (dimension, order, interval, count)."""


class NonFiniteValueError(ContractViolation):
    """A NaN or Inf showed up where a finite value is required."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class DegenerateStateError(EigenSolverError):
    """The trial state has zero norm on the quadrature rule."""


class FactorizationError(EigenSolverError):
    """The shifted pencil could not be factorized."""


class ResidualCheckError(EigenSolverError):
    """A computed eigenpair does not satisfy its equation to the required tolerance."""

    def __init__(self, message, index=None, residual=None):
        super().__init__(message)
        self.index = index
        self.residual = residual


class SingularElementError(EigenSolverError):
    """A finite element has a non-positive Jacobian determinant."""

    def __init__(self, message, element_id=None):
        super().__init__(message)
        self.element_id = element_id


class ConfigError(EigenSolverError):
    """Invalid run or solver configuration."""


class LevelRejected(EigenSolverError):
    """An excited-state solve collapsed back onto an already found state."""


def configure_logging(verbose=False):
    """
    Install a single stream handler on the root logger.

    Args:
        verbose (bool): DEBUG level when True, INFO otherwise
    """
    level = logging.DEBUG if verbose else logging.INFO
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)


def ensure_output_dir(path):
    """
    Create the output directory if needed and check that it is writable.

    Args:
        path (str): Output directory

    Returns:
        str: The same path

    Raises:
        ConfigError: if the directory cannot be created or written to
    """
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"Cannot create output directory {path}: {e}") from e
    if not os.access(path, os.W_OK):
        raise ConfigError(f"Output directory {path} is not writable")
    return path


def save_results_to_csv(results, output_file):
    """
    Save results to a csv file with a header row and full double precision.

    Args:
        results (list | dict | DataFrame): Rows (list of dicts), columns (dict of lists) or a frame
        output_file (str): Destination path
    """
    results_df = results if isinstance(results, pd.DataFrame) else pd.DataFrame(results)
    results_df.to_csv(output_file, index=False, float_format=CSV_FLOAT_FORMAT)
    logger.debug("Wrote %d rows to %s", len(results_df), output_file)


def write_key_value_file(path, header, values):
    """
    Write a versioned plain-text file: `key = value` lines followed by a flat list of reals.

    Args:
        path (str): Destination path
        header (dict): Scalar entries, written in insertion order
        values (sequence of float): Flat real list, one number per line
    """
    lines = [f"version = {SNAPSHOT_VERSION}"]
    for key, value in header.items():
        if isinstance(value, float):
            value = repr(float(value))
        lines.append(f"{key} = {value}")
    lines.append(f"values = {len(values)}")
    lines.extend(repr(float(v)) for v in values)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def read_key_value_file(path):
    """
    Read a file written by write_key_value_file.

    Args:
        path (str): Source path

    Returns:
        tuple: (header dict of strings, list of floats)
    """
    with open(path, encoding="utf-8") as handle:
        lines = [line.strip() for line in handle if line.strip()]

    header = {}
    values = []
    for index, line in enumerate(lines):
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "values":
            count = int(value)
            values = [float(v) for v in lines[index + 1:index + 1 + count]]
            if len(values) != count:
                raise ContractViolation(f"{path}: expected {count} values, found {len(values)}")
            break
        header[key] = value

    version = int(header.get("version", -1))
    if version != SNAPSHOT_VERSION:
        raise ContractViolation(f"{path}: unsupported snapshot version {version}")
    return header, values


def load_config(path):
    """
    Load a flat key/value TOML config file.

    Args:
        path (str): Config file path

    Returns:
        dict: Keys with dashes normalized to underscores
    """
    try:
        raw = toml.load(path)
    except (OSError, toml.TomlDecodeError) as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e

    config = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            raise ConfigError(f"Config file {path} must be flat; section [{key}] found")
        config[key.replace("-", "_")] = value
    return config


def dump_config(config):
    """Render a flat config dict as TOML text; keys whose value is None become comment lines."""
    text = toml.dumps({k: v for k, v in config.items() if v is not None})
    unset = "".join(f"# {k} = <unset>\n" for k, v in config.items() if v is None)
    return text + unset


def require_finite(values, what, points=None):
    """
    Raise NonFiniteValueError naming the first offending entry.

    Args:
        values (ndarray): Values to check
        what (str): Description used in the message
        points (ndarray, optional): Coordinates matching values, reported for the bad entry
    """
    values = np.asarray(values)
    bad = ~np.isfinite(values)
    if bad.any():
        index = int(np.flatnonzero(bad.reshape(len(values), -1).any(axis=1))[0]) if values.ndim else 0
        point = None if points is None else np.asarray(points)[index]
        raise NonFiniteValueError(f"Non-finite {what} at index {index} (point {point})", point=point)
