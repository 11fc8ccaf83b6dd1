"""Line-oriented ``key = value`` suite configuration.

Grammar: blank lines and lines starting with ``#`` are ignored, ``[name]``
opens a section, every other line is ``key = value``.  Lists are comma
separated.  Top-level keys and the ``[mesh]`` section are recognised::

    s_values = 0.6, 0.75, 0.9
    sigma_values = 0.5, 1.0
    dimensions = 1, 2, 3
    fit_window = 1e-4, 1e-2
    seed = 42
    output_dir = results
    experiments = a_sigma, harmonic, scaling, barrier, solve, stability, compare

    [mesh]
    n_cells = 1024
    grading_beta = auto
"""
from dataclasses import dataclass, field
import re

from .experiments import EXPERIMENTS
from .geometry import KernelParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SuiteConfig:
    s_values: tuple
    sigma_values: tuple = (0.5, 1.0)
    dimensions: tuple = (1, 2, 3)
    n_cells: int = 1024
    grading_beta: object = "auto"
    fit_window: tuple = (1e-4, 1e-2)
    seed: int = 42
    output_dir: str = "results"
    experiments: tuple = field(default=EXPERIMENTS)


_KEYS = {
    "": ("s_values", "sigma_values", "dimensions", "fit_window", "seed", "output_dir", "experiments"),
    "mesh": ("n_cells", "grading_beta"),
}

_SECTION = re.compile(r"^\[\s*([A-Za-z_][\w-]*)\s*\]$")
_ENTRY = re.compile(r"^([A-Za-z_][\w-]*)\s*=\s*(.*)$")


def _floats(key, text):
    try:
        return tuple(float(v) for v in _items(text))
    except ValueError:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers") from None


def _items(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def parse_config(text):
    """Parse and validate a suite configuration document."""
    raw = {}
    where = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        m = _SECTION.match(stripped)
        if m:
            section = m.group(1)
            if section not in _KEYS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        m = _ENTRY.match(stripped)
        if not m:
            raise ConfigError(f"line {lineno}: syntax error, expected 'key = value'")
        key, value = m.group(1), m.group(2).strip()
        if key not in _KEYS[section]:
            scope = f"[{section}]" if section else "top level"
            raise ConfigError(f"line {lineno}: unknown key '{key}' at {scope}")
        if key in raw:
            raise ConfigError(f"duplicate key '{key}' on lines {where[key]} and {lineno}")
        raw[key] = value
        where[key] = lineno
    return _build(raw)


def _build(raw):
    if "s_values" not in raw:
        raise ConfigError("s_values: required key missing")
    kw = {}
    kw["s_values"] = _floats("s_values", raw["s_values"])
    if not kw["s_values"]:
        raise ConfigError("s_values: at least one value required")
    if "sigma_values" in raw:
        kw["sigma_values"] = _floats("sigma_values", raw["sigma_values"])
    for s in kw["s_values"]:
        for sg in kw.get("sigma_values", SuiteConfig.sigma_values):
            try:
                KernelParams(s, sg)
            except ValueError as exc:
                key = "s_values" if not 0.5 < s < 1.0 else "sigma_values"
                raise ConfigError(f"{key}: {exc}") from None
    if "dimensions" in raw:
        try:
            dims = tuple(int(v) for v in _items(raw["dimensions"]))
        except ValueError:
            raise ConfigError("dimensions: expected integers") from None
        if not dims or any(d < 1 for d in dims):
            raise ConfigError("dimensions: values must be positive integers")
        kw["dimensions"] = dims
    if "fit_window" in raw:
        w = _floats("fit_window", raw["fit_window"])
        if len(w) != 2 or not 0.0 < w[0] < w[1] <= 0.25:
            raise ConfigError("fit_window: expected 'd_min, d_max' with 0 < d_min < d_max <= 1/4")
        kw["fit_window"] = w
    if "seed" in raw:
        try:
            seed = int(raw["seed"])
        except ValueError:
            raise ConfigError("seed: expected an integer") from None
        if not 0 <= seed < 2**64:
            raise ConfigError("seed: must be a non-negative 64-bit integer")
        kw["seed"] = seed
    if "output_dir" in raw:
        if not raw["output_dir"]:
            raise ConfigError("output_dir: empty path")
        kw["output_dir"] = raw["output_dir"]
    if "experiments" in raw:
        names = tuple(_items(raw["experiments"]))
        bad = [n for n in names if n not in EXPERIMENTS]
        if bad:
            raise ConfigError(f"experiments: unknown experiment(s) {', '.join(bad)}")
        kw["experiments"] = names
    if "n_cells" in raw:
        try:
            n = int(raw["n_cells"])
        except ValueError:
            raise ConfigError("n_cells: expected an integer") from None
        if n < 8 or n % 2:
            raise ConfigError("n_cells: must be an even integer >= 8")
        kw["n_cells"] = n
    if "grading_beta" in raw:
        b = raw["grading_beta"]
        if b != "auto":
            try:
                b = float(b)
            except ValueError:
                raise ConfigError("grading_beta: expected a number or 'auto'") from None
            if not b >= 1.0:
                raise ConfigError("grading_beta: must be >= 1")
        kw["grading_beta"] = b
    return SuiteConfig(**kw)
