"""
Run configuration: TOML file with [g], [coefficients], [grid], [run] sections.

Unknown sections and keys are rejected with a fuzzy "did you mean" hint.
Run defaults can come from a .env file (GLAB_SEED, GLAB_THREADS,
GLAB_OUTPUT_DIR); values in the config file win over the environment.
"""
import os
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional

from dotenv import load_dotenv
from fuzzywuzzy import fuzz

from calculators.g_function import GParams
from errors import ConfigError, LabError
from parsers.coefficients import CoefficientBundle
from solvers.pde_solver import Grid1D

load_dotenv()

SCHEMA = {
    'g': {'sigma_lo': None, 'sigma_hi': None},
    'coefficients': {
        'b': '0', 'h': '0', 'sigma': '1', 'f': '0', 'g': '0', 'phi': None,
        'L': 1.0, 'M': 10.0, 'lambda': 0.5, 'beta': 4.0, 'T': 1.0,
    },
    'grid': {'x_min': -6.0, 'x_max': 6.0, 'nx': 241, 'nt': 0, 'cfl': 0.9},
    'run': {
        'seed': 20240601, 'n_paths': 10000, 'n_steps': 200, 'x0': 0.0,
        'output_dir': 'output', 'threads': 1, 'increments': 'bernoulli',
    },
}

REQUIRED_SECTIONS = ('g', 'coefficients')
INCREMENTS = ('bernoulli', 'gaussian')
ENV_DEFAULTS = {'seed': ('GLAB_SEED', int), 'threads': ('GLAB_THREADS', int), 'output_dir': ('GLAB_OUTPUT_DIR', str)}


@dataclass(frozen=True)
class RunSettings:
    seed: int = 20240601
    n_paths: int = 10000
    n_steps: int = 200
    x0: float = 0.0
    output_dir: str = 'output'
    threads: int = 1
    increments: str = 'bernoulli'


@dataclass(frozen=True)
class RunConfig:
    """Fully validated run configuration."""
    g: GParams
    coefficients: CoefficientBundle
    grid: Grid1D
    run: RunSettings
    path: Optional[str] = None

    def with_run(self, **changes) -> 'RunConfig':
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, run=replace(self.run, **changes))


def suggest(name: str, candidates: List[str], threshold: int = 70) -> Optional[str]:
    """Closest candidate by fuzzy ratio, or None below the threshold."""
    best_match = None
    best_score = 0
    for candidate in candidates:
        score = fuzz.ratio(name.lower(), candidate.lower())
        if score > best_score and score >= threshold:
            best_score = score
            best_match = candidate
    return best_match


def _line_of(text: str, key: str, section: Optional[str] = None) -> Optional[int]:
    """1-based line of `key = ...` (or `[key]` for sections) inside `section`."""
    current = None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        header = re.match(r'^\[\s*([^\]]+?)\s*\]', stripped)
        if header:
            current = header.group(1)
            if section is None and current == key:
                return number
            continue
        if section is not None and current == section and re.match(rf'^"?{re.escape(key)}"?\s*=', stripped):
            return number
    return None


def _unknown(kind: str, name: str, candidates: List[str], path: str, line: Optional[int]) -> ConfigError:
    hint = suggest(name, candidates)
    message = f"unknown {kind} '{name}'"
    if hint:
        message += f" (did you mean '{hint}'?)"
    return ConfigError(message, path=path, line=line)


def _env_defaults() -> Dict:
    values = {}
    for key, (variable, cast) in ENV_DEFAULTS.items():
        raw = os.getenv(variable)
        if raw:
            try:
                values[key] = cast(raw)
            except ValueError:
                raise ConfigError(f"environment variable {variable}={raw!r} is not a valid {cast.__name__}")
    return values


def _section(raw: Dict, name: str, text: str, path: str) -> Dict:
    table = raw.get(name, {})
    if not isinstance(table, dict):
        raise ConfigError(f"'{name}' must be a section", path=path, line=_line_of(text, name))
    allowed = SCHEMA[name]
    for key in table:
        if key not in allowed:
            raise _unknown('key', f"{name}.{key}", [f"{name}.{k}" for k in allowed], path,
                           _line_of(text, key, name))
    values = {k: v for k, v in allowed.items()}
    values.update(table)
    for key, value in values.items():
        if value is None:
            raise ConfigError(f"missing required key '{name}.{key}'", path=path, line=_line_of(text, name))
    return values


def _number(values: Dict, section: str, key: str, cast, text: str, path: str):
    """values[key] as int or float; a bad value names the key and its line."""
    value = values[key]
    try:
        if isinstance(value, bool):
            raise TypeError
        return cast(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key} must be a {cast.__name__}, got {value!r}",
                          path=path, line=_line_of(text, key, section))


def parse_config(text: str, path: str = '<string>') -> RunConfig:
    """
    Parse and validate configuration text.

    Raises:
        ConfigError: malformed TOML, missing section/key, unknown key, invariant
            violation, or an expression error (with the key's line)
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML: {e}", path=path)

    for name in raw:
        if name not in SCHEMA:
            raise _unknown('section', name, list(SCHEMA), path, _line_of(text, name))
    for name in REQUIRED_SECTIONS:
        if name not in raw:
            raise ConfigError(f"missing section [{name}]", path=path)

    g = _section(raw, 'g', text, path)
    coeffs = _section(raw, 'coefficients', text, path)
    grid = _section(raw, 'grid', text, path)
    run = _section(raw, 'run', text, path)
    for key, value in _env_defaults().items():
        if key not in raw.get('run', {}):
            run[key] = value

    sigma_lo, sigma_hi = (_number(g, 'g', key, float, text, path) for key in ('sigma_lo', 'sigma_hi'))
    try:
        params = GParams(sigma_lo, sigma_hi)
    except ConfigError as e:
        raise ConfigError(str(e), path=path, line=_line_of(text, 'sigma_lo', 'g'))

    expressions = {slot: str(coeffs[slot]) for slot in ('b', 'h', 'sigma', 'f', 'g', 'phi')}
    for slot in expressions:
        try:
            CoefficientBundle.from_strings({'phi': '0', slot: expressions[slot]})
        except LabError as e:
            raise ConfigError(f"coefficients.{slot}: {e}", path=path, line=_line_of(text, slot, 'coefficients'))
    constants = {key: _number(coeffs, 'coefficients', key, float, text, path)
                 for key in ('L', 'M', 'lambda', 'beta', 'T')}
    bundle = CoefficientBundle.from_strings(
        expressions, L=constants['L'], M=constants['M'], lam=constants['lambda'],
        beta=constants['beta'], T=constants['T'],
    )

    x_min, x_max, cfl = (_number(grid, 'grid', key, float, text, path) for key in ('x_min', 'x_max', 'cfl'))
    nx, nt = (_number(grid, 'grid', key, int, text, path) for key in ('nx', 'nt'))
    try:
        grid_obj = Grid1D(x_min, x_max, nx, bundle.T, nt=nt, cfl_target=cfl)
    except ValueError as e:
        raise ConfigError(str(e), path=path, line=_line_of(text, 'grid'))

    if run['increments'] not in INCREMENTS:
        raise ConfigError(f"run.increments must be one of {INCREMENTS}, got {run['increments']!r}",
                          path=path, line=_line_of(text, 'increments', 'run'))
    counts = {key: _number(run, 'run', key, int, text, path)
              for key in ('seed', 'n_paths', 'n_steps', 'threads')}
    for key in ('n_paths', 'n_steps', 'threads'):
        if counts[key] < 1:
            raise ConfigError(f"run.{key} must be >= 1, got {run[key]}", path=path, line=_line_of(text, key, 'run'))
    settings = RunSettings(
        seed=counts['seed'], n_paths=counts['n_paths'], n_steps=counts['n_steps'],
        x0=_number(run, 'run', 'x0', float, text, path), output_dir=str(run['output_dir']),
        threads=counts['threads'], increments=str(run['increments']),
    )
    return RunConfig(params, bundle, grid_obj, settings, path)


def load_config(path) -> RunConfig:
    """Read and validate a TOML run configuration."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", path=str(path))
    return parse_config(text, str(path))


if __name__ == "__main__":
    config = load_config('data/default_config.toml')
    print("Loaded config:")
    print(f"  g: {config.g}")
    print(f"  coefficients: {config.coefficients.describe()}")
    print(f"  grid: {config.grid}")
    print(f"  run: {config.run}")
