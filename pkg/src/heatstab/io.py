"""Configuration parsing, atomic output writing and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import ConfigurationError, InputError
from .spectral import ModelConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_T_GRID = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    gamma: float = 0.5
    T: float = 1.0
    T_grid: tuple = DEFAULT_T_GRID
    seeds: tuple = (0,)
    output_dir: str = "heatstab-out"
    safety_factor: float = 1.1
    M_range: tuple = (2, 12)
    periods: int = 10

    def __post_init__(self):
        if not (self.gamma > 0 and self.T > 0):
            raise ConfigurationError("experiment.gamma and experiment.T must be positive")
        grid = np.asarray(self.T_grid, dtype=float)
        if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise ConfigurationError("experiment.T_grid must be positive and strictly increasing")
        if self.safety_factor < 1:
            raise ConfigurationError("experiment.safety_factor must be >= 1")
        lo, hi = self.M_range
        if not 1 <= lo <= hi:
            raise ConfigurationError("experiment.M_range must be [lo, hi] with 1 <= lo <= hi")
        if self.periods < 1:
            raise ConfigurationError("experiment.periods must be >= 1")

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "gamma": self.gamma,
            "T": self.T,
            "T_grid": list(self.T_grid),
            "seeds": list(self.seeds),
            "safety_factor": self.safety_factor,
            "M_range": list(self.M_range),
            "periods": self.periods,
        }

    def digest(self) -> str:
        return sha256_json(self.to_dict())


def canonical_config() -> ExperimentConfig:
    """Interval (0, pi), 400 points, V = -2, omega = (0.2pi, 0.5pi), omega1 = (0.55pi, 0.85pi)."""
    return ExperimentConfig(model=ModelConfig(n_grid=400, potential=-2.0))


def _field(table: dict, key: str, kind, where: str, default=None):
    if key not in table:
        return default
    value = table[key]
    try:
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind is int:
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{where}.{key}: expected {kind.__name__}, got {value!r}") from None


def _interval(table, key, unit, where):
    value = table.get(key)
    if value is None:
        return None
    if not (isinstance(value, list) and len(value) == 2):
        raise ConfigurationError(f"{where}.{key}: expected [a, b], got {value!r}")
    try:
        return (float(value[0]) * unit, float(value[1]) * unit)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{where}.{key}: entries must be numbers") from None


def _potential(raw, n_grid, length, unit):
    if raw is None:
        return 0.0
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return float(raw)
    if isinstance(raw, dict):
        if "values" in raw:
            values = np.asarray(raw["values"], dtype=float)
            if values.shape != (n_grid,):
                raise ConfigurationError(
                    f"model.potential.values: expected {n_grid} entries, got {values.size}")
            return values
        if "x" in raw and "v" in raw:
            xs = np.asarray(raw["x"], dtype=float) * unit
            vs = np.asarray(raw["v"], dtype=float)
            if xs.shape != vs.shape or xs.size < 2 or np.any(np.diff(xs) <= 0):
                raise ConfigurationError(
                    "model.potential: x must be increasing and match v in length")
            h = length / (n_grid + 1)
            return np.interp(h * np.arange(1, n_grid + 1), xs, vs)
    raise ConfigurationError(
        "model.potential: expected a number, {values = [...]} or {x = [...], v = [...]}")


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Build an ExperimentConfig from TOML text; errors name the line or field."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{source}: {exc}") from None
    known = {"model", "experiment"}
    extra = set(data) - known
    if extra:
        raise ConfigurationError(f"{source}: unknown top-level table(s) {sorted(extra)}")
    m = data.get("model", {})
    e = data.get("experiment", {})
    unit_name = m.get("length_unit", "1")
    if unit_name not in ("1", "pi"):
        raise ConfigurationError(f"model.length_unit: expected \"1\" or \"pi\", got {unit_name!r}")
    unit = math.pi if unit_name == "pi" else 1.0
    length = _field(m, "domain_length", float, "model", math.pi / unit) * unit
    n_grid = _field(m, "n_grid", int, "model", 400)
    kwargs = dict(n_grid=n_grid, domain_length=length,
                  potential=_potential(m.get("potential"), n_grid, length, unit))
    for key in ("omega", "omega1"):
        iv = _interval(m, key, unit, "model")
        if iv is not None:
            kwargs[key] = iv
    model = ModelConfig(**kwargs)

    ekw = {}
    for key, kind in (("gamma", float), ("T", float), ("safety_factor", float),
                      ("periods", int), ("output_dir", str)):
        val = _field(e, key, kind, "experiment")
        if val is not None:
            ekw[key] = val
    for key in ("T_grid", "seeds", "M_range"):
        if key in e:
            if not isinstance(e[key], list):
                raise ConfigurationError(f"experiment.{key}: expected a list")
            ekw[key] = tuple(e[key])
    return ExperimentConfig(model=model, **ekw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=str(path))


# -- serialization --------------------------------------------------------

def sha256_json(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> Path:
    """Write UTF-8 JSON atomically; floats use shortest round-trip repr."""
    text = json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"
    _atomic_write(Path(path), text.encode("utf-8"))
    return Path(path)


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read JSON {path}: {exc}") from None


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    _atomic_write(Path(path), buf.getvalue().encode("utf-8"))
    return Path(path)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


@dataclass
class RunManifest:
    """Provenance of everything written to one output directory."""

    config_hash: str
    model_hash: str
    calibration: dict | None = None
    tool_version: str = __version__
    outputs: dict = field(default_factory=dict)

    @property
    def manifest_hash(self) -> str:
        # calibration is recorded but not hashed, so every subcommand run on one
        # config shares the same manifest hash
        return sha256_json({"config_hash": self.config_hash, "model_hash": self.model_hash,
                            "tool_version": self.tool_version})

    def record(self, path) -> None:
        path = Path(path)
        self.outputs[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()

    def write(self, output_dir) -> Path:
        path = Path(output_dir) / "manifest.json"
        old = {}
        if path.exists():
            try:
                old = read_json(path)
            except InputError:
                old = {}
        previous = old.get("outputs", {})
        calibration = self.calibration
        if calibration is None and old.get("manifest_hash") == self.manifest_hash:
            calibration = old.get("calibration")
        stamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        if old.get("manifest_hash") != self.manifest_hash:
            previous = {}
        return write_json(path, {
            "manifest_hash": self.manifest_hash,
            "config_hash": self.config_hash,
            "model_hash": self.model_hash,
            "calibration": calibration,
            "tool_version": self.tool_version,
            "timestamp": stamp,
            "outputs": {**previous, **self.outputs},
        })
