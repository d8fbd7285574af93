"""Named, parameter-complete experiments.

Each scenario has a frozen parameter dataclass (overrides are schema-checked
against it) and returns a :class:`ScenarioResult`. :func:`write_artifacts`
stores ``<name>/trace.csv``, ``<name>/metrics.json`` and, for sweeps,
``<name>/sweep.csv``, all written to a temporary directory first and moved
into place only when complete.
"""
from dataclasses import dataclass, field, fields, replace
import json
import math
import os
import shutil
import tempfile
import typing

import numpy as np

from ..trace import Trace


class OverrideError(ValueError):
    pass


class UnknownScenario(KeyError):
    pass


@dataclass(frozen=True)
class ScenarioParams:
    """Base for scenario parameter sets."""

    def with_overrides(self, overrides):
        known = {f.name: f for f in fields(self)}
        clean = {}
        for key, value in (overrides or {}).items():
            if key not in known:
                raise OverrideError(
                    f"unknown parameter {key!r}; known: {', '.join(sorted(known))}"
                )
            clean[key] = _coerce(key, known[key].type, value)
        return replace(self, **clean)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _coerce(key, typ, value):
    origin = typing.get_origin(typ)
    if origin is typing.Union:
        args = [a for a in typing.get_args(typ) if a is not type(None)]
        if value is None or (isinstance(value, str) and value.lower() == "none"):
            return None
        typ = args[0]
        origin = typing.get_origin(typ)
    if typ is bool:
        if isinstance(value, str):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise OverrideError(f"{key} expects a boolean, got {value!r}")
        return bool(value)
    if typ is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise OverrideError(f"{key} expects a number, got {value!r}")
    if typ is int:
        if isinstance(value, (int, float)) and not isinstance(value, bool) and value == int(value):
            return int(value)
        raise OverrideError(f"{key} expects an integer, got {value!r}")
    if typ is str:
        if isinstance(value, str):
            return value
        raise OverrideError(f"{key} expects a word, got {value!r}")
    if typ is tuple or origin is tuple:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return (float(value),)
        if isinstance(value, (list, tuple)) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            return tuple(float(v) for v in value)
        raise OverrideError(f"{key} expects a list of numbers, got {value!r}")
    raise OverrideError(f"{key} cannot be overridden")  # pragma: no cover


@dataclass
class ScenarioResult:
    name: str
    params: ScenarioParams
    trace: typing.Optional[Trace]
    metrics: dict
    sweep: typing.Optional[list] = None
    traces: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # name -> {column: array}


@dataclass(frozen=True)
class Scenario:
    name: str
    params: type
    runner: typing.Callable
    summary: str

    def run(self, overrides=None, params=None):
        p = params if params is not None else self.params().with_overrides(overrides)
        return self.runner(p)


REGISTRY = {}


def register(name, params_cls, summary):
    def deco(fn):
        REGISTRY[name] = Scenario(name, params_cls, fn, summary)
        return fn
    return deco


def names():
    return sorted(REGISTRY)


def get(name):
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownScenario(f"unknown scenario {name!r}; known: {', '.join(names())}") from None


def run_scenario(name, overrides=None):
    return get(name).run(overrides)


# --------------------------------------------------------------------------
# artifacts
# --------------------------------------------------------------------------
def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if hasattr(x, "to_dict"):
        return _jsonable(x.to_dict())
    if hasattr(x, "value"):  # enums
        return x.value
    return x


def dumps(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def sweep_csv(rows):
    if not rows:
        return ""
    cols = list(rows[0])
    out = [",".join(cols)]
    for r in rows:
        cells = []
        for c in cols:
            v = r[c]
            if isinstance(v, (list, tuple)):
                v = ";".join(repr(float(x)) for x in v)
            elif isinstance(v, (float, np.floating)):
                v = repr(float(v))
            cells.append(str(v))
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


def write_tree(out_dir, name, files):
    """Write ``{filename: text}`` into ``out_dir/name`` atomically."""
    os.makedirs(out_dir, exist_ok=True)
    final = os.path.join(out_dir, name)
    tmp = tempfile.mkdtemp(prefix=f".{name}.", dir=out_dir)
    try:
        for fname, text in files.items():
            with open(os.path.join(tmp, fname), "w", newline="") as fh:
                fh.write(text)
        trash = None
        if os.path.exists(final):
            trash = tempfile.mkdtemp(prefix=f".{name}.old.", dir=out_dir)
            os.replace(final, os.path.join(trash, name))
        os.replace(tmp, final)
        if trash:
            shutil.rmtree(trash, ignore_errors=True)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return final


def artifact_files(result, fmt="csv"):
    files = {"metrics.json": dumps({"scenario": result.name,
                                    "params": result.params.to_dict(),
                                    "metrics": result.metrics})}
    if result.trace is not None:
        if fmt == "json":
            files["trace.json"] = dumps(result.trace.to_dict())
        else:
            files["trace.csv"] = result.trace.to_csv_string()
    for tname, cols in result.tables.items():
        if fmt == "json":
            files[f"{tname}.json"] = dumps(cols)
        else:
            n = len(next(iter(cols.values())))
            rows = [{k: v[i] for k, v in cols.items()} for i in range(n)]
            files[f"{tname}.csv"] = sweep_csv(rows)
    if result.sweep is not None:
        if fmt == "json":
            files["sweep.json"] = dumps(result.sweep)
        else:
            files["sweep.csv"] = sweep_csv(result.sweep)
    return files


def write_artifacts(result, out_dir, fmt="csv"):
    return write_tree(out_dir, result.name, artifact_files(result, fmt))


from . import device, am, rc, oscillators  # noqa: E402  (registration)
from .device import mc_case  # noqa: E402

__all__ = [
    "REGISTRY", "Scenario", "ScenarioParams", "ScenarioResult", "OverrideError", "UnknownScenario",
    "get", "names", "run_scenario", "write_artifacts", "write_tree", "mc_case",
]
