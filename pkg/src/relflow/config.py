"""Experiment configuration: a JSON document describing grid, model, times and sets.

Example::

    {
      "schema": 1,
      "space": {"bounds": [[-5, 5], [-5, 5]], "resolution": [128, 128]},
      "model": "rotation",
      "times": {"uniform": {"t_max": 12.566, "count": 64}, "threshold_T": 6.283},
      "sets": {
        "U": {"predicate": "4*x**2 + y**2 <= 16"},
        "B": {"boxes": [[[-1, -1], [1, 1]]]},
        "A": {"cells": [0, 1, 2]},
        "R": {"difference": ["B", "A"]}
      },
      "params": {"set": "U", "omega_times": [3.14159]}
    }

``model`` is a built-in name or ``{"table": "path"}`` for a piecewise-affine
table (relative paths resolve against the config file).  ``times`` is either
``{"samples": [...]}`` or ``{"uniform": {"t_max": ..., "count": ...}}``, each
with an optional ``threshold_T``.

Set definitions take exactly one of: ``cells`` (index list), ``boxes`` (list
of ``[lo, hi]`` corner pairs), ``predicate`` (inequality in x, y, z),
``ellipse`` ``{center, semi_axes}``, ``disk`` ``{center, radius}``,
``annulus`` ``{center, inner, outer}``, ``heart`` (spiral heart region),
``full``/``empty`` (``true``), ``union``/``intersection``/``difference``
(lists of set names), ``interior`` (a set name) or ``hull`` (a set name; the
least superset confining at every sampled time).  Region shapes accept an
optional ``supersample`` count.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import shapes
from .errors import ConfigError
from .grid import CellSet, GridSpace, interior
from .multiflow import MultiflowModel, TimeGrid, confining_hull_multiflow, get_model, parse_affine_table

SCHEMA_VERSION = 1

_TOP_KEYS = {"schema", "space", "model", "times", "sets", "params"}
_REGIONS = {"predicate", "ellipse", "disk", "annulus", "heart"}
_COMBINE = {"union", "intersection", "difference"}
_SET_KINDS = {"cells", "boxes", "full", "empty", "interior", "hull"} | _REGIONS | _COMBINE


def _locate(text: str | None, key: str):
    if not text:
        return None, None
    pos = text.find(f'"{key}"')
    if pos < 0:
        return None, None
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


@dataclass(frozen=True)
class ExperimentConfig:
    space: dict
    model: Any = None
    times: dict | None = None
    sets: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    schema: int = SCHEMA_VERSION
    base_dir: str = field(default=".", compare=False)

    def to_dict(self) -> dict:
        out = {"schema": self.schema, "space": self.space}
        if self.model is not None:
            out["model"] = self.model
        if self.times is not None:
            out["times"] = self.times
        out["sets"] = self.sets
        out["params"] = self.params
        return copy.deepcopy(out)

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def with_params(self, **updates) -> "ExperimentConfig":
        params = dict(self.params)
        params.update(updates)
        return ExperimentConfig(self.space, self.model, self.times, self.sets, params, self.schema, self.base_dir)

    # builders

    def grid(self) -> GridSpace:
        return GridSpace(tuple(map(tuple, self.space["bounds"])), tuple(self.space["resolution"]))

    def build_model(self) -> MultiflowModel:
        if self.model is None:
            raise ConfigError("this command needs a model", path="model")
        if isinstance(self.model, str):
            try:
                return get_model(self.model)
            except KeyError as exc:
                raise ConfigError(str(exc.args[0]), path="model") from None
        path = Path(self.base_dir) / self.model["table"]
        try:
            return parse_affine_table(path.read_text(), name=path.stem)
        except OSError as exc:
            raise ConfigError(f"cannot read model table: {exc}", path="model.table") from None
        except ValueError as exc:
            raise ConfigError(f"bad model table {path}: {exc}", path="model.table") from None

    def time_grid(self) -> TimeGrid:
        if self.times is None:
            raise ConfigError("this command needs sampled times", path="times")
        t = self.times
        thr = t.get("threshold_T")
        try:
            if "samples" in t:
                return TimeGrid(tuple(t["samples"]), thr)
            u = t["uniform"]
            return TimeGrid.uniform(float(u["t_max"]), int(u["count"]), thr)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid time grid: {exc}", path="times") from None

    def cell_set(self, name: str, space: GridSpace | None = None, _cache=None, _stack=()) -> CellSet:
        space = space or self.grid()
        cache = {} if _cache is None else _cache
        if name in cache:
            return cache[name]
        if name not in self.sets:
            raise ConfigError(f"unknown set {name!r}", path=f"sets.{name}")
        if name in _stack:
            raise ConfigError(f"set {name!r} refers to itself", path=f"sets.{name}")
        spec = self.sets[name]
        kind = next(iter(spec))
        val = spec[kind]
        sub = lambda n: self.cell_set(n, space, cache, _stack + (name,))
        k = int(spec.get("supersample", 1))
        if kind == "cells":
            out = CellSet.from_indices(space, val)
        elif kind == "boxes":
            out = CellSet.from_boxes(space, [(b[0], b[1]) for b in val])
        elif kind == "full":
            out = space.full()
        elif kind == "empty":
            out = space.empty()
        elif kind == "predicate":
            try:
                pred = shapes.expression(val, space.dimension)
            except ValueError as exc:
                raise ConfigError(str(exc), path=f"sets.{name}.predicate") from None
            out = CellSet.from_predicate(space, pred, k)
        elif kind == "ellipse":
            out = CellSet.from_predicate(space, shapes.ellipse(val["center"], val["semi_axes"]), k)
        elif kind == "disk":
            out = CellSet.from_predicate(space, shapes.disk(val["center"], val["radius"]), k)
        elif kind == "annulus":
            out = CellSet.from_predicate(space, shapes.annulus(val["center"], val["inner"], val["outer"]), k)
        elif kind == "heart":
            out = CellSet.from_predicate(space, shapes.spiral_heart(), k)
        elif kind == "union":
            out = space.empty()
            for n in val:
                out = out | sub(n)
        elif kind == "intersection":
            out = space.full()
            for n in val:
                out = out & sub(n)
        elif kind == "difference":
            out = sub(val[0])
            for n in val[1:]:
                out = out - sub(n)
        elif kind == "interior":
            out = interior(sub(val))
        elif kind == "hull":
            out = confining_hull_multiflow(self.build_model(), space, sub(val), self.time_grid())
        else:  # pragma: no cover - rejected by validation
            raise ConfigError(f"unknown set kind {kind!r}", path=f"sets.{name}")
        cache[name] = out
        return out


def _validate(cfg: dict, text: str | None) -> None:
    def fail(msg, path, key=None):
        line, col = _locate(text, key or path.rsplit(".", 1)[-1])
        raise ConfigError(msg, line, col, path)

    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object", 1, 1)
    for k in cfg:
        if k not in _TOP_KEYS:
            fail(f"unknown key {k!r}", k)
    if cfg.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        fail(f"unsupported schema {cfg.get('schema')!r}", "schema")
    if "space" not in cfg:
        raise ConfigError("missing 'space'", 1, 1, "space")
    sp = cfg["space"]
    try:
        bounds = [(float(a), float(b)) for a, b in sp["bounds"]]
        res = [int(n) for n in sp["resolution"]]
        GridSpace(tuple(bounds), tuple(res))
    except (KeyError, TypeError, ValueError) as exc:
        fail(f"invalid space: {exc}", "space")
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    d = len(bounds)
    model = cfg.get("model")
    if model is not None and not isinstance(model, str):
        if not (isinstance(model, dict) and set(model) == {"table"}):
            fail("model must be a built-in name or {'table': path}", "model")
    sets = cfg.get("sets", {})
    if not isinstance(sets, dict):
        fail("sets must be an object", "sets")
    for name, spec in sets.items():
        path = f"sets.{name}"
        if not isinstance(spec, dict):
            fail("set definition must be an object", path, name)
        kinds = [k for k in spec if k != "supersample"]
        if len(kinds) != 1 or kinds[0] not in _SET_KINDS:
            fail(f"set needs exactly one of {sorted(_SET_KINDS)}", path, name)
        kind = kinds[0]
        val = spec[kind]
        if "supersample" in spec and kind not in _REGIONS:
            fail("supersample applies to regions only", path, name)
        if kind == "boxes":
            for b in val:
                blo, bhi = np.asarray(b[0], float), np.asarray(b[1], float)
                if blo.shape != (d,) or bhi.shape != (d,) or np.any(bhi < blo):
                    fail(f"box {b} is malformed", path, name)
                if np.any(blo < lo) or np.any(bhi > hi):
                    fail(f"box {b} lies outside the space bounds", path, name)
        elif kind == "cells":
            n = int(np.prod(res))
            if any(not (0 <= int(c) < n) for c in val):
                fail("cell index outside the grid", path, name)
        elif kind in _COMBINE | {"interior", "hull"}:
            refs = val if kind in _COMBINE else [val]
            for r in refs:
                if r not in sets:
                    fail(f"unknown set {r!r}", path, name)
            if kind == "hull" and (model is None or "times" not in cfg):
                fail("hull needs a model and times", path, name)
    params = cfg.get("params", {})
    if not isinstance(params, dict):
        fail("params must be an object", "params")
    for key in ("set", "block", "attractor", "neighborhood"):
        if key in params and params[key] not in sets:
            fail(f"params.{key} names unknown set {params[key]!r}", f"params.{key}", key)


def parse(text: str, base_dir: str = ".") -> ExperimentConfig:
    """Parse and validate a config document."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno, exc.colno) from None
    _validate(raw, text)
    return ExperimentConfig(
        space=raw["space"],
        model=raw.get("model"),
        times=raw.get("times"),
        sets=raw.get("sets", {}),
        params=raw.get("params", {}),
        schema=raw.get("schema", SCHEMA_VERSION),
        base_dir=base_dir,
    )


def from_dict(raw: dict, base_dir: str = ".") -> ExperimentConfig:
    return parse(json.dumps(raw), base_dir)


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse(text, base_dir=str(path.parent))
