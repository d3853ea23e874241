"""Campaign configuration: one JSON document, then environment, then CLI overrides.

Precedence is CLI > environment > file. Environment overrides are variables named
``COORDTUNE_<SECTION>__<KEY>`` (``__`` separates levels, names are lowercased);
CLI overrides are ``section.key=value``. Override values are parsed as JSON and
fall back to plain strings.

Document layout (every field optional)::

    {
      "schema": "coordtune.campaign/1",
      "systems": {"fso": {}, "fiber": {"test_symbols": 8192}},
      "grid": {"base": "campaign", "subset": {"learning_rate": [0.001, 0.01]}},
      "init": {"num_layers": 3},
      "methods": ["marginal", "alternating"],
      "search": {"max_steps": 1, "base_seed": 0},
      "random_trials": 20,
      "save_traces": false,
      "output_dir": "runs/campaign"
    }

A system entry overlays its fields on the preset of the same name (or of
``"preset"``). A grid entry is either a full grid document (``"axes"``) or a
base grid plus ``subset`` / ``extend`` maps. ``init`` overlays the initial
values and must lie on the grid.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .channel import channel_to_json
from .channel import preset as channel_preset
from .grid import INITIAL_VALUES, HyperparamGrid, HyperparamPoint, campaign_grid, default_grid
from .objective import SystemConfig
from .tuner import ALTERNATING, MARGINAL, METHODS, SearchConfig

CAMPAIGN_SCHEMA = "coordtune.campaign/1"
ENV_PREFIX = "COORDTUNE_"
DEFAULT_OUTPUT_DIR = "runs"

_TOP_LEVEL = {"schema", "systems", "grid", "init", "methods", "search", "random_trials", "save_traces", "output_dir"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the file position or field."""


def parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_path(doc: dict, path: Sequence[str], value: Any) -> None:
    node = doc
    for part in path[:-1]:
        nxt = node.get(part)
        if not isinstance(nxt, dict):
            nxt = {}
            node[part] = nxt
        node = nxt
    node[path[-1]] = value


def parse_override(item: str) -> tuple[list[str], Any]:
    key, sep, text = item.partition("=")
    key = key.strip().lstrip("-")
    if not sep or not key:
        raise ConfigError(f"override {item!r} is not of the form key.path=value")
    return key.split("."), parse_value(text)


def env_overrides(environ: Mapping[str, str]) -> list[tuple[list[str], Any]]:
    out = []
    for name in sorted(environ):
        if name.startswith(ENV_PREFIX) and len(name) > len(ENV_PREFIX):
            path = name[len(ENV_PREFIX) :].lower().split("__")
            out.append((path, parse_value(environ[name])))
    return out


def load_document(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def merge_document(
    doc: Mapping[str, Any] | None,
    environ: Mapping[str, str] | None = None,
    cli: Sequence[str] = (),
) -> dict:
    """Apply environment then CLI overrides to a copy of ``doc``."""
    out = copy.deepcopy(dict(doc or {}))
    for path, value in env_overrides(environ if environ is not None else os.environ):
        set_path(out, path, value)
    for item in cli:
        path, value = parse_override(item)
        set_path(out, path, value)
    return out


def _field_error(field: str, exc: Exception) -> ConfigError:
    return ConfigError(f"{field}: {exc}")


def _system(name: str, entry: Any) -> SystemConfig:
    if isinstance(entry, str):
        entry = {"preset": entry}
    if entry is None:
        entry = {}
    if not isinstance(entry, dict):
        raise ConfigError(f"systems.{name}: expected an object or a preset name")
    entry = dict(entry)
    base = entry.pop("preset", name)
    try:
        doc = {"channel": channel_to_json(channel_preset(base))}
    except ValueError:
        if "channel" not in entry:
            raise ConfigError(f"systems.{name}: unknown preset {base!r} and no channel given") from None
        doc = {}
    doc.update(entry)
    try:
        return SystemConfig.from_json(doc)
    except (TypeError, ValueError) as exc:
        raise _field_error(f"systems.{name}", exc) from None


def _system_entries(raw: Any) -> list[tuple[str, Any]]:
    """Systems as ``(name, entry)`` pairs in declaration order.

    Accepts an object keyed by name, or a list of names and/or objects with a
    ``"name"`` field (the list form keeps its order under sorted-key JSON).
    """
    if raw is None:
        raw = {"fso": {}, "fiber": {}}
    if isinstance(raw, dict):
        pairs = list(raw.items())
    elif isinstance(raw, list):
        pairs = []
        for i, item in enumerate(raw):
            if isinstance(item, str):
                pairs.append((item, {}))
            elif isinstance(item, dict) and isinstance(item.get("name"), str):
                entry = dict(item)
                pairs.append((entry.pop("name"), entry))
            else:
                raise ConfigError(f"systems[{i}]: expected a name or an object with a 'name' field")
    else:
        raise ConfigError("systems: expected an object or a list")
    if not pairs:
        raise ConfigError("systems: at least one system is required")
    names = [n for n, _ in pairs]
    if len(set(names)) != len(names):
        raise ConfigError(f"systems: duplicate names in {names}")
    return pairs


def _grid(entry: Any) -> HyperparamGrid:
    if entry is None:
        return campaign_grid()
    if not isinstance(entry, dict):
        raise ConfigError("grid: expected an object")
    try:
        if "axes" in entry:
            return HyperparamGrid.from_json(entry)
        base = entry.get("base", "campaign")
        if base == "campaign":
            grid = campaign_grid()
        elif base == "default":
            grid = default_grid()
        else:
            raise ValueError(f"base must be 'campaign' or 'default', got {base!r}")
        unknown = set(entry) - {"base", "subset", "extend"}
        if unknown:
            raise ValueError(f"unknown fields {sorted(unknown)}")
        for axis, values in (entry.get("extend") or {}).items():
            for v in values:
                grid = grid.extended_with({axis: v})
        if entry.get("subset"):
            for axis in entry["subset"]:
                grid.axis(axis)
            grid = grid.subgrid(entry["subset"])
        return grid
    except ValueError as exc:
        raise _field_error("grid", exc) from None


@dataclass(frozen=True)
class CampaignConfig:
    systems: dict  # name -> SystemConfig, in declaration order
    grid: HyperparamGrid
    init: HyperparamPoint | None  # None only when no sweep method runs
    methods: tuple[str, ...]
    search: SearchConfig
    random_trials: int = 20
    save_traces: bool = False
    output_dir: str = DEFAULT_OUTPUT_DIR

    @classmethod
    def from_dict(
        cls,
        doc: Mapping[str, Any],
        methods: Sequence[str] | None = None,
        systems: Sequence[str] | None = None,
    ) -> "CampaignConfig":
        """Validate a document. ``methods`` / ``systems`` replace the document's lists."""
        unknown = set(doc) - _TOP_LEVEL
        if unknown:
            raise ConfigError(f"unknown top-level fields {sorted(unknown)}; allowed: {sorted(_TOP_LEVEL)}")
        schema = doc.get("schema", CAMPAIGN_SCHEMA)
        if schema != CAMPAIGN_SCHEMA:
            raise ConfigError(f"schema: expected {CAMPAIGN_SCHEMA!r}, got {schema!r}")

        entries = dict(_system_entries(doc.get("systems")))
        if systems:
            entries = {name: entries.get(name, {}) for name in systems}
        chosen = {name: _system(name, entry) for name, entry in entries.items()}

        if methods is None:
            methods = doc.get("methods", ["marginal", "alternating"])
        if isinstance(methods, str):
            methods = [methods]
        if not methods:
            raise ConfigError("methods: at least one method is required")
        for m in methods:
            if m not in METHODS:
                raise ConfigError(f"methods: unknown method {m!r}; choose from {list(METHODS)}")

        grid = _grid(doc.get("grid"))
        init_doc = dict(INITIAL_VALUES)
        raw_init = doc.get("init") or {}
        if not isinstance(raw_init, dict):
            raise ConfigError("init: expected an object")
        init_doc.update(raw_init)
        try:
            init = grid.point({k: v for k, v in init_doc.items() if k in grid.ids})
        except ValueError as exc:
            if any(m in (MARGINAL, ALTERNATING) for m in methods):
                raise _field_error("init", exc) from None
            init = None  # joint and random searches do not start from a point

        search_doc = {"max_steps": 1, **(doc.get("search") or {})}
        known = {f.name for f in fields(SearchConfig)}
        bad = set(search_doc) - known
        if bad:
            raise ConfigError(f"search: unknown fields {sorted(bad)}; allowed: {sorted(known)}")
        try:
            search = SearchConfig(**search_doc)
        except (TypeError, ValueError) as exc:
            raise _field_error("search", exc) from None

        random_trials = doc.get("random_trials", 20)
        if not isinstance(random_trials, int) or random_trials < 1:
            raise ConfigError(f"random_trials: expected a positive integer, got {random_trials!r}")
        return cls(
            systems=chosen,
            grid=grid,
            init=init,
            methods=tuple(dict.fromkeys(methods)),
            search=search,
            random_trials=random_trials,
            save_traces=bool(doc.get("save_traces", False)),
            output_dir=str(doc.get("output_dir", DEFAULT_OUTPUT_DIR)),
        )

    def to_dict(self, include_output: bool = True) -> dict:
        """Resolved document; it loads back to an equal config."""
        doc = {
            "schema": CAMPAIGN_SCHEMA,
            "systems": [{"name": name, **s.to_json()} for name, s in self.systems.items()],
            "grid": self.grid.to_json(),
            "init": self.init.to_json() if self.init is not None else None,
            "methods": list(self.methods),
            "search": self.search.to_json(),
            "random_trials": self.random_trials,
            "save_traces": self.save_traces,
        }
        if include_output:
            doc["output_dir"] = self.output_dir
        return doc

    def config_hash(self) -> str:
        """SHA-256 of the canonical resolved document, output directory excluded."""
        text = json.dumps(self.to_dict(include_output=False), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def restricted(self, max_steps: int | None = None, output_dir: str | None = None) -> "CampaignConfig":
        out = self
        if max_steps is not None:
            try:
                out = replace(out, search=replace(out.search, max_steps=max_steps))
            except ValueError as exc:
                raise _field_error("--max-steps", exc) from None
        if output_dir is not None:
            out = replace(out, output_dir=output_dir)
        return out


def load_config(
    path: str | Path | None = None,
    overrides: Sequence[str] = (),
    environ: Mapping[str, str] | None = None,
    methods: Sequence[str] | None = None,
    systems: Sequence[str] | None = None,
) -> CampaignConfig:
    doc = load_document(path) if path is not None else {}
    return CampaignConfig.from_dict(merge_document(doc, environ, overrides), methods, systems)
