"""Config-file loading and validation for the command-line tools.

Configs are TOML: nested sections of plain keys.  Every command has a
schema that resolves defaults, checks types and bounds, and reports
problems with the full field path (for example "model.rho").  Scalar
values can be overridden from the command line with --set.
"""

from __future__ import annotations

import sys
from typing import Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

MISSING = object()


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(str(path), "config file not found")
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(str(path), f"invalid TOML: {err}")


def apply_overrides(config: dict, overrides: Mapping[str, str]) -> dict:
    """Apply --set section.key=value pairs; scalars only."""
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in config.items()}
    for dotted, raw in overrides.items():
        parts = dotted.split(".")
        node = out
        for part in parts[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(dotted, "path passes through a non-section value")
            node = nxt
        key = parts[-1]
        current = node.get(key, MISSING)
        if isinstance(current, (dict, list)):
            raise ConfigError(dotted, "--set can only override scalar fields")
        node[key] = _parse_scalar(raw)
    return out


def _parse_scalar(raw: str):
    lowered = raw.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


class SectionReader:
    """Typed accessors over one config section with field-path errors."""

    def __init__(self, config: Mapping, section: str, required: bool = True):
        node = config
        for part in section.split("."):
            if not isinstance(node, Mapping) or part not in node:
                if required:
                    raise ConfigError(section, "missing section")
                node = {}
                break
            node = node[part]
        if not isinstance(node, Mapping):
            raise ConfigError(section, "must be a section")
        self.section = section
        self.data = dict(node)
        self.read_keys: set[str] = set()

    def _get(self, key, default):
        self.read_keys.add(key)
        value = self.data.get(key, MISSING)
        if value is MISSING:
            if default is MISSING:
                raise ConfigError(f"{self.section}.{key}", "missing required key")
            return default
        return value

    def number(self, key, default=MISSING, lo=None, hi=None) -> float:
        value = self._get(key, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{self.section}.{key}", f"expected a number, got {value!r}")
        value = float(value)
        if lo is not None and value < lo:
            raise ConfigError(f"{self.section}.{key}", f"must be >= {lo}, got {value}")
        if hi is not None and value > hi:
            raise ConfigError(f"{self.section}.{key}", f"must be <= {hi}, got {value}")
        return value

    def integer(self, key, default=MISSING, lo=None, hi=None) -> int:
        value = self._get(key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(
                f"{self.section}.{key}", f"expected an integer, got {value!r}"
            )
        if lo is not None and value < lo:
            raise ConfigError(f"{self.section}.{key}", f"must be >= {lo}, got {value}")
        if hi is not None and value > hi:
            raise ConfigError(f"{self.section}.{key}", f"must be <= {hi}, got {value}")
        return value

    def string(self, key, default=MISSING, choices=None) -> str:
        value = self._get(key, default)
        if not isinstance(value, str):
            raise ConfigError(
                f"{self.section}.{key}", f"expected a string, got {value!r}"
            )
        if choices is not None and value not in choices:
            raise ConfigError(
                f"{self.section}.{key}", f"must be one of {sorted(choices)}, got {value!r}"
            )
        return value

    def number_list(self, key, default=MISSING, lo=None, hi=None) -> tuple[float, ...]:
        value = self._get(key, default)
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = [value]
        if not isinstance(value, (list, tuple)):
            raise ConfigError(
                f"{self.section}.{key}", f"expected a number list, got {value!r}"
            )
        out = []
        for i, v in enumerate(value):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(
                    f"{self.section}.{key}[{i}]", f"expected a number, got {v!r}"
                )
            v = float(v)
            if lo is not None and v < lo:
                raise ConfigError(f"{self.section}.{key}[{i}]", f"must be >= {lo}")
            if hi is not None and v > hi:
                raise ConfigError(f"{self.section}.{key}[{i}]", f"must be <= {hi}")
            out.append(v)
        if not out:
            raise ConfigError(f"{self.section}.{key}", "list must not be empty")
        return tuple(out)

    def pair(self, key, default=MISSING) -> tuple[float, float] | None:
        value = self._get(key, default)
        if value is None:
            return None
        if isinstance(value, str):
            return value  # symbolic values like "stationary" pass through
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise ConfigError(f"{self.section}.{key}", "expected a pair [x, y]")
        return (float(value[0]), float(value[1]))

    def int_pair(self, key, default=MISSING) -> tuple[int, int] | None:
        value = self._get(key, default)
        if value is None:
            return None
        if not isinstance(value, (list, tuple)) or len(value) != 2 or any(
            isinstance(v, bool) or not isinstance(v, int) for v in value
        ):
            raise ConfigError(
                f"{self.section}.{key}", "expected an integer pair [a, b]"
            )
        return (int(value[0]), int(value[1]))

    def reject_unknown(self, known: set[str] | None = None):
        known = known if known is not None else self.read_keys
        extras = set(self.data) - known
        if extras:
            key = sorted(extras)[0]
            raise ConfigError(f"{self.section}.{key}", "unknown key")


def read_patch(config: Mapping, section: str) -> dict[tuple[int, int], float]:
    """Patch from named direction keys and/or explicit entry rows."""
    from .aircraft import NAMED_OFFSETS  # local import to avoid a cycle

    reader = SectionReader(config, section, required=False)
    patch: dict[tuple[int, int], float] = {}
    for key, value in reader.data.items():
        if key == "entries":
            if not isinstance(value, list):
                raise ConfigError(f"{section}.entries", "expected an array of tables")
            for i, entry in enumerate(value):
                if not isinstance(entry, Mapping) or not {"dr", "dc", "p"} <= set(
                    entry
                ):
                    raise ConfigError(
                        f"{section}.entries[{i}]", "expected keys dr, dc, p"
                    )
                offset = (int(entry["dr"]), int(entry["dc"]))
                patch[offset] = patch.get(offset, 0.0) + float(entry["p"])
            continue
        if key not in NAMED_OFFSETS:
            raise ConfigError(
                f"{section}.{key}",
                f"unknown direction; use one of {sorted(NAMED_OFFSETS)} or entries",
            )
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key}", f"expected a number, got {value!r}")
        offset = NAMED_OFFSETS[key]
        patch[offset] = patch.get(offset, 0.0) + float(value)
    return patch
