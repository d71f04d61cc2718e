"""Run configuration loaded from a JSON file."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .fetch import DEFAULT_ALTERNATE_PATHS, DEFAULT_USER_AGENT, FetchConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    snapshot_root: Path = Path("snapshots")
    seeds: Optional[Path] = None
    watchlist: Optional[Path] = None
    entity_map: Optional[Path] = None
    rank_list: Optional[Path] = None
    filter_lists: list[Path] = field(default_factory=list)
    mirror: Optional[Path] = None
    alternate_paths: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_ALTERNATE_PATHS))
    fetch: FetchConfig = field(default_factory=FetchConfig)
    pooling: str = "both"

    @property
    def direct_only(self) -> bool:
        return self.pooling == "direct_only"

    def read_watchlist(self) -> set[str]:
        return read_domain_list(self.watchlist) if self.watchlist else set()


def read_domain_list(path: Union[str, Path]) -> set[str]:
    """One domain per line; blank lines and '#' comments ignored."""
    out = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            out.add(line)
    return out


_FETCH_POSITIVE = ("timeout", "parallelism", "max_depth")
_FETCH_NON_NEGATIVE = ("retries", "delay", "backoff")


def load_config(path: Union[str, Path, None]) -> RunConfig:
    """Load and validate a config file; relative paths resolve against its directory."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")

    base = path.parent

    def resolve(key: str, must_exist: bool = True) -> Optional[Path]:
        value = raw.get(key)
        if value is None:
            return None
        p = Path(value)
        p = p if p.is_absolute() else base / p
        if must_exist and not p.exists():
            raise ConfigError(f"{key}: {p} does not exist")
        return p

    cfg = RunConfig()
    cfg.snapshot_root = resolve("snapshot_root", must_exist=False) or base / "snapshots"
    cfg.seeds = resolve("seeds")
    cfg.watchlist = resolve("watchlist")
    cfg.entity_map = resolve("entity_map")
    cfg.rank_list = resolve("rank_list")
    cfg.mirror = resolve("mirror")
    lists = raw.get("filter_lists") or []
    if not isinstance(lists, list):
        raise ConfigError("filter_lists must be a list of paths")
    for item in lists:
        p = Path(item)
        p = p if p.is_absolute() else base / p
        if not p.exists():
            raise ConfigError(f"filter_lists: {p} does not exist")
        cfg.filter_lists.append(p)

    alt = raw.get("alternate_paths", {})
    if not isinstance(alt, dict) or not all(isinstance(v, str) for v in alt.values()):
        raise ConfigError("alternate_paths must map domains to URLs")
    cfg.alternate_paths.update({k.lower(): v for k, v in alt.items()})

    pooling = raw.get("pooling", "both")
    if pooling not in ("both", "direct_only"):
        raise ConfigError("pooling must be 'both' or 'direct_only'")
    cfg.pooling = pooling

    fetch = raw.get("fetch", {})
    if not isinstance(fetch, dict):
        raise ConfigError("fetch must be an object")
    fc = FetchConfig(user_agent=str(fetch.get("user_agent", DEFAULT_USER_AGENT)))
    for key in _FETCH_POSITIVE + _FETCH_NON_NEGATIVE:
        if key not in fetch:
            continue
        value = fetch[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"fetch.{key} must be a number")
        if key in _FETCH_POSITIVE and value <= 0:
            raise ConfigError(f"fetch.{key} must be positive")
        if value < 0:
            raise ConfigError(f"fetch.{key} must not be negative")
        setattr(fc, key, int(value) if key in ("parallelism", "max_depth", "retries") else float(value))
    cfg.fetch = fc
    return cfg
