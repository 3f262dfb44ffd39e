"""Configuration file loading.

The file is YAML (JSON is accepted as-is). See ``config.example.yaml`` at the
repository root for a commented example.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .classifier.detector import compile_onhold_patterns
from .comments import BUILTIN_PROFILES, JAVA, LanguageProfile
from .errors import ConfigError
from .refs import BUILTIN_PATTERNS, DEFAULT_HOST, RefPattern, RepoId, compile_user_pattern
from .render import Channel

TOKEN_ENV = "SATD_SENTINEL_TOKEN"
SECRET_ENV = "SATD_SENTINEL_WEBHOOK_SECRET"

_UNITS = {"s": 1, "m": 60, "h": 3600, "d": 86400, "w": 604800}


def parse_duration(value) -> float:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    m = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*([smhdw]?)\s*", str(value))
    if not m:
        raise ConfigError(f"invalid duration {value!r} (use e.g. 900, '15m', '1h')")
    return float(m.group(1)) * _UNITS[m.group(2) or "s"]


@dataclass
class RepoConfig:
    repo: RepoId
    branches: list[str] = field(default_factory=lambda: ["main"])
    output_channels: list[Channel] = field(default_factory=lambda: list(Channel))
    user_ref_patterns: list[RefPattern] = field(default_factory=list)
    user_onhold_patterns: list[str] = field(default_factory=list)
    poll_interval: float = 900.0
    confidence_floor: float = 0.0
    model_path: str | None = None

    def __post_init__(self):
        if not self.branches:
            raise ConfigError(f"{self.repo}: branches must not be empty")
        if not self.output_channels:
            raise ConfigError(f"{self.repo}: output_channels must not be empty")
        if self.poll_interval < 60:
            raise ConfigError(f"{self.repo}: poll_interval must be at least 1 minute")
        if not 0.0 <= self.confidence_floor <= 1.0:
            raise ConfigError(f"{self.repo}: confidence_floor must be in [0, 1]")
        self._onhold = compile_onhold_patterns(self.user_onhold_patterns)

    @property
    def ref_patterns(self) -> list[RefPattern]:
        return list(BUILTIN_PATTERNS) + list(self.user_ref_patterns)

    @property
    def onhold_patterns(self):
        return self._onhold

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "RepoConfig":
        if "repo" not in data:
            raise ConfigError("repo block is missing 'repo'")
        repo = RepoId.parse(str(data["repo"]), data.get("host", DEFAULT_HOST))
        patterns = []
        for i, p in enumerate(data.get("ref_patterns") or []):
            if "regex" not in p or "number_group" not in p:
                raise ConfigError(f"{repo}: ref pattern #{i} needs 'regex' and 'number_group'")
            patterns.append(
                compile_user_pattern(
                    p["regex"],
                    p["number_group"],
                    p.get("owner_group"),
                    p.get("repo_group"),
                    pattern_id=str(p.get("id", f"user-{i}")),
                )
            )
        try:
            channels = [Channel.parse(c) for c in data.get("output_channels", [c.value for c in Channel])]
        except ValueError as exc:
            raise ConfigError(f"{repo}: {exc}") from None
        model_path = data.get("model_path")
        if model_path and base_dir is not None and not Path(model_path).is_absolute():
            model_path = str(base_dir / model_path)
        return cls(
            repo=repo,
            branches=[str(b) for b in data.get("branches", ["main"])],
            output_channels=channels,
            user_ref_patterns=patterns,
            user_onhold_patterns=[str(p) for p in data.get("onhold_patterns") or []],
            poll_interval=parse_duration(data.get("poll_interval", 900)),
            confidence_floor=float(data.get("confidence_floor", 0.0)),
            model_path=model_path,
        )


@dataclass
class ServiceSettings:
    host: str = "127.0.0.1"
    port: int = 8080
    store_path: str = "satd-sentinel.db"
    token_env: str = TOKEN_ENV
    webhook_secret_env: str = SECRET_ENV
    api_url: str = "https://api.github.com"
    min_request_interval: float = 0.5
    workers: int = 2
    full_scan_interval: float = 7 * 86400.0
    reservation_timeout: float = 600.0
    poll_backoff: float = 60.0
    poll_backoff_max: float = 6 * 3600.0
    resolved_close_reasons: list[str] | None = None


@dataclass
class Config:
    service: ServiceSettings = field(default_factory=ServiceSettings)
    repos: dict[RepoId, RepoConfig] = field(default_factory=dict)
    profiles: list[LanguageProfile] = field(default_factory=lambda: [JAVA])
    path: Path | None = None

    def repo(self, repo: RepoId) -> RepoConfig | None:
        return self.repos.get(repo)

    def find_repo(self, full_name: str) -> RepoConfig | None:
        for rid, rc in self.repos.items():
            if rid.full_name.lower() == full_name.lower():
                return rc
        return None

    def secret(self) -> str | None:
        return os.environ.get(self.service.webhook_secret_env)

    def token(self) -> str | None:
        return os.environ.get(self.service.token_env)

    @classmethod
    def from_dict(cls, data: dict | None, base_dir: Path | None = None) -> "Config":
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        svc = dict(data.get("service") or {})
        known = ServiceSettings.__dataclass_fields__
        unknown = set(svc) - set(known)
        if unknown:
            raise ConfigError(f"unknown service settings: {', '.join(sorted(unknown))}")
        for key in ("full_scan_interval", "reservation_timeout", "poll_backoff", "poll_backoff_max"):
            if key in svc:
                svc[key] = parse_duration(svc[key])
        service = ServiceSettings(**svc)
        if base_dir is not None and not Path(service.store_path).is_absolute():
            service.store_path = str(base_dir / service.store_path)

        profiles = []
        for entry in data.get("languages") or [{"name": "java"}]:
            name = entry.get("name") if isinstance(entry, dict) else str(entry)
            if isinstance(entry, dict) and "file_extensions" in entry:
                profiles.append(LanguageProfile.from_dict(entry))
            elif name in BUILTIN_PROFILES:
                profiles.append(BUILTIN_PROFILES[name])
            else:
                raise ConfigError(f"unknown language {name!r}; give file_extensions and comment markers")

        repos = {}
        for block in data.get("repos") or []:
            rc = RepoConfig.from_dict(block, base_dir)
            if rc.repo in repos:
                raise ConfigError(f"repository {rc.repo} configured twice")
            repos[rc.repo] = rc
        return cls(service, repos, profiles)


def load_config(path) -> Config:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    config = Config.from_dict(data, path.parent)
    config.path = path
    return config
