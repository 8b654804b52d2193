"""Loading of TOML/JSON documents and the configs shipped with the package."""
from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parent / "configs"


def builtin(name: str) -> Path:
    """Path of a config file shipped in ``trxcat/configs``."""
    path = CONFIG_DIR / name
    if not path.exists():
        raise ConfigError(f"no shipped config named {name!r}")
    return path


def load_document(path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            doc = json.loads(raw.decode("utf-8"))
        else:
            doc = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a table")
    return doc


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def resolve(base: Path, value) -> Path:
    """Resolve ``value`` relative to the directory holding ``base``."""
    p = Path(value)
    if p.is_absolute():
        return p
    return (Path(base).parent / p).resolve()
