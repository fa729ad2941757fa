"""Strict JSON run configurations for the command-line tool.

Unknown keys are rejected (with the offending line when findable), defaults
are filled in, and path-valued keys resolve relative to the config file so
configs can travel with their data.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Any

from .errors import ConfigError

REQUIRED = object()


@dataclass(frozen=True)
class Key:
    name: str
    kind: str  # int | float | str | bool | int_list | float_list | str_or_none
    default: Any = REQUIRED
    is_path: bool = False


def _check_type(key: Key, value):
    kind = key.kind
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"key {key.name!r} must be an integer, got {value!r}")
    elif kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"key {key.name!r} must be a number, got {value!r}")
        value = float(value)
    elif kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"key {key.name!r} must be a string, got {value!r}")
    elif kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"key {key.name!r} must be a boolean, got {value!r}")
    elif kind == "int_list":
        if not isinstance(value, list) or any(
            isinstance(v, bool) or not isinstance(v, int) for v in value
        ):
            raise ConfigError(f"key {key.name!r} must be a list of integers, got {value!r}")
    elif kind == "float_list":
        if not isinstance(value, list) or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) for v in value
        ):
            raise ConfigError(f"key {key.name!r} must be a list of numbers, got {value!r}")
        value = [float(v) for v in value]
    elif kind == "float_or_none":
        if value is not None:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"key {key.name!r} must be a number or null, got {value!r}")
            value = float(value)
    else:
        raise AssertionError(f"unknown schema kind {kind}")
    return value


def _key_line(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for lineno, line in enumerate(text.split("\n"), start=1):
        if needle in line:
            return lineno
    return None


DIM_KEYS = [
    Key("img_h", "int", 16),
    Key("feat_window", "int", 9),
    Key("feat_dim", "int", 32),
    Key("frame_window", "int", 3),
    Key("hidden", "int", 64),
    Key("branch_hidden", "int", 64),
]

TRAIN_HYPER_KEYS = [
    Key("epochs", "int", 30),
    Key("batch_size", "int", 8),
    Key("lr_initial", "float", 1e-3),
    Key("lr_reduced", "float", 1e-4),
    Key("augment", "bool", True),
    Key("topk", "int", 1000),
]

BEAM_KEYS = [
    Key("beam_width", "int", 64),
    Key("alpha_char", "float", 0.8),
    Key("alpha_word", "float", 0.8),
    Key("word_bonus", "float", 1.0),
    Key("prune_logp", "float_or_none", None),
]

SCHEMAS: dict[str, list[Key]] = {
    "synth": [
        Key("out", "str", is_path=True),
        Key("n_train", "int", 2000),
        Key("n_val", "int", 200),
        Key("n_test", "int", 400),
        Key("lexicon_size", "int", 100),
        Key("words_min", "int", 3),
        Key("words_max", "int", 7),
        Key("seed", "int", 0),
    ],
    "lm": [
        Key("corpus", "str", is_path=True),
        Key("out", "str", is_path=True),
        Key("order", "int", 4),
        Key("level", "str", "both"),
    ],
    "train": [
        Key("train_manifest", "str", is_path=True),
        Key("val_manifest", "str", is_path=True),
        Key("out", "str", is_path=True),
        Key("kind", "str", "single"),
        Key("tasks", "int_list", [1]),
        Key("seed", "int", 0),
        Key("task_weights", "float_list", []),
        *TRAIN_HYPER_KEYS,
        *DIM_KEYS,
    ],
    "decode": [
        Key("model_dir", "str", is_path=True),
        Key("manifest", "str", is_path=True),
        Key("out", "str", is_path=True),
        Key("decoder", "str", "greedy"),
        Key("lm", "str", "none"),
        Key("lm_path", "str", "", is_path=True),
        *BEAM_KEYS,
    ],
    "eval": [
        Key("manifest", "str", is_path=True),
        Key("hyps", "str", is_path=True),
        Key("out", "str", is_path=True),
    ],
    "experiment": [
        Key("out", "str", is_path=True),
        Key("data_seed", "int", 0),
        Key("n_train", "int", 2000),
        Key("n_val", "int", 200),
        Key("n_test", "int", 400),
        Key("lexicon_size", "int", 100),
        Key("words_min", "int", 3),
        Key("words_max", "int", 7),
        Key("seeds", "int_list", [0, 1, 2]),
        Key("lm_order", "int", 4),
        *TRAIN_HYPER_KEYS,
        *DIM_KEYS,
        *BEAM_KEYS,
    ],
}

# experiment architecture rows are validated by hand (list of {kind, tasks})
ARCHS_KEY = "archs"
DEFAULT_ARCHS = [
    {"kind": "single", "tasks": [1]},
    {"kind": "bmt", "tasks": [1, 2]},
    {"kind": "hmt", "tasks": [1, 2]},
]


@dataclass
class RunConfig:
    command: str
    values: dict[str, Any]
    source_path: str

    def __getitem__(self, key: str):
        return self.values[key]

    def to_json(self) -> str:
        return json.dumps(self.values, indent=2, sort_keys=True)


def parse_config(path, command: str) -> RunConfig:
    """Strictly parse the JSON config for one subcommand."""
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} does not exist")
    with open(path, encoding="utf-8") as f:
        text = f.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}: invalid JSON ({e.msg})") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")

    schema = {k.name: k for k in SCHEMAS[command]}
    allow_archs = command == "experiment"
    base = os.path.dirname(os.path.abspath(path))
    values: dict[str, Any] = {}
    for name, value in raw.items():
        if name == ARCHS_KEY and allow_archs:
            values[ARCHS_KEY] = _check_archs(value)
            continue
        if name not in schema:
            line = _key_line(text, name)
            where = f"line {line}: " if line else ""
            raise ConfigError(f"{path}: {where}unknown key {name!r} for command {command!r}")
        key = schema[name]
        try:
            value = _check_type(key, value)
        except ConfigError as e:
            line = _key_line(text, name)
            where = f"line {line}: " if line else ""
            raise ConfigError(f"{path}: {where}{e}") from None
        if key.is_path and value:
            value = os.path.normpath(os.path.join(base, value))
        values[name] = value
    for name, key in schema.items():
        if name in values:
            continue
        if key.default is REQUIRED:
            raise ConfigError(f"{path}: missing required key {name!r}")
        value = key.default
        if key.is_path and value:
            value = os.path.normpath(os.path.join(base, value))
        values[name] = value
    if allow_archs and ARCHS_KEY not in values:
        values[ARCHS_KEY] = [dict(a) for a in DEFAULT_ARCHS]
    return RunConfig(command=command, values=values, source_path=str(path))


def _check_archs(value):
    if not isinstance(value, list) or not value:
        raise ConfigError("key 'archs' must be a non-empty list of objects")
    out = []
    for item in value:
        if (
            not isinstance(item, dict)
            or set(item) != {"kind", "tasks"}
            or not isinstance(item["kind"], str)
            or not isinstance(item["tasks"], list)
            or any(isinstance(t, bool) or not isinstance(t, int) for t in item["tasks"])
        ):
            raise ConfigError(f"bad arch entry {item!r}; expected {{'kind':..., 'tasks':[...]}}")
        out.append({"kind": item["kind"], "tasks": list(item["tasks"])})
    return out


def echo_config(cfg: RunConfig, out_dir, version: str) -> None:
    """Drop the effective config and tool version into the run directory."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "effective_config.json"), "w", encoding="utf-8") as f:
        f.write(cfg.to_json() + "\n")
    with open(os.path.join(out_dir, "version.txt"), "w", encoding="utf-8") as f:
        f.write(f"htrkit {version}\n")
