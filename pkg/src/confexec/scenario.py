"""Scenario files: YAML documents validated against a JSON schema.

Errors carry the line number of the offending node so a broken scenario can
be fixed without guessing.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import jsonschema
import yaml

_ACTION = {
    "type": "object",
    "required": ["block"],
    "properties": {
        "block": {"type": "integer", "minimum": 2},
        "user": {"type": "string"},
        "deploy": {"type": "string"},
        "name": {"type": "string"},
        "params": {"type": "object"},
        "acl": {"type": "array", "items": {"type": "string"}},
        "ckrp": {"type": "integer", "minimum": 1},
        "invoke": {"type": "string"},
        "function": {"type": "string"},
        "args": {"type": "array"},
        "key_epoch": {"oneOf": [{"type": "integer", "minimum": 0}, {"enum": ["previous", "current"]}]},
        "expect": {},
        "node": {"type": "integer", "minimum": 0},
        "withdraw": {"type": "boolean"},
    },
    "additionalProperties": False,
    "oneOf": [
        {"required": ["user", "deploy", "name"]},
        {"required": ["user", "invoke", "function"]},
        {"required": ["node", "withdraw"]},
    ],
}

_HOST = {
    "type": "object",
    "required": ["node"],
    "properties": {
        "node": {"type": "integer", "minimum": 0},
        "drop_output": {"type": "boolean"},
        "delay": {"type": "integer", "minimum": 0},
        "reorder": {"type": "boolean"},
        "stale_block": {"type": "integer", "minimum": 1},
        "crash_at": {"type": "integer", "minimum": 0},
        "recover_at": {"type": "integer", "minimum": 0},
        "withhold_storage": {"type": "boolean"},
    },
    "additionalProperties": False,
}

SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "confexec scenario",
    "type": "object",
    "required": ["name", "nodes", "committee", "blocks"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "nodes": {"type": "integer", "minimum": 1},
        "committee": {"type": "integer", "minimum": 1},
        "blocks": {"type": "integer", "minimum": 2},
        "mkrp": {"type": "integer", "minimum": 1},
        "transition_window": {"type": "integer", "minimum": 0},
        "ckrp": {"type": "integer", "minimum": 1},
        "rsts": {
            "type": "object",
            "properties": {
                "s": {"type": "integer", "minimum": 1},
                "t": {"type": "integer", "minimum": 1},
                "timeout": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "block_interval": {"type": "integer", "minimum": 4},
        "step_limit": {"type": "integer", "minimum": 1},
        "max_depth": {"type": "integer", "minimum": 1},
        "fees": {
            "type": "object",
            "properties": {
                "min_deposit": {"type": "integer", "minimum": 0},
                "request": {"type": "integer", "minimum": 0},
                "base": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "publish_empty": {"type": "boolean"},
        "restart_all_after": {"type": "integer", "minimum": 1},
        "network": {
            "type": "object",
            "properties": {
                "min_delay": {"type": "integer", "minimum": 0},
                "max_delay": {"type": "integer", "minimum": 0},
                "slow_honest_acks": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "adversary": {
            "type": "object",
            "properties": {
                "hosts": {"type": "array", "items": _HOST},
                "crash_committee": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "dropout": {"type": "number", "minimum": 0, "maximum": 1},
            },
            "additionalProperties": False,
        },
        "users": {"type": "array", "items": {"type": "string"}},
        "script": {"type": "array", "items": _ACTION},
    },
    "additionalProperties": False,
}


class ScenarioError(ValueError):
    def __init__(self, messages: list[str]):
        super().__init__("\n".join(messages))
        self.messages = messages


@dataclass
class HostBehavior:
    node: int
    drop_output: bool = False
    delay: int = 0
    reorder: bool = False
    stale_block: int = 0
    crash_at: Optional[int] = None
    recover_at: Optional[int] = None
    withhold_storage: bool = False


@dataclass
class Action:
    block: int
    user: Optional[str] = None
    deploy: Optional[str] = None
    name: Optional[str] = None
    params: dict = field(default_factory=dict)
    acl: list = field(default_factory=list)
    ckrp: Optional[int] = None
    invoke: Optional[str] = None
    function: Optional[str] = None
    args: list = field(default_factory=list)
    key_epoch: Any = "current"
    expect: Any = None
    has_expect: bool = False
    node: Optional[int] = None
    withdraw: bool = False

    @property
    def kind(self) -> str:
        if self.deploy:
            return "deploy"
        if self.invoke:
            return "invoke"
        return "withdraw"


@dataclass
class Scenario:
    name: str
    nodes: int
    committee: int
    blocks: int
    seed: int = 0
    description: str = ""
    mkrp: int = 10_000
    transition_window: int = 10
    ckrp: int = 10
    rsts_s: int = 3
    rsts_t: int = 2
    rsts_timeout: int = 6
    block_interval: int = 12
    step_limit: int = 10**6
    max_depth: int = 32
    min_deposit: int = 100
    request_fee: int = 1
    base_fee: int = 1
    publish_empty: bool = True
    restart_all_after: Optional[int] = None
    min_delay: int = 1
    max_delay: int = 3
    slow_honest_acks: bool = False
    hosts: dict[int, HostBehavior] = field(default_factory=dict)
    crash_committee: list[int] = field(default_factory=list)
    dropout: float = 0.0
    users: list[str] = field(default_factory=list)
    script: list[Action] = field(default_factory=list)

    def replace(self, **changes) -> "Scenario":
        sc = copy.deepcopy(self)
        for k, v in changes.items():
            if not hasattr(sc, k):
                raise AttributeError(f"unknown scenario field {k!r}")
            setattr(sc, k, v)
        sc.check()
        return sc

    def check(self) -> None:
        errs = []
        if self.committee > self.nodes:
            errs.append(f"committee {self.committee} exceeds nodes {self.nodes}")
        if self.rsts_t > self.rsts_s:
            errs.append(f"rsts t={self.rsts_t} exceeds s={self.rsts_s}")
        if self.max_delay < self.min_delay:
            errs.append("network max_delay below min_delay")
        if 2 * self.max_delay >= self.block_interval:
            errs.append("max_delay must leave room for a round inside one block interval")
        for i in self.hosts:
            if i >= self.nodes:
                errs.append(f"adversary host {i} is not a node")
        deployed = set()
        for k, a in enumerate(self.script):
            where = f"script[{k}]"
            if a.block > self.blocks:
                errs.append(f"{where}: block {a.block} after the last block {self.blocks}")
            if a.user is not None and a.user not in self.users:
                errs.append(f"{where}: unknown user {a.user!r}")
            if a.node is not None and a.node >= self.nodes:
                errs.append(f"{where}: unknown node {a.node}")
            if a.kind == "invoke" and a.invoke not in deployed:
                errs.append(f"{where}: contract {a.invoke!r} invoked before it is deployed")
            if a.kind == "deploy":
                if a.name in deployed or a.name in self.users:
                    errs.append(f"{where}: duplicate name {a.name!r}")
                deployed.add(a.name)
        blocks = [a.block for a in self.script]
        if blocks != sorted(blocks):
            errs.append("script actions must be in block order")
        if errs:
            raise ScenarioError(errs)


# --------------------------------------------------------------------------
# loading


def _line_of(node: yaml.Node, path) -> int:
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v
                    break
            if nxt is None:
                break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
    return node.start_mark.line + 1


def validate(doc: Any, tree: yaml.Node | None = None, source: str = "<scenario>") -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        msgs = []
        for e in errors:
            line = _line_of(tree, list(e.absolute_path)) if tree is not None else 0
            loc = "/".join(map(str, e.absolute_path)) or "<root>"
            msgs.append(f"{source}:{line}: {loc}: {e.message}")
        raise ScenarioError(msgs)


def from_dict(doc: dict) -> Scenario:
    d = dict(doc)
    rsts = d.pop("rsts", {}) or {}
    fees = d.pop("fees", {}) or {}
    net = d.pop("network", {}) or {}
    adv = d.pop("adversary", {}) or {}
    script = d.pop("script", []) or []
    sc = Scenario(**d)
    sc.rsts_s = rsts.get("s", sc.rsts_s)
    sc.rsts_t = rsts.get("t", sc.rsts_t)
    sc.rsts_timeout = rsts.get("timeout", sc.rsts_timeout)
    sc.min_deposit = fees.get("min_deposit", sc.min_deposit)
    sc.request_fee = fees.get("request", sc.request_fee)
    sc.base_fee = fees.get("base", sc.base_fee)
    sc.min_delay = net.get("min_delay", sc.min_delay)
    sc.max_delay = net.get("max_delay", sc.max_delay)
    sc.slow_honest_acks = net.get("slow_honest_acks", False)
    sc.hosts = {h["node"]: HostBehavior(**h) for h in adv.get("hosts", [])}
    sc.crash_committee = list(adv.get("crash_committee", []))
    sc.dropout = float(adv.get("dropout", 0.0))
    for a in script:
        a = dict(a)
        has_expect = "expect" in a
        sc.script.append(Action(**a, has_expect=has_expect))
    sc.check()
    return sc


def loads(text: str, source: str = "<scenario>") -> Scenario:
    try:
        tree = yaml.compose(text)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else 0
        raise ScenarioError([f"{source}:{line}: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise ScenarioError([f"{source}:1: scenario must be a mapping"])
    validate(doc, tree, source)
    try:
        return from_dict(doc)
    except ScenarioError as exc:
        raise ScenarioError([f"{source}: {m}" for m in exc.messages]) from exc


def load(path) -> Scenario:
    path = Path(path)
    return loads(path.read_text(), str(path))


BUNDLED = (
    "token", "dex_swap", "auction", "compute_cost", "dropout_recovery",
    "stale_block_attack", "rsts_coalition", "key_rotation", "first_valid", "checkpoint",
)


def bundled_path(name: str) -> Path:
    ref = resources.files("confexec") / "scenarios" / f"{name}.yaml"
    return Path(str(ref))


def load_bundled(name: str) -> Scenario:
    return load(bundled_path(name))


def resolve(name_or_path: str) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    if name_or_path in BUNDLED:
        return bundled_path(name_or_path)
    raise FileNotFoundError(name_or_path)
