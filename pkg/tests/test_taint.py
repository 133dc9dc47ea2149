import pytest

from confexec import sim
from confexec.taint import TaintLedger
from tests.conftest import tiny

SECRET = b"s" * 8 + b"0123456789abcdef"


def test_substring_is_flagged():
    t = TaintLedger()
    t.register("state", SECRET)
    t.observe("net", b"header" + SECRET + b"trailer")
    (v,) = t.check()
    assert (v.label, v.channel) == ("state", "net")


@pytest.mark.parametrize("observed", [SECRET[:-1], SECRET[1:], b"", SECRET[::-1]])
def test_partial_or_reordered_not_flagged(observed):
    t = TaintLedger()
    t.register("state", SECRET)
    t.observe("net", observed)
    assert t.check() == []


def test_public_and_short_values_ignored():
    t = TaintLedger()
    t.mark_public(SECRET)
    t.register("address", SECRET)
    t.register("short", b"tiny")
    t.observe("chain", SECRET + b"tiny")
    assert t.check() == []


def test_structures_register_every_leaf():
    t = TaintLedger()
    t.register_value("state", {"balance-of-somebody": [SECRET, "another-long-string-value"], "n": 5})
    assert {SECRET, b"another-long-string-value", b"balance-of-somebody"} <= set(t.secrets)


def test_one_violation_per_secret_and_channel():
    t = TaintLedger()
    t.register("k", SECRET)
    for i in range(3):
        t.observe("net", SECRET + bytes([i]))
    t.observe("chain", SECRET)
    assert [v.channel for v in t.check()] == ["chain", "net"]


def test_leaky_program_is_caught_and_honest_one_is_not():
    leak = "my-private-payload-0123456789"
    base = [{"block": 2, "user": "alice", "deploy": "leaky", "name": "lk", "acl": ["*"]}]
    flagged = sim.run(tiny(script=base + [{"block": 3, "user": "alice", "invoke": "lk", "function": "store", "args": [leak]}]))
    assert flagged["taint"] and any(v.startswith("privacy") for v in flagged["invariant_violations"])
    quiet = sim.run(tiny(script=[
        {"block": 2, "user": "alice", "deploy": "counter", "name": "c", "acl": ["*"]},
        {"block": 3, "user": "alice", "invoke": "c", "function": "incr", "args": [123456789]},
    ]))
    assert quiet["taint"] == []


@pytest.mark.parametrize("name", ["token", "auction", "key_rotation", "checkpoint"])
def test_bundled_runs_are_clean(report, name):
    assert report(name)["taint"] == []
