import pytest

from confexec import scenario
from confexec.scenario import ScenarioError

GOOD = """\
name: s
nodes: 3
committee: 2
blocks: 5
users: [alice]
script:
  - {block: 2, user: alice, deploy: counter, name: c}
"""


def test_loads_good():
    sc = scenario.loads(GOOD)
    assert (sc.nodes, sc.committee, sc.blocks) == (3, 2, 5)
    assert sc.script[0].kind == "deploy" and not sc.script[0].has_expect


@pytest.mark.parametrize("text,line,fragment", [
    (GOOD.replace("nodes: 3", "nodes: zero"), 2, "nodes"),
    (GOOD.replace("blocks: 5", "blocks: 5\nbogus: 1"), 1, "bogus"),
    (GOOD.replace("{block: 2,", "{block: 1,"), 7, "script/0/block"),
    (GOOD.replace("deploy: counter, name: c", "deploy: counter"), 7, "script/0"),
    (GOOD + "adversary: {hosts: [{node: 0, delay: -1}]}\n", 8, "adversary/hosts/0/delay"),
])
def test_schema_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ScenarioError) as err:
        scenario.loads(text, "x.yaml")
    msg = err.value.messages[0]
    assert msg.startswith(f"x.yaml:{line}:") and fragment in msg


def test_yaml_syntax_error():
    with pytest.raises(ScenarioError) as err:
        scenario.loads("name: [unclosed\n", "bad.yaml")
    assert err.value.messages[0].startswith("bad.yaml:")


@pytest.mark.parametrize("change", ["committee: 4", "script:\n  - {block: 2, user: mallory, deploy: counter, name: c}"])
def test_semantic_errors(change):
    text = GOOD.replace("committee: 2", change) if change.startswith("committee") else GOOD.split("script:")[0] + change + "\n"
    with pytest.raises(ScenarioError):
        scenario.loads(text)


@pytest.mark.parametrize("name", scenario.BUNDLED)
def test_bundled_scenarios_load(name):
    sc = scenario.load_bundled(name)
    assert sc.name == name
    assert scenario.resolve(name) == scenario.bundled_path(name)


def test_replace_revalidates():
    sc = scenario.loads(GOOD)
    assert sc.replace(nodes=4).nodes == 4 and sc.nodes == 3
    with pytest.raises(ScenarioError):
        sc.replace(committee=9)
