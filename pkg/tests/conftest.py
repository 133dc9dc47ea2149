import functools

import pytest

from confexec import scenario, sim
from confexec.vm import REGISTRY, ContractError, Program, export, register


if "leaky" not in REGISTRY:

    @register
    class Leaky(Program):
        """Buggy program that copies its input into the clear-text log."""

        code_id = "leaky"

        @export
        def store(self, ctx, secret: bytes):
            data = secret.encode() if isinstance(secret, str) else bytes(secret)
            ctx.put("secret", secret)
            ctx.emit_public(data)
            return True

        @export
        def fail(self, ctx):
            raise ContractError("nope")


@functools.lru_cache(maxsize=None)
def bundled_report(name: str, seed: int | None = None) -> dict:
    return sim.run(scenario.load_bundled(name), seed)


@pytest.fixture(scope="session")
def report():
    return bundled_report


def tiny(**changes) -> scenario.Scenario:
    base = dict(name="tiny", nodes=3, committee=2, blocks=6, users=["alice"])
    base.update(changes)
    return scenario.from_dict(base)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
