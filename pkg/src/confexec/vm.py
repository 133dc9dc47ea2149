"""Deterministic contract execution with step metering and ACL-gated
cross-contract calls.

Contracts are registered Python programs identified by a ``code_id``. State is
a per-contract key/value mapping with immutable values. Step schedule: one
step per state access, ten per cross-contract call, one per explicit
``ctx.tick()`` (loop iteration).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

STEP_STATE_ACCESS = 1
STEP_CALL = 10
DEFAULT_STEP_LIMIT = 10**6
DEFAULT_MAX_DEPTH = 32
PUBLIC_ACL = b"*"


class VmError(Exception):
    code = "vm_error"


class ContractError(VmError):
    """Failure a calling contract may catch."""

    code = "contract_error"


class AccessDenied(ContractError):
    code = "access_denied"


class InvocationError(ContractError):
    code = "invocation_error"


class VmAbort(VmError):
    """Aborts the whole transaction; contracts must not catch it."""


class BudgetExceeded(VmAbort):
    code = "time_exceeded"


class DepthExceeded(VmAbort):
    code = "depth_exceeded"


# --------------------------------------------------------------------------
# program registry


def export(fn):
    fn._exported = True
    return fn


class Program:
    code_id: str = ""

    def init(self, ctx: "ExecutionContext", params: dict) -> None:
        pass


REGISTRY: dict[str, type[Program]] = {}


def register(cls: type[Program]) -> type[Program]:
    if not cls.code_id:
        raise ValueError("program needs a code_id")
    REGISTRY[cls.code_id] = cls
    return cls


def load_program(code_id: str) -> Program:
    try:
        return REGISTRY[code_id]()
    except KeyError:
        raise InvocationError(f"unknown program {code_id!r}") from None


@dataclass(frozen=True)
class ContractProgram:
    code_id: str
    init_params: dict = field(default_factory=dict)


@dataclass
class ContractHandle:
    address: bytes
    program: Program
    acl: frozenset
    owner: bytes

    def allows(self, caller: bytes) -> bool:
        return caller == self.owner or caller in self.acl or PUBLIC_ACL in self.acl


# --------------------------------------------------------------------------
# execution


class Meter:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def charge(self, n: int) -> None:
        if self.used + n > self.limit:
            self.used = self.limit
            raise BudgetExceeded(f"step limit {self.limit} reached")
        self.used += n


class ExecutionContext:
    def __init__(self, machine: "Machine", handle: ContractHandle, caller: bytes, depth: int):
        self._m = machine
        self._handle = handle
        self.caller = caller
        self.self_address = handle.address
        self.owner = handle.owner
        self.order = machine.order
        self.depth = depth

    def _state(self) -> dict:
        return self._m.state_of(self.self_address)

    def get(self, key: str, default: Any = None) -> Any:
        self._m.meter.charge(STEP_STATE_ACCESS)
        return self._state().get(key, default)

    def put(self, key: str, value: Any) -> None:
        self._m.meter.charge(STEP_STATE_ACCESS)
        self._state()[key] = value

    def delete(self, key: str) -> None:
        self._m.meter.charge(STEP_STATE_ACCESS)
        self._state().pop(key, None)

    def tick(self, n: int = 1) -> None:
        self._m.meter.charge(n)

    def call(self, target: bytes, function: str, *args) -> Any:
        self._m.meter.charge(STEP_CALL)
        return self._m.call(self.self_address, target, function, args, self.depth + 1)

    def emit_public(self, data: bytes) -> None:
        """Publish bytes in clear alongside the encrypted outputs."""
        self._m.logs.append((self.self_address, bytes(data)))

    @property
    def steps_used(self) -> int:
        return self._m.meter.used


@dataclass
class TxOutcome:
    ok: bool
    value: Any = None
    error: Optional[str] = None
    steps: int = 0
    deltas: dict[bytes, dict] = field(default_factory=dict)
    invocations: Counter = field(default_factory=Counter)
    logs: list[tuple[bytes, bytes]] = field(default_factory=list)


class Machine:
    """Runs one top-level transaction; state changes stay in a working set
    until the transaction succeeds."""

    def __init__(
        self,
        resolve: Callable[[bytes], Optional[ContractHandle]],
        load_state: Callable[[bytes], dict],
        step_limit: int = DEFAULT_STEP_LIMIT,
        max_depth: int = DEFAULT_MAX_DEPTH,
        order: tuple[int, int] = (0, 0),
    ):
        self.resolve = resolve
        self.load_state = load_state
        self.meter = Meter(step_limit)
        self.max_depth = max_depth
        self.order = order
        self.working: dict[bytes, dict] = {}
        self.original: dict[bytes, dict] = {}
        self.invocations: Counter = Counter()
        self.logs: list[tuple[bytes, bytes]] = []

    def state_of(self, address: bytes) -> dict:
        if address not in self.working:
            base = self.load_state(address)
            self.original[address] = dict(base)
            self.working[address] = dict(base)
        return self.working[address]

    def _snapshot(self):
        return ({a: dict(s) for a, s in self.working.items()}, Counter(self.invocations), len(self.logs))

    def _restore(self, snap) -> None:
        states, invocations, nlogs = snap
        for a in list(self.working):
            if a in states:
                self.working[a] = states[a]
            else:
                del self.working[a]
        self.invocations = invocations
        del self.logs[nlogs:]

    def call(self, caller: bytes, target: bytes, function: str, args, depth: int) -> Any:
        if depth > self.max_depth:
            raise DepthExceeded(f"call depth {depth} exceeds {self.max_depth}")
        handle = self.resolve(target)
        if handle is None:
            raise InvocationError(f"unknown contract {bytes(target).hex()}")
        if not handle.allows(caller):
            raise AccessDenied(f"caller {bytes(caller).hex()} not in ACL")
        fn = getattr(handle.program, function, None)
        if function.startswith("_") or not getattr(fn, "_exported", False):
            raise InvocationError(f"unknown function {function!r}")
        snap = self._snapshot()
        ctx = ExecutionContext(self, handle, caller, depth)
        self.state_of(target)
        try:
            value = fn(ctx, *args)
        except ContractError:
            self._restore(snap)
            raise
        except (TypeError, ValueError, KeyError, ArithmeticError) as exc:
            self._restore(snap)
            raise ContractError(f"{type(exc).__name__}: {exc}") from exc
        self.invocations[target] += 1
        return value

    def _finish(self, ok: bool, value=None, error=None) -> TxOutcome:
        if not ok:
            return TxOutcome(False, error=error, steps=self.meter.used)
        deltas = {a: s for a, s in self.working.items() if s != self.original.get(a)}
        return TxOutcome(True, value, None, self.meter.used, deltas, Counter(self.invocations), list(self.logs))

    def execute(self, caller: bytes, target: bytes, function: str, args) -> TxOutcome:
        try:
            value = self.call(caller, target, function, tuple(args), 0)
        except VmError as exc:
            return self._finish(False, error=exc.code)
        return self._finish(True, value)

    def construct(self, handle: ContractHandle, params: dict) -> TxOutcome:
        """Run a program constructor against empty state."""
        self.working[handle.address] = {}
        self.original[handle.address] = {}
        ctx = ExecutionContext(self, handle, handle.owner, 0)
        try:
            handle.program.init(ctx, params)
        except VmError as exc:
            return self._finish(False, error=exc.code)
        except (TypeError, ValueError, KeyError, ArithmeticError):
            return self._finish(False, error=ContractError.code)
        out = self._finish(True)
        out.deltas[handle.address] = self.working[handle.address]
        return out


@dataclass
class InvokeResult:
    value: Any
    delta: dict
    steps: int


def vm_invoke(
    program: Program,
    function: str,
    args,
    state: dict | None = None,
    caller: bytes = b"caller",
    address: bytes = b"self",
    step_budget: int = DEFAULT_STEP_LIMIT,
    order: tuple[int, int] = (0, 0),
) -> InvokeResult:
    """Invoke one function of a standalone program (no cross-contract calls).

    Raises the VM error on failure; on success returns the new state of the
    contract, which equals the input state when nothing changed.
    """
    handle = ContractHandle(address, program, frozenset([PUBLIC_ACL]), caller)
    base = dict(state or {})
    m = Machine(lambda a: handle if a == address else None, lambda a: base, step_budget, order=order)
    value = m.call(caller, address, function, tuple(args), 0)
    return InvokeResult(value, m.working[address], m.meter.used)
