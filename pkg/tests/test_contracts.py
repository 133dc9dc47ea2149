import pytest
from hypothesis import given, settings, strategies as st

from confexec.contracts import swap_output
from tests.test_vm import World

OWNER, ALICE, BOB, CAROL = b"owner", b"alice", b"bob", b"carol"


def token_world():
    w = World()
    w.deploy(b"tok", "token", owner=OWNER)
    return w


def test_token_flow():
    w = token_world()
    assert w.execute(OWNER, b"tok", "mint", ALICE, 100).ok
    assert w.execute(ALICE, b"tok", "mint", ALICE, 1).error == "contract_error"
    assert w.execute(ALICE, b"tok", "transfer", BOB, 30).ok
    assert w.execute(BOB, b"tok", "transfer", ALICE, 31).error == "contract_error"
    assert w.execute(ALICE, b"tok", "approve", BOB, 20).ok
    assert w.execute(BOB, b"tok", "transfer_from", ALICE, CAROL, 21).error == "contract_error"
    assert w.execute(BOB, b"tok", "transfer_from", ALICE, CAROL, 20).ok
    balances = [w.execute(ALICE, b"tok", "balance_of", who).value for who in (ALICE, BOB, CAROL)]
    assert balances == [50, 30, 20]
    assert w.execute(ALICE, b"tok", "total_supply").value == 100


@pytest.mark.parametrize("amount", [-1, True, 1.5, "3"])
def test_token_rejects_bad_amounts(amount):
    w = token_world()
    w.execute(OWNER, b"tok", "mint", ALICE, 10)
    assert w.execute(ALICE, b"tok", "transfer", BOB, amount).error == "contract_error"


ops = st.lists(
    st.tuples(st.sampled_from(["mint", "transfer", "approve", "transfer_from"]),
              st.sampled_from([OWNER, ALICE, BOB]), st.sampled_from([OWNER, ALICE, BOB]), st.integers(0, 60)),
    max_size=30,
)


@settings(max_examples=60, deadline=None)
@given(ops)
def test_supply_is_conserved(seq):
    w = token_world()
    for op, a, b, amount in seq:
        if op == "mint":
            w.execute(OWNER, b"tok", "mint", a, amount)
        elif op == "transfer_from":
            w.execute(b, b"tok", "transfer_from", a, b, amount)
        else:
            w.execute(a, b"tok", op, b, amount)
        state = w.states[b"tok"]
        held = sum(v for k, v in state.items() if k.startswith("bal:"))
        assert held == state["supply"]
        assert all(v >= 0 for k, v in state.items() if k.startswith(("bal:", "allow:")))


@pytest.mark.parametrize("rin,rout,amt,fee,out", [(1000, 1000, 100, 0, 90), (1000, 1000, 100, 30, 90), (10, 10, 1, 0, 0), (5000, 1000, 1000, 0, 166)])
def test_swap_output(rin, rout, amt, fee, out):
    assert swap_output(rin, rout, amt, fee) == out


@given(st.integers(1, 10**9), st.integers(1, 10**9), st.integers(0, 10**9), st.integers(0, 9999))
def test_swap_never_drains_below_product(rin, rout, amt, fee):
    out = swap_output(rin, rout, amt, fee)
    assert 0 <= out < rout
    assert (rin + amt) * (rout - out) >= rin * rout


def dex_world(fee=0):
    w = World()
    for t in (b"tx", b"ty"):
        w.deploy(t, "token", owner=OWNER)
        for who in (ALICE, BOB):
            w.execute(OWNER, t, "mint", who, 10_000)
    w.deploy(b"dex", "dex", params={"token_x": b"tx", "token_y": b"ty", "fee_bps": fee})
    for t in (b"tx", b"ty"):
        w.execute(ALICE, t, "approve", b"dex", 10_000)
        w.execute(BOB, t, "approve", b"dex", 10_000)
    assert w.execute(ALICE, b"dex", "add_liquidity", 1000, 1000).ok
    return w


def test_dex_swap():
    w = dex_world()
    out = w.execute(BOB, b"dex", "swap", b"tx", 100)
    assert out.ok and out.value == 90
    assert set(out.deltas) == {b"dex", b"tx", b"ty"}
    assert w.execute(BOB, b"dex", "reserves").value == [1100, 910]
    assert w.execute(BOB, b"ty", "balance_of", BOB).value == 10_090
    assert w.execute(BOB, b"tx", "balance_of", b"dex").value == 1100


def test_dex_slippage_and_unknown_token():
    w = dex_world()
    assert w.execute(BOB, b"dex", "swap", b"tx", 100, 91).error == "contract_error"
    assert w.execute(BOB, b"dex", "swap", b"tz", 100).error == "contract_error"
    assert w.execute(BOB, b"dex", "reserves").value == [1000, 1000]


def auction_world(reserve=5):
    w = World()
    w.deploy(b"tok", "token", owner=OWNER)
    w.deploy(b"auc", "auction", owner=OWNER, params={"token": b"tok", "reserve": reserve})
    for who in (ALICE, BOB, CAROL):
        w.execute(OWNER, b"tok", "mint", who, 100)
        w.execute(who, b"tok", "approve", b"auc", 100)
    return w


def balances(w):
    return {who: w.execute(who, b"tok", "balance_of", who).value for who in (OWNER, ALICE, BOB, CAROL)}


def test_second_price():
    w = auction_world()
    for who, amt in ((ALICE, 10), (BOB, 7), (CAROL, 9)):
        assert w.execute(who, b"auc", "bid", amt).ok
    assert w.execute(ALICE, b"auc", "close").error == "contract_error"
    out = w.execute(OWNER, b"auc", "close")
    assert out.value == {"winner": ALICE, "price": 9}
    assert balances(w) == {OWNER: 9, ALICE: 91, BOB: 100, CAROL: 100}
    assert w.execute(BOB, b"auc", "bid", 50).error == "contract_error"


def test_single_bid_pays_reserve():
    w = auction_world(reserve=5)
    w.execute(BOB, b"auc", "bid", 40)
    assert w.execute(OWNER, b"auc", "close").value == {"winner": BOB, "price": 5}
    assert balances(w)[BOB] == 95


def test_tie_goes_to_earlier_bid():
    w = auction_world()
    w.execute(CAROL, b"auc", "bid", 20)
    w.execute(ALICE, b"auc", "bid", 20)
    assert w.execute(OWNER, b"auc", "close").value == {"winner": CAROL, "price": 20}


def test_bid_below_reserve_and_empty_close():
    w = auction_world(reserve=10)
    assert w.execute(ALICE, b"auc", "bid", 9).error == "contract_error"
    assert w.execute(OWNER, b"auc", "close").value == {"winner": b"", "price": 0}
