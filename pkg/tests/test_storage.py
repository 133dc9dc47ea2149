from collections import Counter
from fractions import Fraction
from itertools import permutations

import pytest
from scipy.stats import hypergeom

from confexec.crypto import Rng, hash_bytes, node_keypair_from_seed
from confexec.scheduler import Scheduler
from confexec.storage import (
    Ack,
    BlobKind,
    Disseminator,
    NotFound,
    ParameterError,
    StorageBlob,
    StorageNode,
    build_receipt,
    fetch,
    make_ack,
    rsts_epsilon,
    select_subnet,
    subnet_addresses,
    verify_receipt,
)

NODES = [node_keypair_from_seed(Rng(b"store").child(i).bytes(32)) for i in range(6)]
REGISTRY = [(k.address, k.public) for k in NODES]
SEED = Rng(b"round").bytes(32)


def test_full_subnet():
    assert sorted(select_subnet(b"s", 9, 9)) == list(range(9))


def test_single_member_frequency():
    counts = Counter(select_subnet(i.to_bytes(4, "big"), 10, 1)[0] for i in range(10_000))
    assert all(abs(counts[i] / 10_000 - 0.1) < 0.012 for i in range(10))


def test_distinct_members_exhaustive():
    for n in range(1, 65):
        for s in range(1, n + 1):
            sub = select_subnet(bytes([n, s]), n, s)
            assert len(set(sub)) == s and all(0 <= x < n for x in sub)


@pytest.mark.parametrize("n,m,s,t", [(10, 4, 5, 4), (10, 2, 5, 3), (30, 10, 8, 5), (100, 33, 12, 9), (10000, 3333, 38, 35)])
def test_epsilon_matches_scipy(n, m, s, t):
    exact = rsts_epsilon(n, m, s, t)
    oracle = hypergeom(n, m, s).sf(t - 1)
    assert exact.approx == pytest.approx(oracle, rel=1e-9, abs=1e-300)


def test_epsilon_small_case_by_hand():
    # C(4,4) C(6,1) / C(10,5) = 6 / 252
    assert rsts_epsilon(10, 4, 5, 4).exact == Fraction(1, 42)


@pytest.mark.parametrize("m,t", [(0, 1), (3, 4), (9, 10)])
def test_epsilon_zero_below_threshold(m, t):
    assert rsts_epsilon(40, m, 12, t).exact == 0


def test_headline_cell():
    assert rsts_epsilon(10000, 3333, 38, 35).log10 < -12


@pytest.mark.parametrize("args", [(10, 11, 5, 4), (10, 4, 11, 4), (10, 4, 5, 6), (10, 4, 5, 0), (10.0, 4, 5, 4)])
def test_epsilon_parameter_errors(args):
    with pytest.raises(ParameterError):
        rsts_epsilon(*args)


def acks_for(digest, members):
    keys = {k.address: k for k in NODES}
    return [make_ack(keys[a].private, a, digest) for a in members]


def test_receipt_keeps_exactly_t_sorted():
    digest = hash_bytes(b"blob")
    subnet = subnet_addresses(REGISTRY, SEED, digest, 4)
    r = build_receipt(digest, subnet, acks_for(digest, subnet), REGISTRY, 3)
    assert len(r.confirmations) == 3
    assert [a.address for a in r.confirmations] == sorted(a.address for a in r.confirmations)
    assert verify_receipt(r, REGISTRY, SEED, 4, 3) is None


def test_receipt_is_order_independent():
    digest = hash_bytes(b"blob")
    subnet = subnet_addresses(REGISTRY, SEED, digest, 4)
    acks = acks_for(digest, subnet)
    receipts = {build_receipt(digest, subnet, p, REGISTRY, 3) for p in permutations(acks)}
    assert len(receipts) == 1


def test_receipt_rejections():
    digest = hash_bytes(b"blob")
    subnet = subnet_addresses(REGISTRY, SEED, digest, 4)
    outsider = next(a for a, _ in REGISTRY if a not in subnet)
    assert build_receipt(digest, subnet, acks_for(digest, subnet[:2]), REGISTRY, 3) is None
    good = build_receipt(digest, subnet, acks_for(digest, subnet), REGISTRY, 3)
    forged = type(good)(digest, good.subnet, good.confirmations[:2] + tuple(acks_for(digest, [outsider])))
    assert verify_receipt(forged, REGISTRY, SEED, 4, 3) == "confirmer outside subnet"
    other_seed = Rng(b"other").bytes(32)
    assert verify_receipt(good, REGISTRY, other_seed, 4, 3) in ("subnet mismatch", None)
    wrong_digest = type(good)(hash_bytes(b"x"), good.subnet, good.confirmations)
    assert verify_receipt(wrong_digest, REGISTRY, SEED, 4, 3) is not None


def run_dissemination(silenced=0, ack_delay=1, timeout=5, s=3, t=3):
    sched = Scheduler()
    blob = StorageBlob(BlobKind.STATE, b"ciphertext")
    subnet = subnet_addresses(REGISTRY, SEED, blob.digest, s)
    results = []
    d = Disseminator(sched, [(blob, subnet)], REGISTRY, t, timeout, results.append)
    for ack in acks_for(blob.digest, subnet[silenced:]):
        sched.schedule(ack_delay, d.on_ack, blob.digest, ack)
    sched.run()
    return results


def test_dissemination_all_honest():
    (receipts,) = run_dissemination()
    assert len(next(iter(receipts.values())).confirmations) == 3


@pytest.mark.parametrize("s,t", [(3, 3), (5, 3), (4, 2)])
def test_dissemination_silenced(s, t):
    assert run_dissemination(silenced=s - t + 1, s=s, t=t) == [None]
    assert run_dissemination(silenced=s - t, s=s, t=t) != [None]


# the timer is armed first, so an ack landing on the deadline tick is late
@pytest.mark.parametrize("delay,ok", [(1, True), (4, True), (5, False), (6, False), (9, False)])
def test_dissemination_timeout(delay, ok):
    assert (run_dissemination(ack_delay=delay, timeout=5) != [None]) == ok


def test_fetch():
    a, b = StorageNode(b"a"), StorageNode(b"b", withhold=True)
    digest = a.store(b"data")
    b.store(b"secret")
    assert fetch(digest, [b, a]) == b"data"
    with pytest.raises(NotFound):
        fetch(hash_bytes(b"unknown"), [a, b])
    with pytest.raises(NotFound):
        fetch(hash_bytes(b"secret"), [a, b])
    a.online = False
    with pytest.raises(NotFound):
        fetch(digest, [a])
