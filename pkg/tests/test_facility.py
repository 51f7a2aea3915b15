import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_bits, run_facility, usage
from ppcc import paillier
from ppcc.eval import oracles
from ppcc.protocols import facility as F
from ppcc.protocols import messages as M
from ppcc.protocols.audit import facility_user_violations, operator_inbound_violations
from ppcc.protocols.parties import ProtocolAbort, ProtocolConfig, StalledRound
from ppcc.protocols.runner import run
from ppcc.protocols.schedules import (
    CapacityExceeded,
    EstimationFunction,
    KnownCount,
    Masked,
    ScheduleError,
    UsageSchedule,
)

# --------------------------------------------------------------------------- schedules


def test_usage_schedule_validation():
    assert UsageSchedule(1, [1, 0]).slot_count == 2
    with pytest.raises(ScheduleError):
        UsageSchedule(1, [0, 0])
    with pytest.raises(ScheduleError):
        UsageSchedule(1, [1, 2])


def test_estimation_function():
    f = EstimationFunction((10, 20))
    assert f(0) == 0
    assert f(1) == f(7) == f(10) == 1
    assert f(11) == f(15) == f(20) == 2
    with pytest.raises(CapacityExceeded):
        f(21)
    with pytest.raises(ScheduleError):
        EstimationFunction((10, 10))
    with pytest.raises(ScheduleError):
        EstimationFunction(())


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=1, max_size=6, unique=True), st.integers(0, 300))
def test_estimation_matches_brute_force(caps, x):
    caps = tuple(sorted(caps))
    f = EstimationFunction(caps)
    if x > caps[-1]:
        with pytest.raises(CapacityExceeded):
            f(x)
    else:
        assert f(x) == oracles.tier(x, caps)


# --------------------------------------------------------------------------- pure stage rules


def test_stage1_product_examples(pk, sk, rng):
    bits, R = [1, 1, 0], 123456789
    cts = [paillier.encrypt(pk, b, rng=rng) for b in bits]
    column = paillier.hom_sum(pk, cts)
    er = paillier.encrypt(pk, R, rng=rng)
    got = [paillier.decrypt(sk, F.stage1_product(pk, column, er, c, R)) for c in cts]
    assert got == [sum(bits) + R * (1 - b) for b in bits]
    assert got[0] == 2 and got[2] == 2 + R


def test_stage1_product_all_zero_and_single(pk, sk, rng):
    R = 99
    er = paillier.encrypt(pk, R, rng=rng)
    zeros = [paillier.encrypt(pk, 0, rng=rng) for _ in range(4)]
    col = paillier.hom_sum(pk, zeros)
    assert {paillier.decrypt(sk, F.stage1_product(pk, col, er, c, R)) for c in zeros} == {R}
    one = paillier.encrypt(pk, 1, rng=rng)
    assert paillier.decrypt(sk, F.stage1_product(pk, one, er, one, R)) == 1


def test_interpret_stage1():
    assert F.interpret_stage1(1, 2, 3) == KnownCount(2)
    assert F.interpret_stage1(0, 2 + 77, 3) == Masked(79)
    with pytest.raises(ProtocolAbort):
        F.interpret_stage1(1, 0, 3)
    with pytest.raises(ProtocolAbort):
        F.interpret_stage1(1, 4, 3)


def test_stage2_payload_examples():
    assert F.stage2_payload(1, 2, 100, None) + 7 == 57
    assert F.stage2_payload(0, None, 100, None) + 7 == 7
    assert F.stage2_payload(1, 3, 1, None) == 0
    f = EstimationFunction((10, 20))
    assert F.stage2_payload(1, 7, 100, f) == 100 // 7
    assert F.stage2_payload(1, 15, 100, f) == 200 // 15
    assert F.stage2_payload(1, 10, 100, f) == 10
    with pytest.raises(ProtocolAbort):
        F.stage2_payload(1, None, 100, None)


def test_stage2_aggregate_example(pk, sk, rng):
    cts = [paillier.encrypt(pk, v, rng=rng) for v in (57, 57, 7)]
    assert paillier.decrypt(sk, paillier.hom_sum(pk, cts)) == 121
    assert paillier.hom_sum(pk, cts[:1]) == cts[0]


def test_finalize_slot_examples():
    assert F.finalize_slot(100, 100, 20, None) == 1
    assert F.finalize_slot(0, 100, 20, None) == 0
    assert F.finalize_slot(99, 100, 20, None) == 1
    assert F.finalize_slot(0, 1, 20, None) == 0
    f = EstimationFunction((10, 20))
    assert F.finalize_slot(15 * (200 // 15), 100, 20, f) == 2
    assert F.finalize_slot(0, 100, 20, f) == 0
    with pytest.raises(ProtocolAbort):
        F.finalize_slot(-1, 100, 20, f)
    with pytest.raises(ProtocolAbort):
        F.finalize_slot(500, 100, 3, None)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 20), st.integers(100, 10**6))
def test_rounding_recovers_occupancy(n, S):
    assert F.finalize_slot(n * (S // n), S, 20, None) == 1


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(1, 40), min_size=1, max_size=5, unique=True), st.integers(1, 40), st.integers(100, 10**5))
def test_rounding_recovers_tier(caps, n, S):
    caps = tuple(sorted(caps))
    f = EstimationFunction(caps)
    if n > caps[-1]:
        return
    tier = f(n)
    if tier == 1 or S >= 2 * n:
        assert F.finalize_slot(n * (S * tier // n), S, 40, f) == tier


# --------------------------------------------------------------------------- end-to-end


def test_three_user_example(common_keys):
    bits = [[1, 0], [1, 1], [0, 1]]
    res = run_facility(common_keys, bits)
    assert res.operator_output.schedule == [1, 1]
    assert [r.counts() for r in res.user_results] == [[2, None], [2, 2], [None, 2]]


def test_stage1_values_and_masks(common_keys):
    bits = [[1, 0, 0], [1, 1, 0], [0, 0, 1]]
    res = run_facility(common_keys, bits, seed=3)
    assert facility_user_violations(res, bits) == []
    masks = res.operator.masks.slot_masks
    third = res.user_results[2].entries
    assert third[0] == Masked(2 + masks[1])


def test_reveal_contains_mask_sum(common_keys):
    bits = [[1, 0], [1, 0], [0, 1], [1, 1]]
    res = run_facility(common_keys, bits, seed=5)
    op = res.operator
    for j in (1, 2):
        revealed = {u.revealed[j] for u in res.users}
        assert len(revealed) == 1
        n = sum(row[j - 1] for row in bits)
        assert revealed.pop() == n * (100 // n) + op.masks.user_mask_sum(j)


def test_exact_division_reveal(common_keys):
    bits = [[1], [1], [1], [1]]
    res = run_facility(common_keys, bits, seed=6)
    assert res.users[0].revealed[1] == 100 + res.operator.masks.user_mask_sum(1)


def test_submissions_are_fresh(common_keys):
    cfg = ProtocolConfig("ufs", users=1, slots=2)
    user = F.FacilityUser(UsageSchedule(1, [1, 0]), cfg, common_keys)
    a = user.stage1_submit()
    b = user.stage1_submit()
    assert [m.payload["value"] for m in a] != [m.payload["value"] for m in b]
    assert len(a) == 2
    sk = common_keys.private
    assert [paillier.decrypt(sk, paillier.Ciphertext(m.payload["value"])) for m in a] == [1, 0]
    big = F.FacilityUser(UsageSchedule(1, [1] * 48), ProtocolConfig("ufs", users=1, slots=48), common_keys)
    assert len(big.stage1_submit()) == 48


def test_single_user(common_keys):
    res = run_facility(common_keys, [[1, 0, 1]])
    assert res.operator_output.schedule == [1, 0, 1]
    assert res.user_results[0].counts() == [1, None, 1]


@pytest.mark.parametrize("seed", range(5))
def test_random_ufs_matches_oracle(common_keys, seed):
    bits = random_bits(8, 6, seed)
    res = run_facility(common_keys, bits, seed=seed)
    truth = oracles.brute_force_oracles("ufs", bits)
    assert res.operator_output.schedule == truth.occupancy
    assert [r.counts() for r in res.user_results] == truth.user_counts
    assert facility_user_violations(res, bits) == []
    assert operator_inbound_violations(res.trace) == []


@pytest.mark.parametrize("seed", range(5))
def test_random_cfs_matches_oracle(common_keys, seed):
    rng = random.Random(seed)
    bits = random_bits(9, 5, seed + 100)
    caps = tuple(sorted(rng.sample(range(1, 10), 3)))
    if caps[-1] < 9:
        caps = caps + (9,)
    res = run_facility(common_keys, bits, protocol="cfs", seed=seed, capacities=caps)
    assert res.operator_output.schedule == oracles.capacity_schedule(bits, caps)


def test_cfs_capacity_example(common_keys):
    bits = [[1, 1]] * 15
    res = run_facility(common_keys, bits, protocol="cfs", capacities=(10, 20))
    assert res.operator_output.schedule == [2, 2]
    res = run_facility(common_keys, [[1]] * 10, protocol="cfs", capacities=(10, 20))
    assert res.operator_output.schedule == [1]
    assert set(res.operator_output.schedule) <= {0, 1, 2}


def test_cfs_with_single_capacity_equals_ufs(common_keys):
    bits = random_bits(6, 8, 42)
    ufs = run_facility(common_keys, bits, seed=9)
    cfs = run_facility(common_keys, bits, protocol="cfs", seed=9, capacities=(6,))
    assert ufs.operator_output.schedule == cfs.operator_output.schedule
    assert [r.counts() for r in ufs.user_results] == [r.counts() for r in cfs.user_results]
    assert [r.access_keys for r in ufs.user_results] == [r.access_keys for r in cfs.user_results]


def test_cfs_over_capacity_aborts(common_keys):
    with pytest.raises(ProtocolAbort) as e:
        run_facility(common_keys, [[1]] * 5, protocol="cfs", capacities=(2, 4))
    assert e.value.stage == F.S2_CONTRIBUTE


def test_access_keys(common_keys):
    bits = [[1, 0, 1], [0, 1, 1]]
    res = run_facility(common_keys, bits, seed=2)
    keys = res.operator.masks.access_keys
    assert res.user_results[0].access_keys == {1: keys[1], 3: keys[3]}
    assert res.user_results[1].access_keys == {2: keys[2], 3: keys[3]}
    assert keys[1] != keys[3]


def test_unpaid_user_gets_no_keys(common_keys):
    bits = [[1, 0], [1, 1]]
    res = run_facility(common_keys, bits, paid={1: False})
    assert res.user_results[0].access_keys == {}
    assert res.user_results[1].access_keys
    assert res.ledger.count(M.OPERATOR, "u1", [F.S3_KEYS]) == 0


def test_fees(common_keys):
    bits = [[1, 1], [1, 0]]
    res = run_facility(common_keys, bits)
    assert res.user_results[0].fee == Fraction(1, 2) + 1
    assert res.user_results[1].fee == Fraction(1, 2)
    bits = [[1]] * 15
    res = run_facility(common_keys, bits, protocol="cfs", capacities=(10, 20))
    assert res.user_results[0].fee == Fraction(2, 15)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 1), st.integers(1, 2**64))
def test_access_key_distribution(pk, sk, b, kappa):
    rng = random.Random(kappa)
    got = paillier.decrypt(sk, paillier.hom_scale(pk, paillier.encrypt(pk, b, rng=rng), kappa))
    assert got == (kappa if b else 0)


def test_corrupted_stage1_aborts(common_keys, monkeypatch):
    # an operator returning E[0] to a requesting user is caught
    monkeypatch.setattr(F, "stage1_product", lambda pk, *_: paillier.encrypt(pk, 0, 1))
    with pytest.raises(ProtocolAbort) as e:
        run_facility(common_keys, [[1], [1]])
    assert e.value.stage == F.S1_RETURN


def test_missing_message_stalls(common_keys):
    cfg = ProtocolConfig("ufs", users=2, slots=1)
    op = F.FacilityOperator(cfg, common_keys)
    op.setup()
    user = F.FacilityUser(UsageSchedule(1, [1]), cfg, common_keys)
    with pytest.raises(StalledRound) as e:
        op.stage1_return(user.stage1_submit())
    assert e.value.stage == F.S1_SUBMIT
    assert "u2" in str(e.value)


def test_dimension_mismatch(common_keys):
    cfg = ProtocolConfig("ufs", users=2, slots=2)
    with pytest.raises(ScheduleError):
        run(cfg, common_keys, usage([[1, 0]]))
    with pytest.raises(ScheduleError):
        run(cfg, common_keys, usage([[1, 0, 1], [1, 1, 1]]))


def test_determinism(common_keys):
    bits = random_bits(5, 4, 1)
    a = run_facility(common_keys, bits, seed=77)
    b = run_facility(common_keys, bits, seed=77)
    c = run_facility(common_keys, bits, seed=78)
    assert a.trace == b.trace
    assert a.ledger.to_csv() == b.ledger.to_csv()
    assert a.trace != c.trace


def test_threshold_equivalence(common_keys, threshold_5_3):
    bits = random_bits(5, 4, 11)
    common = run_facility(common_keys, bits, seed=4)
    thr = run_facility(threshold_5_3, bits, seed=4, key_mode="threshold", threshold_t=3)
    assert common.operator_output == thr.operator_output
    assert common.user_results == thr.user_results
    assert operator_inbound_violations(thr.trace) == []


def test_key_mode_mismatch_rejected(common_keys):
    with pytest.raises(ValueError):
        run_facility(common_keys, [[1], [1], [1], [1], [1]], key_mode="threshold", threshold_t=3)
