import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_demand_rows, run_service
from ppcc import paillier
from ppcc.eval import oracles
from ppcc.protocols import messages as M
from ppcc.protocols import service as C
from ppcc.protocols.audit import operator_inbound_violations, service_user_violations
from ppcc.protocols.parties import KeyMaterial, ProtocolAbort, ProtocolConfig
from ppcc.protocols.schedules import DemandSchedule, ScheduleError


def _cfg(users, slots, scale=1, threshold=100):
    return ProtocolConfig("css", users=users, slots=slots, scale=scale, service_threshold=threshold)


def _decrypt_msg(sk, msg):
    return paillier.signed_int(paillier.decrypt(sk, paillier.Ciphertext(msg.payload["value"])), sk.public)


def test_demand_schedule_validation():
    assert DemandSchedule(1, ["1.5", 0]).demands == (Fraction(3, 2), 0)
    with pytest.raises(ScheduleError):
        DemandSchedule(1, [0, 0])
    with pytest.raises(ScheduleError):
        DemandSchedule(1, [1, -1])


def test_threshold_share():
    assert C.threshold_share(_cfg(2, 1)) == 50
    assert C.threshold_share(_cfg(20, 1, scale=10)) == 50
    assert C.threshold_share(_cfg(3, 1, scale=10)) == 333


def test_probe_encodes_signed_slack(common_keys):
    sk = common_keys.private
    user = C.ServiceUser(DemandSchedule(1, [30]), _cfg(2, 1), common_keys)
    (msg,) = user.probe()
    assert paillier.decrypt(sk, paillier.Ciphertext(msg.payload["value"])) == common_keys.public.n - 20
    assert _decrypt_msg(sk, msg) == -20
    user = C.ServiceUser(DemandSchedule(1, [60, 60]), _cfg(2, 2), common_keys)
    assert user.window_demand(0, 2) - user.threshold_slice == 70


def _broadcast(keys, totals, mask):
    """Operator view of one probe round where the two users' slack sums to ``totals - 100``."""
    cfg = _cfg(2, 1)
    op = C.ServiceOperator(cfg, keys)
    inbox = []
    for i, p in enumerate(totals, start=1):
        inbox += C.ServiceUser(DemandSchedule(i, [p]), cfg, keys).probe()
    return op, op.probe_broadcast(inbox, mask=mask)


def test_probe_broadcast_values(common_keys):
    sk = common_keys.private
    _, out = _broadcast(common_keys, [60, 60], 3)
    assert {_decrypt_msg(sk, m) for m in out} == {60}
    _, out = _broadcast(common_keys, [40, 40], 3)
    assert {_decrypt_msg(sk, m) for m in out} == {-60}
    _, out = _broadcast(common_keys, [50, 50], 3)
    assert {_decrypt_msg(sk, m) for m in out} == {0}


@pytest.mark.parametrize("mask", [0, -3])
def test_nonpositive_probe_mask_aborts(common_keys, mask):
    with pytest.raises(ProtocolAbort) as e:
        _broadcast(common_keys, [60, 60], mask)
    assert e.value.stage == C.S1_BROADCAST


@pytest.mark.parametrize("total,vote", [(60, 1), (-60, 0), (0, 1)])
def test_vote_rule(common_keys, total, vote):
    cfg = _cfg(1, 1)
    user = C.ServiceUser(DemandSchedule(1, [1]), cfg, common_keys)
    c = paillier.encrypt(common_keys.public, paillier.encode_signed(total, 1, common_keys.public), rng=random.Random(0))
    msg = M.StageMessage("css", C.S1_BROADCAST, 1, M.OPERATOR, "u1", M.CIPHERTEXT, {"value": c.value})
    (out,) = user.vote([msg])
    assert out.payload["value"] == vote and out.kind == M.INDICATOR


def test_vote_disagreement_aborts(common_keys):
    op = C.ServiceOperator(_cfg(2, 1), common_keys)
    votes = [M.StageMessage("css", C.S1_VOTE, 1, f"u{i}", M.OPERATOR, M.INDICATOR, {"value": v}) for i, v in ((1, 1), (2, 0))]
    with pytest.raises(ProtocolAbort) as e:
        op.probe_decide(votes)
    assert e.value.stage == C.S1_VOTE


def test_two_user_example(common_keys):
    res = run_service(common_keys, [[30, 30, 30], [30, 30, 30]], scale=1)
    assert res.operator_output.actions == (2,)
    assert [r.fractions for r in res.user_results] == [[Fraction(1, 2)], [Fraction(1, 2)]]
    assert [r.totals for r in res.user_results] == [[120], [120]]
    assert [r.residual for r in res.user_results] == [30, 30]
    assert res.operator.masks.probe_masks.keys() == {1, 2, 3}


def test_no_action_when_total_below_threshold(common_keys):
    res = run_service(common_keys, [[10, 10], [10, 0]])
    assert res.operator_output.actions == ()
    assert all(r.fractions == [] for r in res.user_results)
    assert res.ledger.count(stages=[C.S2_MASKED_SUM]) == 0


def test_tiny_threshold_fires_every_slot(common_keys):
    rows = [[1, 2, 3], [1, 1, 1]]
    res = run_service(common_keys, rows, service_threshold=Fraction(1, 10), scale=100)
    assert list(res.operator_output.actions) == oracles.service_schedule(rows, Fraction(1, 10)) == [1, 2, 3]


def test_zero_demand_user_gets_zero_share(common_keys):
    res = run_service(common_keys, [[100, 0], [0, 1]], scale=1)
    assert res.operator_output.actions == (1,)
    assert res.user_results[0].fractions == [1]
    assert res.user_results[1].fractions == [0]
    assert res.user_results[1].totals == [None]
    assert res.user_results[1].residual == 1


@pytest.mark.parametrize("seed", range(4))
def test_random_instances_match_oracle(common_keys, seed):
    rows = random_demand_rows(4, 10, seed)
    res = run_service(common_keys, rows, seed=seed, scale=10, service_threshold=100)
    truth = oracles.brute_force_oracles("css", rows, threshold=100)
    assert list(res.operator_output.actions) == truth.actions
    for user, shares in zip(res.user_results, truth.shares):
        assert user.fractions == shares
    for k in range(len(truth.actions)):
        assert sum(u.fractions[k] for u in res.user_results) == 1
    assert service_user_violations(res, rows, 10) == []
    assert operator_inbound_violations(res.trace) == []


@settings(max_examples=25, deadline=None)
@given(
    st.lists(
        st.lists(st.fractions(min_value=0, max_value=40, max_denominator=7), min_size=5, max_size=5),
        min_size=2,
        max_size=4,
    ).filter(lambda rows: all(any(r) for r in rows)),
    st.integers(1, 1000),
)
def test_fractions_within_scaling_tolerance(pk, sk, rows, S):
    keys = KeyMaterial(public=pk, private=sk)
    N = len(rows)
    res = run_service(keys, rows, scale=S, service_threshold=50)
    # the protocol runs on scaled demands, so compare against the sweep over them
    scaled = [[Fraction(paillier.scale_floor(p, S), S) for p in r] for r in rows]
    eff = Fraction(N * C.threshold_share(res.config), S)
    assert list(res.operator_output.actions) == oracles.service_schedule(scaled, eff)
    truth = oracles.cost_shares(rows, list(res.operator_output.actions))
    tol = Fraction(N, S)
    for k in range(len(res.operator_output.actions)):
        total = sum(u.fractions[k] for u in res.user_results)
        assert total == 1
        for u, q in zip(res.user_results, truth):
            assert abs(u.fractions[k] - q[k]) <= tol


def test_fee_is_rate_times_share(common_keys):
    res = run_service(common_keys, [[30, 30, 30], [30, 30, 30]], scale=1, fee_rate=Fraction(5))
    assert [r.fee for r in res.user_results] == [Fraction(5, 2)] * 2


def test_inconsistent_unmask_aborts(common_keys):
    cfg = _cfg(1, 1)
    user = C.ServiceUser(DemandSchedule(1, [120]), cfg, common_keys)
    user.actions = [1]
    user.stage2_submit()
    pk = common_keys.public
    bad = paillier.encrypt(pk, 121 * 120 + 1, rng=random.Random(1))
    msg = M.StageMessage("css", C.S2_UNMASK, 1, M.OPERATOR, "u1", M.CIPHERTEXT, {"value": bad.value})
    with pytest.raises(ProtocolAbort) as e:
        user.stage2_decrypt([msg])
    assert e.value.stage == C.S2_UNMASK


def test_blind_hides_unit_demand(common_keys):
    cfg = _cfg(1, 1)
    user = C.ServiceUser(DemandSchedule(1, [1]), cfg, common_keys)
    user.actions = [1]
    user.stage2_submit()
    c = paillier.encrypt(common_keys.public, 5, rng=random.Random(2))
    msg = M.StageMessage("css", C.S2_MASKED_SUM, 1, M.OPERATOR, "u1", M.CIPHERTEXT, {"value": c.value})
    (out,) = user.stage2_blind([msg])
    assert out.payload["value"] != c.value
    assert paillier.decrypt(common_keys.private, paillier.Ciphertext(out.payload["value"])) == 5


def test_threshold_equivalence(common_keys, threshold_5_3):
    rows = random_demand_rows(5, 6, 3)
    a = run_service(common_keys, rows, seed=8, scale=10)
    b = run_service(threshold_5_3, rows, seed=8, scale=10, key_mode="threshold", threshold_t=3)
    assert a.operator_output == b.operator_output
    assert a.user_results == b.user_results
    assert a.operator.masks == b.operator.masks
