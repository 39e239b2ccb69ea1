import math
import random

import pytest

from trajoracle.grpo import (GroupTooSmall, IncompleteGroup, LengthMismatch, RolloutGroup,
                             build_groups, group_advantages, grpo_loss, kl_estimate)


def test_two_element_group_is_unit():
    assert group_advantages([1.0, 0.0]) == [1.0, -1.0]


def test_constant_group_is_zero():
    assert group_advantages([3.5, 3.5, 3.5]) == [0.0, 0.0, 0.0]


def test_group_too_small():
    with pytest.raises(GroupTooSmall):
        group_advantages([1.0])


def test_mean_zero_and_unit_std():
    rng = random.Random(21)
    for _ in range(2000):
        g = rng.randint(2, 16)
        rewards = [rng.uniform(0, 4) for _ in range(g)]
        adv = group_advantages(rewards)
        mean = math.fsum(adv) / g
        assert abs(mean) < 1e-12
        in_std = math.sqrt(math.fsum((r - math.fsum(rewards) / g) ** 2 for r in rewards) / g)
        if in_std > 1e-6:
            out_std = math.sqrt(math.fsum(a * a for a in adv) / g)
            assert abs(out_std - 1.0) < 1e-9


def test_affine_shift_and_positive_scale_invariance():
    rng = random.Random(22)
    for _ in range(500):
        rewards = [rng.uniform(0, 4) for _ in range(rng.randint(2, 8))]
        if max(rewards) - min(rewards) < 1e-9:
            continue
        base = group_advantages(rewards)
        shifted = group_advantages([r + 7.25 for r in rewards])
        scaled = group_advantages([r * 3.5 for r in rewards])
        for a, b, c in zip(base, shifted, scaled):
            assert abs(a - b) < 1e-9
            assert abs(a - c) < 1e-9


def test_kl_identical_zero():
    assert kl_estimate([-1.0, -2.0, -3.0], [-1.0, -2.0, -3.0]) == 0.0


def test_kl_constant_shift():
    pol = [-1.0, -2.0, -3.0]
    ref = [p - 0.1 for p in pol]
    assert kl_estimate(pol, ref) == pytest.approx(0.1, abs=1e-12)


def test_kl_against_independent_oracle():
    rng = random.Random(23)
    for _ in range(200):
        n = rng.randint(1, 50)
        pol = [rng.uniform(-5, 0) for _ in range(n)]
        ref = [rng.uniform(-5, 0) for _ in range(n)]
        oracle = sum(p - r for p, r in zip(pol, ref)) / n
        assert kl_estimate(pol, ref) == pytest.approx(oracle, abs=1e-12)


def test_kl_length_mismatch():
    with pytest.raises(LengthMismatch):
        kl_estimate([1.0], [1.0, 2.0])
    with pytest.raises(LengthMismatch):
        kl_estimate([], [])


def _group(rewards, logps, refs=None, qid="q"):
    refs = refs if refs is not None else logps
    return RolloutGroup(qid, tuple(rewards),
                        tuple(tuple(l) for l in logps),
                        tuple(tuple(r) for r in refs))


def test_loss_hand_arithmetic():
    # rewards [1,0] -> advantages [1,-1]; summed logps [-2,-3]
    group = _group([1.0, 0.0], [[-1.0, -1.0], [-1.5, -1.5]])
    out = grpo_loss(group, beta=0.0)
    assert out.advantages == (1.0, -1.0)
    assert out.loss == pytest.approx(-1.0)


def test_loss_zero_when_rewards_equal():
    group = _group([2.0, 2.0, 2.0], [[-1.0], [-2.0], [-3.0]])
    assert grpo_loss(group, beta=0.0).loss == 0.0


def test_loss_scale_invariance_of_rewards():
    logps = [[-0.5, -0.5], [-2.0], [-1.0, -0.25]]
    a = grpo_loss(_group([3.0, 1.0, 2.0], logps), beta=0.0)
    b = grpo_loss(_group([6.0, 2.0, 4.0], logps), beta=0.0)
    for x, y in zip(a.advantages, b.advantages):
        assert abs(x - y) < 1e-9
    assert a.loss == pytest.approx(b.loss, abs=1e-9)


def test_loss_linear_in_beta():
    rng = random.Random(24)
    logps = [[rng.uniform(-3, 0) for _ in range(4)] for _ in range(3)]
    refs = [[rng.uniform(-3, 0) for _ in range(4)] for _ in range(3)]
    group = _group([1.0, 0.5, 0.0], logps, refs)
    losses = {beta: grpo_loss(group, beta).loss for beta in (0.0, 0.5, 1.0)}
    mean_kl = math.fsum(kl_estimate(p, r) for p, r in zip(logps, refs)) / 3
    assert losses[0.5] - losses[0.0] == pytest.approx(0.5 * mean_kl, abs=1e-12)
    assert losses[1.0] - losses[0.0] == pytest.approx(mean_kl, abs=1e-12)


def test_group_validation():
    with pytest.raises(GroupTooSmall):
        _group([1.0], [[-1.0]])
    with pytest.raises(LengthMismatch):
        RolloutGroup("q", (1.0, 0.0), ((-1.0,),), ((-1.0,), (-1.0,)))
    with pytest.raises(LengthMismatch):
        _group([1.0, 0.0], [[-1.0], []])
    with pytest.raises(LengthMismatch):
        RolloutGroup("q", (1.0, 0.0), ((-1.0,), (-2.0,)), ((-1.0, -2.0), (-2.0,)))


def test_build_groups_basic():
    records = [("a", 1.0, [-1.0], [-1.0]), ("b", 0.5, [-2.0], [-2.0]),
               ("a", 0.0, [-3.0], [-3.0]), ("b", 1.0, [-4.0], [-4.0])]
    groups = build_groups(records, group_size=2)
    assert [g.query_id for g in groups] == ["a", "b"]
    assert groups[0].rewards == (1.0, 0.0)


def test_build_groups_shuffle_invariance():
    rng = random.Random(25)
    records = []
    for qid in ("q1", "q2", "q3"):
        for i in range(4):
            records.append((qid, rng.uniform(0, 4), [rng.uniform(-3, 0)], [rng.uniform(-3, 0)]))
    a = build_groups(list(records), group_size=4)
    shuffled = list(records)
    rng.shuffle(shuffled)
    b = build_groups(shuffled, group_size=4)
    assert [g.query_id for g in a] == [g.query_id for g in b]
    for ga, gb in zip(a, b):
        assert sorted(ga.rewards) == sorted(gb.rewards)
        assert grpo_loss(ga, 0.3).loss == pytest.approx(grpo_loss(gb, 0.3).loss, abs=1e-9)


def test_build_groups_strict_rejects_wrong_size():
    records = [("a", 1.0, [-1.0], [-1.0])]
    with pytest.raises(IncompleteGroup):
        build_groups(records, group_size=2)


def test_build_groups_nonstrict_drops_singletons():
    records = [("a", 1.0, [-1.0], [-1.0]),
               ("b", 1.0, [-1.0], [-1.0]), ("b", 0.0, [-1.0], [-1.0])]
    groups = build_groups(records)
    assert [g.query_id for g in groups] == ["b"]
