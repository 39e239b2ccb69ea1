import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajoracle.rewards import (RewardWeights, distance_reward, format_reward,
                                parse_response, road_reward, score_response, step_reward)
from trajoracle.roadnet import index_from_pixel_segments

from conftest import sample_text


@pytest.fixture
def road_10px_from_sample1():
    # vertical road at x=209.5: exactly 10 px right of (199.5, 730.5)
    return index_from_pixel_segments([(209.5, 600.0, 209.5, 800.0)], 1000, 1000)


@pytest.mark.parametrize("n,box,steps", [
    (1, (199.5, 730.5), 5),
    (2, (790.5, 680.5), 5),
    (3, (380.5, 259.5), 6),
])
def test_sample_outputs_parse(n, box, steps):
    p = parse_response(sample_text(n))
    assert p.has_think_tags and p.has_answer_tags
    assert p.boxed_point == box
    assert p.has_valid_tuple
    assert p.step_count == steps
    assert format_reward(p) == 2.0


def test_tags_without_tuple():
    p = parse_response("<think>off we go</think><answer>northwest somewhere</answer>")
    assert p.has_think_tags and p.has_answer_tags
    assert not p.has_valid_tuple
    assert format_reward(p) == 1.0


def test_tuple_without_tags():
    p = parse_response("the point is (100,200),(101,201)")
    assert not p.has_think_tags and not p.has_answer_tags
    assert p.boxed_point is None  # tuple must be inside answer tags
    assert format_reward(p) == 0.0


def test_bare_single_tuple_accepted():
    p = parse_response("<think>1. a\n2. b\n3. c</think><answer>(512, 480)</answer>")
    assert p.boxed_point == (512.0, 480.0)
    assert format_reward(p) == 2.0


def test_empty_string():
    p = parse_response("")
    assert p.step_count == 0
    assert format_reward(p) == 0.0
    assert step_reward(p) == 0.0


def test_step_enumerator_variants():
    text = "<think>1. one\n2) two\nStep 3 three\n- bullet\nplain line</think><answer>x</answer>"
    assert parse_response(text).step_count == 3
    repeated = "<think>1. one\n1. one again\n2. two</think><answer>x</answer>"
    assert parse_response(repeated).step_count == 2


def test_distance_reward_boundaries():
    assert distance_reward((0, 0), (0, 0)) == 1.0
    assert distance_reward((200, 0), (0, 0)) == 0.5
    assert distance_reward((400, 0), (0, 0)) == 0.0
    assert distance_reward((400.0001, 0), (0, 0)) == 0.0
    assert distance_reward((500, 0), (0, 0)) == 0.0


def test_road_reward_boundaries():
    idx = index_from_pixel_segments([(0.0, 0.0, 100.0, 0.0)], 200, 200, cell_px=16)
    assert road_reward((50.0, 0.0), idx) == 1.0
    assert road_reward((50.0, 20.0), idx) == 0.5
    assert road_reward((50.0, 40.0), idx) == 0.0
    assert road_reward((50.0, 41.0), idx) == 0.0


def test_step_reward_values():
    class P:
        def __init__(self, n):
            self.step_count = n

    assert step_reward(P(0)) == 0.0
    assert step_reward(P(1)) == pytest.approx(1 / 3)
    assert step_reward(P(2)) == pytest.approx(2 / 3)
    assert step_reward(P(3)) == 1.0
    assert step_reward(P(5)) == 1.0


def test_score_sample1_composition(road_10px_from_sample1):
    truth = (199.5 + 100.0, 730.5)  # 100 px from the parsed point
    v = score_response(sample_text(1), truth, road_10px_from_sample1)
    assert v.r_dis == pytest.approx(0.75)
    assert v.r_road == pytest.approx(0.75)
    assert v.r_format == 2.0
    assert v.r_step == 1.0
    assert v.total == pytest.approx(4.5)


def test_score_perfect_on_road():
    idx = index_from_pixel_segments([(500.5, 0.0, 500.5, 1000.0)], 1000, 1000)
    text = "<think>1. a\n2. b\n3. c\n4. d\n5. e</think><answer>(500,499),(501,501)</answer>"
    v = score_response(text, (500.5, 500.0), idx)
    assert v.r_dis == 1.0
    assert v.r_road == pytest.approx(1.0, abs=1e-9)
    # maxima sum to 1 + 1 + 2 + 1 with the format reward's literal 0/1/2 range
    assert v.total == pytest.approx(5.0)


def test_score_empty_is_all_zero():
    idx = index_from_pixel_segments([(0.0, 0.0, 10.0, 0.0)], 100, 100)
    v = score_response("", (50, 50), idx)
    assert (v.r_dis, v.r_road, v.r_format, v.r_step, v.total) == (0, 0, 0, 0, 0)


def test_missing_tuple_zeroes_geometric_rewards():
    idx = index_from_pixel_segments([(0.0, 0.0, 10.0, 0.0)], 100, 100)
    v = score_response("<think>1. x\n2. y\n3. z</think><answer>no tuple</answer>", (0, 0), idx)
    assert v.r_dis == 0.0 and v.r_road == 0.0
    assert v.r_format == 1.0 and v.r_step == 1.0


def test_weights_applied():
    idx = index_from_pixel_segments([(0.0, 0.0, 1000.0, 0.0)], 1000, 1000)
    text = "<think>1. a\n2. b\n3. c</think><answer>(100,0),(101,1)</answer>"
    w = RewardWeights(w_dis=2.0, w_road=0.0, w_format=0.5, w_step=3.0)
    v = score_response(text, (100.5, 0.5), idx, weights=w)
    assert v.total == pytest.approx(2.0 * v.r_dis + 0.0 + 0.5 * 2.0 + 3.0 * 1.0)


def test_grid_rescaling_for_small_canvas():
    # model grid 1000 -> canvas 500: parsed (500,500) lands at canvas (250,250)
    idx = index_from_pixel_segments([(0.0, 250.0, 500.0, 250.0)], 500, 500)
    text = "<think>1. a\n2. b\n3. c</think><answer>(499,499),(501,501)</answer>"
    v = score_response(text, (250.0, 250.0), idx, canvas_wh=(500, 500))
    assert v.r_dis == 1.0
    assert v.r_road == 1.0


def test_parse_reserialize_is_stable():
    for n in (1, 2, 3):
        p = parse_response(sample_text(n))
        rebuilt = f"<think>{p.think_text}</think><answer>{p.answer_text}</answer>"
        q = parse_response(rebuilt)
        assert (q.boxed_point, q.step_count, q.has_think_tags, q.has_answer_tags) == \
               (p.boxed_point, p.step_count, p.has_think_tags, p.has_answer_tags)


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=400))
def test_fuzz_parse_never_raises(text):
    p = parse_response(text)
    assert p.step_count >= 0
    assert format_reward(p) in (0.0, 1.0, 2.0)
    assert 0.0 <= step_reward(p) <= 1.0


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=300))
def test_fuzz_score_never_raises(blob):
    idx = index_from_pixel_segments([(0.0, 0.0, 10.0, 0.0)], 100, 100)
    text = blob.decode("latin-1")
    v = score_response(text, (50, 50), idx)
    assert 0.0 <= v.r_dis <= 1.0
    assert 0.0 <= v.r_road <= 1.0


def test_rewards_monotone_in_distance():
    truth = (500.0, 500.0)
    last = 2.0
    for d in range(0, 450, 25):
        r = distance_reward((500.0 + d, 500.0), truth)
        assert r <= last
        last = r
