"""Verifiable reward functions for map-grounded next-location responses, plus
the tag/tuple parser they share. All rewards are pure functions of the
response text, the true pixel location, and the road index."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .geo import PixelPoint
from .roadnet import SegmentIndex, nearest_road_distance

DISTANCE_CUTOFF_PX = 400.0
ROAD_CUTOFF_PX = 40.0
FULL_CREDIT_STEPS = 3

MODEL_GRID = 1000  # coordinate grid model answers are expressed on

_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL | re.IGNORECASE)
_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL | re.IGNORECASE)
_NUM = r"(-?\d+(?:\.\d+)?)"
_PAIR = rf"\(\s*{_NUM}\s*,\s*{_NUM}\s*\)"
_BOX_RE = re.compile(rf"{_PAIR}\s*,\s*{_PAIR}")
_TUPLE_RE = re.compile(_PAIR)
_STEP_RE = re.compile(r"^\s*(?:\*\*\s*)?(?:(\d+)\s*[.)]|step\s+(\d+)\b)", re.IGNORECASE)


@dataclass(frozen=True)
class ParsedResponse:
    think_text: str | None
    answer_text: str | None
    boxed_point: PixelPoint | None  # on the MODEL_GRID x MODEL_GRID grid
    has_think_tags: bool
    has_answer_tags: bool
    has_valid_tuple: bool
    step_count: int


@dataclass(frozen=True)
class RewardWeights:
    w_dis: float = 1.0
    w_road: float = 1.0
    w_format: float = 1.0
    w_step: float = 1.0


@dataclass(frozen=True)
class RewardVector:
    r_dis: float
    r_road: float
    r_format: float
    r_step: float
    total: float


def _count_steps(think_text: str) -> int:
    """Distinct top-level enumerators ("1.", "2)", "Step 3") in the think text.

    Bullet lines under a numbered heading belong to that step and add
    nothing; repeating an enumerator does not double-count.
    """
    seen: set[int] = set()
    for line in think_text.splitlines():
        m = _STEP_RE.match(line)
        if m:
            seen.add(int(m.group(1) or m.group(2)))
    return len(seen)


def parse_response(raw_text: str) -> ParsedResponse:
    """Extract think/answer tags, the predicted point, and the step count.

    The point comes from a coordinate box ``(x0,y0),(x1,y1)`` in the answer
    (its center is the prediction) or, failing that, a bare ``(x,y)`` tuple.
    Never raises; every failure is a flag state.
    """
    think_m = _THINK_RE.search(raw_text)
    answer_m = _ANSWER_RE.search(raw_text)
    think_text = think_m.group(1) if think_m else None
    answer_text = answer_m.group(1) if answer_m else None

    boxed_point: PixelPoint | None = None
    if answer_text:
        box = _BOX_RE.search(answer_text)
        if box:
            x0, y0, x1, y1 = (float(box.group(i)) for i in range(1, 5))
            boxed_point = ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
        else:
            single = _TUPLE_RE.search(answer_text)
            if single:
                boxed_point = (float(single.group(1)), float(single.group(2)))
    if boxed_point is not None and not all(math.isfinite(c) for c in boxed_point):
        boxed_point = None

    return ParsedResponse(
        think_text=think_text,
        answer_text=answer_text,
        boxed_point=boxed_point,
        has_think_tags=think_m is not None,
        has_answer_tags=answer_m is not None,
        has_valid_tuple=boxed_point is not None,
        step_count=_count_steps(think_text) if think_text else 0,
    )


def distance_reward(pred: PixelPoint, truth: PixelPoint) -> float:
    """1 - dis/400 for pixel error dis <= 400, else 0."""
    dis = math.hypot(pred[0] - truth[0], pred[1] - truth[1])
    if dis <= DISTANCE_CUTOFF_PX:
        return 1.0 - dis / DISTANCE_CUTOFF_PX
    return 0.0


def road_reward(pred: PixelPoint, idx: SegmentIndex) -> float:
    """1 - dis/40 for nearest-road pixel distance dis <= 40, else 0."""
    dis = nearest_road_distance(idx, pred)
    if dis <= ROAD_CUTOFF_PX:
        return 1.0 - dis / ROAD_CUTOFF_PX
    return 0.0


def format_reward(p: ParsedResponse) -> float:
    """2 with both tag pairs and a valid tuple, 1 with tags only, else 0."""
    if p.has_think_tags and p.has_answer_tags:
        return 2.0 if p.has_valid_tuple else 1.0
    return 0.0


def step_reward(p: ParsedResponse) -> float:
    """1 for three or more reasoning steps, otherwise step_count / 3."""
    if p.step_count >= FULL_CREDIT_STEPS:
        return 1.0
    return 1.0 - (FULL_CREDIT_STEPS - p.step_count) / FULL_CREDIT_STEPS


def score_response(
    raw_text: str,
    truth: PixelPoint,
    idx: SegmentIndex | None,
    weights: RewardWeights | None = None,
    canvas_wh: tuple[int, int] = (MODEL_GRID, MODEL_GRID),
) -> RewardVector:
    """Compose the four rewards for one response.

    ``truth`` and the road index live in canvas pixels; the parsed point is
    rescaled from the model grid to the canvas (identity for the default
    1000 x 1000 canvas). A response without a valid tuple scores zero on the
    two geometric rewards by contract.
    """
    weights = weights or RewardWeights()
    parsed = parse_response(raw_text)
    r_format = format_reward(parsed)
    r_step = step_reward(parsed)
    if parsed.boxed_point is None:
        r_dis = 0.0
        r_road = 0.0
    else:
        pred = (
            parsed.boxed_point[0] * canvas_wh[0] / MODEL_GRID,
            parsed.boxed_point[1] * canvas_wh[1] / MODEL_GRID,
        )
        r_dis = distance_reward(pred, truth)
        r_road = road_reward(pred, idx) if idx is not None else 0.0
    total = (weights.w_dis * r_dis + weights.w_road * r_road
             + weights.w_format * r_format + weights.w_step * r_step)
    return RewardVector(r_dis=r_dis, r_road=r_road, r_format=r_format, r_step=r_step, total=total)
