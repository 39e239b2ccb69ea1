"""Oracle-guided location search: iterative bisection of the map into a blue
and a yellow half, shrinking the candidate region by the oracle's choice
each round until only a small rectangle remains."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from .geo import GeoPoint, PixelPoint, Viewport
from .jsontext import last_json_with_key
from .raster import RenderStyle, draw_trajectory, draw_vgls_overlay, encode_image, render_base_map
from .roadnet import RoadNetwork


class RegionTooSmall(ValueError):
    """Region cannot be split without a half dropping below 2 px."""


class OracleUnparseable(RuntimeError):
    """Oracle replies stayed unparseable through all retries (abort policy)."""


@dataclass(frozen=True)
class PixelRect:
    """Axis-aligned pixel rectangle, x0 < x1 and y0 < y1.

    Containment is inclusive of all edges so a point sitting exactly on a
    split boundary belongs to both halves; the perfect oracle breaks that
    tie toward the low (blue) half.
    """

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate rect {(self.x0, self.y0, self.x1, self.y1)}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def center(self) -> PixelPoint:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def contains(self, p: PixelPoint) -> bool:
        return self.x0 <= p[0] <= self.x1 and self.y0 <= p[1] <= self.y1

    def contains_rect(self, other: "PixelRect") -> bool:
        return (self.x0 <= other.x0 and self.y0 <= other.y0
                and other.x1 <= self.x1 and other.y1 <= self.y1)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass(frozen=True)
class SplitSpec:
    """One bisection: a vertical or horizontal boundary plus the blue side."""

    axis: str  # "vertical" (halves x) or "horizontal" (halves y)
    boundary: int
    blue_half: str = "low"

    def __post_init__(self) -> None:
        if self.axis not in ("vertical", "horizontal"):
            raise ValueError(f"bad axis {self.axis!r}")
        if self.blue_half not in ("low", "high"):
            raise ValueError(f"bad blue_half {self.blue_half!r}")

    def halves(self, r: PixelRect) -> tuple[PixelRect, PixelRect]:
        """(low, high) halves of ``r`` under this split."""
        if self.axis == "vertical":
            return (PixelRect(r.x0, r.y0, self.boundary, r.y1),
                    PixelRect(self.boundary, r.y0, r.x1, r.y1))
        return (PixelRect(r.x0, r.y0, r.x1, self.boundary),
                PixelRect(r.x0, self.boundary, r.x1, r.y1))

    def low_contains(self, p: PixelPoint) -> bool:
        """Tie-break rule: the boundary itself counts as the low half."""
        coord = p[0] if self.axis == "vertical" else p[1]
        return coord <= self.boundary


def split_region(r: PixelRect, round_index: int = 0) -> SplitSpec:
    """Split along the longer axis (ties go vertical) at the integer midpoint.

    Blue is always the low-coordinate half. ``round_index`` is carried for
    transcript context only; the policy is purely geometric.
    """
    if r.width >= r.height:
        extent, axis = r.width, "vertical"
        lo = r.x0
    else:
        extent, axis = r.height, "horizontal"
        lo = r.y0
    low_size = extent // 2
    high_size = extent - low_size
    if min(low_size, high_size) < 2:
        raise RegionTooSmall(f"cannot split extent {extent} at round {round_index}")
    return SplitSpec(axis=axis, boundary=lo + low_size, blue_half="low")


@dataclass(frozen=True)
class OracleAnswer:
    choice: str | None  # "blue" | "yellow", defined only when parse_ok
    raw_text: str
    parse_ok: bool


def parse_vgls_answer(raw_text: str) -> OracleAnswer:
    """Pull the last JSON object with key "ANS" (0 = blue, 1 = yellow).

    String digits are accepted; anything else leaves parse_ok false.
    """
    hit = last_json_with_key(raw_text, "ANS")
    if hit is None:
        return OracleAnswer(None, raw_text, False)
    value = hit[0]
    if isinstance(value, str) and value.strip() in ("0", "1"):
        value = int(value.strip())
    if type(value) is int and value in (0, 1):
        return OracleAnswer("blue" if value == 0 else "yellow", raw_text, True)
    return OracleAnswer(None, raw_text, False)


@dataclass
class RoundContext:
    """Everything an oracle may look at when answering one round."""

    round_index: int
    region: PixelRect
    split: SplitSpec
    image_png: bytes | None = None


class Oracle(Protocol):
    needs_image: bool

    def answer(self, ctx: RoundContext) -> str: ...


class PerfectOracle:
    """Always names the half containing the known true point (boundary -> blue)."""

    needs_image = False

    def __init__(self, truth: PixelPoint):
        self.truth = (float(truth[0]), float(truth[1]))

    def answer(self, ctx: RoundContext) -> str:
        in_low = ctx.split.low_contains(self.truth)
        blue_is_low = ctx.split.blue_half == "low"
        return '{"ANS": 0}' if in_low == blue_is_low else '{"ANS": 1}'


class RandomOracle:
    """Uniformly random blue/yellow from a seeded RNG."""

    needs_image = False

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def answer(self, ctx: RoundContext) -> str:
        return json.dumps({"ANS": self.rng.randrange(2)})


class NoisyOracle:
    """Correct with probability p, otherwise flipped; deterministic given seed."""

    needs_image = False

    def __init__(self, p: float, truth: PixelPoint, seed: int = 0):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p={p} outside [0, 1]")
        self.p = p
        self.rng = random.Random(seed)
        self._perfect = PerfectOracle(truth)

    def answer(self, ctx: RoundContext) -> str:
        correct = self._perfect.answer(ctx)
        if self.rng.random() < self.p:
            return correct
        return '{"ANS": 1}' if correct == '{"ANS": 0}' else '{"ANS": 0}'


class ReplayOracle:
    """Replays recorded raw replies round by round."""

    needs_image = False

    def __init__(self, raw_replies: Sequence[str]):
        self.raw_replies = list(raw_replies)

    def answer(self, ctx: RoundContext) -> str:
        return self.raw_replies[ctx.round_index - 1]


def make_mock_oracle(kind: str, truth: PixelPoint | None = None,
                     p: float = 1.0, seed: int = 0) -> Oracle:
    """Build a mock oracle: "perfect", "random", or "noisy"."""
    if kind == "perfect":
        if truth is None:
            raise ValueError("perfect oracle needs a truth point")
        return PerfectOracle(truth)
    if kind == "random":
        return RandomOracle(seed)
    if kind == "noisy":
        if truth is None:
            raise ValueError("noisy oracle needs a truth point")
        return NoisyOracle(p, truth, seed)
    raise ValueError(f"unknown mock oracle kind {kind!r}")


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    region_before: tuple[int, int, int, int]
    axis: str
    boundary: int
    blue_half: str
    raw_reply: str
    parse_ok: bool
    fallback_used: bool
    choice: str  # "blue" | "yellow"
    chosen_half: str  # "low" | "high"
    region_after: tuple[int, int, int, int]

    def to_json(self) -> str:
        return json.dumps({
            "round": self.round_index,
            "region_before": list(self.region_before),
            "split": {"axis": self.axis, "boundary": self.boundary, "blue_half": self.blue_half},
            "raw_reply": self.raw_reply,
            "parse_ok": self.parse_ok,
            "fallback_used": self.fallback_used,
            "choice": self.choice,
            "chosen_half": self.chosen_half,
            "region_after": list(self.region_after),
        })


@dataclass
class VglsTranscript:
    rounds: list[RoundRecord]
    final_region: PixelRect
    final_px: PixelPoint
    final_geo: GeoPoint

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    def raw_replies(self) -> list[str]:
        return [r.raw_reply for r in self.rounds]

    def to_jsonl(self) -> str:
        lines = [r.to_json() for r in self.rounds]
        lines.append(json.dumps({
            "final_region": list(self.final_region.as_tuple()),
            "final_px": [self.final_px[0], self.final_px[1]],
            "final_geo": [self.final_geo.lat, self.final_geo.lon],
        }))
        return "\n".join(lines) + "\n"


def run_vgls(
    traj_prefix: Sequence[GeoPoint],
    vp: Viewport,
    net: RoadNetwork | None,
    oracle: Oracle,
    n_rounds: int = 10,
    style: RenderStyle | None = None,
    *,
    rng: random.Random | None = None,
    parse_retries: int = 2,
    on_unparseable: str = "coin-flip",
    image_sink: Callable[[int, bytes], None] | None = None,
) -> VglsTranscript:
    """Run N rounds of region bisection driven by ``oracle``.

    Each round renders the map with the current region's blue/yellow overlay
    (skipped entirely when the oracle does not look at images and no sink is
    given), asks the oracle, and keeps the chosen half. Unparseable replies
    are retried ``parse_retries`` times, then resolved per ``on_unparseable``:
    "coin-flip" picks a seeded random half and logs it, "abort" raises.
    The prediction is the final region's center, unprojected to geo.
    """
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    if on_unparseable not in ("coin-flip", "abort"):
        raise ValueError(f"unknown unparseable policy {on_unparseable!r}")
    rng = rng or random.Random(0)
    style = style or RenderStyle()

    want_images = getattr(oracle, "needs_image", True) or image_sink is not None
    base = None
    if want_images:
        base = render_base_map(vp, net, style)
        draw_trajectory(base, vp, traj_prefix, style)

    region = PixelRect(0, 0, vp.width_px, vp.height_px)
    rounds: list[RoundRecord] = []
    for k in range(1, n_rounds + 1):
        split = split_region(region, k)
        png = None
        if want_images:
            frame = base.copy()
            draw_vgls_overlay(frame, region, split, style)
            png = encode_image(frame)
            if image_sink is not None:
                image_sink(k, png)
        ctx = RoundContext(round_index=k, region=region, split=split, image_png=png)

        answer = None
        for _ in range(parse_retries + 1):
            answer = parse_vgls_answer(oracle.answer(ctx))
            if answer.parse_ok:
                break
        fallback = not answer.parse_ok
        if fallback:
            if on_unparseable == "abort":
                raise OracleUnparseable(f"round {k}: unparseable reply {answer.raw_text!r}")
            choice = "blue" if rng.randrange(2) == 0 else "yellow"
        else:
            choice = answer.choice

        low, high = split.halves(region)
        chosen_half = "low" if (choice == "blue") == (split.blue_half == "low") else "high"
        after = low if chosen_half == "low" else high
        rounds.append(RoundRecord(
            round_index=k,
            region_before=region.as_tuple(),
            axis=split.axis,
            boundary=split.boundary,
            blue_half=split.blue_half,
            raw_reply=answer.raw_text,
            parse_ok=answer.parse_ok,
            fallback_used=fallback,
            choice=choice,
            chosen_half=chosen_half,
            region_after=after.as_tuple(),
        ))
        region = after

    final_px = region.center()
    return VglsTranscript(
        rounds=rounds,
        final_region=region,
        final_px=final_px,
        final_geo=vp.unproject(final_px),
    )
