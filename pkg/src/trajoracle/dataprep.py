"""Dataset construction: reproducible splits, point-localization QA records,
and the gated, confidence-filtered chain-of-thought pipeline."""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from .geo import GeoPoint, Trajectory, Viewport, viewport_for
from .oracle_client import AuthError, PromptKind, load_template
from .jsontext import last_json_with_key
from .raster import RenderStyle, draw_trajectory, draw_vgls_overlay, encode_image, render_base_map
from .roadnet import RoadNetwork
from .rewards import MODEL_GRID
from .vgls import Oracle, PixelRect, RoundContext, parse_vgls_answer, split_region

GATE_ROUNDS = 5
MIN_CONFIDENCE = 0.75
MAX_COT_SAMPLES = 300
LOCALIZATION_POINTS = 12


class TooFewTrajectories(ValueError):
    """Not enough trajectory ids to split."""


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    seed: int

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "train": list(self.train),
                           "val": list(self.val), "test": list(self.test)},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DatasetSplit":
        d = json.loads(text)
        return cls(tuple(d["train"]), tuple(d["val"]), tuple(d["test"]), d["seed"])


def make_split(ids: Sequence[str], seed: int) -> DatasetSplit:
    """Seeded shuffle then a 70/10/20 partition (train gets the floor, test
    the remainder, so 1500 ids come out 1050/150/300)."""
    ids = list(ids)
    if len(ids) < 10:
        raise TooFewTrajectories(f"need >= 10 ids, got {len(ids)}")
    rng = random.Random(seed)
    rng.shuffle(ids)
    n = len(ids)
    n_train = int(n * 0.7)
    n_val = int(n * 0.1)
    return DatasetSplit(
        train=tuple(ids[:n_train]),
        val=tuple(ids[n_train:n_train + n_val]),
        test=tuple(ids[n_train + n_val:]),
        seed=seed,
    )


@dataclass(frozen=True)
class SftRecord:
    image_path: str
    prompt_text: str
    target_text: str
    task: str  # "localization" | "cot"
    meta: dict

    def to_json(self) -> str:
        return json.dumps({
            "image_path": self.image_path,
            "prompt_text": self.prompt_text,
            "target_text": self.target_text,
            "task": self.task,
            "meta": self.meta,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SftRecord":
        d = json.loads(text)
        return cls(d["image_path"], d["prompt_text"], d["target_text"], d["task"], d["meta"])


@dataclass(frozen=True)
class CotCandidate:
    traj_id: str
    vgls_rounds_passed: int
    cot_text: str | None
    confidence: float | None
    accepted: bool
    reject_reason: str | None = None

    def to_json(self) -> str:
        return json.dumps({
            "traj_id": self.traj_id,
            "vgls_rounds_passed": self.vgls_rounds_passed,
            "cot_text": self.cot_text,
            "confidence": self.confidence,
            "accepted": self.accepted,
            "reject_reason": self.reject_reason,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CotCandidate":
        d = json.loads(text)
        return cls(d["traj_id"], d["vgls_rounds_passed"], d["cot_text"],
                   d["confidence"], d["accepted"], d.get("reject_reason"))


def grid_box_for_point(vp: Viewport, g: GeoPoint) -> tuple[int, int, int, int]:
    """1-px box around a point on the model's 1000 x 1000 output grid.

    Canvas pixels are rescaled to the grid, floored, and widened by one:
    (x, y), (x+1, y+1)."""
    px, py = vp.project(g)
    gx = math.floor(px * MODEL_GRID / vp.width_px)
    gy = math.floor(py * MODEL_GRID / vp.height_px)
    return gx, gy, gx + 1, gy + 1


def _box_text(index_label: str, box: tuple[int, int, int, int]) -> str:
    x0, y0, x1, y1 = box
    return (f"<|object_ref_start|>the {index_label} point<|object_ref_end|>"
            f"<|box_start|>({x0},{y0}),({x1},{y1})<|box_end|>")


def save_image_cas(image_dir: Path, png: bytes) -> str:
    """Write a PNG into a content-addressed directory, return its path."""
    image_dir.mkdir(parents=True, exist_ok=True)
    name = hashlib.sha256(png).hexdigest()[:24] + ".png"
    path = image_dir / name
    if not path.exists():
        path.write_bytes(png)
    return str(path)


def make_localization_records(traj_id: str, traj: Trajectory, vp: Viewport,
                              image_path: str) -> list[SftRecord]:
    """One QA record per input point: the localization prompt for index i and
    the point's 1000-grid box as target."""
    records = []
    for i in range(1, LOCALIZATION_POINTS + 1):
        prompt = load_template(PromptKind.POINT_LOCALIZATION).replace("{index}", str(i))
        box = grid_box_for_point(vp, traj.points[i - 1])
        records.append(SftRecord(
            image_path=image_path,
            prompt_text=prompt,
            target_text=_box_text(f"{i}th", box),
            task="localization",
            meta={"traj_id": traj_id, "point_index": i, "confidence": None},
        ))
    return records


def cot_target_text(cot_text: str, box: tuple[int, int, int, int]) -> str:
    """SFT target: the generated reasoning inside think tags, then the true
    13th-point box inside answer tags."""
    return (f"<think>\n{cot_text.strip()}\n</think>\n"
            f"<answer>\nthe 13th point({box[0]},{box[1]}),({box[2]},{box[3]})\n</answer>")


class CotGenerator(Protocol):
    needs_image: bool

    def generate(self, traj_id: str, image_png: bytes | None) -> str: ...


class ScriptedGenerator:
    """Test/dry-run generator returning canned replies keyed by traj_id."""

    needs_image = False

    def __init__(self, replies: dict[str, str], default: str | None = None):
        self.replies = replies
        self.default = default
        self.calls: list[str] = []

    def generate(self, traj_id: str, image_png: bytes | None) -> str:
        self.calls.append(traj_id)
        if traj_id in self.replies:
            return self.replies[traj_id]
        if self.default is not None:
            return self.default
        raise KeyError(f"no scripted reply for {traj_id!r}")


def _strip_confidence(text: str) -> tuple[str | None, float | None]:
    """(cot_text, confidence) from a generator reply; (None, None) if absent
    or out of [0, 1]."""
    hit = last_json_with_key(text, "confidence")
    if hit is None:
        return None, None
    value, start, end = hit
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        return None, None
    conf = float(value)
    if not 0.0 <= conf <= 1.0:
        return None, None
    return (text[:start] + text[end:]).strip(), conf


@dataclass
class CotPipelineResult:
    candidates: list[CotCandidate]
    records: list[SftRecord]
    stats: dict = field(default_factory=dict)


def _gate_vgls(truth_px, vp: Viewport, oracle: Oracle, base_png_factory,
               rounds: int) -> int:
    """Rounds survived: the oracle-chosen half must contain the true point
    in every round. Unparseable replies end the gate immediately."""
    region = PixelRect(0, 0, vp.width_px, vp.height_px)
    passed = 0
    for k in range(1, rounds + 1):
        split = split_region(region, k)
        png = base_png_factory(region, split) if getattr(oracle, "needs_image", True) else None
        answer = parse_vgls_answer(oracle.answer(RoundContext(k, region, split, png)))
        if not answer.parse_ok:
            return passed
        low, high = split.halves(region)
        chosen = low if (answer.choice == "blue") == (split.blue_half == "low") else high
        if not chosen.contains(truth_px):
            return passed
        region = chosen
        passed += 1
    return passed


def run_cot_pipeline(
    trajectories: Sequence[tuple[str, Trajectory]],
    net: RoadNetwork | None,
    oracle_factory: Callable[[str, Trajectory, Viewport], Oracle],
    generator: CotGenerator,
    *,
    max_accepted: int = MAX_COT_SAMPLES,
    gate_rounds: int = GATE_ROUNDS,
    min_confidence: float = MIN_CONFIDENCE,
    style: RenderStyle | None = None,
    viewport_fn: Callable[[Trajectory], Viewport] = viewport_for,
    journal_path: str | Path | None = None,
    image_dir: str | Path | None = None,
) -> CotPipelineResult:
    """Three-stage CoT curation over full trajectories (prefix + true point).

    Stage 1 runs ``gate_rounds`` of region search on the prefix image and
    requires the chosen half to contain the true point every round; failures
    are rejected before any generation spend. Stage 2 sends the full-path
    image to the generator and parses its trailing confidence JSON. Stage 3
    accepts only confidence strictly above ``min_confidence`` and emits an
    SFT record whose target is the reasoning plus the true point's box.

    A journal file makes the pipeline resumable: already-journaled traj_ids
    are loaded, not re-queried. Per-candidate failures are recorded and
    skipped; only AuthError aborts the run.
    """
    style = style or RenderStyle()
    journal_path = Path(journal_path) if journal_path else None
    image_dir = Path(image_dir) if image_dir else None

    done: dict[str, CotCandidate] = {}
    if journal_path and journal_path.exists():
        for line in journal_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                cand = CotCandidate.from_json(line)
                done[cand.traj_id] = cand

    def journal(cand: CotCandidate) -> None:
        if journal_path:
            with journal_path.open("a", encoding="utf-8") as f:
                f.write(cand.to_json() + "\n")

    candidates: list[CotCandidate] = []
    records: list[SftRecord] = []
    by_id = dict(trajectories)
    n_accepted = sum(1 for c in done.values() if c.accepted)
    errors = 0

    for traj_id, traj in trajectories:
        if traj_id in done:
            candidates.append(done[traj_id])
            continue
        if n_accepted >= max_accepted:
            break
        try:
            vp = viewport_fn(traj)
            prefix = traj.points[:-1]
            truth = traj.points[-1]
            truth_px = vp.project(truth)
            oracle = oracle_factory(traj_id, traj, vp)

            prefix_canvas = None

            def base_png_factory(region, split):
                nonlocal prefix_canvas
                if prefix_canvas is None:
                    prefix_canvas = render_base_map(vp, net, style)
                    draw_trajectory(prefix_canvas, vp, prefix, style)
                frame = prefix_canvas.copy()
                draw_vgls_overlay(frame, region, split, style)
                return encode_image(frame)

            passed = _gate_vgls(truth_px, vp, oracle, base_png_factory, gate_rounds)
            if passed < gate_rounds:
                cand = CotCandidate(traj_id, passed, None, None, False, "vgls_gate")
            else:
                full_png = None
                if getattr(generator, "needs_image", True):
                    full_canvas = render_base_map(vp, net, style)
                    draw_trajectory(full_canvas, vp, traj.points, style)
                    full_png = encode_image(full_canvas)
                reply = generator.generate(traj_id, full_png)
                cot_text, confidence = _strip_confidence(reply)
                if cot_text is None:
                    cand = CotCandidate(traj_id, passed, None, None, False, "bad_confidence")
                elif confidence <= min_confidence:
                    cand = CotCandidate(traj_id, passed, cot_text, confidence, False, "low_confidence")
                else:
                    cand = CotCandidate(traj_id, passed, cot_text, confidence, True)
        except AuthError:
            raise
        except Exception as e:  # noqa: BLE001 - per-candidate isolation
            errors += 1
            cand = CotCandidate(traj_id, 0, None, None, False, f"error: {e}")

        journal(cand)
        done[traj_id] = cand
        candidates.append(cand)
        if cand.accepted:
            n_accepted += 1

    for cand in candidates:
        if not cand.accepted:
            continue
        traj = by_id.get(cand.traj_id)
        if traj is None:
            continue
        vp = viewport_fn(traj)
        image_path = ""
        if image_dir is not None:
            canvas = render_base_map(vp, net, style)
            draw_trajectory(canvas, vp, traj.points[:-1], style)
            image_path = save_image_cas(image_dir, encode_image(canvas))
        box = grid_box_for_point(vp, traj.points[-1])
        records.append(SftRecord(
            image_path=image_path,
            prompt_text=load_template(PromptKind.PREDICT_NEXT),
            target_text=cot_target_text(cand.cot_text, box),
            task="cot",
            meta={"traj_id": cand.traj_id, "point_index": len(traj.points),
                  "confidence": cand.confidence},
        ))

    stats = {
        "processed": len(candidates),
        "accepted": sum(1 for c in candidates if c.accepted),
        "rejected_gate": sum(1 for c in candidates if c.reject_reason == "vgls_gate"),
        "rejected_confidence": sum(
            1 for c in candidates if c.reject_reason in ("low_confidence", "bad_confidence")),
        "errors": errors,
    }
    return CotPipelineResult(candidates, records, stats)
