"""Pipeline executable: preprocess, render, vgls, score, grpo, make-sft, eval.

Every command validates its inputs, writes its outputs plus a manifest
(config, input hashes, counts), and uses exit codes 0 = ok, 1 = fatal input
problem, 2 = endpoint/auth failure, 3 = partial failure (records skipped).
"""

from __future__ import annotations

import hashlib
import json
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import __version__, dataprep, grpo, metrics, rewards
from .geo import (GeoPoint, NonMonotoneTime, SpanTooShort, Trajectory,
                  load_raw_trajectories, resample_uniform, viewport_for)
from .oracle_client import (AuthError, EndpointConfig, HttpVglsOracle, OracleClient,
                            OracleTransport)
from .raster import RenderStyle, draw_trajectory, encode_image, render_base_map
from .roadnet import EmptyNetwork, ParseError, build_index, load_roads, nearest_road_distance
from .vgls import OracleUnparseable, make_mock_oracle, run_vgls

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_ENDPOINT = 2
EXIT_PARTIAL = 3

_INPUT_ERRORS = (SpanTooShort, NonMonotoneTime, ParseError, EmptyNetwork,
                 dataprep.TooFewTrajectories, metrics.EmptyBatch, grpo.IncompleteGroup,
                 grpo.GroupTooSmall, grpo.LengthMismatch, FileNotFoundError,
                 json.JSONDecodeError, KeyError, ValueError)


def _fail(code: int, err: Exception) -> None:
    summary = {"error": type(err).__name__, "message": str(err)}
    click.echo(json.dumps(summary, sort_keys=True), err=True)
    sys.exit(code)


def _guard(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (AuthError, OracleTransport, OracleUnparseable) as e:
        _fail(EXIT_ENDPOINT, e)
    except _INPUT_ERRORS as e:
        _fail(EXIT_INPUT, e)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, inputs: list[Path],
                    counts: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs if p and p.exists()},
        "counts": counts,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _load_config_file(path: str | None) -> dict[str, str]:
    """Plain ``key = value`` lines; '#' starts a comment. Flags win over these."""
    if not path:
        return {}
    cfg: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line {raw!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def _resolve(flag, cfg: dict[str, str], key: str, default, cast):
    if flag is not None:
        return flag
    if key in cfg:
        return cast(cfg[key])
    return default


def _style_from(cfg: dict[str, str]) -> RenderStyle:
    kwargs = {}
    for name in ("road_width_px", "arrow_width_px", "endpoint_radius_px", "label_size_px"):
        if name in cfg:
            kwargs[name] = int(cfg[name])
    if "region_alpha" in cfg:
        kwargs["region_alpha"] = float(cfg["region_alpha"])
    return RenderStyle(**kwargs)


def _save_trajectories(path: Path, trajs: dict[str, Trajectory]) -> None:
    with path.open("w", encoding="utf-8") as f:
        for traj_id, traj in trajs.items():
            f.write(json.dumps({
                "traj_id": traj_id,
                "dt": traj.dt,
                "points": [[p.lat, p.lon] for p in traj.points],
            }) + "\n")


def _load_trajectories(data_dir: Path) -> dict[str, Trajectory]:
    path = data_dir / "trajectories.jsonl"
    trajs: dict[str, Trajectory] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        trajs[rec["traj_id"]] = Trajectory(
            tuple(GeoPoint(lat, lon) for lat, lon in rec["points"]), rec["dt"])
    return trajs


def _load_split(data_dir: Path) -> dataprep.DatasetSplit:
    return dataprep.DatasetSplit.from_json((data_dir / "splits.json").read_text(encoding="utf-8"))


def _select_ids(split: dataprep.DatasetSplit, name: str) -> list[str]:
    if name == "all":
        return list(split.train) + list(split.val) + list(split.test)
    if name in ("train", "val", "test"):
        return list(getattr(split, name))
    raise ValueError(f"unknown split {name!r}")


def _traj_seed(master_seed: int, traj_id: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{traj_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _endpoint_from(cfg: dict[str, str], base_url: str | None, model: str | None) -> EndpointConfig:
    url = base_url or cfg.get("base_url")
    name = model or cfg.get("model", "")
    if not url:
        raise ValueError("http oracle needs --base-url (or base_url in the config file)")
    return EndpointConfig(
        base_url=url,
        model_name=name,
        timeout_seconds=float(cfg.get("timeout_seconds", 60.0)),
        max_retries=int(cfg.get("max_retries", 2)),
        temperature=float(cfg.get("temperature", 0.0)),
        max_tokens=int(cfg.get("max_tokens", 1024)),
        requests_per_second=float(cfg.get("requests_per_second", 1.0)),
        max_concurrency=int(cfg.get("max_concurrency", 4)),
    )


def _make_oracle(spec: str, truth_px, seed: int, client: OracleClient | None):
    parts = spec.split(":")
    if parts[0] == "mock":
        kind = parts[1] if len(parts) > 1 else "perfect"
        p = float(parts[2]) if len(parts) > 2 else 1.0
        return make_mock_oracle(kind, truth=truth_px, p=p, seed=seed)
    if parts[0] == "http":
        if client is None:
            raise ValueError("http oracle requested but no endpoint configured")
        return HttpVglsOracle(client)
    raise ValueError(f"unknown oracle spec {spec!r}")


@click.group()
def main() -> None:
    """Visual-map next-location prediction harness."""


@main.command("preprocess")
@click.option("--raw", "raw_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--dt", type=float, default=None)
@click.option("--count", type=int, default=None)
@click.option("--seed", type=int, default=None)
def cmd_preprocess(raw_path, out_dir, config_path, dt, count, seed):
    """Resample raw fixes to uniform trajectories and write a 7:1:2 split."""
    cfg = _guard(_load_config_file, config_path)
    dt = _resolve(dt, cfg, "dt", 45.0, float)
    count = _resolve(count, cfg, "count", 13, int)
    seed = _resolve(seed, cfg, "seed", 0, int)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    raw = _guard(load_raw_trajectories, raw_path)
    accepted: dict[str, Trajectory] = {}
    rejected: dict[str, str] = {}
    for traj_id, points in raw.items():
        try:
            accepted[traj_id] = resample_uniform(points, dt=dt, count=count)
        except (SpanTooShort, NonMonotoneTime, ValueError) as e:
            rejected[traj_id] = f"{type(e).__name__}: {e}"
    if not accepted:
        _fail(EXIT_INPUT, SpanTooShort("no trajectory covered the resampling window"))

    split = _guard(dataprep.make_split, sorted(accepted), seed)
    _save_trajectories(out / "trajectories.jsonl", accepted)
    (out / "splits.json").write_text(split.to_json() + "\n", encoding="utf-8")
    _write_manifest(out, "preprocess",
                    {"dt": dt, "count": count, "seed": seed},
                    [Path(raw_path)],
                    {"accepted": len(accepted), "rejected": len(rejected),
                     "rejection_reasons": dict(sorted(rejected.items())),
                     "split_sizes": {"train": len(split.train), "val": len(split.val),
                                     "test": len(split.test)}})
    click.echo(f"accepted {len(accepted)} trajectories, rejected {len(rejected)}")


@main.command("render")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--roads", "roads_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--points", type=click.Choice(["12", "13"]), default="12")
@click.option("--split-name", default="all")
@click.option("--canvas-px", type=int, default=None)
@click.option("--limit", type=int, default=None)
def cmd_render(data_dir, roads_path, out_dir, config_path, points, split_name, canvas_px, limit):
    """Render one deterministic PNG per trajectory."""
    cfg = _guard(_load_config_file, config_path)
    canvas_px = _resolve(canvas_px, cfg, "canvas_px", 1000, int)
    margin = float(cfg.get("margin_factor", 1.5))
    min_side = float(cfg.get("min_side_m", 500.0))
    style = _guard(_style_from, cfg)
    n_points = int(points)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    data = Path(data_dir)
    trajs = _guard(_load_trajectories, data)
    ids = _guard(_select_ids, _guard(_load_split, data), split_name)
    if limit:
        ids = ids[:limit]
    net = _guard(load_roads, Path(roads_path))

    failures = 0
    written = 0
    for traj_id in ids:
        traj = trajs.get(traj_id)
        if traj is None or len(traj.points) < n_points:
            failures += 1
            continue
        try:
            vp = viewport_for(traj, margin_factor=margin, canvas_px=canvas_px, min_side_m=min_side)
            canvas = render_base_map(vp, net, style)
            draw_trajectory(canvas, vp, traj.points[:n_points], style)
            suffix = "" if n_points == 12 else f"_{n_points}"
            (out / f"{traj_id}{suffix}.png").write_bytes(encode_image(canvas))
            written += 1
        except Exception:  # noqa: BLE001 - per-trajectory isolation
            failures += 1
    _write_manifest(out, "render",
                    {"points": n_points, "canvas_px": canvas_px, "margin_factor": margin,
                     "min_side_m": min_side, "split_name": split_name},
                    [data / "trajectories.jsonl", data / "splits.json", Path(roads_path)],
                    {"written": written, "failed": failures})
    click.echo(f"rendered {written} images ({failures} failures)")
    if failures:
        sys.exit(EXIT_PARTIAL)


@main.command("vgls")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--roads", "roads_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--oracle", "oracle_spec", default="mock:perfect",
              help="mock:perfect | mock:random | mock:noisy:P | http")
@click.option("--rounds", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--split-name", default="test")
@click.option("--canvas-px", type=int, default=None)
@click.option("--save-images", is_flag=True, default=False)
@click.option("--limit", type=int, default=None)
@click.option("--missing", type=click.Choice(["exclude", "penalize"]), default="exclude")
@click.option("--jobs", type=int, default=1, help="Trajectory-level parallelism cap")
@click.option("--base-url", default=None)
@click.option("--model", default=None)
def cmd_vgls(data_dir, roads_path, out_dir, config_path, oracle_spec, rounds, seed,
             split_name, canvas_px, save_images, limit, missing, jobs, base_url, model):
    """Run region search per trajectory; write transcripts, predictions, metrics."""
    cfg = _guard(_load_config_file, config_path)
    rounds = _resolve(rounds, cfg, "rounds", 10, int)
    seed = _resolve(seed, cfg, "seed", 0, int)
    canvas_px = _resolve(canvas_px, cfg, "canvas_px", 1000, int)
    margin = float(cfg.get("margin_factor", 1.5))
    min_side = float(cfg.get("min_side_m", 500.0))
    cell_px = int(cfg.get("cell_px", 64))
    style = _guard(_style_from, cfg)
    out = Path(out_dir)
    transcripts_dir = out / "transcripts"
    transcripts_dir.mkdir(parents=True, exist_ok=True)
    images_dir = out / "images"

    data = Path(data_dir)
    trajs = _guard(_load_trajectories, data)
    ids = _guard(_select_ids, _guard(_load_split, data), split_name)
    if limit:
        ids = ids[:limit]
    net = _guard(load_roads, Path(roads_path))

    client = None
    if oracle_spec.startswith("http"):
        endpoint = _guard(_endpoint_from, cfg, base_url, model)
        client = OracleClient(endpoint, transcript_path=out / "oracle_calls.jsonl")

    def run_one(traj_id):
        """(record | None, reused | skipped | ok); raises only fatal errors."""
        traj = trajs.get(traj_id)
        if traj is None or len(traj.points) < 13:
            return None, "skipped"
        vp = viewport_for(traj, margin_factor=margin, canvas_px=canvas_px, min_side_m=min_side)
        truth = traj.points[-1]
        truth_px = vp.project(truth)
        idx = build_index(net, vp, cell_px)
        transcript_path = transcripts_dir / f"{traj_id}.jsonl"

        status = "ok"
        if transcript_path.exists():
            final = json.loads(transcript_path.read_text(encoding="utf-8").splitlines()[-1])
            final_px = tuple(final["final_px"])
            final_geo = GeoPoint(*final["final_geo"])
            status = "reused"
        else:
            traj_seed = _traj_seed(seed, traj_id)
            oracle = _make_oracle(oracle_spec, truth_px, traj_seed, client)
            sink = None
            if save_images:
                images_dir.mkdir(parents=True, exist_ok=True)

                def sink(k, png, _tid=traj_id):
                    (images_dir / f"{_tid}_round{k}.png").write_bytes(png)

            try:
                transcript = run_vgls(traj.points[:12], vp, net, oracle, rounds, style,
                                      rng=random.Random(traj_seed ^ 0x5EED),
                                      image_sink=sink)
            except OracleTransport:
                return None, "skipped"
            transcript_path.write_text(transcript.to_jsonl(), encoding="utf-8")
            final_px = transcript.final_px
            final_geo = transcript.final_geo

        return metrics.PredictionRecord(
            traj_id=traj_id,
            truth=truth,
            predicted=final_geo,
            pixel_truth=truth_px,
            pixel_pred=final_px,
            nearest_road_px=nearest_road_distance(idx, final_px),
            canvas_px=canvas_px,
            meters_per_pixel=vp.meters_per_pixel,
        ), status

    records = []
    skipped = 0
    reused = 0
    try:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(run_one, ids))
        else:
            outcomes = [run_one(traj_id) for traj_id in ids]
    except (AuthError, OracleUnparseable) as e:
        _fail(EXIT_ENDPOINT, e)
    except _INPUT_ERRORS as e:
        _fail(EXIT_INPUT, e)
    for record, status in outcomes:
        if record is None:
            skipped += 1
            continue
        if status == "reused":
            reused += 1
        records.append(record)

    if client is not None:
        client.close()
    if not records:
        _fail(EXIT_INPUT, metrics.EmptyBatch("no trajectories produced predictions"))

    with (out / "predictions.jsonl").open("w", encoding="utf-8") as f:
        for rec in records:
            f.write(rec.to_json() + "\n")
    report = metrics.build_report(records, missing)
    (out / "report.json").write_bytes(metrics.write_report(report, "json"))
    (out / "report.txt").write_bytes(metrics.write_report(report, "table"))
    # jobs is deliberately absent from the manifest: parallelism must not
    # change any artifact
    _write_manifest(out, "vgls",
                    {"oracle": oracle_spec, "rounds": rounds, "seed": seed,
                     "canvas_px": canvas_px, "split_name": split_name, "missing": missing},
                    [data / "trajectories.jsonl", data / "splits.json", Path(roads_path)],
                    {"predicted": len(records), "skipped": skipped, "resumed": reused})
    click.echo(f"vgls finished: {len(records)} predictions, MAE {report.mae_m:.3f} m")
    if skipped:
        sys.exit(EXIT_PARTIAL)


@main.command("score")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--roads", "roads_path", required=True, type=click.Path(exists=True))
@click.option("--responses", "responses_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--canvas-px", type=int, default=None)
def cmd_score(data_dir, roads_path, responses_path, out_path, config_path, canvas_px):
    """Score raw model responses with the four reward functions."""
    cfg = _guard(_load_config_file, config_path)
    canvas_px = _resolve(canvas_px, cfg, "canvas_px", 1000, int)
    margin = float(cfg.get("margin_factor", 1.5))
    min_side = float(cfg.get("min_side_m", 500.0))
    cell_px = int(cfg.get("cell_px", 64))
    weights = rewards.RewardWeights(
        w_dis=float(cfg.get("w_dis", 1.0)), w_road=float(cfg.get("w_road", 1.0)),
        w_format=float(cfg.get("w_format", 1.0)), w_step=float(cfg.get("w_step", 1.0)))

    trajs = _guard(_load_trajectories, Path(data_dir))
    net = _guard(load_roads, Path(roads_path))

    index_cache = {}
    skipped = 0
    out_lines = []
    for line in Path(responses_path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = _guard(json.loads, line)
        traj_id = rec.get("traj_id")
        traj = trajs.get(traj_id)
        if traj is None:
            skipped += 1
            continue
        if traj_id not in index_cache:
            vp = viewport_for(traj, margin_factor=margin, canvas_px=canvas_px, min_side_m=min_side)
            index_cache[traj_id] = (vp, build_index(net, vp, cell_px))
        vp, idx = index_cache[traj_id]
        truth_px = vp.project(traj.points[-1])
        vector = rewards.score_response(rec.get("raw_response", ""), truth_px, idx,
                                        weights, (canvas_px, canvas_px))
        out_lines.append(json.dumps({
            "traj_id": traj_id, "r_dis": vector.r_dis, "r_road": vector.r_road,
            "r_format": vector.r_format, "r_step": vector.r_step, "total": vector.total,
        }))
    out_file = Path(out_path)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    out_file.write_text("\n".join(out_lines) + ("\n" if out_lines else ""), encoding="utf-8")
    _write_manifest(out_file.parent, "score",
                    {"canvas_px": canvas_px, "weights": vars(weights)},
                    [Path(responses_path), Path(roads_path)],
                    {"scored": len(out_lines), "skipped": skipped})
    click.echo(f"scored {len(out_lines)} responses ({skipped} skipped)")
    if skipped:
        sys.exit(EXIT_PARTIAL)


@main.command("grpo")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("-G", "--group-size", type=int, default=None,
              help="Strict group size; omit to accept variable-size groups")
@click.option("--beta", type=float, default=0.0)
def cmd_grpo(input_path, out_path, group_size, beta):
    """Group-relative advantages, KL estimates, and loss per query group."""
    records = []
    for line in Path(input_path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = _guard(json.loads, line)
        records.append((rec["query_id"], rec["reward"],
                        rec["policy_logps"], rec["ref_logps"]))
    groups = _guard(grpo.build_groups, records, group_size)
    out_lines = []
    for group in groups:
        result = _guard(grpo.grpo_loss, group, beta)
        out_lines.append(json.dumps({
            "query_id": group.query_id,
            "advantages": list(result.advantages),
            "kls": list(result.kls),
            "loss": result.loss,
            "beta": result.beta,
        }))
    out_file = Path(out_path)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    out_file.write_text("\n".join(out_lines) + ("\n" if out_lines else ""), encoding="utf-8")
    _write_manifest(out_file.parent, "grpo",
                    {"group_size": group_size, "beta": beta},
                    [Path(input_path)], {"groups": len(groups)})
    click.echo(f"processed {len(groups)} groups")


@main.command("make-sft")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--roads", "roads_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--split-name", default="train")
@click.option("--canvas-px", type=int, default=None)
@click.option("--limit", type=int, default=None)
@click.option("--cot", is_flag=True, default=False)
@click.option("--oracle", "oracle_spec", default="mock:perfect")
@click.option("--generator", "generator_spec", default="mock:const:0.9")
@click.option("--max-accepted", type=int, default=None)
@click.option("--seed", type=int, default=None)
def cmd_makesft(data_dir, roads_path, out_dir, config_path, split_name, canvas_px,
                limit, cot, oracle_spec, generator_spec, max_accepted, seed):
    """Build the localization QA dataset and, with --cot, the gated CoT dataset."""
    cfg = _guard(_load_config_file, config_path)
    canvas_px = _resolve(canvas_px, cfg, "canvas_px", 1000, int)
    seed = _resolve(seed, cfg, "seed", 0, int)
    max_accepted = _resolve(max_accepted, cfg, "max_cot_samples", dataprep.MAX_COT_SAMPLES, int)
    margin = float(cfg.get("margin_factor", 1.5))
    min_side = float(cfg.get("min_side_m", 500.0))
    style = _guard(_style_from, cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    images_dir = out / "images"

    data = Path(data_dir)
    trajs = _guard(_load_trajectories, data)
    ids = _guard(_select_ids, _guard(_load_split, data), split_name)
    if limit:
        ids = ids[:limit]
    net = _guard(load_roads, Path(roads_path))

    def make_viewport(traj):
        return viewport_for(traj, margin_factor=margin, canvas_px=canvas_px, min_side_m=min_side)

    d1_records = []
    for traj_id in ids:
        traj = trajs.get(traj_id)
        if traj is None or len(traj.points) < 13:
            continue
        vp = make_viewport(traj)
        canvas = render_base_map(vp, net, style)
        draw_trajectory(canvas, vp, traj.points[:12], style)
        image_path = dataprep.save_image_cas(images_dir, encode_image(canvas))
        d1_records.extend(dataprep.make_localization_records(traj_id, traj, vp, image_path))
    with (out / "d1_localization.jsonl").open("w", encoding="utf-8") as f:
        for rec in d1_records:
            f.write(rec.to_json() + "\n")

    cot_stats = {}
    if cot:
        def oracle_factory(traj_id, traj, vp):
            truth_px = vp.project(traj.points[-1])
            return _guard(_make_oracle, oracle_spec, truth_px, _traj_seed(seed, traj_id), None)

        generator = _guard(_make_generator, generator_spec)
        pairs = [(traj_id, trajs[traj_id]) for traj_id in ids
                 if traj_id in trajs and len(trajs[traj_id].points) >= 13]
        try:
            result = dataprep.run_cot_pipeline(
                pairs, net, oracle_factory, generator,
                max_accepted=max_accepted, style=style, viewport_fn=make_viewport,
                journal_path=out / "cot_journal.jsonl", image_dir=images_dir)
        except AuthError as e:
            _fail(EXIT_ENDPOINT, e)
        with (out / "d2_cot.jsonl").open("w", encoding="utf-8") as f:
            for rec in result.records:
                f.write(rec.to_json() + "\n")
        cot_stats = result.stats

    _write_manifest(out, "make-sft",
                    {"split_name": split_name, "canvas_px": canvas_px, "seed": seed,
                     "cot": cot, "oracle": oracle_spec if cot else None,
                     "generator": generator_spec if cot else None,
                     "max_accepted": max_accepted},
                    [data / "trajectories.jsonl", data / "splits.json", Path(roads_path)],
                    {"d1_records": len(d1_records), "cot": cot_stats})
    click.echo(f"wrote {len(d1_records)} localization records"
               + (f", {cot_stats.get('accepted', 0)} CoT records" if cot else ""))


def _make_generator(spec: str):
    parts = spec.split(":")
    if parts[0] == "mock" and len(parts) >= 2 and parts[1] == "const":
        confidence = float(parts[2]) if len(parts) > 2 else 0.9
        reply = ("1. The recent arrows keep a steady heading along the road.\n"
                 "2. The spacing of the arrows shows near-constant speed.\n"
                 "3. The road ahead continues without forced turns.\n"
                 '{"confidence": %s}' % confidence)
        return dataprep.ScriptedGenerator({}, default=reply)
    raise ValueError(f"unknown generator spec {spec!r} (http generation is driven via the API)")


@main.command("eval")
@click.option("--predictions", "predictions_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["table", "json", "both"]), default="both")
@click.option("--missing", type=click.Choice(["exclude", "penalize"]), default="exclude")
def cmd_eval(predictions_path, out_dir, fmt, missing):
    """Aggregate a predictions file into a metrics report."""
    records = []
    for line in Path(predictions_path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(_guard(metrics.PredictionRecord.from_json, line))
    report = _guard(metrics.build_report, records, missing)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt in ("json", "both"):
        (out / "report.json").write_bytes(metrics.write_report(report, "json"))
    if fmt in ("table", "both"):
        (out / "report.txt").write_bytes(metrics.write_report(report, "table"))
    _write_manifest(out, "eval", {"format": fmt, "missing": missing},
                    [Path(predictions_path)],
                    {"records": report.n_records, "missing": report.n_missing})
    click.echo(f"MAE {report.mae_m:.3f} m, RMSE {report.rmse_m:.3f} m over {report.n_records} records")


if __name__ == "__main__":
    main()
