"""Command-line front end: one subcommand per module, reproducible reports.

stdout carries each command's primary table or JSON report; side files
(CSV, SVG, PGM, traces) are written only to paths named by flags. With
--out, a wrapper report embedding the effective config is written as JSON.
Exit codes: 0 ok, 2 usage, 3 module error (JSON on stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any

from . import __version__
from .config import RunConfig
from .errors import EarcamError
from .geometry import design_space_csv, design_space_table
from .imaging import (
    GrayImage,
    decode_pgm,
    encode_pgm,
    ground_truth_homography,
    render_view,
    scene_from_json,
    LEFT,
    RIGHT,
)
from .link import simulate_dual_acquisition, simulate_stream
from .pipeline import (
    CONFIGS,
    MockInferenceClient,
    RemoteInferenceClient,
    run_query,
)
from .power import life_table, life_table_csv, power_report
from .stitch import try_stitch


def _float_list(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    return [float(tok) for tok in text.split(",")]


def _dump(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="earcam",
        description="Desk-scale models of a camera-equipped earbud pair: "
        "field-of-view geometry, radio link timing, battery life, image "
        "stitching, and query latency.",
    )
    parser.add_argument(
        "--config", dest="config_path", metavar="FILE",
        help="JSON file overriding built-in defaults",
    )
    parser.add_argument("--seed", type=int, help="seed for randomized steps")
    parser.add_argument(
        "--out", metavar="PATH", help="write a full JSON report here"
    )
    # The same three flags are valid after the subcommand too. SUPPRESS keeps
    # the subparser from clobbering a value parsed before the subcommand.
    seed_out = argparse.ArgumentParser(add_help=False)
    seed_out.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    seed_out.add_argument("--out", metavar="PATH", default=argparse.SUPPRESS)
    common = argparse.ArgumentParser(add_help=False, parents=[seed_out])
    common.add_argument(
        "--config", dest="config_path", metavar="FILE", default=argparse.SUPPRESS
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser(
        "geometry", help="design-space table for camera yaw", parents=[common]
    )
    p.add_argument(
        "--thetas", default="0,5,10,15,20",
        help="comma-separated yaw angles in degrees (empty for header only)",
    )
    p.add_argument(
        "--calibrate", choices=("reference", "paper", "none"), default=None,
        help="fit camera placement to the reference blind-spot rows",
    )
    p.add_argument("--csv", metavar="PATH", help="also write the CSV here")
    p.add_argument("--svg", metavar="PATH", help="write a blind-spot chart")

    p = sub.add_parser(
        "link", help="radio throughput and frame timing", parents=[common]
    )
    p.add_argument("--frame", choices=("qvga", "qqvga"), default=None)
    p.add_argument("--frames", type=int, default=1, help="frames to stream")
    p.add_argument("--devices", type=int, choices=(1, 2), default=1)
    p.add_argument("--trace-csv", metavar="PATH", help="write the event trace")

    p = sub.add_parser(
        "power", help="battery life vs query rate", parents=[common]
    )
    p.add_argument("--battery", choices=("sony", "airpods"), default=None)
    p.add_argument(
        "--queries", default="0,5,10,20,60",
        help="comma-separated query rates per hour",
    )
    p.add_argument("--csv", metavar="PATH", help="also write the CSV here")
    p.add_argument("--svg", metavar="PATH", help="write a battery-life chart")

    p = sub.add_parser(
        "render", help="render the synthetic stereo pair", parents=[common]
    )
    p.add_argument("--theta", type=float, default=None, help="camera yaw, deg")
    p.add_argument("--depth", type=float, default=None, help="scene depth, cm")
    p.add_argument("--pattern", default=None, help="scene pattern string")
    p.add_argument("--frame", choices=("qvga", "qqvga"), default=None)
    p.add_argument("--out-left", default="left.pgm", metavar="PATH")
    p.add_argument("--out-right", default="right.pgm", metavar="PATH")
    p.add_argument(
        "--truth", metavar="PATH",
        help="write the exact right-to-left homography as JSON",
    )

    p = sub.add_parser(
        "stitch", help="stitch two PGM images", parents=[common]
    )
    p.add_argument("left", metavar="LEFT.pgm")
    p.add_argument("right", metavar="RIGHT.pgm")
    p.add_argument("--panorama", metavar="PATH", help="write the panorama PGM")
    p.add_argument(
        "--timing", action="store_true",
        help="report measured runtime (off by default: keeps reports "
        "byte-reproducible)",
    )

    # Here --config is the A/B/C mode per the published flag set; a config
    # FILE for this subcommand goes before it: earcam --config f.json pipeline.
    p = sub.add_parser(
        "pipeline", help="end-to-end query latency", parents=[seed_out]
    )
    p.add_argument(
        "--config", dest="pipeline_config", choices=CONFIGS, default="C",
        help="pipeline configuration",
    )
    p.add_argument(
        "--transcript", default="hey vue what am I looking at",
        help="spoken query transcript",
    )
    p.add_argument(
        "--scene", metavar="FILE", help="scene JSON (default: config scene)"
    )
    p.add_argument("--client", choices=("mock", "remote"), default="mock")
    p.add_argument("--endpoint", help="remote inference URL")
    return parser


def _cmd_geometry(cfg: RunConfig, args) -> tuple[str, dict, dict]:
    thetas = _float_list(args.thetas)
    rig = cfg.build_rig()
    rows = design_space_table(rig, thetas, cfg.build_query())
    csv_text = design_space_csv(rows)
    artifacts: dict[str, str] = {}
    if args.csv:
        Path(args.csv).write_text(csv_text)
        artifacts["csv"] = args.csv
    if args.svg:
        from .charts import save_blind_spot_chart

        save_blind_spot_chart(rows, args.svg, harmon_cm=cfg.harmon_distance_cm)
        artifacts["svg"] = args.svg
    report = {
        "rig": {
            "w_half_spacing_cm": rig.w_half_spacing,
            "b_posterior_cm": rig.b_posterior,
            "phi_window_deg": rig.phi_window,
            "phi_sensor_deg": rig.phi_sensor,
            "base_union_deg": rig.base_union,
        },
        "csv": csv_text,
    }
    return csv_text, report, artifacts


def _cmd_link(cfg: RunConfig, args) -> tuple[str, dict, dict]:
    spec = cfg.build_spec()
    link = cfg.build_link()
    timing = simulate_stream(link, spec, n_frames=args.frames, devices=args.devices)
    report = {
        "spec": {"width": spec.width, "height": spec.height},
        "devices": timing.devices,
        "n_frames": timing.n_frames,
        "t_acquire_ms": timing.t_acquire_ms,
        "t_transmit_ms": timing.t_transmit_ms,
        "frame_latency_ms": timing.frame_latency_ms,
        "effective_fps": timing.effective_fps,
        "theoretical_fps": timing.theoretical_fps,
        "dma_transactions": timing.dma_transactions,
        "packets_per_frame": timing.packets_per_frame,
        "last_packet_bytes": timing.last_packet_bytes,
        "trace_events": len(timing.trace),
    }
    if args.devices == 2:
        report["dual_acquisition_ms"] = simulate_dual_acquisition(link, spec)
    artifacts: dict[str, str] = {}
    if args.trace_csv:
        Path(args.trace_csv).write_text(timing.trace_csv())
        artifacts["trace_csv"] = args.trace_csv
    return _dump(report), report, artifacts


def _cmd_power(cfg: RunConfig, args) -> tuple[str, dict, dict]:
    battery = cfg.build_battery()
    profile = cfg.build_profile()
    queries = _float_list(args.queries)
    rows = life_table(battery, profile, queries)
    csv_text = life_table_csv(rows)
    report = power_report(battery, profile, queries)
    artifacts: dict[str, str] = {}
    if args.csv:
        Path(args.csv).write_text(csv_text)
        artifacts["csv"] = args.csv
    if args.svg:
        from .charts import save_battery_chart

        save_battery_chart(rows, args.svg)
        artifacts["svg"] = args.svg
    return csv_text, report, artifacts


def _cmd_render(cfg: RunConfig, args) -> tuple[str, dict, dict]:
    rig = cfg.build_rig(args.theta)
    scene = cfg.build_scene(args.pattern, args.depth)
    spec = cfg.build_spec()
    left = render_view(rig, LEFT, scene, spec)
    right = render_view(rig, RIGHT, scene, spec)
    Path(args.out_left).write_bytes(encode_pgm(left))
    Path(args.out_right).write_bytes(encode_pgm(right))
    artifacts = {"out_left": args.out_left, "out_right": args.out_right}
    report = {
        "frame": [spec.width, spec.height],
        "theta_deg": rig.theta_yaw,
        "depth_cm": scene.depth_from_eye,
        "pattern": scene.pattern,
    }
    if args.truth:
        h = ground_truth_homography(rig, scene.depth_from_eye, spec)
        truth = dict(report, h=[float(v) for v in h.ravel()])
        Path(args.truth).write_text(_dump(truth) + "\n")
        artifacts["truth"] = args.truth
    return _dump(report), report, artifacts


def _cmd_stitch(cfg: RunConfig, args) -> tuple[str, dict, dict]:
    left = decode_pgm(Path(args.left).read_bytes())
    right = decode_pgm(Path(args.right).read_bytes())
    result = try_stitch(
        left, right, seed=cfg.seed, max_keypoints=cfg.max_keypoints
    )
    report: dict[str, Any] = {
        "status": result.status,
        "inliers": result.inliers,
        "inlier_ratio": result.inlier_ratio,
        "h": (
            [float(v) for v in result.homography.ravel()]
            if result.homography is not None
            else None
        ),
        "runtime_ms": result.runtime_ms if args.timing else None,
        "pixels_in": result.pixels_in,
        "pixels_out": result.pixels_out,
    }
    if result.reason is not None:
        report["reason"] = result.reason
    artifacts: dict[str, str] = {}
    if args.panorama and result.panorama is not None:
        Path(args.panorama).write_bytes(encode_pgm(result.panorama))
        artifacts["panorama"] = args.panorama
    return _dump(report), report, artifacts


def _cmd_pipeline(cfg: RunConfig, args) -> tuple[str, dict, dict]:
    if args.client == "remote":
        if not args.endpoint:
            raise ValueError("--client remote needs --endpoint")
        client = RemoteInferenceClient(args.endpoint)
    else:
        client = MockInferenceClient(
            ttft_dual_s=cfg.ttft_dual_s,
            ttft_stitched_s=cfg.ttft_stitched_s,
            seed=cfg.seed,
        )
    if args.scene:
        scene = scene_from_json(Path(args.scene).read_text())
    else:
        scene = cfg.build_scene()
    timeline = run_query(
        args.pipeline_config,
        args.transcript,
        scene,
        cfg.build_rig(),
        link_cfg=cfg.build_link(),
        wake_cfg=cfg.build_wake(),
        client=client,
        spec=cfg.build_spec(),
        stitch_seed=cfg.seed,
        synthesis_s=cfg.synthesis_s,
        speech_wps=cfg.speech_wps,
        wake_latency_s=cfg.wake_latency_s,
        stitch_cost_s=cfg.stitch_cost_s,
    )
    report = timeline.to_json()
    summary = (
        f"{timeline.config},{timeline.total_latency_s:.6g},{timeline.path}"
    )
    return _dump(report) + "\n" + summary, report, {}


_COMMANDS = {
    "geometry": _cmd_geometry,
    "link": _cmd_link,
    "power": _cmd_power,
    "render": _cmd_render,
    "stitch": _cmd_stitch,
    "pipeline": _cmd_pipeline,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides: dict[str, Any] = {"seed": args.seed}
    if args.cmd == "geometry":
        overrides["calibrate"] = args.calibrate
    elif args.cmd in ("link", "render"):
        overrides["frame"] = args.frame
    elif args.cmd == "power":
        overrides["battery"] = args.battery
    if args.cmd == "render":
        overrides["theta_deg"] = args.theta
        overrides["scene_depth_cm"] = args.depth
        overrides["scene_pattern"] = args.pattern
    try:
        cfg = RunConfig.load(args.config_path, overrides)
        stdout_text, report, artifacts = _COMMANDS[args.cmd](cfg, args)
    except EarcamError as exc:
        print(
            json.dumps({"error": exc.code, "message": str(exc)}),
            file=sys.stderr,
        )
        return 3
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"earcam: {exc}", file=sys.stderr)
        return 2
    print(stdout_text)
    if args.out:
        wrapper = {
            "command": args.cmd,
            "version": __version__,
            "config": cfg.to_json(),
            "report": report,
            "artifacts": artifacts,
        }
        Path(args.out).write_text(_dump(wrapper) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
