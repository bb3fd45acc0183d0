"""Command-line entry point.

Commands cover the whole instrument life cycle: ``build`` runs the
construction sequence from a layout file, ``perturb`` injects the two
disturbance scenarios into a saved state, ``recover`` dispatches the
matching recovery routine, ``trial-batch`` runs the seeded statistics
batteries, and ``power-curve`` / ``render`` export measurements from a
saved state. All artifacts land inside the ``--out`` directory; identical
invocations write byte-identical files.

Exit codes: 0 success, 1 domain failure (failed step, exhausted recovery,
unknown component), 2 usage or parse error (bad flags, malformed JSON,
invalid layout).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import trials
from .errors import CavforgeError, ConstructionError, LayoutError
from .frameio import write_csv, write_pgm
from .layout import apply_overrides, default_layout, validate_layout
from .physics import camera_view
from .pipeline import (
    PipelineState,
    measure_power_curve,
    recover_displacement,
    recover_drift,
    run_construction,
    surveillance_tick,
)
from .simcore import ComponentKind, inject_displacement, randomize_knobs

log = logging.getLogger(__name__)


def _setup_logging() -> None:
    name = os.environ.get("CAVFORGE_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def _load_layout(args):
    if args.layout is None:
        data = default_layout()
    else:
        try:
            with open(args.layout, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise LayoutError(f"cannot read layout file {args.layout}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise LayoutError(f"layout file {args.layout} is not valid JSON: {exc}") from exc
    data = apply_overrides(data, args.overrides)
    return validate_layout(data)


def _ensure_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _state_path(args) -> Path:
    return Path(args.out) / "state.json"


def _load_state(args) -> PipelineState:
    path = _state_path(args)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise CavforgeError(f"no build state at {path}; run build first") from exc
    except json.JSONDecodeError as exc:
        raise LayoutError(f"state file {path} is not valid JSON: {exc}") from exc
    return PipelineState.from_dict(data)


def _save_state(args, state: PipelineState) -> None:
    _write_json(_state_path(args), state.to_dict())


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _write_frames(out: Path, state: PipelineState, raw_csv: bool = False) -> list:
    written = []
    for cam in state.ws.find_kind(ComponentKind.CAMERA):
        frame = camera_view(state.ws, cam.id)
        path = out / f"{cam.id}_step{state.current_step}.pgm"
        write_pgm(frame, path)
        written.append(path.name)
        if raw_csv:
            csv_path = path.with_suffix(".csv")
            write_csv(frame, csv_path)
            written.append(csv_path.name)
    return written


def cmd_build(args) -> int:
    layout = _load_layout(args)
    seed = layout.seed if args.seed is None else args.seed
    out = _ensure_out(args)
    try:
        state = run_construction(layout, seed)
    except ConstructionError as exc:
        _write_jsonl(out / "trace.jsonl", exc.log)
        if exc.state is not None:
            _save_state(args, exc.state)
        print(f"build failed at step {int(exc.step)}: {exc}", file=sys.stderr)
        return 1
    _save_state(args, state)
    _write_jsonl(out / "trace.jsonl", state.log)
    _write_json(out / "baseline.json", state.baseline)
    _write_frames(out, state)
    print(json.dumps({"status": "ok", "seed": seed,
                      "step": state.current_step,
                      "mode_order": state.baseline["mode_order"],
                      "output_power": state.baseline["output_power"]},
                     sort_keys=True))
    return 0


def cmd_perturb(args) -> int:
    state = _load_state(args)
    if args.kind == "displace":
        if not args.component_id:
            raise LayoutError("perturb displace requires --id")
        state.ws = inject_displacement(state.ws, args.component_id,
                                       dx=args.dx, dy=args.dy)
    else:
        mirrors = [c.id for c in state.ws.components if c.knobs is not None]
        state.ws = randomize_knobs(state.ws, mirrors, args.min_deg, args.max_deg)
    tick = surveillance_tick(state)
    _save_state(args, state)
    print(json.dumps(tick, sort_keys=True))
    return 0


def cmd_recover(args) -> int:
    state = _load_state(args)
    tick = surveillance_tick(state)
    if tick["status"] == "signal_lost":
        rng = None
        if args.seed is not None:
            rng = np.random.default_rng(np.random.SeedSequence([args.seed]))
        report = recover_drift(state, rng=rng)
    else:
        report = recover_displacement(state)
    _save_state(args, state)
    payload = {"tick": tick, **report.to_dict()}
    _write_json(Path(args.out) / "recovery.json", payload)
    print(json.dumps(payload, sort_keys=True))
    return 0 if report.success else 1


def cmd_trial_batch(args) -> int:
    layout = _load_layout(args)
    seed = layout.seed if args.seed is None else args.seed
    out = _ensure_out(args)
    rows = trials.run_trials(args.experiment, layout, seed, args.n_trials)
    summary = rows + trials.aggregate(rows)
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=trials.FIELDS)
        writer.writeheader()
        writer.writerows(summary)
    for agg in trials.aggregate(rows):
        print(json.dumps(agg, sort_keys=True))
    return 0


def cmd_power_curve(args) -> int:
    state = _load_state(args)
    out = _ensure_out(args)
    pump = state.ws.find_kind(ComponentKind.PUMP_SOURCE)[0]
    operating = float(pump.param("power", 1.0))
    powers = np.linspace(0.0, operating, args.points)
    curve = measure_power_curve(state.ws, powers)
    with open(out / "power_curve.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pump_power", "output_power"])
        for p, o in curve.points:
            writer.writerow([f"{p:.10g}", f"{o:.10g}"])
    _write_json(out / "power_curve.json",
                {"threshold": curve.threshold, "slope": curve.slope})
    print(json.dumps({"threshold": curve.threshold, "slope": curve.slope},
                     sort_keys=True))
    return 0


def cmd_render(args) -> int:
    state = _load_state(args)
    out = _ensure_out(args)
    written = _write_frames(out, state, raw_csv=args.raw_csv)
    print(json.dumps({"written": written}, sort_keys=True))
    return 0


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--layout", default=None, metavar="PATH",
                        help="layout JSON file (defaults to the stock table)")
    common.add_argument("--seed", type=int, default=None,
                        help="override the layout seed")
    common.add_argument("--out", default="cavforge_out", metavar="DIR",
                        help="artifact directory (created if absent)")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a layout field, e.g. "
                             "components.ndf.params.transmittance=0.05")

    parser = argparse.ArgumentParser(
        prog="cavforge",
        description="Simulated robotic construction and upkeep of a "
                    "small laser resonator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", parents=[common],
                       help="run the construction sequence to lasing")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("perturb", parents=[common],
                       help="disturb a completed build")
    p.add_argument("kind", choices=("displace", "knobs"))
    p.add_argument("--id", dest="component_id", default=None,
                   help="component to displace")
    p.add_argument("--dx", type=float, default=0.0)
    p.add_argument("--dy", type=float, default=0.0)
    p.add_argument("--min", dest="min_deg", type=float, default=30.0)
    p.add_argument("--max", dest="max_deg", type=float, default=60.0)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("recover", parents=[common],
                       help="classify the disturbance and recover")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("trial-batch", parents=[common],
                       help="run a seeded statistics battery")
    p.add_argument("experiment", choices=trials.EXPERIMENTS)
    p.add_argument("-n", "--n-trials", type=int, default=10)
    p.set_defaults(func=cmd_trial_batch)

    p = sub.add_parser("power-curve", parents=[common],
                       help="sweep the pump and fit the output curve")
    p.add_argument("--points", type=int, default=11)
    p.set_defaults(func=cmd_power_curve)

    p = sub.add_parser("render", parents=[common],
                       help="export the current camera frames")
    p.add_argument("--csv", dest="raw_csv", action="store_true",
                   help="also dump raw intensities as CSV")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    _setup_logging()
    try:
        return args.func(args)
    except LayoutError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CavforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
