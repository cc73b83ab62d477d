"""Command-line frontend: ``radarsim {render,compare,calibrate,bench}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import statistics
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .calibration import ParamSpec, grid_search, make_objective, nelder_mead
from .config import apply_params, dump_config, load_scene, load_trajectory, parse_param_spec
from .geometry import Pose
from .imaging import read_pgm, write_pgm
from .metrics import mutual_information, ssim

log = logging.getLogger("radarsim")

FRAME_GLOB = "frame_*.pgm"


def frame_name(index: int) -> str:
    return f"frame_{index:06d}.pgm"


def _prepare_out_dir(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from None
    return out


def cmd_render(scene_config, trajectory, out_dir, threads: int = 1, lidar_like: bool = False,
               seed: Optional[int] = None) -> List[Path]:
    """Render one PGM per trajectory record plus ``manifest.csv``."""
    out = _prepare_out_dir(out_dir)
    cfg = load_scene(scene_config)
    traj = load_trajectory(trajectory)
    if lidar_like:
        cfg = cfg.lidar_like()
    base = cfg.seed if seed is None else int(seed)
    paths = []
    rows = []
    for i, (stamp, pose) in enumerate(traj):
        frame_seed = base + i
        img = cfg.render(pose, frame_seed, threads=threads)
        path = out / frame_name(i)
        write_pgm(cfg.quantize(img), path, bit_depth=cfg.output.bit_depth)
        paths.append(path)
        rows.append((i, repr(float(stamp)), frame_seed))
        log.info("rendered %s", path.name)
    with open(out / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "timestamp", "seed"])
        w.writerows(rows)
    return paths


def _frames(directory) -> List[Path]:
    return sorted(Path(directory).glob(FRAME_GLOB))


def compare_frames(frames_a: Sequence, frames_b: Sequence):
    """Per-frame (mis, ssi) for paired images."""
    if len(frames_a) != len(frames_b):
        raise ValueError(f"frame counts differ: {len(frames_a)} vs {len(frames_b)}")
    rows = []
    for a, b in zip(frames_a, frames_b):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if a.shape != b.shape:
            raise ValueError(f"frame dimensions differ: {a.shape} vs {b.shape}")
        rows.append((mutual_information(a, b), ssim(a, b)))
    return rows


def cmd_compare(dir_a, dir_b, out_csv):
    """Write per-frame MIS/SSI rows and a final mean/std summary row."""
    fa = _frames(dir_a)
    fb = _frames(dir_b)
    if len(fa) != len(fb):
        raise ValueError(f"frame counts differ: {len(fa)} in {dir_a} vs {len(fb)} in {dir_b}")
    if not fa:
        raise ValueError(f"no frames found in {dir_a}")
    rows = compare_frames([read_pgm(p) for p in fa], [read_pgm(p) for p in fb])
    mis = [r[0] for r in rows]
    ssi = [r[1] for r in rows]
    summary = {
        "mis_mean": statistics.fmean(mis), "mis_std": statistics.pstdev(mis),
        "ssi_mean": statistics.fmean(ssi), "ssi_std": statistics.pstdev(ssi),
    }
    with open(out_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_id", "mis", "ssi", "mis_std", "ssi_std"])
        for p, (m, s) in zip(fa, rows):
            w.writerow([p.stem, repr(m), repr(s), "", ""])
        w.writerow(["summary", repr(summary["mis_mean"]), repr(summary["ssi_mean"]),
                    repr(summary["mis_std"]), repr(summary["ssi_std"])])
    return rows, summary


def cmd_calibrate(scene_config, trajectory, reference_dir, out_dir, method: Optional[str] = None,
                  max_evals: Optional[int] = None, threads: int = 1):
    """Fit the config's ``calibration.params`` against reference frames."""
    out = _prepare_out_dir(out_dir)
    cfg = load_scene(scene_config)
    traj = load_trajectory(trajectory)
    cal = cfg.calibration
    if not cal.get("params"):
        raise ValueError("calibration.params: no parameters to fit")
    spec: ParamSpec = parse_param_spec(cal["params"])
    refs = [read_pgm(p) for p in _frames(reference_dir)]
    if len(refs) != len(traj):
        raise ValueError(f"{len(refs)} reference frames for {len(traj)} trajectory records")
    objective = make_objective(cfg, traj.poses, refs, cfg.seed, spec, threads=threads)
    method = method or cal.get("method", "nelder-mead")
    if method == "grid":
        result = grid_search(objective, spec, int(cal.get("points_per_dim", 11)))
    else:
        budget = int(max_evals if max_evals is not None else cal.get("max_evals", 200))
        result = nelder_mead(objective, spec, budget, float(cal.get("tolerance", 1e-6)))
    fitted = apply_params(cfg, result.best_params)
    dump_config(fitted, out / "calibrated.yaml")
    with open(out / "objective_trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["evaluation", "best_objective", *spec.names])
        for i, (best, pt) in enumerate(zip(result.trace, result.points)):
            w.writerow([i, repr(best), *[repr(float(v)) for v in pt]])
    return result


def cmd_bench(scene_config, samples_list: Sequence[int], repeats: int = 3, out_csv=None,
              threads: int = 1, pose: Optional[Pose] = None):
    """Time one frame per N_s (warm-up excluded); returns (N_s, mean ms, std ms) rows."""
    if not samples_list:
        raise ValueError("samples_list must be non-empty")
    repeats = max(int(repeats), 1)
    cfg = load_scene(scene_config)
    pose = pose or Pose()
    rows = []
    for n in samples_list:
        c = replace(cfg, sensor=replace(cfg.sensor, beam=replace(cfg.sensor.beam, n_samples=int(n))))
        c.render(pose, c.seed, threads=threads)
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            c.render(pose, c.seed, threads=threads)
            times.append((time.perf_counter() - t0) * 1e3)
        std = statistics.stdev(times) if len(times) > 1 else 0.0
        rows.append((int(n), statistics.fmean(times), std))
        log.info("N_s=%d: %.1f ms", n, rows[-1][1])
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n_samples", "mean_ms", "std_ms"])
            for n, m, s in rows:
                w.writerow([n, f"{m:.3f}", f"{s:.3f}"])
    return rows


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="radarsim", description="Rotating FMCW radar simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="render one polar image per trajectory pose")
    r.add_argument("config")
    r.add_argument("trajectory")
    r.add_argument("out_dir")
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--lidar-like", action="store_true", help="render the lidar-like baseline")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")

    c = sub.add_parser("compare", help="per-frame MIS/SSI between two frame directories")
    c.add_argument("dir_a")
    c.add_argument("dir_b")
    c.add_argument("out_csv")

    k = sub.add_parser("calibrate", help="fit calibration.params against reference frames")
    k.add_argument("config")
    k.add_argument("trajectory")
    k.add_argument("reference_dir")
    k.add_argument("out_dir")
    k.add_argument("--method", choices=("nelder-mead", "grid"), default=None)
    k.add_argument("--max-evals", type=int, default=None)
    k.add_argument("--threads", type=int, default=1)

    b = sub.add_parser("bench", help="frame runtime versus samples per azimuth")
    b.add_argument("config")
    b.add_argument("--samples", type=int, nargs="+", default=[200, 400, 600, 800, 1000])
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--out", default=None)
    b.add_argument("--threads", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "render":
            paths = cmd_render(args.config, args.trajectory, args.out_dir, args.threads,
                               args.lidar_like, args.seed)
            print(f"wrote {len(paths)} frames to {args.out_dir}")
        elif args.command == "compare":
            _, s = cmd_compare(args.dir_a, args.dir_b, args.out_csv)
            print(f"MIS {s['mis_mean']:.4g} +- {s['mis_std']:.3g}  SSI {s['ssi_mean']:.4g} +- {s['ssi_std']:.3g}")
        elif args.command == "calibrate":
            res = cmd_calibrate(args.config, args.trajectory, args.reference_dir, args.out_dir,
                                args.method, args.max_evals, args.threads)
            print(json.dumps({"best": res.best_params, "objective": res.best_value, "evaluations": res.n_evals}))
        elif args.command == "bench":
            rows = cmd_bench(args.config, args.samples, args.repeats, args.out, args.threads)
            w = csv.writer(sys.stdout, lineterminator="\n")
            w.writerow(["n_samples", "mean_ms", "std_ms"])
            for n, m, s in rows:
                w.writerow([n, f"{m:.3f}", f"{s:.3f}"])
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
