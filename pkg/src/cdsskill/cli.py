"""``cdsskill`` command line: synth -> ingest -> extract -> train -> reproduce -> simulate -> metrics.

Every stage reads its inputs from ``--in-dir`` (default: ``--out-dir``) and
writes to ``--out-dir``, using only the files listed below::

    synth      -> skeleton.json
    ingest     skeleton.json [+ depth maps]       -> arm_<S>.csv, ingest_report.json
    extract    arm_<S>.csv                         -> stiffness_<S>.csv, pose_<S>.csv, extract_report.json
    train      stiffness_<S>.csv, pose_<S>.csv     -> training_<S>.csv, model_<S>.json, train_report_<S>.json
    reproduce  model_<S>.json, pose_<S>.csv, stiffness_<S>.csv -> reproduced_<S>.csv
    simulate   [model files]                       -> simlog.csv, metrics.json
    metrics    simlog.csv                          -> metrics.json

Errors exit with the code attached to their class (see ``errors.py``).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import ingest, sim, skill, stiffness, synth
from .config import PipelineConfig, load_config
from .errors import AllFramesSingular, CdsError, ConfigError, EmptyTrajectory, ParseError
from .frames import fmt, read_arm_csv, read_numeric_csv, write_arm_csv

logger = logging.getLogger("cdsskill")

POSE_COLUMNS = ("t", "y", "z")
REPRODUCED_COLUMNS = ("t", "y", "z", "k11", "k12", "k13", "k22", "k23", "k33", "rel_err")
DEPTH_NAME = "{:06d}.depth"


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_rows(path, columns, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def _read(reader, path, *args):
    path = Path(path)
    if not path.exists():
        raise ParseError(f"missing input file {path}")
    try:
        return reader(path, *args)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def _subjects(args, cfg: PipelineConfig) -> list[str]:
    return list(args.subject) if args.subject else [str(s) for s in cfg.ingest.subjects]


# -- stages -------------------------------------------------------------------

def cmd_synth(cfg: PipelineConfig, out: Path) -> Path:
    frames = synth.generate(cfg.synth, cfg.stage_seed("synth"))
    path = out / "skeleton.json"
    synth.write_skeleton(path, frames)
    logger.info("wrote %d frames to %s", len(frames), path)
    return path


def cmd_ingest(cfg: PipelineConfig, out: Path, subjects, skeleton=None, depth_dir=None) -> dict:
    ing = cfg.ingest
    skeleton = Path(skeleton or cfg.paths.skeleton or out / "skeleton.json")
    depth_dir = depth_dir or cfg.paths.depth_dir
    if not skeleton.exists():
        raise ParseError(f"missing skeleton file {skeleton}")
    frames = ingest.load_skeleton(skeleton)
    intr = ingest.CameraIntrinsics(ing.fx, ing.fy, ing.cx, ing.cy, ing.width, ing.height, ing.rate)

    def depth_loader(i, _frame):
        if depth_dir is None:
            raise ParseError(f"frame {i}: pixel keypoints need a depth directory")
        return ingest.read_depth(Path(depth_dir) / DEPTH_NAME.format(i), intr)

    report = {"skeleton": skeleton.name, "samples_per_demo": ing.samples_per_demo, "subjects": {}}
    for s in subjects:
        demos, gaps = ingest.ingest_subject(
            frames, s, ing.side, intr, depth_loader, ing.depth_window, ing.max_gap, ing.conf_min,
            ing.smooth_window, ing.samples_per_demo, ing.demo_period_s or None,
        )
        traj = ingest.DemoDataset({s: demos}, ing.samples_per_demo).concatenated(s)
        write_arm_csv(out / f"arm_{s}.csv", traj)
        report["subjects"][s] = {"demos": len(demos), "samples": len(traj), **gaps.to_dict()}
        if gaps.interpolated or gaps.dropped:
            logger.warning("subject %s: %d keypoint(s) interpolated, %d frame(s) dropped",
                           s, len(gaps.interpolated), len(gaps.dropped))
    _write_json(out / "ingest_report.json", report)
    return report


def cmd_extract(cfg: PipelineConfig, out: Path, subjects, in_dir: Path) -> dict:
    p = stiffness.StiffnessParams(cfg.stiffness.alpha1, cfg.stiffness.alpha2, cfg.stiffness.a_cc)
    report = {}
    for s in subjects:
        traj = _read(read_arm_csv, in_dir / f"arm_{s}.csv")
        if len(traj) == 0:
            raise EmptyTrajectory(f"arm_{s}.csv has no rows")
        t, k, d1, d2, keep = stiffness.extract_trajectory(traj, p)
        if len(keep) == 0:
            raise AllFramesSingular(f"subject {s}: all {len(traj)} frames are singular")
        skipped = len(traj) - len(keep)
        if skipped:
            logger.warning("subject %s: skipped %d singular frame(s)", s, skipped)
        stiffness.write_stiffness_csv(out / f"stiffness_{s}.csv", t, k, d1, d2)
        wrist = traj.wrist[keep]
        _write_rows(out / f"pose_{s}.csv", POSE_COLUMNS, np.column_stack([t, wrist[:, 1], wrist[:, 2]]))
        report[s] = {"frames": len(traj), "kept": int(len(keep)), "skipped_singular": int(skipped)}
    _write_json(out / "extract_report.json", report)
    return report


def _load_pairs(in_dir: Path, s):
    t, k, _, _ = _read(stiffness.read_stiffness_csv, in_dir / f"stiffness_{s}.csv")
    pose = _read(read_numeric_csv, in_dir / f"pose_{s}.csv", POSE_COLUMNS)
    if len(pose) != len(t) or not np.array_equal(pose[:, 0], t):
        raise ParseError(f"pose_{s}.csv and stiffness_{s}.csv do not share timestamps")
    return t, pose[:, 1:], k


def cmd_train(cfg: PipelineConfig, out: Path, subjects, in_dir: Path, k_components=None) -> dict:
    g = cfg.gmm
    k = k_components if k_components is not None else (None if g.select_k else g.k_components)
    seed = cfg.stage_seed("train")
    reports = {}
    for s in subjects:
        _, poses, ks = _load_pairs(in_dir, s)
        if len(poses) == 0:
            raise EmptyTrajectory(f"subject {s}: no training samples")
        skill.write_training_csv(out / f"training_{s}.csv", skill.training_matrix(poses, ks))
        model, report = skill.learn_stiffness_skill(
            poses, ks, k=k, seed=seed, k_max=g.k_max_stiffness, tol=g.tol, max_iter=g.max_iter,
            reg=g.reg, bic_range=range(g.k_range[0], g.k_range[1] + 1),
        )
        skill.save_skill(out / f"model_{s}.json", model)
        skill.save_report(out / f"train_report_{s}.json", report)
        reports[s] = report.to_dict() | {"k": model.k}
        logger.info("subject %s: K=%d, %d EM iterations", s, model.k, report.iterations)
    return reports


def cmd_reproduce(cfg: PipelineConfig, out: Path, subjects, in_dir: Path) -> dict:
    """Reproduce stiffness at the training poses.

    ``rel_err`` compares against the demonstrated matrices before the ``a_cc`` scaling.
    """
    summary = {}
    for s in subjects:
        model = _read(skill.load_skill, in_dir / f"model_{s}.json")
        t, poses, ks = _load_pairs(in_dir, s)
        rep = skill.reproduce_many(model, poses)
        err = np.linalg.norm(rep / model.a_cc - ks, axis=(1, 2)) / np.linalg.norm(ks, axis=(1, 2))
        upper = rep[:, [0, 0, 0, 1, 1, 2], [0, 1, 2, 1, 2, 2]]
        _write_rows(out / f"reproduced_{s}.csv", REPRODUCED_COLUMNS, np.column_stack([t, poses, upper, err]))
        summary[s] = {"max_rel_err": float(err.max()), "mean_rel_err": float(err.mean())}
    return summary


def parse_stiffness_spec(text: str, cfg: PipelineConfig):
    """``constant:<ky>``, ``constant:<kx>,<ky>,<kz>`` or ``model:<path>``."""
    kind, _, value = text.partition(":")
    if kind == "constant":
        try:
            vals = [float(v) for v in value.split(",")]
        except ValueError:
            raise ConfigError(f"bad constant stiffness {text!r}") from None
        if len(vals) == 1:
            vals = [cfg.sim.k_x, vals[0], cfg.sim.k_z]
        if len(vals) != 3 or min(vals) < 0:
            raise ConfigError(f"constant stiffness needs 1 or 3 non-negative values, got {text!r}")
        return ("constant", vals)
    if kind == "model" and value:
        return ("model", value)
    raise ConfigError(f"stiffness must be constant:<k> or model:<path>, got {text!r}")


def build_sources(specs, cfg: PipelineConfig):
    """Stiffness sources for A and B; one spec is shared, two are taken in order."""
    if not specs:
        specs = [("constant", [cfg.sim.k_x, cfg.sim.k_y, cfg.sim.k_z])]
    if len(specs) > 2:
        raise ConfigError("at most two --stiffness values (A then B)")
    specs = list(specs) * (2 if len(specs) == 1 else 1)
    half = 0.5 * cfg.sim.rest_length
    sources = []
    for (kind, value), center, toward in zip(specs, (-half, half), (1.0, -1.0)):
        if kind == "constant":
            sources.append(sim.ConstantStiffness(value))
        else:
            model = _read(skill.load_skill, value)
            sources.append(sim.skill_source(model, cfg.planner, center, toward, cfg.sim.k_x, cfg.sim.k_z))
    return sources


def sim_configs(cfg: PipelineConfig, sources):
    s = cfg.sim
    eps = [sim.EndpointConfig(s.mass, s.damping_ratio, src, s.f_ff, (s.k_min, s.k_max)) for src in sources]
    coupling = sim.SawCouplingConfig(
        s.k_couple, s.c_couple, s.rest_length, s.mu, s.k_wood, s.c_wood, s.wood_top_z, s.v_eps,
        s.cut_rate, s.cut_threshold, s.binding,
    )
    run = sim.SimConfig(s.dt, s.duration_s, s.error_bound_m, s.k_floor, s.phase_offset_s)
    return eps, coupling, run


def cmd_simulate(cfg: PipelineConfig, out: Path, specs) -> dict:
    eps, coupling, run = sim_configs(cfg, build_sources(specs, cfg))
    try:
        log = sim.run_sawing(eps[0], eps[1], coupling, cfg.planner, run)
    except CdsError as exc:
        if getattr(exc, "log", None) is not None and len(exc.log):
            sim.write_log_csv(out / "simlog.csv", exc.log)
        raise
    sim.write_log_csv(out / "simlog.csv", log)
    m = sim.metrics(log)
    _write_json(out / "metrics.json", m)
    return m


def cmd_metrics(out: Path, log_path: Path) -> dict:
    log = _read(sim.read_log_csv, log_path)
    m = sim.metrics(log)
    _write_json(out / "metrics.json", m)
    return m


def cmd_all(cfg: PipelineConfig, out: Path, subjects, k_components=None) -> dict:
    cmd_synth(cfg, out)
    cmd_ingest(cfg, out, subjects)
    cmd_extract(cfg, out, subjects, out)
    cmd_train(cfg, out, subjects, out, k_components)
    cmd_reproduce(cfg, out, subjects, out)
    if len(subjects) != 2:
        raise ConfigError("the sawing simulation needs exactly two subjects")
    specs = [("model", str(out / f"model_{s}.json")) for s in subjects]
    cmd_simulate(cfg, out, specs)
    return cmd_metrics(out, out / "simlog.csv")


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or YAML pipeline config")
    common.add_argument("--seed", type=int, help="top-level seed (overrides the config)")
    common.add_argument("--out-dir", default=".", help="directory for outputs (default: .)")
    common.add_argument("--in-dir", help="directory holding the previous stage's files (default: --out-dir)")
    common.add_argument("--subject", action="append", help="subject id; repeatable (default: config subjects)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="cdsskill", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("config", parents=[common], help="print the effective configuration")
    sub.add_parser("synth", parents=[common], help="generate a synthetic two-person skeleton stream")
    p = sub.add_parser("ingest", parents=[common], help="skeleton JSON -> arm trajectory CSVs")
    p.add_argument("--skeleton", help="skeleton JSON (default: paths.skeleton or <in-dir>/skeleton.json)")
    p.add_argument("--depth-dir", help="directory of per-frame depth maps named NNNNNN.depth")
    sub.add_parser("extract", parents=[common], help="arm CSVs -> stiffness and pose CSVs")
    for name, text in (("train", "fit the pose -> stiffness mixture"), ("all", "run every stage on synthetic data")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--k-components", type=int, help="mixture size (overrides gmm.k_components)")
    sub.add_parser("reproduce", parents=[common], help="reproduce stiffness at the training poses")
    p = sub.add_parser("simulate", parents=[common], help="run the two-endpoint sawing simulation")
    p.add_argument("--stiffness", action="append", type=str,
                   help="constant:<k> | constant:<kx>,<ky>,<kz> | model:<path>; give twice for A then B")
    p = sub.add_parser("metrics", parents=[common], help="summarise a simulation log")
    p.add_argument("--log", help="simulation log CSV (default: <in-dir>/simlog.csv)")
    return parser


def run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        cfg = replace(cfg, seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    in_dir = Path(args.in_dir) if args.in_dir else out
    subjects = _subjects(args, cfg)
    k_components = getattr(args, "k_components", None)
    if k_components is not None and k_components < 1:
        raise ConfigError("--k-components must be >= 1")

    cmd = args.command
    if cmd == "config":
        print(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
    elif cmd == "synth":
        cmd_synth(cfg, out)
    elif cmd == "ingest":
        skeleton = args.skeleton or (None if cfg.paths.skeleton else in_dir / "skeleton.json")
        cmd_ingest(cfg, out, subjects, skeleton, args.depth_dir)
    elif cmd == "extract":
        cmd_extract(cfg, out, subjects, in_dir)
    elif cmd == "train":
        cmd_train(cfg, out, subjects, in_dir, k_components)
    elif cmd == "reproduce":
        for s, r in cmd_reproduce(cfg, out, subjects, in_dir).items():
            print(f"{s}: max relative error {r['max_rel_err']:.4f}, mean {r['mean_rel_err']:.4f}")
    elif cmd == "simulate":
        specs = [parse_stiffness_spec(s, cfg) for s in (args.stiffness or [])]
        cmd_simulate(cfg, out, specs)
    elif cmd == "metrics":
        cmd_metrics(out, Path(args.log) if args.log else in_dir / "simlog.csv")
    elif cmd == "all":
        cmd_all(cfg, out, subjects, k_components)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except CdsError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
