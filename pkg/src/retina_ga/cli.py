"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

Run directory layout::

    config.yaml                 resolved configuration
    stimuli.csv                 frozen train/test stimuli
    trial_NNN/generations.csv   one row per generation
    trial_NNN/checkpoint.json   population + generation counter
    trial_NNN/elites.json       final elites with their reports
    summary.json                survival gains and one-sided t-test
    analysis/                   written by ``analyze``
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .analysis import survival_gain_test, tuning_curves, write_tuning_curves, QUARTILE_METHOD
from .config import ConfigError, PRESETS, RunConfig, config_from_dict, header_line, load_config
from .dynamics import simulate, write_trace
from .evolution import (Evaluator, evolve, load_checkpoint, log_columns, log_row, read_log,
                        save_checkpoint, stimulus_seed)
from .genome import genome_from_dict, genome_to_dict
from .phenotype import express
from .stimuli import StimulusSet, make_stimulus_set, read_stimuli, write_stimuli

log = logging.getLogger("retina_ga")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _header(cfg: RunConfig, **extra) -> dict[str, Any]:
    return {"tool": "retina-ga", "version": __version__, "config_hash": cfg.config_hash(), **extra}


def _trial_dir(run_dir: Path, trial: int) -> Path:
    return run_dir / f"trial_{trial:03d}"


def build_stimuli(cfg: RunConfig) -> StimulusSet:
    return make_stimulus_set(cfg.stimuli, stimulus_seed(cfg.ga.rng_seed))


# ---------------------------------------------------------------------------
# Trial execution


def run_trial(cfg: RunConfig, run_dir: Path, stimuli: StimulusSet, trial: int, *,
              start=None, stop_after: int | None = None, trace: bool = False) -> bool:
    """Run (or continue) one trial; returns ``True`` once the trial is complete."""
    tdir = _trial_dir(run_dir, trial)
    tdir.mkdir(parents=True, exist_ok=True)
    log_path = tdir / "generations.csv"
    ckpt_path = tdir / "checkpoint.json"
    head = header_line(cfg) + f" trial={trial} quartiles={QUARTILE_METHOD}"
    if start is None:
        with open(log_path, "w", newline="") as fh:
            fh.write(head + "\n")
            csv.writer(fh).writerow(log_columns(cfg.ga.elite_count))
    else:
        header, rows = read_log(log_path)
        kept = [rows[0]] + [r for r in rows[1:] if int(r[0]) < start[0]]
        with open(log_path, "w", newline="") as fh:
            fh.write("\n".join(header) + "\n")
            csv.writer(fh).writerows(kept)

    done = 0
    final_record = None
    with Evaluator(stimuli, cfg.sim, cfg.ga, weight_scale=cfg.run.weight_scale,
                   perceptron=cfg.perceptron, workers=cfg.run.workers) as evaluator:
        for record, generation, population in evolve(cfg.ga, evaluator, limits=cfg.limits,
                                                     trial=trial, start=start):
            with open(log_path, "a", newline="") as fh:
                csv.writer(fh).writerow(log_row(record))
            done += 1
            finished = generation >= cfg.ga.generations
            stopping = stop_after is not None and done >= stop_after and not finished
            if finished or stopping or generation % cfg.run.checkpoint_every == 0:
                save_checkpoint(ckpt_path, header=_header(cfg), config=cfg.to_dict(),
                                trial=trial, generation=generation, population=population)
            log.info("trial %d generation %d: best %.4f, min elite %.4f",
                     trial, record.generation, record.elite_fitness[0], record.min_elite)
            final_record = record
            if stopping:
                return False
    if final_record is None:
        return True
    elites = [{"rank": rank, "fitness": final_record.fitness[i],
               "r2": final_record.r2[i], "shape_gain": final_record.shape_gain[i],
               "genome": genome_to_dict(final_record.elite_genomes[rank - 1])}
              for rank, i in enumerate(final_record.elite_indices, start=1)]
    (tdir / "elites.json").write_text(json.dumps(
        {"header": _header(cfg, trial=trial), "generation": final_record.generation,
         "elites": elites}, indent=1))
    if trace:
        best = express(final_record.elite_genomes[0], cfg.run.weight_scale)
        _, tr = simulate(best, stimuli.test.values[0], cfg.sim, record=True)
        write_trace(tdir / "trace_best_elite.csv", tr, cfg.sim,
                    header=head + " input=test[0]")
    return True


def _elite_minima(log_path: Path) -> tuple[float, float, int]:
    _, rows = read_log(log_path)
    cols = rows[0]
    elite_cols = [k for k, c in enumerate(cols) if c.startswith("elite_")]
    body = rows[1:]
    if not body:
        raise ValueError(f"{log_path}: no generation rows")
    first = min(float(body[0][k]) for k in elite_cols)
    last = min(float(body[-1][k]) for k in elite_cols)
    return first, last, len(body)


def write_summary(cfg: RunConfig, run_dir: Path) -> dict[str, Any] | None:
    """Write ``summary.json`` once every trial has finished; returns its content."""
    gains = []
    for trial in range(cfg.run.trials):
        tdir = _trial_dir(run_dir, trial)
        if not (tdir / "elites.json").exists():
            return None
        first, last, _ = _elite_minima(tdir / "generations.csv")
        gains.append(last - first)
    summary: dict[str, Any] = {"header": _header(cfg), "survival_gains": gains,
                               "mean_gain": float(np.mean(gains))}
    summary["p_value"] = survival_gain_test(gains)[1] if len(gains) >= 2 else None
    summary["test"] = "one-sample one-sided t-test, alternative: mean gain > 0"
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=1))
    return summary


# ---------------------------------------------------------------------------
# Commands


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config, args.preset)
    if args.seed is not None:
        cfg = cfg.with_overrides("ga", rng_seed=args.seed)
    if args.workers is not None:
        cfg = cfg.with_overrides("run", workers=args.workers)
    if getattr(args, "out", None) is not None:
        cfg = cfg.with_overrides("run", out=str(args.out))
    return cfg


def cmd_run(args) -> int:
    cfg = _resolve(args)
    run_dir = Path(cfg.run.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.yaml").write_text(cfg.dump())
    stimuli = build_stimuli(cfg)
    write_stimuli(run_dir / "stimuli.csv", stimuli, header=header_line(cfg))
    for trial in range(cfg.run.trials):
        if not run_trial(cfg, run_dir, stimuli, trial, stop_after=args.stop_after,
                         trace=args.trace):
            print(f"stopped trial {trial} early; resume from "
                  f"{_trial_dir(run_dir, trial) / 'checkpoint.json'}")
            return 0
    summary = write_summary(cfg, run_dir)
    if summary is not None:
        print(f"mean survival gain {summary['mean_gain']:.6g}, p = {summary['p_value']}")
    return 0


def cmd_resume(args) -> int:
    ckpt_path = Path(args.checkpoint)
    try:
        ckpt = load_checkpoint(ckpt_path)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = config_from_dict(ckpt["config"])
    except ConfigError as exc:
        print(f"error: checkpoint config invalid: {exc}", file=sys.stderr)
        return 2
    if cfg.config_hash() != ckpt["header"]["config_hash"]:
        print("error: checkpoint config hash does not match its configuration; refusing",
              file=sys.stderr)
        return 1
    run_dir = ckpt_path.resolve().parent.parent
    cfg_file = run_dir / "config.yaml"
    if cfg_file.exists():
        on_disk = load_config(cfg_file)
        if on_disk.config_hash() != cfg.config_hash():
            print(f"error: checkpoint config hash {cfg.config_hash()} differs from "
                  f"{cfg_file} ({on_disk.config_hash()}); refusing", file=sys.stderr)
            return 1
    if args.workers is not None:
        cfg = cfg.with_overrides("run", workers=args.workers)
    trial = ckpt["trial"]
    if ckpt["generation"] >= cfg.ga.generations:
        print(f"trial {trial} already finished at generation {ckpt['generation']}; nothing to do")
        return 0
    stim_file = run_dir / "stimuli.csv"
    stimuli = read_stimuli(stim_file) if stim_file.exists() else build_stimuli(cfg)
    start = (ckpt["generation"], ckpt["population"])
    if not run_trial(cfg, run_dir, stimuli, trial, start=start, stop_after=args.stop_after,
                     trace=args.trace):
        print(f"stopped trial {trial} early; resume from {ckpt_path}")
        return 0
    print(f"trial {trial} complete")
    # later trials of an interrupted run have not started, or were checkpointed on their own
    for later in range(trial + 1, cfg.run.trials):
        tdir = _trial_dir(run_dir, later)
        if (tdir / "elites.json").exists():
            continue
        start = None
        if (tdir / "checkpoint.json").exists():
            later_ckpt = load_checkpoint(tdir / "checkpoint.json")
            start = (later_ckpt["generation"], later_ckpt["population"])
        if not run_trial(cfg, run_dir, stimuli, later, start=start, stop_after=args.stop_after,
                         trace=args.trace):
            print(f"stopped trial {later} early; resume from {tdir / 'checkpoint.json'}")
            return 0
        print(f"trial {later} complete")
    summary = write_summary(cfg, run_dir)
    if summary is not None:
        print(f"mean survival gain {summary['mean_gain']:.6g}, p = {summary['p_value']}")
    return 0


def cmd_analyze(args) -> int:
    run_dir = Path(args.run_dir)
    cfg_file = run_dir / "config.yaml"
    if not cfg_file.exists():
        print(f"error: missing {cfg_file}", file=sys.stderr)
        return 2
    cfg = load_config(cfg_file)
    out_dir = run_dir / "analysis"
    gains = []
    trial_files = []
    for trial in range(cfg.run.trials):
        tdir = _trial_dir(run_dir, trial)
        for name in ("generations.csv", "elites.json"):
            if not (tdir / name).exists():
                print(f"error: missing {tdir / name}", file=sys.stderr)
                return 2
        trial_files.append(tdir)
    out_dir.mkdir(exist_ok=True)
    head = header_line(cfg)
    for trial, tdir in enumerate(trial_files):
        elites = json.loads((tdir / "elites.json").read_text())["elites"]
        curves = [tuning_curves(express(genome_from_dict(e["genome"]), cfg.run.weight_scale),
                                cfg.sim, cfg.run.probe_amplitude) for e in elites]
        write_tuning_curves(out_dir / f"tuning_trial_{trial:03d}.csv", curves,
                            header=head + f" trial={trial} probe=one-hot "
                                          f"amplitude={cfg.run.probe_amplitude!r}")
        header, rows = read_log(tdir / "generations.csv")
        cols = rows[0]
        keep = [k for k, c in enumerate(cols)
                if c in ("generation", "median", "q1", "q3", "iqr") or c.startswith("elite_")]
        with open(out_dir / f"population_trial_{trial:03d}.csv", "w", newline="") as fh:
            fh.write(head + f" trial={trial} quartiles={QUARTILE_METHOD}\n")
            writer = csv.writer(fh)
            for row in rows:
                writer.writerow([row[k] for k in keep])
        first, last, _ = _elite_minima(tdir / "generations.csv")
        gains.append(last - first)
    result: dict[str, Any] = {"header": _header(cfg), "survival_gains": gains,
                              "mean_gain": float(np.mean(gains))}
    if len(gains) >= 2:
        result["p_value"] = survival_gain_test(gains)[1]
    else:
        result["p_value"] = None
    (out_dir / "survival.json").write_text(json.dumps(result, indent=1))
    print(f"analysis written to {out_dir}")
    return 0


def cmd_export_stimuli(args) -> int:
    cfg = _resolve(args)
    write_stimuli(args.file, build_stimuli(cfg), header=header_line(cfg))
    return 0


def cmd_validate_config(args) -> int:
    cfg = _resolve(args)
    sys.stdout.write(cfg.dump())
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="retina-ga", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def config_flags(p):
        p.add_argument("--config", type=Path, default=None, help="YAML configuration file")
        p.add_argument("--preset", choices=sorted(PRESETS), default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("run", help="run evolution trials")
    config_flags(p)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--trace", action="store_true", help="dump dynamics of each best elite")
    p.add_argument("--stop-after", type=int, default=None, metavar="N",
                   help="checkpoint and stop after N generations")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("resume", help="continue a trial from its checkpoint")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--trace", action="store_true")
    p.add_argument("--stop-after", type=int, default=None, metavar="N")
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("analyze", help="tuning curves and statistics for a finished run")
    p.add_argument("run_dir", type=Path)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("export-stimuli", help="write the stimulus set of a config")
    config_flags(p)
    p.add_argument("file", type=Path)
    p.set_defaults(func=cmd_export_stimuli)

    p = sub.add_parser("validate-config", help="print the resolved configuration")
    config_flags(p)
    p.set_defaults(func=cmd_validate_config)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
