"""Command-line entry points for reproducible experiments.

Each subcommand reads one TOML config (the single source of truth),
writes CSV outputs plus a JSON summary that echoes the fully resolved
config and its content hash, and is deterministic given the config.
Exit codes: 0 success, 2 config validation failure, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import aircraft as ac
from . import dp_threshold as dp
from . import io as qio
from . import montecarlo as mc
from .config import MISSING, SectionReader, apply_overrides, load_config, read_patch
from .errors import ConfigError, QuickdetError
from .hmm_filter import run_filter
from .occupation_filter import run_occupation
from .signal_core import (
    Belief,
    GaussianPairObservation,
    TransitionModel2,
    simulate_trajectory,
    stationary_distribution,
)
from .stopping import (
    RESET_POLICIES,
    RESET_TO_INITIAL,
    StoppingRule,
    first_alarm,
    run_with_resets,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

SEED_FIELD = {
    "simulate": "run.seed",
    "detect": "run.seed",
    "montecarlo": "montecarlo.seed_base",
    "soc": "montecarlo.seed_base",
    "occstudy": "occstudy.seed_base",
    "dp": None,
    "aircraft": "scenario.seed",
}


def _sanitize(value):
    """Make a summary payload strict-JSON safe (drop NaN/inf to null)."""
    if isinstance(value, dict):
        return {k: _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _model(config):
    model_cfg = SectionReader(config, "model")
    rho = model_cfg.number("rho", lo=0.0, hi=1.0)
    a = model_cfg.number("a", lo=0.0, hi=1.0)
    return TransitionModel2(rho, a)


def _model_obs(config):
    model = _model(config)
    obs_cfg = SectionReader(config, "observation")
    mu1 = obs_cfg.number("mu1")
    mu2 = obs_cfg.number("mu2")
    sigma2 = obs_cfg.number("sigma2", lo=0.0)
    if sigma2 <= 0.0:
        raise ConfigError("observation.sigma2", "must be > 0")
    return model, GaussianPairObservation(mu1, mu2, sigma2)


def _initial_belief(reader, key, model):
    value = reader.pair(key, default="stationary")
    if value == "stationary":
        try:
            return stationary_distribution(model)
        except ValueError as err:
            raise ConfigError(f"{reader.section}.{key}", str(err))
    if isinstance(value, str):
        raise ConfigError(
            f"{reader.section}.{key}", 'expected "stationary" or a pair [p1, p2]'
        )
    try:
        return Belief(np.asarray(value))
    except ValueError as err:
        raise ConfigError(f"{reader.section}.{key}", str(err))


def _rule(config, default_threshold=MISSING):
    reader = SectionReader(config, "rule", required=default_threshold is MISSING)
    threshold = reader.number("threshold", default=default_threshold, lo=0.0, hi=1.0)
    variant = reader.string("variant", default=mc.RULE_INTERMITTENT, choices=mc.RULE_VARIANTS)
    reset_policy = reader.string(
        "reset_policy", default=RESET_TO_INITIAL, choices=RESET_POLICIES
    )
    return StoppingRule(threshold=threshold), variant, reset_policy


def _summary(command, config, outputs, results):
    return _sanitize(
        {
            "command": command,
            "config": config,
            "config_hash": qio.config_content_hash(_sanitize(config)),
            "outputs": sorted(outputs),
            "results": results,
        }
    )


def cmd_simulate(config, out_dir, threads):
    model, obs = _model_obs(config)
    run_cfg = SectionReader(config, "run")
    length = run_cfg.integer("length", lo=1)
    seed = run_cfg.integer("seed", default=0)
    initial = _initial_belief(run_cfg, "initial_belief", model)
    trajectory = simulate_trajectory(model, obs, initial, length, seed)
    qio.write_trajectory_csv(out_dir / "trajectory.csv", trajectory)
    results = {
        "length": length,
        "seed": seed,
        "steps_anomalous": int(np.count_nonzero(trajectory.states == 2)),
    }
    return ["trajectory.csv"], results


def cmd_detect(config, out_dir, threads):
    model, obs = _model_obs(config)
    run_cfg = SectionReader(config, "run")
    length = run_cfg.integer("length", lo=1)
    seed = run_cfg.integer("seed", default=0)
    initial = _initial_belief(run_cfg, "initial_belief", model)
    rule, variant, reset_policy = _rule(config)
    # the shiryaev variant filters with an absorbing anomaly while the
    # data keep the true intermittent dynamics
    filter_model = (
        model
        if variant == mc.RULE_INTERMITTENT
        else TransitionModel2(model.rho, 1.0)
    )

    trajectory = simulate_trajectory(model, obs, initial, length, seed)
    steps = run_filter(trajectory.observations, filter_model, obs, initial)
    occ = {
        t: run_occupation(trajectory.observations, filter_model, obs, initial, t)
        for t in (1, 2)
    }
    alarms = run_with_resets(
        trajectory.observations,
        trajectory,
        filter_model,
        obs,
        rule,
        reset_policy=reset_policy,
        initial=initial,
    )
    first = first_alarm(steps, rule, trajectory, initial=initial, occupation=occ[2])

    qio.write_trajectory_csv(out_dir / "trajectory.csv", trajectory)
    qio.write_filter_trace_csv(out_dir / "filter_trace.csv", steps)
    qio.write_occupation_csv(out_dir / "occupation.csv", occ)
    qio.write_alarms_csv(out_dir / "alarms.csv", alarms)
    results = {
        "first_alarm_time": None if first is None else first.alarm_time,
        "first_alarm_false": None if first is None else first.is_false_alarm,
        "n_alarms_with_resets": len(alarms),
        "n_false_alarms_with_resets": sum(r.is_false_alarm for r in alarms),
    }
    outputs = ["trajectory.csv", "filter_trace.csv", "occupation.csv", "alarms.csv"]
    return outputs, results


def _experiment_spec(config, section, model, need_variant):
    reader = SectionReader(config, section)
    obs_cfg = SectionReader(config, "observation")
    kwargs = dict(
        rho=model.rho,
        a=model.a,
        mu1=obs_cfg.number("mu1"),
        mu2=obs_cfg.number("mu2"),
        trials=reader.integer("trials", lo=1),
        horizon=reader.integer("horizon", default=2000, lo=1),
        seed_base=reader.integer("seed_base", default=0),
        reset_policy=reader.string(
            "reset_policy", default=RESET_TO_INITIAL, choices=RESET_POLICIES
        ),
    )
    initial = reader.pair("initial_belief", default="stationary")
    kwargs["initial_belief"] = initial
    if section == "occstudy":
        kwargs["sigma2"] = reader.number_list("sigma2_values", lo=0.0)
        kwargs["thresholds"] = (reader.number("threshold", lo=0.0, hi=1.0),)
    else:
        kwargs["sigma2"] = (obs_cfg.number("sigma2", lo=0.0),)
        kwargs["thresholds"] = reader.number_list(
            "thresholds", default=list(mc.DEFAULT_THRESHOLDS), lo=0.0, hi=1.0
        )
    if need_variant:
        kwargs["rule_variant"] = reader.string(
            "rule_variant", default=mc.RULE_INTERMITTENT, choices=mc.RULE_VARIANTS
        )
    try:
        return mc.ExperimentSpec(**kwargs)
    except ValueError as err:
        raise ConfigError(section, str(err))


def cmd_montecarlo(config, out_dir, threads):
    model, _ = _model_obs(config)
    spec = _experiment_spec(config, "montecarlo", model, need_variant=False)
    results = mc.compare_variants(spec, threads=threads)
    qio.write_sweep_csv(
        out_dir / "sweep.csv",
        [results[mc.RULE_INTERMITTENT], results[mc.RULE_SHIRYAEV]],
    )
    payload = {
        "trials": spec.trials,
        "horizon": spec.horizon,
        "thresholds": list(spec.thresholds),
        "rows_per_variant": len(results[mc.RULE_INTERMITTENT].rows),
    }
    return ["sweep.csv"], payload


def cmd_soc(config, out_dir, threads):
    model, _ = _model_obs(config)
    spec = _experiment_spec(config, "montecarlo", model, need_variant=True)
    if len(spec.thresholds) < 2:
        raise ConfigError("montecarlo.thresholds", "soc needs >= 2 thresholds")
    result = mc.soc_sweep(spec, threads=threads)
    qio.write_sweep_csv(out_dir / "soc.csv", result)
    payload = {
        "rule_variant": spec.rule_variant,
        "thresholds": list(spec.thresholds),
        "n_rows": len(result.rows),
    }
    return ["soc.csv"], payload


def cmd_occstudy(config, out_dir, threads):
    model = _model(config)
    spec = _experiment_spec(config, "occstudy", model, need_variant=False)
    result = mc.occupation_study(spec, threads=threads)
    qio.write_sweep_csv(out_dir / "occupation_study.csv", result)
    payload = {
        "sigma2_values": list(spec.sigma2),
        "threshold": spec.thresholds[0],
        "rows": [
            {
                "sigma2": row.sigma2,
                "mean_delay": row.mean_delay,
                "mean_occupation_estimate": row.mean_occupation_estimate,
            }
            for row in result.rows
        ],
    }
    return ["occupation_study.csv"], payload


def cmd_dp(config, out_dir, threads):
    model, obs = _model_obs(config)
    reader = SectionReader(config, "dp")
    c = reader.number("c", lo=0.0)
    resolution = reader.integer("grid_resolution", default=dp.DEFAULT_GRID_RESOLUTION, lo=3)
    nodes = reader.integer(
        "quadrature_nodes", default=dp.DEFAULT_NODES_PER_COMPONENT, lo=2
    )
    tol = reader.number("tol", default=dp.DEFAULT_TOL)
    if tol <= 0.0:
        raise ConfigError("dp.tol", "must be > 0")
    max_iter = reader.integer("max_iter", default=dp.DEFAULT_MAX_ITER, lo=1)

    grid = dp.BeliefGrid.uniform(resolution)
    quadrature = dp.GaussHermiteQuadrature.build(obs, nodes)
    vf = dp.solve(grid, model, obs, c, tol=tol, max_iter=max_iter, quadrature=quadrature)
    h_s = dp.extract_stopping_set(vf, grid)
    qio.write_value_function_csv(out_dir / "value_function.csv", grid, vf)
    payload = {
        "h_s": h_s,
        "iterations": vf.iterations,
        "sup_norm_residual": vf.sup_norm_residual,
        "penalty_c": c,
        "grid_resolution": resolution,
    }
    return ["value_function.csv"], payload


def cmd_aircraft(config, out_dir, threads):
    grid_cfg = SectionReader(config, "grid")
    width = grid_cfg.integer("width", lo=1)
    height = grid_cfg.integer("height", lo=1)
    nva_total = grid_cfg.number("nva_to_image_total", default=0.1, lo=0.0, hi=1.0)
    patch = read_patch(config, "grid.patch")
    try:
        gm = ac.GridModel(
            width=width,
            height=height,
            patch=patch or dict(ac.DEFAULT_PATCH),
            nva_to_image_total=nva_total,
        )
    except QuickdetError as err:
        raise ConfigError("grid.patch", str(err))

    scenario = SectionReader(config, "scenario")
    frames = scenario.integer("frames", lo=1)
    emergence = scenario.integer("emergence_frame", default=-1)
    start_pixel = scenario.int_pair("start_pixel", default=None)
    background_mean = scenario.number("background_mean", default=0.05)
    target_offset = scenario.number("target_offset", default=25.0, lo=0.0)
    seed = scenario.integer("seed", default=0)
    if background_mean <= 0.0:
        raise ConfigError("scenario.background_mean", "must be > 0")
    rule_cfg = SectionReader(config, "rule", required=False)
    h_c = rule_cfg.number("threshold", default=0.99, lo=0.0, hi=1.0)

    schedule = ac.EmergenceSchedule(
        frames=frames,
        emergence_frame=None if emergence < 0 else emergence,
        start_pixel=start_pixel,
    )
    try:
        schedule.validate_against(gm)
    except QuickdetError as err:
        raise ConfigError("scenario", str(err))

    images, track = ac.generate_synthetic_sequence(
        gm,
        ac.OffsetTarget(target_offset),
        ac.ExponentialBackground(background_mean),
        schedule,
        seed,
    )
    detection = ac.detect_emergence(images, gm, h_c=h_c)

    qio.write_raster(out_dir / "frames.raster", images)
    qio.write_track_csv(out_dir / "track.csv", track, gm)
    qio.write_zeta_csv(out_dir / "zeta.csv", detection)

    alarm = detection.alarm_time
    truth_visible = track != gm.nva_state
    false_alarm = alarm is not None and not truth_visible[alarm]
    payload = {
        "alarm_time": alarm,
        "emergence_frame": schedule.emergence_frame,
        "is_false_alarm": false_alarm,
        "detection_delay": (
            alarm - schedule.emergence_frame
            if alarm is not None
            and schedule.emergence_frame is not None
            and alarm >= schedule.emergence_frame
            else None
        ),
        "zeta_final": float(detection.zeta[-1]),
    }
    return ["frames.raster", "track.csv", "zeta.csv"], payload


COMMANDS = {
    "simulate": cmd_simulate,
    "detect": cmd_detect,
    "montecarlo": cmd_montecarlo,
    "soc": cmd_soc,
    "occstudy": cmd_occstudy,
    "dp": cmd_dp,
    "aircraft": cmd_aircraft,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quickdet",
        description="Sequential detection of intermittent anomalies",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="TOML config file")
        p.add_argument("--output-dir", default=".", help="directory for outputs")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker thread cap")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override a scalar config field (repeatable)",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        overrides = {}
        for item in args.overrides:
            if "=" not in item:
                raise ConfigError(item, "--set expects SECTION.KEY=VALUE")
            key, _, value = item.partition("=")
            overrides[key.strip()] = value.strip()
        if args.seed is not None:
            seed_field = SEED_FIELD[args.command]
            if seed_field is not None:
                overrides[seed_field] = str(args.seed)
        config = apply_overrides(config, overrides)

        out_dir = Path(args.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        command = COMMANDS[args.command]
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        outputs, results = command(config, out_dir, max(1, args.threads))
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except QuickdetError as err:
        print(f"runtime error: {err}", file=sys.stderr)
        return EXIT_RUNTIME

    summary = _summary(args.command, config, outputs + ["summary.json"], results)
    qio.write_json_summary(out_dir / "summary.json", summary)
    for line in _sanitize(results).items():
        print(f"{line[0]}: {line[1]}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
