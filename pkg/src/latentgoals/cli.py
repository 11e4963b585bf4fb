"""Command line entry points.

Every command exits 0 on success; on failure it prints a single
machine-parsable line `error:<category>: <message>` to stderr and exits
with a category-specific nonzero code.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__, lga, recommender, reward_models
from .errors import (ConfigError, DomainError, FormatError, LgaError,
                     MetricUndefinedError, TrainingDivergedError)
from .harness import (ExperimentConfig, MetricSeries, run_arm_experiment,
                      run_recommender_experiment, write_manifest)

EXIT_CODES = {
    ConfigError: 2,
    DomainError: 3,
    FormatError: 4,
    TrainingDivergedError: 5,
    MetricUndefinedError: 6,
}


def _build_parser():
    parser = argparse.ArgumentParser(prog="lga", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lga {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--config", type=str, default=None,
                       help="key=value config file")
        p.add_argument("--out", type=str, default=None, help="output directory")

    p = sub.add_parser("fit-quadratic", help="fit a quadratic reward model on an event log")
    p.add_argument("--log", required=True, help="event log file (tab-separated)")
    add_common(p)

    p = sub.add_parser("decompose", help="latent goal analysis of a fitted model")
    p.add_argument("--model", required=True, help="serialized reward model")
    p.add_argument("--components", type=int, required=True, help="latent dimension")
    add_common(p)

    p = sub.add_parser("rec-synth", help="generate a synthetic click log")
    add_common(p)

    p = sub.add_parser("rec-eval", help="run the recommendation sweep")
    p.add_argument("--log", default=None,
                   help="event log file; a synthetic log is generated if omitted")
    add_common(p)

    p = sub.add_parser("arm-run", help="run the reaching experiment")
    add_common(p)

    p = sub.add_parser("arm-metrics", help="summarize trial metric CSVs")
    p.add_argument("--input", nargs="+", required=True, help="trial CSV files")
    add_common(p)
    return parser


def _load_config(args, experiment=None):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if experiment is not None:
        overrides["experiment"] = experiment
    if args.config:
        return ExperimentConfig.from_file(args.config, overrides=overrides)
    return ExperimentConfig(**overrides)


def _out_dir(config):
    if not config.out_dir:
        raise ConfigError("an output directory is required (--out or out_dir)")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_fit_quadratic(args):
    config = _load_config(args, experiment="recommender")
    out = _out_dir(config)
    log = recommender.read_event_log(args.log)
    batch = recommender.log_features(log)
    model = reward_models.fit_quadratic(batch, config.train_config(),
                                        bias_index=log.context_dims)
    reward_models.save_model(out / "model.json", model)
    print(f"wrote {out / 'model.json'}")


def _cmd_decompose(args):
    config = _load_config(args)
    out = _out_dir(config)
    model = reward_models.load_model(args.model)
    dec = lga.decompose(model, args.components)
    lga.save_decomposition(out / "decomposition.json", dec)
    print(f"wrote {out / 'decomposition.json'} "
          f"(residual cost {dec.projection.residual_cost!r})")


def _cmd_rec_synth(args):
    config = _load_config(args, experiment="recommender")
    out = _out_dir(config)
    log, planted = recommender.generate_synthetic_log(
        config.synthetic_spec(config.seed))
    recommender.write_event_log(out / "events.tsv", log)
    _write_planted(out / "planted.json", planted)
    write_manifest(out / "manifest.json", config, [config.seed])
    print(f"wrote {out / 'events.tsv'} ({len(log)} events, "
          f"ctr {float(np.mean(log.rewards)):.4f})")


def _write_planted(path, planted):
    from . import container
    container.save(path, "planted-model", 1, {
        "context_map": container.matrix_to_json(planted.context_map),
        "article_points": container.matrix_to_json(planted.article_points),
        "popularity": container.matrix_to_json(planted.popularity),
        "bias": planted.bias,
    })


def _cmd_rec_eval(args):
    config = _load_config(args, experiment="recommender")
    out = _out_dir(config)
    if args.log:
        log = recommender.read_event_log(args.log)
        rows = []
        swept = recommender.sweep_pipelines(
            log, config.methods(), config.components(),
            config=None if config.rec_auto_condition else config.train_config(),
            train_fraction=config.rec_train_fraction,
            replay_on_train=config.rec_replay_on_train,
            epochs=config.rec_epochs_main)
        for method, n, nctr in swept:
            rows.append((method, n, nctr, config.seed))
        from .harness import write_recommender_csv
        write_recommender_csv(out / "recommender.csv", rows)
        write_manifest(out / "manifest.json", config, [config.seed])
    else:
        rows = run_recommender_experiment(config, out_dir=out)
    print(f"wrote {out / 'recommender.csv'} ({len(rows)} rows)")


def _cmd_arm_run(args):
    config = _load_config(args, experiment="arm")
    out = _out_dir(config)
    series = run_arm_experiment(config, out_dir=out)
    final = series[0].rows[-1] if series and series[0].rows else None
    print(f"wrote {config.trials} trial CSVs to {out}"
          + (f"; trial 0 final hand contact rate {final[5]:.3f}" if final else ""))


def _cmd_arm_metrics(args):
    config = _load_config(args, experiment="arm")
    out = _out_dir(config)
    lines = ["file,epochs,final_hand_contact_rate,final_arm_contact_rate,"
             "final_goal_nrmse_2d,final_self_nrmse_2d,mean_reward_last_epoch"]
    for path in args.input:
        series = MetricSeries.read_csv(path)
        if not series.rows:
            raise DomainError(f"{path}: empty metric series")
        last = series.rows[-1]
        lines.append(f"{Path(path).name},{last[0]},{last[5]!r},{last[6]!r},"
                     f"{last[3]!r},{last[1]!r},{last[7]!r}")
    text = "\n".join(lines) + "\n"
    (out / "summary.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)


COMMANDS = {
    "fit-quadratic": _cmd_fit_quadratic,
    "decompose": _cmd_decompose,
    "rec-synth": _cmd_rec_synth,
    "rec-eval": _cmd_rec_eval,
    "arm-run": _cmd_arm_run,
    "arm-metrics": _cmd_arm_metrics,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except LgaError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return EXIT_CODES.get(type(exc), 3)
    except OSError as exc:
        print(f"error:io-error: {exc}", file=sys.stderr)
        return 7
    return 0


if __name__ == "__main__":
    sys.exit(main())
