"""Experiment orchestration: configs, the closed-loop reaching experiment,
the recommendation sweep, metric series and reproducibility manifests."""

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, arm, metrics
from .babbling import GoalBabbler
from .errors import ConfigError
from .online import OnlineLgaState
from .recommender import (METHODS, SyntheticSpec, eval_nctr,
                          generate_synthetic_log, sweep_pipelines,
                          uniform_random_policy)
from .reward_models import TrainConfig
from .saliency import SaliencyConfig, reward_from_image


@dataclass
class ExperimentConfig:
    """Flat experiment settings; every field can be set from a key=value
    config file.  Defaults follow the published experiment protocol."""

    experiment: str = "arm"
    seed: int = 0
    trials: int = 5
    samples: int = 1_000_000
    epoch_size: int = 1000
    consolidation_buffer: int = 10_000
    consolidation_passes: int = 10
    rate_detectors: float = 0.015
    rate_costs: float = 0.005
    decay: float = 0.05
    latent_dim: int = 2
    radius_goal: float = 2.0
    radius_self: float = 0.25
    radius_context_cost: float = 0.5
    radius_action_cost: float = 0.5
    gb_rate: float = 0.02
    gb_spacing: float = 0.15
    gb_noise: float = 0.15
    context_noise_std: float = 0.1
    metrics_noiseless: bool = False
    log_trajectory: bool = False
    out_dir: str = ""
    rec_articles: int = 49
    rec_context_dims: int = 116
    rec_rank: int = 2
    rec_pool_size: int = 20
    rec_events: int = 100_000
    rec_target_ctr: float = 0.04
    rec_density: float = 0.05
    rec_methods: str = "LGA,LGA-no-ea,BLR-SVD,PCA+QR,PCA+BLR"
    rec_components: str = "0,1,2,4,8"
    rec_epochs_main: int = 150
    rec_step_main: float = 0.05
    rec_epochs_finetune: int = 0
    rec_step_finetune: float = 0.005
    rec_whiten: bool = False
    rec_auto_condition: bool = True
    rec_informative_bits: int = 6
    rec_informative_density: float = 0.5
    rec_ring_radius: float = 1.0
    rec_goal_column_scale: float = 0.8
    rec_popularity_scale: float = 0.5
    rec_train_fraction: float = 0.8
    rec_replay_on_train: bool = False
    rec_include_random: bool = True

    def __post_init__(self):
        if self.experiment not in ("arm", "recommender"):
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.trials < 1 or self.samples < 0 or self.epoch_size < 1:
            raise ConfigError("trials, samples and epoch_size must be positive")
        for name in ("rate_detectors", "rate_costs", "gb_rate", "gb_spacing"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.decay < 1.0:
            raise ConfigError("decay must lie in [0, 1)")

    def methods(self):
        out = [m.strip() for m in self.rec_methods.split(",") if m.strip()]
        for m in out:
            if m not in METHODS:
                raise ConfigError(f"unknown recommender method {m!r}")
        return out

    def components(self):
        try:
            return [int(x) for x in self.rec_components.split(",") if x.strip()]
        except ValueError as exc:
            raise ConfigError(f"rec_components must be a comma list of ints: {exc}")

    def train_config(self):
        return TrainConfig(epochs_main=self.rec_epochs_main,
                           step_main=self.rec_step_main,
                           epochs_finetune=self.rec_epochs_finetune,
                           step_finetune=self.rec_step_finetune,
                           whiten_contexts=self.rec_whiten)

    def synthetic_spec(self, seed):
        return SyntheticSpec(num_articles=self.rec_articles,
                             context_dims=self.rec_context_dims,
                             latent_rank=self.rec_rank,
                             pool_size=self.rec_pool_size,
                             num_events=self.rec_events,
                             seed=seed,
                             context_density=self.rec_density,
                             informative_bits=self.rec_informative_bits,
                             informative_density=self.rec_informative_density,
                             article_ring_radius=self.rec_ring_radius,
                             goal_column_scale=self.rec_goal_column_scale,
                             popularity_scale=self.rec_popularity_scale,
                             target_ctr=self.rec_target_ctr)

    def to_file(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for f in dataclasses.fields(self):
                fh.write(f"{f.name} = {getattr(self, f.name)}\n")

    @classmethod
    def from_file(cls, path, overrides=None):
        fields = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, _, raw = line.partition("=")
                key = key.strip()
                raw = raw.strip()
                if key not in fields:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = _parse_value(fields[key].type, raw, path, lineno)
        if overrides:
            values.update(overrides)
        return cls(**values)


def _parse_value(ftype, raw, path, lineno):
    if ftype in ("bool", bool):
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{path}:{lineno}: expected a boolean, got {raw!r}")
    try:
        if ftype in ("int", int):
            return int(raw)
        if ftype in ("float", float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{path}:{lineno}: {exc}")
    return raw


METRIC_COLUMNS = ("epoch", "self_nrmse_2d", "self_nrmse_pc1_topdown",
                  "goal_nrmse_2d", "goal_nrmse_pc1_topdown",
                  "hand_contact_rate", "arm_contact_rate", "mean_reward",
                  "reward_prediction_error")


@dataclass
class MetricSeries:
    """Per-epoch metric rows of one trial; hand_contact_rate counts
    hand-object contacts, arm_contact_rate any contact (arm or hand)."""

    rows: list

    def column(self, name):
        idx = METRIC_COLUMNS.index(name)
        return np.array([row[idx] for row in self.rows])

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(METRIC_COLUMNS) + "\n")
            for row in self.rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")

    @classmethod
    def read_csv(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != METRIC_COLUMNS:
                raise ConfigError(f"{path}: unexpected metric columns {header}")
            rows = []
            for line in fh:
                vals = line.strip().split(",")
                rows.append(tuple([int(vals[0])] + [float(v) for v in vals[1:]]))
        return cls(rows=rows)


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def nrmse_fit(internal, actual):
    return metrics.nrmse_fit(internal, actual)


def pc1_axis_nrmse(internal, actual_scalar):
    return metrics.pc1_axis_nrmse(internal, actual_scalar)


def _trial_seeds(seed, trials):
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(trials)]


def run_arm_trial(config, trial_seed, trajectory_path=None):
    """One closed-loop trial; returns a MetricSeries with one row per epoch."""
    child = np.random.SeedSequence(trial_seed).generate_state(3)
    env_rng = np.random.default_rng(int(child[0]))
    gb_rng = np.random.default_rng(int(child[1]))
    state = OnlineLgaState(
        context_dim=6, action_dim=3, latent_dim=config.latent_dim,
        radii=(config.radius_goal, config.radius_self,
               config.radius_context_cost, config.radius_action_cost),
        rate_detectors=config.rate_detectors, rate_costs=config.rate_costs,
        decay=config.decay, seed=int(child[2]))
    babbler = GoalBabbler(config.latent_dim, 3, rate=config.gb_rate,
                          spacing=config.gb_spacing,
                          noise_amplitude=config.gb_noise)
    saliency_cfg = SaliencyConfig()
    walk = arm.ObjectWalk.random(env_rng)
    x_prev = arm.forward_kinematics(np.zeros(3))

    buf_size = config.consolidation_buffer
    buf_ctx = np.zeros((buf_size, 6))
    buf_act = np.zeros((buf_size, 3))
    buf_rew = np.zeros(buf_size)
    buf_fill = 0
    buf_pos = 0

    e = config.epoch_size
    ep_ctx = np.zeros((e, 6))
    ep_act = np.zeros((e, 3))
    ep_obj = np.zeros((e, 2))
    ep_hand = np.zeros((e, 2))
    ep_xprev = np.zeros((e, 2))
    ep_rew = np.zeros(e)
    ep_err = np.zeros(e)

    traj = open(trajectory_path, "w", encoding="utf-8", newline="\n") \
        if trajectory_path else None
    if traj:
        traj.write("t\ta1\ta2\ta3\tx1\tx2\to1\to2\tr\n")

    rows = []
    try:
        for t in range(config.samples):
            obj = walk.step(env_rng)
            ctx = arm.build_context(obj, x_prev, env_rng,
                                    noise_std=config.context_noise_std)
            goal = state.goal_model.predict(ctx, grow=True)
            action = babbler.select_action(goal)
            img = arm.render_scene(action, obj)
            reward = reward_from_image(img, saliency_cfg)
            diag = state.online_step(ctx, action, reward)
            babbler.update(diag.self_point, action)
            babbler.noise_step(gb_rng)
            hand = arm.forward_kinematics(action)

            i = t % e
            ep_ctx[i] = ctx
            ep_act[i] = action
            ep_obj[i] = obj
            ep_hand[i] = hand
            ep_xprev[i] = x_prev
            ep_rew[i] = reward
            ep_err[i] = diag.error

            buf_ctx[buf_pos] = ctx
            buf_act[buf_pos] = action
            buf_rew[buf_pos] = reward
            buf_pos = (buf_pos + 1) % buf_size
            buf_fill = min(buf_fill + 1, buf_size)

            if traj:
                vals = [repr(float(v)) for v in (*action, *hand, *obj, reward)]
                traj.write(f"{t}\t" + "\t".join(vals) + "\n")

            x_prev = hand
            if (t + 1) % e == 0:
                state.consolidate((buf_ctx[:buf_fill], buf_act[:buf_fill],
                                   buf_rew[:buf_fill]), config.consolidation_passes)
                rows.append(_epoch_metrics(
                    (t + 1) // e, config, state, babbler,
                    ep_ctx, ep_act, ep_obj, ep_hand, ep_xprev, ep_rew, ep_err))
    finally:
        if traj:
            traj.close()
    return MetricSeries(rows=rows)


def _epoch_metrics(epoch, config, state, babbler, ep_ctx, ep_act, ep_obj,
                   ep_hand, ep_xprev, ep_rew, ep_err):
    """Metrics over the epoch's own samples, evaluated on the consolidated
    state snapshot (never mutating it)."""
    n = len(ep_rew)
    if config.metrics_noiseless:
        ctxs = np.hstack([ep_obj, ep_xprev, np.full((n, 2), 0.5)])
    else:
        ctxs = ep_ctx
    goal_points = np.array([state.goal_model.predict(c, grow=False) for c in ctxs])
    self_points = np.array([state.self_model.predict(a, grow=False) for a in ep_act])

    self_2d = metrics.nrmse_fit(self_points, ep_hand)
    self_pc1 = metrics.pc1_axis_nrmse(self_points, ep_hand[:, 1])
    goal_2d = metrics.nrmse_fit(goal_points, ep_obj)
    goal_pc1 = metrics.pc1_axis_nrmse(goal_points, ep_obj[:, 1])

    hand_hits = 0
    any_hits = 0
    for i in range(n):
        action = np.clip(babbler.inverse.predict(goal_points[i], grow=False),
                         -arm.JOINT_LIMIT, arm.JOINT_LIMIT)
        contact = arm.contact_test(action, ep_obj[i])
        if contact == arm.CONTACT_HAND:
            hand_hits += 1
            any_hits += 1
        elif contact == arm.CONTACT_ARM:
            any_hits += 1
    return (epoch, self_2d, self_pc1, goal_2d, goal_pc1,
            hand_hits / n, any_hits / n, float(np.mean(ep_rew)),
            float(np.sqrt(np.mean(ep_err ** 2))))


def run_arm_experiment(config, out_dir=None):
    """All trials of the reaching experiment; optionally writes one CSV per
    trial plus a manifest into out_dir."""
    if config.experiment != "arm":
        raise ConfigError("config.experiment must be 'arm'")
    out = _prepare_out(config, out_dir)
    seeds = _trial_seeds(config.seed, config.trials)
    series = []
    for i, trial_seed in enumerate(seeds):
        traj = None
        if out is not None and config.log_trajectory:
            traj = out / f"trajectory_{i:03d}.tsv"
        s = run_arm_trial(config, trial_seed, trajectory_path=traj)
        series.append(s)
        if out is not None:
            s.write_csv(out / f"trial_{i:03d}.csv")
    if out is not None:
        write_manifest(out / "manifest.json", config, seeds)
    return series


def run_recommender_experiment(config, out_dir=None):
    """Synthetic-log sweep over methods x components; returns a list of
    (method, n, nctr, seed) rows and optionally writes them as CSV."""
    if config.experiment != "recommender":
        raise ConfigError("config.experiment must be 'recommender'")
    out = _prepare_out(config, out_dir)
    seeds = _trial_seeds(config.seed, config.trials)
    methods = config.methods()
    components = config.components()
    rows = []
    for trial_seed in seeds:
        log, _ = generate_synthetic_log(config.synthetic_spec(trial_seed))
        swept = sweep_pipelines(log, methods, components,
                                config=None if config.rec_auto_condition
                                else config.train_config(),
                                train_fraction=config.rec_train_fraction,
                                replay_on_train=config.rec_replay_on_train,
                                epochs=config.rec_epochs_main)
        for method, n, nctr in swept:
            rows.append((method, n, nctr, trial_seed))
        if config.rec_include_random:
            split = int(len(log) * config.rec_train_fraction)
            tail = log.slice(0, split) if config.rec_replay_on_train \
                else log.slice(split, len(log))
            policy = uniform_random_policy(np.random.default_rng(trial_seed))
            rows.append(("random", 0, eval_nctr(policy, tail), trial_seed))
    if out is not None:
        write_recommender_csv(out / "recommender.csv", rows)
        write_manifest(out / "manifest.json", config, seeds)
    return rows


def write_recommender_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("method,n,nctr,seed\n")
        for method, n, nctr, seed in rows:
            fh.write(f"{method},{int(n)},{_fmt(float(nctr))},{int(seed)}\n")


def write_manifest(path, config, seeds):
    doc = {"package": "latentgoals", "version": __version__,
           "config": dataclasses.asdict(config), "trial_seeds": seeds}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _prepare_out(config, out_dir):
    target = out_dir or (config.out_dir or None)
    if target is None:
        return None
    out = Path(target)
    out.mkdir(parents=True, exist_ok=True)
    return out
