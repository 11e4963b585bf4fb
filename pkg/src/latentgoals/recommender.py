"""Contextual recommendation harness: click-log model, synthetic log
generation with planted low-rank structure, argmax policies, offline
normalized click-through-rate evaluation and the comparison pipelines.

The real front-page click dataset is proprietary, so experiments run on
synthetic logs whose ground truth is returned alongside the log; absolute
published click-through numbers are out of scope.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, FormatError, MetricUndefinedError
from .features import apply_pca, fit_pca
from .lga import decompose
from .reward_models import (EventBatch, QuadraticRewardModel, TrainConfig,
                            _row_quadratic, _weighted_gram,
                            context_whitening_matrix, fit_bilinear,
                            fit_quadratic, truncate_bilinear)

METHODS = ("LGA", "LGA-no-ea", "BLR-SVD", "PCA+QR", "PCA+BLR")


@dataclass(frozen=True)
class ClickEvent:
    timestamp: int
    context: np.ndarray
    pool: np.ndarray
    shown: int
    reward: int


@dataclass
class EventLog:
    """Column-oriented click log; pools may vary in size per event."""

    contexts: np.ndarray          # (N, p) 0/1
    pools: list                   # N arrays of article ids
    shown: np.ndarray             # (N,)
    rewards: np.ndarray           # (N,) 0/1
    num_articles: int
    timestamps: np.ndarray = None

    def __post_init__(self):
        n = len(self.rewards)
        if self.timestamps is None:
            self.timestamps = np.arange(n)
        for t in range(n):
            if self.shown[t] not in self.pools[t]:
                raise DomainError(f"event {t}: shown article not in pool")
        if any(len(p) == 0 for p in self.pools):
            raise DomainError("pools must be nonempty")

    def __len__(self):
        return len(self.rewards)

    @property
    def context_dims(self):
        return self.contexts.shape[1]

    def event(self, t):
        return ClickEvent(timestamp=int(self.timestamps[t]),
                          context=self.contexts[t],
                          pool=self.pools[t], shown=int(self.shown[t]),
                          reward=int(self.rewards[t]))

    def slice(self, start, stop):
        return EventLog(contexts=self.contexts[start:stop],
                        pools=self.pools[start:stop],
                        shown=self.shown[start:stop],
                        rewards=self.rewards[start:stop],
                        num_articles=self.num_articles,
                        timestamps=self.timestamps[start:stop])


@dataclass
class SyntheticSpec:
    """Generator settings for a synthetic click log with planted structure.

    A small subset of `informative_bits` context bits (drawn at the higher
    `informative_density`) determines the planted latent goal; articles sit
    equally spaced on a ring so instances are geometrically comparable
    across seeds.  The remaining bits are sparse background noise.
    """

    num_articles: int = 49
    context_dims: int = 116
    latent_rank: int = 2
    pool_size: int = 6
    num_events: int = 100_000
    click_link: str = "logistic"
    seed: int = 0
    context_density: float = 0.05
    informative_bits: int = 6
    informative_density: float = 0.5
    article_ring_radius: float = 1.5
    goal_column_scale: float = 1.155
    popularity_scale: float = 0.5
    target_ctr: float = 0.04

    def __post_init__(self):
        if self.latent_rank > min(self.context_dims, self.num_articles):
            raise DomainError("latent_rank exceeds min(context_dims, num_articles)")
        if self.latent_rank < 0:
            raise DomainError("latent_rank must be >= 0")
        if not 0 < self.pool_size <= self.num_articles:
            raise DomainError("pool_size out of range")
        if self.click_link != "logistic":
            raise DomainError(f"unsupported click link {self.click_link!r}")
        if not 0.0 < self.target_ctr < 1.0 or not 0.0 < self.context_density <= 1.0:
            raise DomainError("target_ctr and context_density must lie in (0, 1)")
        if not 0 <= self.informative_bits <= self.context_dims:
            raise DomainError("informative_bits out of range")


@dataclass
class PlantedModel:
    """Hidden truth of a synthetic log: latent goal/article positions plus
    per-article popularity behind a logistic click link."""

    context_map: np.ndarray    # (rank, p)
    article_points: np.ndarray  # (rank, m)
    popularity: np.ndarray     # (m,)
    bias: float

    def reward(self, context_bits, article):
        pop = self.popularity[article]
        if self.context_map.shape[0] == 0:
            return float(pop)
        goal = self.context_map @ np.asarray(context_bits, dtype=float)
        diff = goal - self.article_points[:, article]
        return float(-diff @ diff + pop)

    def pool_rewards(self, context_bits, pool):
        pop = self.popularity[pool]
        if self.context_map.shape[0] == 0:
            return pop.astype(float)
        goal = self.context_map @ np.asarray(context_bits, dtype=float)
        diff = goal[:, None] - self.article_points[:, pool]
        return -np.sum(diff * diff, axis=0) + pop

    def click_probability(self, context_bits, article):
        return _sigmoid(self.bias + self.reward(context_bits, article))

    def best_article(self, context_bits, pool):
        pool = np.sort(np.asarray(pool))
        return int(pool[np.argmax(self.pool_rewards(context_bits, pool))])

    def policy(self):
        return self.best_article


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _calibrate_bias(rewards_sample, target_ctr):
    lo, hi = -30.0, 30.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if float(np.mean(_sigmoid(mid + rewards_sample))) > target_ctr:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def generate_synthetic_log(spec):
    """Synthetic click log plus its hidden truth.

    The shown article is uniform from a random pool (so the offline
    estimator is unbiased); clicks are Bernoulli with a logistic link on
    the planted reward.
    """
    rng = np.random.default_rng(spec.seed)
    p, m, rank = spec.context_dims, spec.num_articles, spec.latent_rank
    context_map = np.zeros((rank, p))
    density = np.full(p, spec.context_density)
    if rank > 0 and spec.informative_bits > 0:
        informative = rng.choice(p, spec.informative_bits, replace=False)
        context_map[:, informative] = rng.normal(
            0.0, spec.goal_column_scale, size=(rank, spec.informative_bits))
        density[informative] = spec.informative_density
    angles = rng.uniform(0.0, 2.0 * np.pi) + np.arange(m) * 2.0 * np.pi / m
    ring = np.vstack([np.cos(angles), np.sin(angles)])
    if rank == 0:
        article_points = np.zeros((0, m))
    elif rank <= 2:
        article_points = spec.article_ring_radius * ring[:rank]
    else:
        extra = rng.normal(0.0, spec.article_ring_radius / 2.0, size=(rank - 2, m))
        article_points = np.vstack([spec.article_ring_radius * ring, extra])
    popularity = rng.normal(0.0, spec.popularity_scale, size=m)

    n = spec.num_events
    contexts = (rng.random((n, p)) < density).astype(np.uint8)
    pool_matrix = np.argsort(rng.random((n, m)), axis=1)[:, :spec.pool_size]
    pool_matrix.sort(axis=1)
    shown_pos = rng.integers(0, spec.pool_size, size=n)
    shown = pool_matrix[np.arange(n), shown_pos]

    if rank > 0:
        goals = contexts.astype(float) @ context_map.T
        diff = goals - article_points[:, shown].T
        planted_rewards = -np.sum(diff * diff, axis=1) + popularity[shown]
    else:
        planted_rewards = popularity[shown].astype(float)

    sample = planted_rewards[: min(n, 20_000)]
    bias = _calibrate_bias(sample, spec.target_ctr)
    clicks = (rng.random(n) < _sigmoid(bias + planted_rewards)).astype(np.int8)

    log = EventLog(contexts=contexts, pools=[pool_matrix[t] for t in range(n)],
                   shown=shown.astype(np.int64), rewards=clicks,
                   num_articles=m)
    planted = PlantedModel(context_map=context_map, article_points=article_points,
                           popularity=popularity, bias=float(bias))
    return log, planted


def policy_argmax(score, context, pool):
    """Article with maximal score; ties break to the lowest id."""
    pool = np.asarray(pool)
    if pool.size == 0:
        raise DomainError("pool must be nonempty")
    pool = np.sort(pool)
    scores = np.array([score(context, int(a)) for a in pool])
    return int(pool[np.argmax(scores)])


def make_argmax_policy(score):
    def policy(context, pool):
        return policy_argmax(score, context, pool)
    return policy


def uniform_random_policy(rng):
    def policy(context, pool):
        return int(rng.choice(pool))
    return policy


def eval_nctr(policy, log):
    """Offline normalized click-through rate.

    Counts clicked events whose logged article matches the policy's pick,
    normalized by the uniform-random baseline sum(r_t / |pool_t|); a uniform
    policy therefore concentrates at 1.0.
    """
    if len(log) == 0:
        raise DomainError("log must be nonempty")
    clicks = int(np.sum(log.rewards))
    if clicks == 0:
        raise MetricUndefinedError("log contains no clicks; nCTR undefined")
    numerator = 0
    denominator = 0.0
    for t in range(len(log)):
        r = int(log.rewards[t])
        pool = log.pools[t]
        if r:
            denominator += 1.0 / len(pool)
            if policy(log.contexts[t], pool) == int(log.shown[t]):
                numerator += 1
    return numerator / denominator


def eval_replay_ctr(policy, log):
    """Standard replay estimator: CTR over the events whose logged article
    matches the policy (labeled alternative to the printed-formula nCTR)."""
    matched = 0
    clicked = 0
    for t in range(len(log)):
        if policy(log.contexts[t], log.pools[t]) == int(log.shown[t]):
            matched += 1
            clicked += int(log.rewards[t])
    if matched == 0:
        raise MetricUndefinedError("policy never matches a logged event")
    return clicked / matched


def log_features(log):
    """Sparse context features with a trailing constant-1 bias column, plus
    the action index representation used by the fast training path."""
    n, p = log.contexts.shape
    bits = sp.csr_matrix(log.contexts.astype(float))
    bias = sp.csr_matrix(np.ones((n, 1)))
    contexts = sp.hstack([bits, bias], format="csr")
    return EventBatch(contexts=contexts, rewards=log.rewards.astype(float),
                      action_index=log.shown, action_dim=log.num_articles)


def whitened_features(train_log):
    """Whitening transform fit on the training slice (bias column carried
    through) plus a featurizer mapping any log onto the whitened space.

    Whitening the contexts before regression is the same preconditioning
    the published protocol applies in its fine-tuning phase, moved up front
    so the batch fit converges within a practical epoch budget.
    """
    n = len(train_log)
    raw = np.hstack([train_log.contexts.astype(float), np.ones((n, 1))])
    transform = context_whitening_matrix(raw, raw.shape[1] - 1)

    def featurize(log):
        raw_log = np.hstack([log.contexts.astype(float), np.ones((len(log), 1))])
        return raw_log @ transform.T

    return transform, featurize


def conditioned_train_config(batch, epochs_main, margin=0.7,
                             train_context_block=False):
    """TrainConfig with per-block step scales set from the batch statistics.

    The cross/action blocks share one scale bounded by the per-article
    joint block's top eigenvalue (they overlap through the bias column);
    the context block is frozen by default because context-only terms
    cannot change an argmax policy.
    """
    xc = batch.contexts
    n = len(batch)
    if sp.issparse(xc):
        gram = np.asarray((xc.T @ xc).todense()) / n
        mu = np.asarray(xc.mean(axis=0)).ravel()
    else:
        gram = xc.T @ xc / n
        mu = xc.mean(axis=0)
    p = gram.shape[0]
    joint = np.zeros((p + 1, p + 1))
    joint[:p, :p] = 4.0 * gram
    joint[:p, p] = 2.0 * mu
    joint[p, :p] = 2.0 * mu
    joint[p, p] = 1.0
    max_freq = np.max(np.bincount(batch.action_index,
                                  minlength=batch.action_dim)) / n
    lam_cross = 2.0 * max_freq * float(np.linalg.eigvalsh(joint)[-1])
    scale_x = margin / lam_cross
    scale_c = 0.0
    if train_context_block:
        rng = np.random.default_rng(0)
        probe = rng.standard_normal((p, p))
        probe = 0.5 * (probe + probe.T)
        probe /= np.linalg.norm(probe)
        lam_cc = 1.0
        for _ in range(8):
            v = _row_quadratic(xc, probe)
            g = 2.0 / n * _weighted_gram(xc, v)
            lam_cc = np.linalg.norm(g)
            probe = g / lam_cc
        scale_c = margin / lam_cc
    return TrainConfig(epochs_main=epochs_main, step_main=1.0,
                       epochs_finetune=0, whiten_contexts=False,
                       step_scale_context=scale_c, step_scale_cross=scale_x,
                       step_scale_action=scale_x)


def canonicalize_onehot_model(model, bias_index):
    """Exact reparameterization of a fitted quadratic model for one-hot
    actions and a constant-1 context bias column.

    Gradient descent spreads context-independent action structure between
    the K_aa diagonal and the bias row of the cross block (both represent
    it), and context-only structure into the cross block's column mean.
    Moving them to the action diagonal and the context block leaves the
    fitted function unchanged but keeps the cross block purely
    interactional, which is what SVD truncation should spend its rank on.
    """
    p, m = model.context_dim, model.action_dim
    kcc = model.context_block.copy()
    kca = model.cross_block.copy()
    kaa = model.action_block.copy()
    col_mean = kca.mean(axis=1)
    kca -= col_mean[:, None]
    kcc[bias_index, :] += col_mean
    kcc[:, bias_index] += col_mean
    kaa[np.arange(m), np.arange(m)] += 2.0 * kca[bias_index, :]
    kca[bias_index, :] = 0.0
    k = np.zeros((p + m, p + m))
    k[:p, :p] = 0.5 * (kcc + kcc.T)
    k[:p, p:] = kca
    k[p:, :p] = kca.T
    k[p:, p:] = 0.5 * (kaa + kaa.T)
    return QuadraticRewardModel(K=k, context_dim=p, action_dim=m,
                                folded_context_transform=model.folded_context_transform)


DEFAULT_SWEEP_EPOCHS = 150


def _lga_policy(model, n, featurize_one):
    if n == 0:
        action_cost = np.diag(model.action_block).copy()

        def policy(context, pool):
            pool = np.sort(np.asarray(pool))
            return int(pool[np.argmax(action_cost[pool])])
        return policy
    dec = decompose(model, n)
    points = dec.self_map.copy()                # latent article positions
    action_cost = np.diag(dec.action_residual).copy()
    goal_map = dec.goal_map

    def policy(context, pool):
        pool = np.sort(np.asarray(pool))
        goal = goal_map @ featurize_one(context)
        diff = goal[:, None] - points[:, pool]
        scores = -np.sum(diff * diff, axis=0) + action_cost[pool]
        return int(pool[np.argmax(scores)])
    return policy


def _lga_policy_no_action_cost(model, n, featurize_one):
    dec = decompose(model, n)
    points = dec.self_map.copy()
    goal_map = dec.goal_map

    def policy(context, pool):
        pool = np.sort(np.asarray(pool))
        goal = goal_map @ featurize_one(context)
        diff = goal[:, None] - points[:, pool]
        scores = -np.sum(diff * diff, axis=0)
        return int(pool[np.argmax(scores)])
    return policy


def _blr_policy(model, n, featurize_one):
    ctx_proj, act_proj = truncate_bilinear(model, n)

    def policy(context, pool):
        pool = np.sort(np.asarray(pool))
        left = ctx_proj @ featurize_one(context)
        scores = left @ act_proj[:, pool]
        return int(pool[np.argmax(scores)])
    return policy


def _bilinear_policy(model, featurize_one):
    def policy(context, pool):
        pool = np.sort(np.asarray(pool))
        scores = (featurize_one(context) @ model.B)[pool]
        return int(pool[np.argmax(scores)])
    return policy


def _quadratic_policy(model, featurize_one):
    diag = np.diag(model.action_block)

    def policy(context, pool):
        pool = np.sort(np.asarray(pool))
        c = featurize_one(context)
        cross = 2.0 * (c @ model.cross_block)
        scores = cross[pool] + diag[pool]
        return int(pool[np.argmax(scores)])
    return policy


def _pca_featurizer(train_log, n):
    projection = fit_pca(train_log.contexts.astype(float), n)

    def featurize_one(context):
        reduced = apply_pca(projection, context.astype(float))
        return np.append(reduced, 1.0)
    return featurize_one


def sweep_pipelines(log, methods, components, config=None, train_fraction=0.8,
                    replay_on_train=False, epochs=DEFAULT_SWEEP_EPOCHS):
    """Train each method once on the chronological head of the log and
    evaluate nCTR for every requested component count.

    Returns a list of (method, n, nctr) tuples.  `n=0` is meaningful only
    for LGA (popularity-style scoring from the action cost term alone).
    When `config` is None, step scales are conditioned on the training
    batch statistics automatically.
    """
    for method in methods:
        if method not in METHODS:
            raise DomainError(f"unknown method {method!r}; choose from {METHODS}")
    split = int(len(log) * train_fraction)
    if not 0 < split <= len(log):
        raise DomainError("train fraction leaves no training events")
    train = log.slice(0, split)
    evaluation = log.slice(0, split) if replay_on_train else log.slice(split, len(log))

    transform, featurize = whitened_features(train)
    bias_index = transform.shape[0] - 1

    def featurize_one(context):
        return transform @ np.append(context.astype(float), 1.0)

    batch = None
    quad_model = None
    blr_model = None
    rows = []
    for method in methods:
        if method in ("LGA", "LGA-no-ea", "BLR-SVD") and batch is None:
            batch = EventBatch(contexts=featurize(train),
                               rewards=train.rewards.astype(float),
                               action_index=train.shown,
                               action_dim=train.num_articles)
        if method in ("LGA", "LGA-no-ea") and quad_model is None:
            quad_config = config or conditioned_train_config(batch, epochs)
            quad_model = canonicalize_onehot_model(
                fit_quadratic(batch, quad_config, bias_index=bias_index),
                bias_index)
        if method == "BLR-SVD" and blr_model is None:
            blr_config = config or conditioned_train_config(batch, epochs)
            blr_model = fit_bilinear(batch, blr_config, bias_index=bias_index)
        for n in components:
            if method == "LGA":
                policy = _lga_policy(quad_model, n, featurize_one)
            elif method == "LGA-no-ea":
                if n == 0:
                    continue
                policy = _lga_policy_no_action_cost(quad_model, n, featurize_one)
            elif method == "BLR-SVD":
                if n == 0:
                    continue
                policy = _blr_policy(blr_model, n, featurize_one)
            else:
                if n == 0:
                    continue
                pca_one = _pca_featurizer(train, n)
                reduced_train = np.vstack([pca_one(c) for c in train.contexts])
                pca_batch = EventBatch(contexts=reduced_train,
                                       rewards=train.rewards.astype(float),
                                       action_index=train.shown,
                                       action_dim=train.num_articles)
                pca_config = config or conditioned_train_config(pca_batch, epochs)
                if method == "PCA+QR":
                    model = canonicalize_onehot_model(
                        fit_quadratic(pca_batch, pca_config, bias_index=n), n)
                    policy = _quadratic_policy(model, pca_one)
                else:
                    model = fit_bilinear(pca_batch, pca_config, bias_index=n)
                    policy = _bilinear_policy(model, pca_one)
            rows.append((method, n, eval_nctr(policy, evaluation)))
    return rows


def run_pipeline(log, method, n, config=None, train_fraction=0.8,
                 replay_on_train=False):
    """Train `method` on the first part of the log and return its nCTR on
    the held-out tail (or on the training part in replay mode)."""
    if n < 0:
        raise DomainError("n must be >= 0")
    rows = sweep_pipelines(log, [method], [n], config=config,
                           train_fraction=train_fraction,
                           replay_on_train=replay_on_train)
    if not rows:
        raise DomainError(f"n={n} is not meaningful for method {method!r}")
    return rows[0][2]


def write_event_log(path, log):
    """One event per line:
    t <TAB> shown <TAB> reward <TAB> pool:id,... <TAB> features:bitstring."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# articles={log.num_articles}\n")
        for t in range(len(log)):
            bits = "".join("1" if b else "0" for b in log.contexts[t])
            pool = ",".join(str(int(a)) for a in log.pools[t])
            fh.write(f"{int(log.timestamps[t])}\t{int(log.shown[t])}\t"
                     f"{int(log.rewards[t])}\tpool:{pool}\tfeatures:{bits}\n")


def read_event_log(path):
    timestamps, shown, rewards, pools, rows = [], [], [], [], []
    num_articles = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                if "articles=" in line:
                    num_articles = int(line.split("articles=")[1])
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise FormatError(f"{path}:{lineno}: expected 5 tab-separated fields")
            try:
                t = int(parts[0])
                shown_id = int(parts[1])
                reward = int(parts[2])
                if not parts[3].startswith("pool:") or not parts[4].startswith("features:"):
                    raise ValueError("missing pool:/features: prefixes")
                pool = np.array([int(x) for x in parts[3][5:].split(",")])
                bits = parts[4][9:]
                if set(bits) - {"0", "1"}:
                    raise ValueError("features must be a 0/1 bitstring")
                row = np.frombuffer(bits.encode(), dtype=np.uint8) - ord("0")
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            if reward not in (0, 1):
                raise FormatError(f"{path}:{lineno}: reward must be 0 or 1")
            if shown_id not in pool:
                raise FormatError(f"{path}:{lineno}: shown article not in pool")
            timestamps.append(t)
            shown.append(shown_id)
            rewards.append(reward)
            pools.append(pool)
            rows.append(row)
    if not rows:
        raise FormatError(f"{path}: no events")
    contexts = np.vstack(rows).astype(np.uint8)
    if num_articles is None:
        num_articles = int(max(int(p.max()) for p in pools)) + 1
    return EventLog(contexts=contexts, pools=pools,
                    shown=np.array(shown, dtype=np.int64),
                    rewards=np.array(rewards, dtype=np.int8),
                    num_articles=num_articles,
                    timestamps=np.array(timestamps, dtype=np.int64))


def load_yahoo_r6b(path):
    """Adapter slot for the proprietary front-page click dataset.

    The dataset is not redistributable and not available here, so this
    cannot be implemented or tested in this repository; synthetic logs from
    generate_synthetic_log are the supported substitute.
    """
    raise NotImplementedError(
        "the proprietary click-log dataset is not available; use "
        "generate_synthetic_log / read_event_log instead")
