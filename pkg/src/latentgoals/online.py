"""Online latent goal analysis: estimate goal-detection, self-detection,
the two residual cost terms and a scalar reward offset directly from
streamed (context, action, reward) triples.

One step computes the reward estimate

    r_hat = -|goal - outcome|^2 + e_c(context) + e_a(action) + offset

and applies the gradient-style updates to all parameter sets from the same
pre-update prediction error.  A weight-decay-like term with factor
`decay` keeps the cost terms small and credits the removed reward mass to
the detection maps instead.
"""

from dataclasses import dataclass

import numpy as np

from . import container
from ._compiled import consolidate_kernel, online_step_kernel
from .errors import DomainError
from .locallinear import ACTIVATION_THRESHOLD, LocallyLinearModel

DEFAULT_RADII = (2.0, 0.25, 0.5, 0.5)


@dataclass(frozen=True)
class StepDiagnostics:
    """Pre-update quantities of one online step."""

    reward_estimate: float
    error: float
    goal_point: np.ndarray
    self_point: np.ndarray
    context_cost: float
    action_cost: float
    offset: float


class OnlineLgaState:
    """Mutable learner state: four locally-linear models plus the scalar
    reward offset.  Single-owner; one logical writer at a time."""

    def __init__(self, context_dim, action_dim, latent_dim=2,
                 radii=DEFAULT_RADII, rate_detectors=0.015, rate_costs=0.005,
                 decay=0.05, init_scale=0.01, init_scales=None, seed=0,
                 capacity=8192):
        if not 0.0 <= decay < 1.0:
            raise DomainError("decay must lie in [0, 1)")
        if rate_detectors <= 0 or rate_costs <= 0:
            raise DomainError("learning rates must be positive")
        self.context_dim = int(context_dim)
        self.action_dim = int(action_dim)
        self.latent_dim = int(latent_dim)
        self.radii = np.asarray(radii, dtype=float)
        if self.radii.shape != (4,):
            raise DomainError("radii must give (goal, self, context cost, action cost)")
        self.rate_detectors = float(rate_detectors)
        self.rate_costs = float(rate_costs)
        self.decay = float(decay)
        self.init_scale = float(init_scale)
        if init_scales is None:
            init_scales = (init_scale,) * 4
        self.init_scales = np.asarray(init_scales, dtype=float)
        if self.init_scales.shape != (4,):
            raise DomainError("init_scales must give one value per model")
        self.seed = int(seed)
        seeds = np.random.SeedSequence(seed).generate_state(5, dtype=np.uint64)
        self.goal_model = LocallyLinearModel(context_dim, latent_dim, radii[0],
                                             init_scale=self.init_scales[0],
                                             hash_seed=seeds[0], capacity=capacity)
        self.self_model = LocallyLinearModel(action_dim, latent_dim, radii[1],
                                             init_scale=self.init_scales[1],
                                             hash_seed=seeds[1], capacity=capacity)
        self.context_cost_model = LocallyLinearModel(context_dim, 1, radii[2],
                                                     init_scale=self.init_scales[2],
                                                     hash_seed=seeds[2], capacity=capacity)
        self.action_cost_model = LocallyLinearModel(action_dim, 1, radii[3],
                                                    init_scale=self.init_scales[3],
                                                    hash_seed=seeds[3], capacity=capacity)
        self.offset = 0.0
        self.rng = np.random.default_rng(seeds[4])
        self._models = (self.goal_model, self.self_model,
                        self.context_cost_model, self.action_cost_model)
        self._scratch = np.zeros(2 * latent_dim + 4)
        self._goal_out = np.zeros(latent_dim)
        self._self_out = np.zeros(latent_dim)
        self._diag = np.zeros(5)
        self._k_arr = np.zeros(1)
        self._active = tuple(np.zeros(m.capacity, dtype=np.int64) for m in self._models)

    def _kernel_args(self):
        g, f, ec, ea = self._models
        counts = np.array([g.count, f.count, ec.count, ea.count], dtype=np.int64)
        seeds = np.array([g.hash_seed, f.hash_seed, ec.hash_seed, ea.hash_seed],
                         dtype=np.uint64)
        return (g.centers, g.slopes, g.offsets,
                f.centers, f.slopes, f.offsets,
                ec.centers, ec.slopes, ec.offsets,
                ea.centers, ea.slopes, ea.offsets,
                counts, self.radii, seeds)

    def _store_counts(self, counts):
        for model, c in zip(self._models, counts):
            model.count = int(c)

    def _check_pair(self, context, action):
        context = np.ascontiguousarray(context, dtype=float)
        action = np.ascontiguousarray(action, dtype=float)
        if context.shape != (self.context_dim,) or action.shape != (self.action_dim,):
            raise DomainError("context/action dimensions do not match the state")
        return context, action

    def _diagnostics(self):
        return StepDiagnostics(
            reward_estimate=float(self._diag[0]), error=float(self._diag[1]),
            goal_point=self._goal_out.copy(), self_point=self._self_out.copy(),
            context_cost=float(self._diag[2]), action_cost=float(self._diag[3]),
            offset=float(self._diag[4]))

    def predict(self, context, action):
        """Frozen evaluation: no parameter updates, no prototype creation."""
        context, action = self._check_pair(context, action)
        args = self._kernel_args()
        self._k_arr[0] = self.offset
        online_step_kernel(context, action, 0.0, *args, self._k_arr,
                           0.0, 0.0, 0.0, self.init_scales, ACTIVATION_THRESHOLD, 0,
                           self._goal_out, self._self_out, self._scratch,
                           self.goal_model._w, self.self_model._w,
                           self.context_cost_model._w, self.action_cost_model._w,
                           *self._active, self._diag)
        return self._diagnostics()

    def online_step(self, context, action, reward):
        """One learning step; returns diagnostics of the pre-update state."""
        context, action = self._check_pair(context, action)
        reward = float(reward)
        if not np.isfinite(reward):
            raise DomainError("reward must be finite; step rejected")
        args = self._kernel_args()
        counts = args[12]
        self._k_arr[0] = self.offset
        online_step_kernel(context, action, reward, *args, self._k_arr,
                           self.rate_detectors, self.rate_costs, self.decay,
                           self.init_scales, ACTIVATION_THRESHOLD, 1,
                           self._goal_out, self._self_out, self._scratch,
                           self.goal_model._w, self.self_model._w,
                           self.context_cost_model._w, self.action_cost_model._w,
                           *self._active, self._diag)
        self.offset = float(self._k_arr[0])
        self._store_counts(counts)
        return self._diagnostics()

    def consolidate(self, buffer, passes):
        """Replay buffered (context, action, reward) samples `passes` times,
        each pass in a fresh random order from the state's generator."""
        contexts, actions, rewards = _buffer_arrays(buffer, self.context_dim,
                                                    self.action_dim)
        if len(rewards) == 0:
            raise DomainError("consolidation buffer must be nonempty")
        if not np.all(np.isfinite(rewards)):
            raise DomainError("rewards must be finite")
        n = len(rewards)
        for _ in range(int(passes)):
            order = self.rng.permutation(n).astype(np.int64)
            args = self._kernel_args()
            counts = args[12]
            self._k_arr[0] = self.offset
            done = consolidate_kernel(contexts, actions, rewards, order, *args,
                                      self._k_arr, self.rate_detectors,
                                      self.rate_costs, self.decay, self.init_scales,
                                      ACTIVATION_THRESHOLD,
                                      self._goal_out, self._self_out, self._scratch,
                                      self.goal_model._w, self.self_model._w,
                                      self.context_cost_model._w,
                                      self.action_cost_model._w,
                                      *self._active, self._diag)
            self.offset = float(self._k_arr[0])
            self._store_counts(counts)
            if done < n:
                raise DomainError("prototype capacity exhausted during consolidation")

    def get_params(self):
        parts = [m.get_params() for m in self._models]
        parts.append(np.array([self.offset]))
        return np.concatenate(parts)

    def set_params(self, vec):
        pos = 0
        for m in self._models:
            size = m.parameter_size
            m.set_params(vec[pos:pos + size])
            pos += size
        self.offset = float(vec[pos])

    def save(self, path):
        payload = {
            "context_dim": self.context_dim, "action_dim": self.action_dim,
            "latent_dim": self.latent_dim,
            "radii": container.matrix_to_json(self.radii),
            "rate_detectors": self.rate_detectors, "rate_costs": self.rate_costs,
            "decay": self.decay, "init_scale": self.init_scale,
            "init_scales": container.matrix_to_json(self.init_scales),
            "seed": self.seed,
            "offset": self.offset,
            "models": [m.to_payload() for m in self._models],
            "rng_state": _rng_state_to_json(self.rng),
        }
        container.save(path, "online-lga-state", STATE_VERSION, payload)

    @classmethod
    def load(cls, path):
        doc = container.load(path, "online-lga-state", STATE_VERSION)
        state = cls(doc["context_dim"], doc["action_dim"], doc["latent_dim"],
                    radii=container.matrix_from_json(doc["radii"]),
                    rate_detectors=doc["rate_detectors"], rate_costs=doc["rate_costs"],
                    decay=doc["decay"], init_scale=doc["init_scale"],
                    init_scales=container.matrix_from_json(doc["init_scales"]),
                    seed=doc["seed"])
        state.offset = float(doc["offset"])
        models = [LocallyLinearModel.from_payload(p) for p in doc["models"]]
        (state.goal_model, state.self_model,
         state.context_cost_model, state.action_cost_model) = models
        state._models = tuple(models)
        _rng_state_from_json(state.rng, doc["rng_state"])
        return state


STATE_VERSION = 1


def _buffer_arrays(buffer, context_dim, action_dim):
    if isinstance(buffer, tuple) and len(buffer) == 3:
        contexts, actions, rewards = buffer
        return (np.ascontiguousarray(contexts, dtype=float),
                np.ascontiguousarray(actions, dtype=float),
                np.ascontiguousarray(rewards, dtype=float))
    contexts = np.array([np.asarray(c, dtype=float) for c, _, _ in buffer])
    actions = np.array([np.asarray(a, dtype=float) for _, a, _ in buffer])
    rewards = np.array([float(r) for _, _, r in buffer])
    return contexts, actions, rewards


def online_step(state, context, action, reward):
    return state.online_step(context, action, reward)


def consolidate(state, buffer, passes):
    state.consolidate(buffer, passes)


def _rng_state_to_json(rng):
    st = rng.bit_generator.state
    return {"bit_generator": st["bit_generator"],
            "state": int(st["state"]["state"]),
            "inc": int(st["state"]["inc"]),
            "has_uint32": int(st["has_uint32"]),
            "uinteger": int(st["uinteger"])}


def _rng_state_from_json(rng, doc):
    rng.bit_generator.state = {
        "bit_generator": doc["bit_generator"],
        "state": {"state": int(doc["state"]), "inc": int(doc["inc"])},
        "has_uint32": int(doc["has_uint32"]),
        "uinteger": int(doc["uinteger"]),
    }
