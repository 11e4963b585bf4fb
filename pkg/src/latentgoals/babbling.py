"""Self-supervised inverse-model learner on top of the learned goal/self
abstractions: actions are chosen by an inverse model evaluated at the
detected goal, plus a slowly varying exploratory perturbation.

The inverse model is locally linear over the latent goal space; it learns
from self-generated (detected outcome, executed action) pairs only.
"""

import numpy as np

from . import container
from .errors import DomainError
from .locallinear import LocallyLinearModel

JOINT_LIMIT = np.pi
# AR(1) coefficient of the noise-field parameters; autocorrelation over 100
# steps is 0.995^100 ~ 0.61, i.e. the exploration drifts slowly.
NOISE_RHO = 0.995


class ExplorationNoise:
    """Affine perturbation field with low-pass parameter evolution; every
    output component is clamped to [-amplitude, amplitude]."""

    def __init__(self, latent_dim, action_dim, amplitude):
        self.latent_dim = int(latent_dim)
        self.action_dim = int(action_dim)
        self.amplitude = float(amplitude)
        self.gain = np.zeros((action_dim, latent_dim))
        self.shift = np.zeros(action_dim)
        # injection keeps the stationary parameter std at amplitude / 2
        self._inject = 0.5 * self.amplitude * np.sqrt(1.0 - NOISE_RHO ** 2)

    def step(self, rng):
        self.gain = NOISE_RHO * self.gain + self._inject * rng.standard_normal(self.gain.shape)
        self.shift = NOISE_RHO * self.shift + self._inject * rng.standard_normal(self.action_dim)

    def __call__(self, latent_point):
        raw = self.gain @ latent_point + self.shift
        return np.clip(raw, -self.amplitude, self.amplitude)


class GoalBabbler:
    """Inverse model g: latent goal -> action, with exploratory noise.

    A weak locally weighted decay pulls the inverse model toward the home
    posture and the local offsets are clamped to the joint limits; without
    this the model integrates its own exploratory noise while the latent
    points are still collapsed, drifts into the limits and freezes there.
    """

    DRIFT_DECAY = 0.002

    def __init__(self, latent_dim, action_dim=3, rate=0.02, spacing=0.15,
                 noise_amplitude=0.15, capacity=8192):
        if rate <= 0 or spacing <= 0:
            raise DomainError("rate and spacing must be positive")
        self.rate = float(rate)
        self.spacing = float(spacing)
        self.inverse = LocallyLinearModel(
            latent_dim, action_dim, radius=spacing, init_scale=0.0,
            creation_distance=spacing, init_b_from_prediction=True,
            inherit_slopes=True, capacity=capacity)
        self.noise = ExplorationNoise(latent_dim, action_dim, noise_amplitude)

    def select_action(self, goal_point):
        """Inverse-model output plus the current noise field, clamped to the
        joint limits."""
        goal_point = np.asarray(goal_point, dtype=float)
        if not np.all(np.isfinite(goal_point)):
            raise DomainError("goal point must be finite")
        a = self.inverse.predict(goal_point, grow=False) + self.noise(goal_point)
        return np.clip(a, -JOINT_LIMIT, JOINT_LIMIT)

    def update(self, outcome_point, action):
        """Gradient step on |g(outcome) - action|^2; allocates a prototype
        when the outcome is farther than `spacing` from all centers."""
        self.inverse.update_towards(outcome_point, np.asarray(action, dtype=float),
                                    self.rate, grow=True, decay=self.DRIFT_DECAY,
                                    offset_limit=JOINT_LIMIT)

    def noise_step(self, rng):
        self.noise.step(rng)

    def save(self, path):
        payload = {
            "rate": self.rate, "spacing": self.spacing,
            "noise_amplitude": self.noise.amplitude,
            "inverse": self.inverse.to_payload(),
            "noise_gain": container.matrix_to_json(self.noise.gain),
            "noise_shift": container.matrix_to_json(self.noise.shift),
        }
        container.save(path, "goal-babbler", BABBLER_VERSION, payload)

    @classmethod
    def load(cls, path):
        doc = container.load(path, "goal-babbler", BABBLER_VERSION)
        inverse = LocallyLinearModel.from_payload(doc["inverse"])
        gb = cls(inverse.in_dim, inverse.out_dim, rate=doc["rate"],
                 spacing=doc["spacing"], noise_amplitude=doc["noise_amplitude"])
        gb.inverse = inverse
        gb.noise.gain = container.matrix_from_json(doc["noise_gain"])
        gb.noise.shift = container.matrix_from_json(doc["noise_shift"])
        return gb


BABBLER_VERSION = 1
