"""Incremental locally-linear function approximator.

Prediction is a normalized-Gaussian-kernel weighted sum of local affine
models anchored at prototype centers.  Centers are structural: they are
placed where queries land and never adapt, which keeps the predictor
linear in its parameters.
"""

import numpy as np

from . import container
from ._compiled import hash_unit, ll_create, ll_predict_into, ll_weights
from .errors import DomainError

ACTIVATION_THRESHOLD = 0.37
DEFAULT_CAPACITY = 8192


class LocallyLinearModel:
    """Locally-linear map with incremental prototype allocation.

    A new prototype is created when the strongest unnormalized activation
    falls below `activation_threshold`, or, if `creation_distance` is set,
    when the query is farther than that distance from every center.  New
    prototypes start with hash-seeded slope entries in
    (-init_scale, init_scale) and an offset of zero (or the model's current
    prediction when `init_b_from_prediction` is set).
    """

    def __init__(self, in_dim, out_dim, radius, init_scale=0.01,
                 creation_distance=None, init_b_from_prediction=False,
                 inherit_slopes=False, hash_seed=0, capacity=DEFAULT_CAPACITY):
        if radius <= 0:
            raise DomainError("radius must be positive")
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.radius = float(radius)
        self.init_scale = float(init_scale)
        self.creation_distance = creation_distance
        self.init_b_from_prediction = bool(init_b_from_prediction)
        self.inherit_slopes = bool(inherit_slopes)
        self.hash_seed = np.uint64(hash_seed)
        self.capacity = int(capacity)
        self.centers = np.zeros((self.capacity, self.in_dim))
        self.slopes = np.zeros((self.capacity, self.out_dim, self.in_dim))
        self.offsets = np.zeros((self.capacity, self.out_dim))
        self.count = 0
        self._w = np.zeros(self.capacity)

    def _check_input(self, z):
        z = np.ascontiguousarray(z, dtype=float)
        if z.shape != (self.in_dim,):
            raise DomainError(f"expected input of dim {self.in_dim}")
        if not np.all(np.isfinite(z)):
            raise DomainError("input must be finite")
        return z

    def _needs_prototype(self, z):
        if self.count == 0:
            return True
        if self.creation_distance is not None:
            d2 = np.sum((self.centers[:self.count] - z) ** 2, axis=1)
            return float(np.min(d2)) > self.creation_distance ** 2
        wmax, _ = ll_weights(self.centers, self.count, self.radius, z, self._w)
        return wmax < ACTIVATION_THRESHOLD

    def _create(self, z):
        if self.count >= self.capacity:
            raise DomainError(
                f"prototype capacity {self.capacity} exhausted; raise `capacity`")
        inherited = None
        if self.count > 0 and (self.init_b_from_prediction or self.inherit_slopes):
            w = self.weights(z)
            if self.inherit_slopes:
                inherited = np.einsum("k,koi->oi", w, self.slopes[:self.count])
        if self.init_b_from_prediction and self.count > 0:
            init_b = self.predict(z, grow=False)
        else:
            init_b = np.zeros(self.out_dim)
        self.count = ll_create(self.centers, self.slopes, self.offsets, self.count,
                               z, self.init_scale, init_b, self.hash_seed)
        if inherited is not None:
            self.slopes[self.count - 1] = inherited

    def predict(self, z, grow=True):
        """Model output at z; may allocate a prototype unless grow=False."""
        z = self._check_input(z)
        if grow and self._needs_prototype(z):
            self._create(z)
        out = np.zeros(self.out_dim)
        if self.count:
            ll_predict_into(self.centers, self.slopes, self.offsets, self.count,
                            self.radius, z, out, self._w)
        return out

    def weights(self, z):
        """Normalized kernel weights over the current prototypes."""
        z = self._check_input(z)
        if self.count == 0:
            return np.zeros(0)
        ll_weights(self.centers, self.count, self.radius, z, self._w)
        return self._w[:self.count].copy()

    def update_towards(self, z, target, rate, grow=True, decay=0.0,
                       offset_limit=None):
        """One gradient step of `rate` on |predict(z) - target|^2.

        `decay` shrinks the active prototypes' parameters by decay * weight
        (a locally weighted pull toward zero that damps drift); an
        `offset_limit` clamps the local offsets element-wise.
        """
        z = self._check_input(z)
        target = np.asarray(target, dtype=float)
        if grow and self._needs_prototype(z):
            self._create(z)
        pred = self.predict(z, grow=False)
        err = pred - target
        w = self._w[:self.count]
        if decay:
            keep = (1.0 - decay * w)
            self.offsets[:self.count] *= keep[:, None]
            self.slopes[:self.count] *= keep[:, None, None]
        coef = -2.0 * rate
        delta_b = coef * w[:, None] * err[None, :]
        self.offsets[:self.count] += delta_b
        self.slopes[:self.count] += delta_b[:, :, None] * (z - self.centers[:self.count])[:, None, :]
        if offset_limit is not None:
            np.clip(self.offsets[:self.count], -offset_limit, offset_limit,
                    out=self.offsets[:self.count])
        return pred

    @property
    def parameter_size(self):
        return self.count * self.out_dim * (self.in_dim + 1)

    def get_params(self):
        n = self.count
        return np.concatenate([self.slopes[:n].ravel(), self.offsets[:n].ravel()])

    def set_params(self, vec):
        n = self.count
        k = n * self.out_dim * self.in_dim
        if vec.shape != (self.parameter_size,):
            raise DomainError("parameter vector has the wrong length")
        self.slopes[:n] = vec[:k].reshape(n, self.out_dim, self.in_dim)
        self.offsets[:n] = vec[k:].reshape(n, self.out_dim)

    def to_payload(self):
        return {
            "in_dim": self.in_dim, "out_dim": self.out_dim, "radius": self.radius,
            "init_scale": self.init_scale,
            "creation_distance": self.creation_distance,
            "init_b_from_prediction": self.init_b_from_prediction,
            "inherit_slopes": self.inherit_slopes,
            "hash_seed": int(self.hash_seed), "capacity": self.capacity,
            "count": self.count,
            "centers": container.matrix_to_json(self.centers[:self.count]),
            "slopes": [container.matrix_to_json(m) for m in self.slopes[:self.count]],
            "offsets": container.matrix_to_json(self.offsets[:self.count]),
        }

    @classmethod
    def from_payload(cls, doc):
        model = cls(doc["in_dim"], doc["out_dim"], doc["radius"],
                    init_scale=doc["init_scale"],
                    creation_distance=doc["creation_distance"],
                    init_b_from_prediction=doc["init_b_from_prediction"],
                    inherit_slopes=doc.get("inherit_slopes", False),
                    hash_seed=doc["hash_seed"], capacity=doc["capacity"])
        n = int(doc["count"])
        model.count = n
        if n:
            model.centers[:n] = container.matrix_from_json(doc["centers"])
            model.offsets[:n] = container.matrix_from_json(doc["offsets"])
            for k in range(n):
                model.slopes[k] = container.matrix_from_json(doc["slopes"][k])
        return model


def reference_predict(model, z):
    """Plain-numpy mirror of the compiled prediction path (test oracle)."""
    z = np.asarray(z, dtype=float)
    if model.count == 0:
        return np.zeros(model.out_dim)
    centers = model.centers[:model.count]
    d2 = np.sum((centers - z) ** 2, axis=1)
    w = np.exp(-d2 / (2.0 * model.radius ** 2))
    w[w < 1e-6] = 0.0
    if w.sum() == 0.0:
        w[np.argmin(d2)] = 1.0
    w = w / w.sum()
    local = np.einsum("koi,ki->ko", model.slopes[:model.count], z - centers) \
        + model.offsets[:model.count]
    return w @ local
