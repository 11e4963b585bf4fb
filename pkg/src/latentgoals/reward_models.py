"""Quadratic and bilinear reward regression trained by batch gradient descent.

The quadratic model scores a context/action pair as z^T K z with
z = (psi_c; psi_a) and a symmetric coefficient matrix K; the bilinear
baseline scores psi_c^T B psi_a.  Both share the same two-phase training
protocol: a main phase from zero parameters and a fine-tuning phase that
may run on whitened context features.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import container
from .errors import DomainError, FormatError, TrainingDivergedError
from .features import fit_whitening

DIVERGENCE_FACTOR = 10.0


@dataclass
class TrainConfig:
    """Two-phase batch gradient descent settings (defaults: 10000 epochs at
    step 0.01, then 1000 fine-tuning epochs at step 0.0001 with whitening).

    The optional per-block step scales act as a block-diagonal
    preconditioner for badly scaled feature statistics; at their default of
    1.0 the update is plain gradient descent with a single step width.
    """

    epochs_main: int = 10000
    step_main: float = 0.01
    epochs_finetune: int = 1000
    step_finetune: float = 0.0001
    whiten_contexts: bool = True
    step_scale_context: float = 1.0
    step_scale_cross: float = 1.0
    step_scale_action: float = 1.0

    def __post_init__(self):
        if self.epochs_main < 0 or self.epochs_finetune < 0:
            raise DomainError("epoch counts must be >= 0")
        if self.step_main <= 0 or self.step_finetune <= 0:
            raise DomainError("step widths must be > 0")
        if min(self.step_scale_context, self.step_scale_cross,
               self.step_scale_action) < 0:
            raise DomainError("step scales must be >= 0 (0 freezes a block)")


class EventBatch:
    """Column-oriented view of (psi_c, psi_a, r) training events.

    `contexts` may be a dense array or a scipy CSR matrix; actions are either
    a dense (N, m) array or, for one-hot actions, an integer index per event
    (which enables a much cheaper training path).
    """

    def __init__(self, contexts, rewards, actions=None, action_index=None, action_dim=None):
        self.contexts = contexts
        self.rewards = np.asarray(rewards, dtype=float)
        if not np.all(np.isfinite(self.rewards)):
            raise DomainError("rewards must be finite")
        if (actions is None) == (action_index is None):
            raise DomainError("provide exactly one of actions / action_index")
        self.actions = None if actions is None else np.asarray(actions, dtype=float)
        self.action_index = None if action_index is None else np.asarray(action_index, dtype=np.intp)
        if self.actions is not None:
            self.action_dim = self.actions.shape[1]
        else:
            if action_dim is None:
                raise DomainError("action_dim required with action_index")
            self.action_dim = int(action_dim)
        n = self.contexts.shape[0]
        if self.rewards.shape[0] != n or (self.actions is not None and self.actions.shape[0] != n) \
                or (self.action_index is not None and self.action_index.shape[0] != n):
            raise DomainError("event columns must have equal length")
        self.context_dim = self.contexts.shape[1]
        self._onehot = None

    def onehot_actions(self):
        """Sparse one-hot action matrix (cached) for the index representation."""
        if self._onehot is None:
            n = len(self)
            self._onehot = sp.csr_matrix(
                (np.ones(n), (np.arange(n), self.action_index)),
                shape=(n, self.action_dim))
        return self._onehot

    def __len__(self):
        return self.contexts.shape[0]

    @classmethod
    def from_events(cls, events):
        if not events:
            raise DomainError("event list must be nonempty")
        xc = np.asarray([np.asarray(c, dtype=float) for c, _, _ in events])
        xa = np.asarray([np.asarray(a, dtype=float) for _, a, _ in events])
        r = np.asarray([r for _, _, r in events], dtype=float)
        return cls(contexts=xc, rewards=r, actions=xa)

    def with_contexts(self, contexts):
        return EventBatch(contexts=contexts, rewards=self.rewards, actions=self.actions,
                          action_index=self.action_index, action_dim=self.action_dim)


def _as_batch(events):
    return events if isinstance(events, EventBatch) else EventBatch.from_events(list(events))


def _row_quadratic(x, q):
    """Per-row x_i^T Q x_i for dense or CSR x."""
    if sp.issparse(x):
        y = x @ q
        return np.asarray(x.multiply(y).sum(axis=1)).ravel()
    return np.einsum("ij,ij->i", x @ q, x)


def _cross_scores(batch, kca):
    xc = batch.contexts
    y = np.asarray(xc @ kca)
    if batch.action_index is not None:
        return y[np.arange(len(batch)), batch.action_index]
    return np.einsum("ij,ij->i", y, batch.actions)


def _action_quadratic(batch, kaa):
    if batch.action_index is not None:
        return kaa[batch.action_index, batch.action_index]
    return np.einsum("ij,ij->i", batch.actions @ kaa, batch.actions)


def _weighted_gram(x, w):
    """x^T diag(w) x, dense result."""
    if sp.issparse(x):
        return np.asarray((x.multiply(w[:, None])).T.dot(x).todense())
    return (x * w[:, None]).T @ x


def _weighted_cross(batch, w):
    """Xc^T diag(w) Xa, dense result."""
    xc = batch.contexts
    if batch.action_index is not None:
        onehot = batch.onehot_actions()
        if sp.issparse(xc):
            return np.asarray((xc.multiply(w[:, None])).T.dot(onehot).todense())
        return np.asarray(onehot.T.dot(xc * w[:, None])).T
    if sp.issparse(xc):
        return np.asarray((xc.multiply(w[:, None])).T.dot(batch.actions))
    return (xc * w[:, None]).T @ batch.actions


def _weighted_action_gram(batch, w):
    if batch.action_index is not None:
        m = batch.action_dim
        g = np.zeros((m, m))
        np.fill_diagonal(g, np.bincount(batch.action_index, weights=w, minlength=m))
        return g
    return (batch.actions * w[:, None]).T @ batch.actions


@dataclass
class QuadraticRewardModel:
    """Symmetric quadratic form over stacked context/action features."""

    K: np.ndarray
    context_dim: int
    action_dim: int
    folded_context_transform: np.ndarray | None = None

    def __post_init__(self):
        d = self.context_dim + self.action_dim
        if self.K.shape != (d, d):
            raise DomainError(f"K must be {d}x{d}")
        if np.max(np.abs(self.K - self.K.T)) > 1e-9:
            raise DomainError("K must be symmetric")
        self.K = 0.5 * (self.K + self.K.T)

    @property
    def context_block(self):
        p = self.context_dim
        return self.K[:p, :p]

    @property
    def cross_block(self):
        p = self.context_dim
        return self.K[:p, p:]

    @property
    def action_block(self):
        p = self.context_dim
        return self.K[p:, p:]


@dataclass
class BilinearRewardModel:
    """psi_c^T B psi_a regression baseline."""

    B: np.ndarray
    folded_context_transform: np.ndarray | None = None

    @property
    def context_dim(self):
        return self.B.shape[0]

    @property
    def action_dim(self):
        return self.B.shape[1]


def eval_quadratic(model, psi_c, psi_a):
    psi_c = np.asarray(psi_c, dtype=float)
    psi_a = np.asarray(psi_a, dtype=float)
    if psi_c.shape != (model.context_dim,) or psi_a.shape != (model.action_dim,):
        raise DomainError("feature dimensions do not match the model")
    z = np.concatenate([psi_c, psi_a])
    return float(z @ model.K @ z)


def eval_bilinear(model, psi_c, psi_a):
    psi_c = np.asarray(psi_c, dtype=float)
    psi_a = np.asarray(psi_a, dtype=float)
    if psi_c.shape != (model.context_dim,) or psi_a.shape != (model.action_dim,):
        raise DomainError("feature dimensions do not match the model")
    return float(psi_c @ model.B @ psi_a)


def find_bias_column(contexts):
    """Index of a constant-1.0 column, or None."""
    n = contexts.shape[0]
    if sp.issparse(contexts):
        csc = contexts.tocsc()
        counts = np.diff(csc.indptr)
        sums = np.asarray(csc.sum(axis=0)).ravel()
        mins = np.asarray(csc.min(axis=0).todense()).ravel()
        for j in range(contexts.shape[1]):
            if counts[j] == n and sums[j] == n and mins[j] == 1.0:
                return j
        return None
    for j in range(contexts.shape[1]):
        if np.all(contexts[:, j] == 1.0):
            return j
    return None


def context_whitening_matrix(contexts, bias_index):
    """Linear map on context features that whitens the non-bias columns and
    routes the centering shift through the constant bias column."""
    if sp.issparse(contexts):
        contexts = np.asarray(contexts.todense())
    p = contexts.shape[1]
    bias_value = float(contexts[0, bias_index])
    col = contexts[:, bias_index]
    if bias_value == 0.0 or np.any(col != bias_value):
        raise DomainError("bias column must be a constant nonzero feature")
    rest = [j for j in range(p) if j != bias_index]
    wt = fit_whitening(contexts[:, rest])
    t = np.zeros((p, p))
    t[bias_index, bias_index] = 1.0
    sub = wt.transform
    shift = -sub @ wt.mean / bias_value
    for row_out, j_out in enumerate(rest):
        for col_in, j_in in enumerate(rest):
            t[j_out, j_in] = sub[row_out, col_in]
        t[j_out, bias_index] += shift[row_out]
    return t


def _run_batch_descent(batch, params, step, epochs, predict, grads, initial_loss):
    n = len(batch)
    loss = initial_loss
    for _ in range(epochs):
        r_hat = predict(params)
        e = r_hat - batch.rewards
        loss = float(e @ e) / n
        if loss > DIVERGENCE_FACTOR * initial_loss and loss > 1e-300:
            raise TrainingDivergedError(
                f"epoch loss {loss:.3g} exceeded {DIVERGENCE_FACTOR}x initial loss "
                f"{initial_loss:.3g}; reduce the step width")
        grads(params, e, step)
    return loss


def fit_quadratic(events, config, bias_index=None):
    """Batch gradient descent on mean squared reward error from K = 0.

    With `whiten_contexts`, after the main phase the context features are
    whitened (the shift carried by a constant-1 bias column, which must
    exist), the parameters are re-expressed in the whitened coordinates,
    fine-tuning runs there, and the transform is folded back into K.
    """
    batch = _as_batch(events)
    p, m = batch.context_dim, batch.action_dim
    n = len(batch)
    kcc = np.zeros((p, p))
    kca = np.zeros((p, m))
    kaa = np.zeros((m, m))

    def predict(params):
        c, x, a = params
        out = 2.0 * _cross_scores(batch, x) + _action_quadratic(batch, a)
        if c.any() or config.step_scale_context:
            out = out + _row_quadratic(batch.contexts, c)
        return out

    def grads(params, e, step):
        c, x, a = params
        scale = step * 2.0 / n
        if config.step_scale_context:
            c -= scale * config.step_scale_context * _weighted_gram(batch.contexts, e)
        if config.step_scale_cross:
            x -= scale * config.step_scale_cross * _weighted_cross(batch, e)
        if config.step_scale_action:
            a -= scale * config.step_scale_action * _weighted_action_gram(batch, e)

    initial_loss = float(batch.rewards @ batch.rewards) / n
    if initial_loss == 0.0:
        initial_loss = 1.0
    _run_batch_descent(batch, (kcc, kca, kaa), config.step_main, config.epochs_main,
                       predict, grads, initial_loss)

    transform = None
    if config.epochs_finetune > 0:
        if config.whiten_contexts:
            if bias_index is None:
                bias_index = find_bias_column(batch.contexts)
            if bias_index is None:
                raise DomainError(
                    "whiten_contexts requires a constant-1 bias column in the "
                    "context features (none found)")
            transform = context_whitening_matrix(batch.contexts, bias_index)
            tinv = np.linalg.inv(transform)
            kcc = tinv.T @ kcc @ tinv
            kca = tinv.T @ kca
            xc = batch.contexts
            white = (np.asarray(xc.todense()) if sp.issparse(xc) else xc) @ transform.T
            batch = batch.with_contexts(white)
        _run_batch_descent(batch, (kcc, kca, kaa), config.step_finetune,
                           config.epochs_finetune, predict, grads, initial_loss)
        if transform is not None:
            kcc = transform.T @ kcc @ transform
            kca = transform.T @ kca

    k = np.zeros((p + m, p + m))
    k[:p, :p] = 0.5 * (kcc + kcc.T)
    k[:p, p:] = kca
    k[p:, :p] = kca.T
    k[p:, p:] = 0.5 * (kaa + kaa.T)
    return QuadraticRewardModel(K=k, context_dim=p, action_dim=m,
                                folded_context_transform=transform)


def fit_bilinear(events, config, bias_index=None):
    """Same two-phase protocol as fit_quadratic for the bilinear model."""
    batch = _as_batch(events)
    p, m = batch.context_dim, batch.action_dim
    n = len(batch)
    b = np.zeros((p, m))

    def predict(params):
        return _cross_scores(batch, params[0])

    def grads(params, e, step):
        params[0] -= step * 2.0 / n * _weighted_cross(batch, e)

    initial_loss = float(batch.rewards @ batch.rewards) / n
    if initial_loss == 0.0:
        initial_loss = 1.0
    _run_batch_descent(batch, [b], config.step_main, config.epochs_main,
                       predict, grads, initial_loss)

    transform = None
    if config.epochs_finetune > 0:
        if config.whiten_contexts:
            if bias_index is None:
                bias_index = find_bias_column(batch.contexts)
            if bias_index is None:
                raise DomainError(
                    "whiten_contexts requires a constant-1 bias column in the "
                    "context features (none found)")
            transform = context_whitening_matrix(batch.contexts, bias_index)
            b = np.linalg.inv(transform).T @ b
            xc = batch.contexts
            white = (np.asarray(xc.todense()) if sp.issparse(xc) else xc) @ transform.T
            batch = batch.with_contexts(white)
        params = [b]
        _run_batch_descent(batch, params, config.step_finetune,
                           config.epochs_finetune, predict, grads, initial_loss)
        b = params[0]
        if transform is not None:
            b = transform.T @ b
    return BilinearRewardModel(B=b, folded_context_transform=transform)


def signed_svd(matrix):
    """SVD with a deterministic sign convention: the first component of each
    left singular vector with magnitude above 1e-12 is made positive."""
    u, s, vt = np.linalg.svd(matrix, full_matrices=False)
    for i in range(len(s)):
        col = u[:, i]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            u[:, i] *= -1.0
            vt[i, :] *= -1.0
    return u, s, vt


def truncate_bilinear(model, n):
    """Rank-n 'partworth' projections from the SVD of B; the dot product of
    the projected features approximates the bilinear score."""
    p, m = model.B.shape
    if not 1 <= n <= min(p, m):
        raise DomainError(f"n={n} out of range [1, {min(p, m)}]")
    u, s, vt = signed_svd(model.B)
    root = np.sqrt(s[:n])
    context_proj = root[:, None] * u[:, :n].T
    action_proj = root[:, None] * vt[:n, :]
    return context_proj, action_proj


MODEL_VERSION = 1


def save_model(path, model):
    if isinstance(model, QuadraticRewardModel):
        payload = {"model": "quadratic", "context_dim": model.context_dim,
                   "action_dim": model.action_dim,
                   "K": container.matrix_to_json(model.K)}
    elif isinstance(model, BilinearRewardModel):
        payload = {"model": "bilinear", "B": container.matrix_to_json(model.B)}
    else:
        raise DomainError(f"cannot serialize {type(model).__name__}")
    if model.folded_context_transform is not None:
        payload["folded_context_transform"] = container.matrix_to_json(
            model.folded_context_transform)
    container.save(path, "reward-model", MODEL_VERSION, payload)


def load_model(path):
    doc = container.load(path, "reward-model", MODEL_VERSION)
    transform = doc.get("folded_context_transform")
    if transform is not None:
        transform = container.matrix_from_json(transform)
    if doc.get("model") == "quadratic":
        k = container.matrix_from_json(doc["K"])
        return QuadraticRewardModel(K=k, context_dim=int(doc["context_dim"]),
                                    action_dim=int(doc["action_dim"]),
                                    folded_context_transform=transform)
    if doc.get("model") == "bilinear":
        return BilinearRewardModel(B=container.matrix_from_json(doc["B"]),
                                   folded_context_transform=transform)
    raise FormatError(f"{path}: unknown model kind {doc.get('model')!r}")
