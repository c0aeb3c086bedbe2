"""Gaussian-emission hidden Markov models for activity recognition.

One model is trained per activity on sequences of wavelet feature columns;
classification picks the model with the highest forward log-likelihood.
A small debouncer turns streams of per-window activity labels into door
events (someone entering or leaving), which the online counting session
uses to correct the count.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

VARIANCE_FLOOR = 1e-6

MODEL_MAGIC = b"CSIH"
MODEL_VERSION = 1


class ActivityLabel(Enum):
    """Closed set of recognized activities (value = single-letter tag)."""

    EMPTY = "E"
    WALKING = "W"
    SITTING_DOWN = "S"
    FALLING = "F"
    RUNNING = "R"
    ENTERING_ROOM = "O"
    LEAVING_ROOM = "L"
    WAVING = "A"


DOOR_LABELS = (ActivityLabel.ENTERING_ROOM, ActivityLabel.LEAVING_ROOM)


@dataclass(frozen=True)
class DoorEvent:
    """A debounced door crossing: kind is 'enter' or 'leave'."""

    kind: str
    time_index: int


@dataclass
class GaussianHmm:
    """HMM with diagonal-Gaussian emissions.

    initial     (S,) state distribution, sums to 1
    transition  (S, S) row-stochastic matrix
    means       (S, D) emission means
    variances   (S, D) emission variances, each >= VARIANCE_FLOOR
    """

    initial: np.ndarray
    transition: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    label: str = ""
    fit_log_likelihoods: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=np.float64)
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        s, d = self.means.shape
        if self.initial.shape != (s,) or self.transition.shape != (s, s):
            raise ValueError("parameter shapes are inconsistent")
        if self.variances.shape != (s, d):
            raise ValueError("variance shape disagrees with means")
        for arr in (self.initial, self.transition, self.means, self.variances):
            if not np.isfinite(arr).all():
                raise ValueError("model parameters contain non-finite values")
        if abs(self.initial.sum() - 1.0) > 1e-9 or (self.initial < 0).any():
            raise ValueError("initial distribution must be a probability vector")
        if (np.abs(self.transition.sum(axis=1) - 1.0) > 1e-9).any() or (
            self.transition < 0
        ).any():
            raise ValueError("transition matrix must be row-stochastic")
        if (self.variances < VARIANCE_FLOOR * (1 - 1e-12)).any():
            raise ValueError(f"variances must be >= {VARIANCE_FLOOR}")

    @property
    def n_states(self) -> int:
        return self.means.shape[0]

    @property
    def n_features(self) -> int:
        return self.means.shape[1]


def _check_obs(model: GaussianHmm, obs) -> np.ndarray:
    x = np.asarray(obs, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ValueError(f"observations must be (T, {model.n_features}), got {x.shape}")
    if x.shape[0] < 1:
        raise ValueError("empty observation sequence")
    if not np.isfinite(x).all():
        raise ValueError("observations contain non-finite values")
    return x


def _log_densities(model: GaussianHmm, x: np.ndarray) -> np.ndarray:
    """Per-frame, per-state diagonal-Gaussian log densities, shape (T, S)."""
    diff = x[:, None, :] - model.means[None, :, :]
    quad = (diff**2 / model.variances[None, :, :]).sum(axis=2)
    norm = np.log(2 * np.pi * model.variances).sum(axis=1)
    return -0.5 * (quad + norm[None, :])


def _scaled_forward(model, logb):
    """Scaled forward pass; returns (alpha, per-step log scale, total loglik)."""
    t_len, s = logb.shape
    shift = logb.max(axis=1)
    b = np.exp(logb - shift[:, None])
    alpha = np.empty((t_len, s))
    logc = np.empty(t_len)
    a = model.initial * b[0]
    total = a.sum()
    alpha[0] = a / total
    logc[0] = np.log(total) + shift[0]
    for t in range(1, t_len):
        a = (alpha[t - 1] @ model.transition) * b[t]
        total = a.sum()
        alpha[t] = a / total
        logc[t] = np.log(total) + shift[t]
    return alpha, logc, float(logc.sum())


def log_likelihood(model: GaussianHmm, obs) -> float:
    """Forward-algorithm log P(obs | model)."""
    x = _check_obs(model, obs)
    _, _, total = _scaled_forward(model, _log_densities(model, x))
    return total


def viterbi(model: GaussianHmm, obs) -> np.ndarray:
    """Most likely state path; ties resolve toward the lower state index."""
    x = _check_obs(model, obs)
    logb = _log_densities(model, x)
    with np.errstate(divide="ignore"):
        log_init = np.log(model.initial)
        log_trans = np.log(model.transition)
    t_len, s = logb.shape
    delta = log_init + logb[0]
    back = np.zeros((t_len, s), dtype=np.int64)
    for t in range(1, t_len):
        scores = delta[:, None] + log_trans
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], np.arange(s)] + logb[t]
    path = np.empty(t_len, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(t_len - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def _kmeans_init(frames: np.ndarray, k: int, rng) -> np.ndarray:
    """A few Lloyd iterations from a seeded random subset of frames."""
    n = frames.shape[0]
    centers = frames[rng.choice(n, size=k, replace=False)].copy()
    for _ in range(10):
        dist = ((frames[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(dist, axis=1)
        for j in range(k):
            members = frames[assign == j]
            if members.shape[0]:
                centers[j] = members.mean(axis=0)
            else:
                centers[j] = frames[rng.integers(n)]
    return centers


def fit_hmm(
    sequences,
    n_states: int = 4,
    tol: float = 1e-4,
    max_iter: int = 100,
    seed: int = 0,
    label: str = "",
) -> GaussianHmm:
    """Baum-Welch fit over one or more observation sequences.

    Initialization is deterministic for a given seed: emission means come
    from a seeded k-means over all frames, variances from the per-cluster
    spread, the initial distribution is uniform, and the transition matrix
    is uniform with a boosted diagonal.  Iteration stops when the total
    log-likelihood improves by less than `tol` or after `max_iter` rounds;
    the per-iteration log-likelihoods are kept on the returned model.

    Emission variances are floored at VARIANCE_FLOOR, so degenerate
    (constant) inputs fit without failure.
    """
    seqs = [np.asarray(s, dtype=np.float64) for s in sequences]
    seqs = [s[:, None] if s.ndim == 1 else s for s in seqs]
    if not seqs:
        raise ValueError("need at least one observation sequence")
    dim = seqs[0].shape[1]
    for s in seqs:
        if s.ndim != 2 or s.shape[1] != dim:
            raise ValueError("observation sequences disagree on dimensionality")
        if s.shape[0] < n_states:
            raise ValueError("each sequence must be at least n_states long")
        if not np.isfinite(s).all():
            raise ValueError("observations contain non-finite values")
    if n_states < 1:
        raise ValueError("n_states must be >= 1")

    rng = np.random.default_rng(seed)
    frames = np.vstack(seqs)
    means = _kmeans_init(frames, n_states, rng)
    dist = ((frames[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    assign = np.argmin(dist, axis=1)
    variances = np.empty_like(means)
    global_var = np.maximum(frames.var(axis=0), VARIANCE_FLOOR)
    for j in range(n_states):
        members = frames[assign == j]
        variances[j] = members.var(axis=0) if members.shape[0] > 1 else global_var
    variances = np.maximum(variances, VARIANCE_FLOOR)
    initial = np.full(n_states, 1.0 / n_states)
    transition = np.full((n_states, n_states), 1.0)
    transition[np.diag_indices(n_states)] += 4.0
    transition /= transition.sum(axis=1, keepdims=True)

    model = GaussianHmm(initial, transition, means, variances, label=label)
    history: list[float] = []

    for _ in range(max_iter):
        init_acc = np.zeros(n_states)
        trans_acc = np.zeros((n_states, n_states))
        occ = np.zeros(n_states)
        mean_acc = np.zeros((n_states, dim))
        sq_acc = np.zeros((n_states, dim))
        total_ll = 0.0

        for x in seqs:
            logb = _log_densities(model, x)
            shift = logb.max(axis=1)
            b = np.exp(logb - shift[:, None])
            alpha, _, ll = _scaled_forward(model, logb)
            total_ll += ll

            t_len = x.shape[0]
            beta = np.empty((t_len, n_states))
            beta[-1] = 1.0
            for t in range(t_len - 2, -1, -1):
                v = model.transition @ (b[t + 1] * beta[t + 1])
                beta[t] = v / v.sum()

            gamma = alpha * beta
            gamma /= gamma.sum(axis=1, keepdims=True)

            init_acc += gamma[0]
            occ += gamma.sum(axis=0)
            mean_acc += gamma.T @ x
            sq_acc += gamma.T @ (x**2)
            for t in range(t_len - 1):
                xi = (
                    alpha[t][:, None]
                    * model.transition
                    * (b[t + 1] * beta[t + 1])[None, :]
                )
                trans_acc += xi / xi.sum()

        history.append(total_ll)
        if len(history) > 1 and abs(history[-1] - history[-2]) < tol:
            break

        # a state can lose all posterior mass (e.g. a k-means cluster that
        # matches nothing); its accumulators are then zero and the update
        # would divide 0/0, so dead states keep their previous parameters
        row_mass = trans_acc.sum(axis=1)
        dead = (row_mass <= 0) | (occ <= 0)
        if dead.any():
            trans_acc[dead] = model.transition[dead]
            row_mass = trans_acc.sum(axis=1)
            occ = np.where(dead, 1.0, occ)
            mean_acc[dead] = model.means[dead]
            sq_acc[dead] = model.variances[dead] + model.means[dead] ** 2
        initial = init_acc / init_acc.sum()
        transition = trans_acc / row_mass[:, None]
        means = mean_acc / occ[:, None]
        variances = np.maximum(sq_acc / occ[:, None] - means**2, VARIANCE_FLOOR)
        model = GaussianHmm(initial, transition, means, variances, label=label)

    model.fit_log_likelihoods = history
    return model


def sample_hmm(model: GaussianHmm, length: int, seed: int = 0):
    """Draw (observations, states) from the model's own generative process."""
    if length < 1:
        raise ValueError("length must be >= 1")
    rng = np.random.default_rng(seed)
    states = np.empty(length, dtype=np.int64)
    obs = np.empty((length, model.n_features))
    state = rng.choice(model.n_states, p=model.initial)
    for t in range(length):
        if t > 0:
            state = rng.choice(model.n_states, p=model.transition[state])
        states[t] = state
        obs[t] = model.means[state] + rng.standard_normal(model.n_features) * np.sqrt(
            model.variances[state]
        )
    return obs, states


def classify_activity(models, obs) -> ActivityLabel:
    """Label of the model with the highest log-likelihood for `obs`.

    `models` maps ActivityLabel -> GaussianHmm.  Ties resolve toward the
    earlier label in the ActivityLabel enumeration order.
    """
    if not models:
        raise ValueError("no models to classify against")
    best_label, best_ll = None, -np.inf
    for label in ActivityLabel:
        if label not in models:
            continue
        ll = log_likelihood(models[label], obs)
        if ll > best_ll:
            best_label, best_ll = label, ll
    if best_label is None:
        raise ValueError("models must be keyed by ActivityLabel")
    return best_label


class DoorEventDetector:
    """Debounces per-window labels into door events.

    An event fires once `debounce` consecutive windows carry the same door
    label (entering or leaving), at the window where the run reaches that
    length.  After firing, the detector stays quiet until a non-door label
    re-arms it; a change of door label restarts the run.
    """

    def __init__(self, debounce: int = 3):
        if debounce < 1:
            raise ValueError("debounce must be >= 1")
        self.debounce = debounce
        self._kind = None
        self._run = 0
        self._armed = True
        self._index = -1

    def push(self, label) -> DoorEvent | None:
        """Feed the next window's label; returns an event when one fires."""
        self._index += 1
        if label not in DOOR_LABELS:
            self._kind = None
            self._run = 0
            self._armed = True
            return None
        if label is self._kind:
            self._run += 1
        else:
            self._kind = label
            self._run = 1
        if self._armed and self._run >= self.debounce:
            self._armed = False
            kind = "enter" if label is ActivityLabel.ENTERING_ROOM else "leave"
            return DoorEvent(kind, self._index)
        return None


def detect_door_events(labels, debounce: int = 3) -> list[DoorEvent]:
    """Run the debouncer over a full label sequence."""
    detector = DoorEventDetector(debounce)
    events = []
    for label in labels:
        event = detector.push(label)
        if event is not None:
            events.append(event)
    return events


def save_hmm(model: GaussianHmm, path) -> None:
    """Write a model as a small versioned binary (little-endian f64 arrays)."""
    label_bytes = model.label.encode("utf-8")
    if len(label_bytes) > 255:
        raise ValueError("label exceeds 255 UTF-8 bytes")
    head = struct.pack(
        "<4sHHHB", MODEL_MAGIC, MODEL_VERSION, model.n_states, model.n_features,
        len(label_bytes),
    )
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(label_bytes)
        for arr in (model.initial, model.transition, model.means, model.variances):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_hmm(path) -> GaussianHmm:
    with open(path, "rb") as fh:
        raw = fh.read()
    head = struct.Struct("<4sHHHB")
    if len(raw) < head.size:
        raise ValueError("model file shorter than its header")
    magic, version, s, d, label_len = head.unpack(raw[: head.size])
    if magic != MODEL_MAGIC:
        raise ValueError(f"bad model magic {magic!r}")
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model version {version}")
    off = head.size + label_len
    label = raw[head.size : off].decode("utf-8")
    sizes = [s, s * s, s * d, s * d]
    if len(raw) - off != 8 * sum(sizes):
        raise ValueError("model payload size disagrees with header")
    arrays = []
    for n in sizes:
        arrays.append(np.frombuffer(raw, dtype="<f8", count=n, offset=off).copy())
        off += 8 * n
    return GaussianHmm(
        arrays[0],
        arrays[1].reshape(s, s),
        arrays[2].reshape(s, d),
        arrays[3].reshape(s, d),
        label=label,
    )
