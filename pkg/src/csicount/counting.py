"""Crowd-count training, evaluation, and the online amendment session.

Offline: minibatch SGD with a seeded shuffle, per-iteration loss curve,
and best-loss parameter restore; evaluation produces a 5x5 confusion
matrix.  Online: captures are cut into non-overlapping windows; each
window is counted by the network while a parallel activity branch
(low-pass -> PCA -> wavelet features -> HMM) watches for door events.
When a door event contradicts the prediction, the window is relabeled
with the event-implied count and only the final dense layer is
fine-tuned — every other parameter stays bitwise identical.

Counts are 1..5 (the classifier head's range).  A session's tracked count
may still reach 0 when someone leaves an empty-looking room; labels are
clamped into 1..5 and the clamping is logged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .capture import CsiCapture, split_streams
from .hmm import ActivityLabel, DoorEvent, DoorEventDetector, classify_activity
from .neural import Network, finetune_last_dense
from .preprocess import (
    CsiWindow,
    build_count_sample,
    butterworth_lowpass,
    pca_denoise,
    sanitize_phase,
    weighted_moving_average,
)
from .wavelet import feature_matrix_from_components

N_CLASSES = 5
WINDOW_LEN = 200
ACTIVITY_HISTORY = 1024  # samples of amplitude fed to the activity branch
ACTIVITY_CUTOFF_HZ = 200.0
ACTIVITY_LEVELS = 10
ACTIVITY_FEATURE_WINDOW = 128

REGIMES = ("fixed", "semi", "open")
# Per-regime learning rates: scripted rooms tolerate the largest steps.
REGIME_LEARNING_RATES = {"fixed": 0.2, "open": 0.15, "semi": 0.1}


@dataclass(frozen=True)
class Dataset:
    """Labeled count windows under one collection regime."""

    samples: tuple
    regime: str = "fixed"

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        for window, label in self.samples:
            if not isinstance(window, CsiWindow):
                raise TypeError("samples must pair CsiWindow with an int label")
            if not 1 <= int(label) <= N_CLASSES:
                raise ValueError(f"count label {label} outside 1..{N_CLASSES}")

    def __len__(self):
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(lab) for _, lab in self.samples], dtype=np.int64)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 0.2
    max_iterations: int = 3000
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true labels 1..5, columns are predictions."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (N_CLASSES, N_CLASSES) or (counts < 0).any():
            raise ValueError("confusion matrix must be 5x5 with nonnegative counts")
        counts = counts.copy()
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        total = self.total
        return float(np.trace(self.counts)) / total if total else 0.0


def _net_input(network: Network, window: CsiWindow) -> np.ndarray:
    if network.input_kind == "summary":
        return window.column_mean[None, :]
    return np.asarray(window.values, dtype=np.float64)[None, :, :]


def _stack_inputs(network: Network, windows) -> np.ndarray:
    if network.input_kind == "summary":
        return np.stack([w.column_mean for w in windows])
    return np.stack([np.asarray(w.values, dtype=np.float64) for w in windows])


def train(network: Network, dataset: Dataset, config: TrainConfig):
    """Seeded shuffled minibatch SGD; restores the best-loss parameters.

    Returns (network, per-iteration loss list).  "Best" is judged by the
    mean batch loss of each pass over the data, and the parameter vector
    from the end of the best pass is restored before returning.  A
    non-finite loss aborts with RuntimeError.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    windows = [w for w, _ in dataset.samples]
    labels = dataset.labels
    n = len(labels)
    rng = np.random.default_rng(config.seed)
    losses = []
    best_loss = np.inf
    best_params = None
    iteration = 0
    while iteration < config.max_iterations:
        order = rng.permutation(n)
        epoch = []
        for start in range(0, n, config.batch_size):
            if iteration >= config.max_iterations:
                break
            sel = order[start : start + config.batch_size]
            x = _stack_inputs(network, [windows[i] for i in sel])
            loss, _ = network.loss_and_gradients(x, labels[sel], training=True)
            if not np.isfinite(loss):
                raise RuntimeError(f"training diverged at iteration {iteration}: loss={loss}")
            network.sgd_step(config.learning_rate)
            losses.append(float(loss))
            epoch.append(float(loss))
            iteration += 1
        mean_loss = float(np.mean(epoch))
        if mean_loss < best_loss:
            best_loss = mean_loss
            best_params = network.get_param_vector()
    if best_params is not None:
        network.set_param_vector(best_params)
    return network, losses


def evaluate(network: Network, dataset: Dataset, batch_size: int = 64) -> ConfusionMatrix:
    """Confusion matrix of predictions over the dataset (dropout off)."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    windows = [w for w, _ in dataset.samples]
    labels = dataset.labels
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for start in range(0, len(labels), batch_size):
        chunk = windows[start : start + batch_size]
        probs = network.forward(_stack_inputs(network, chunk), training=False)
        pred = probs.argmax(axis=1)
        for true, p in zip(labels[start : start + batch_size], pred):
            counts[true - 1, p] += 1
    return ConfusionMatrix(counts)


def predict_count(network: Network, window: CsiWindow):
    """(most probable count, probability vector); ties pick the smaller count."""
    probs = network.forward(_net_input(network, window), training=False)[0]
    return int(probs.argmax()) + 1, probs


@dataclass
class SessionRecord:
    """One event-log entry of an online session."""

    time_index: int
    prediction: int
    event: DoorEvent | None
    action: str  # "none" | "skip" | "finetune"
    count_before: int
    count_after: int
    label: int | None = None  # fine-tune label when one was applied
    clamped: bool = False


@dataclass
class CountSession:
    """Mutable online-counting state fusing the network with door events.

    Only the final dense layer may change during a session (via the
    amendment fine-tune); current_count may be 0 even though the network
    can only express 1..5.
    """

    network: Network
    hmm_models: dict = field(default_factory=dict)
    current_count: int = 0
    finetune_lr: float = 0.01
    finetune_steps: int = 5
    event_log: list = field(default_factory=list)

    def __post_init__(self):
        if self.current_count < 0:
            raise ValueError("current_count must be >= 0")
        if self.finetune_lr <= 0 or self.finetune_steps < 1:
            raise ValueError("fine-tune settings must be positive")


def amend_and_finetune(
    session: CountSession,
    sample: CsiWindow,
    event: DoorEvent | None,
    time_index: int = 0,
) -> int:
    """Fuse one window's prediction with an optional door event.

    With no event the network's prediction is trusted as-is.  With an
    event the count becomes current+1 (enter) or current-1 (leave, floored
    at 0); if the network disagrees with that count (clamped into 1..5,
    since the head cannot express 0), the window is relabeled and the
    final dense layer alone is fine-tuned on it.
    """
    before = session.current_count
    prediction, _ = predict_count(session.network, sample)
    if event is None:
        session.current_count = prediction
        session.event_log.append(
            SessionRecord(time_index, prediction, None, "none", before, prediction)
        )
        return prediction
    if event.kind == "enter":
        expected = before + 1
    else:
        expected = max(before - 1, 0)
    clamped_label = min(max(expected, 1), N_CLASSES)
    clamped = clamped_label != expected
    expected = min(expected, N_CLASSES)  # the head caps what a room can show
    if prediction == clamped_label:
        action = "skip"
    else:
        finetune_last_dense(
            session.network,
            _net_input(session.network, sample),
            clamped_label,
            lr=session.finetune_lr,
            steps=session.finetune_steps,
        )
        action = "finetune"
    session.current_count = expected
    session.event_log.append(
        SessionRecord(
            time_index, prediction, event, action, before, expected, clamped_label, clamped
        )
    )
    return expected


def count_windows_from_capture(
    capture: CsiCapture, window_len: int = WINDOW_LEN, stride: int | None = None
) -> list:
    """Cut a capture into standardized count windows.

    Amplitude is smoothed with the weighted moving average and phase is
    sanitized once over the whole capture (both are causal/per-sample, so
    this matches streaming), then non-overlapping windows are standardized
    per column.
    """
    if stride is None:
        stride = window_len
    amp, phase = split_streams(capture)
    if capture.n_frames < window_len:
        raise ValueError(
            f"capture has {capture.n_frames} frames; needs at least {window_len}"
        )
    amp_s = weighted_moving_average(amp.data)
    phase_s = sanitize_phase(phase.data, capture.n_streams, capture.n_sub)
    out = []
    for start in range(0, capture.n_frames - window_len + 1, stride):
        stop = start + window_len
        out.append(build_count_sample(amp_s[start:stop], phase_s[start:stop]))
    return out


def activity_features(amplitude: np.ndarray, rate_hz: float) -> np.ndarray:
    """Feature sequence (n_windows, 2*levels) from an amplitude matrix.

    Low-pass -> PCA denoise -> per-level wavelet energy/variance features,
    averaged over the retained components.  Needs at least 2**levels rows.
    """
    amplitude = np.asarray(amplitude, dtype=np.float64)
    if amplitude.shape[0] < 2**ACTIVITY_LEVELS:
        raise ValueError(
            f"activity branch needs >= {2**ACTIVITY_LEVELS} samples, got {amplitude.shape[0]}"
        )
    filtered = butterworth_lowpass(amplitude, rate_hz, ACTIVITY_CUTOFF_HZ)
    components = pca_denoise(filtered)
    matrix = feature_matrix_from_components(
        components, levels=ACTIVITY_LEVELS, window=ACTIVITY_FEATURE_WINDOW
    )
    return matrix.values.T.copy()


def activity_features_from_capture(capture: CsiCapture) -> np.ndarray:
    amp, _ = split_streams(capture)
    return activity_features(amp.data, capture.rate_hz)


@dataclass(frozen=True)
class OnlineStep:
    """Timeline entry for one online window."""

    window_index: int
    sample_index: int  # capture sample position at the window's end
    prediction: int
    count: int
    activity: ActivityLabel | None
    event: DoorEvent | None


def run_online(session: CountSession, capture: CsiCapture) -> list:
    """Run the fused online pipeline over one capture.

    Consecutive non-overlapping windows are counted; in parallel the
    trailing amplitude history feeds the activity classifier, whose
    debounced door events drive count amendments.  Returns one OnlineStep
    per window; windows before enough history has accumulated carry
    activity None.
    """
    if capture.n_frames < WINDOW_LEN:
        raise ValueError(
            f"capture has {capture.n_frames} frames; one window needs {WINDOW_LEN}"
        )
    amp, _ = split_streams(capture)
    windows = count_windows_from_capture(capture)
    detector = DoorEventDetector()
    timeline = []
    for i, window in enumerate(windows):
        end = i * WINDOW_LEN + WINDOW_LEN
        activity = None
        if session.hmm_models and end >= ACTIVITY_HISTORY:
            history = amp.data[end - ACTIVITY_HISTORY : end]
            features = activity_features(history, capture.rate_hz)
            activity = classify_activity(session.hmm_models, features)
        event = detector.push(activity)
        count = amend_and_finetune(session, window, event, time_index=i)
        timeline.append(
            OnlineStep(i, end, session.event_log[-1].prediction, count, activity, event)
        )
    return timeline
