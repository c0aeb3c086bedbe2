"""Command-line front end: every pipeline stage as a subcommand.

Subcommands: simulate, inject, preprocess, features, train-hmm, classify,
train-count, eval, online, gradcheck.  All randomness hangs off --seed, so
repeated invocations produce byte-identical primary outputs.  Results are
printed as key=value lines on stdout; logging goes to stderr at the level
named by the CSI_LOG_LEVEL environment variable (error, info, debug).

Exit codes: 0 success, 1 runtime failure (one-line diagnostic on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .capture import read_capture, split_streams, write_capture
from .counting import (
    REGIME_LEARNING_RATES,
    CountSession,
    Dataset,
    TrainConfig,
    activity_features_from_capture,
    count_windows_from_capture,
    evaluate,
    run_online,
    train,
)
from .hmm import (
    ActivityLabel,
    classify_activity,
    fit_hmm,
    load_hmm,
    log_likelihood,
    save_hmm,
)
from .neural import (
    build_cnn_lstm,
    build_cnn_lstm_toy,
    build_fcbp,
    finite_difference_check,
    load_network,
    save_network,
)
from .preprocess import (
    butterworth_lowpass,
    pca_denoise,
    sanitize_phase,
    weighted_moving_average,
)
from .sim import (
    PhaseDistortion,
    inject_phase_offsets,
    load_scene,
    make_count_scene,
    simulate_capture,
)
from .tensorfile import read_tensor, write_tensor
from .wavelet import feature_matrix_from_components

log = logging.getLogger("csicount")

NETWORK_BUILDERS = {
    "cnn-lstm": build_cnn_lstm,
    "cnn-lstm-toy": build_cnn_lstm_toy,
    "fcbp": build_fcbp,
}
# Sampling keeps the full-size checks inside a small time budget; the toy
# network is cheap enough to probe every parameter.
GRADCHECK_SAMPLES = {"cnn-lstm": 25, "fcbp": 60}
# Central differences on an O(1) loss carry ~1e-11 noise, so the bigger
# network gets a wider eps; input scale keeps activations away from
# rectifier boundaries where a one-sided difference would be meaningless.
GRADCHECK_EPS = {"cnn-lstm": 1e-6, "cnn-lstm-toy": 1e-5, "fcbp": 1e-5}
GRADCHECK_SCALE = {"cnn-lstm": 1.0, "cnn-lstm-toy": 3.0, "fcbp": 2.0}


def _setup_logging() -> None:
    name = os.environ.get("CSI_LOG_LEVEL", "error").strip().lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        stream=sys.stderr,
        level=levels.get(name, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load_manifest(path: str) -> tuple[dict, Path]:
    p = Path(path)
    with open(p, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: manifest must be a JSON object")
    return data, p.parent


def _cmd_simulate(args) -> int:
    if args.scene:
        scene = load_scene(args.scene)
    else:
        scene = make_count_scene(args.persons, seed=args.seed, noise_sigma=args.noise)
    capture = simulate_capture(scene, args.duration, rate_hz=args.rate, seed=args.seed)
    write_capture(capture, args.out)
    print(f"out={args.out}")
    print(f"frames={capture.n_frames}")
    print(f"persons={scene.n_persons}")
    return 0


def _cmd_inject(args) -> int:
    capture = read_capture(args.infile)
    distortion = PhaseDistortion(
        sfo_slope=args.slope, cfo_offset=args.offset, jitter_sigma=args.jitter
    )
    write_capture(inject_phase_offsets(capture, distortion, seed=args.seed), args.out)
    print(f"out={args.out}")
    return 0


def _cmd_preprocess(args) -> int:
    capture = read_capture(args.infile)
    amp, phase = split_streams(capture)
    if args.mode == "counting":
        out = np.hstack(
            [
                weighted_moving_average(amp.data),
                sanitize_phase(phase.data, capture.n_streams, capture.n_sub),
            ]
        )
    else:
        filtered = butterworth_lowpass(amp.data, capture.rate_hz, args.cutoff)
        out = pca_denoise(filtered, keep=args.keep)
    write_tensor(out, args.out)
    print(f"out={args.out}")
    print(f"shape={out.shape[0]}x{out.shape[1]}")
    return 0


def _cmd_features(args) -> int:
    components = read_tensor(args.infile)
    if components.ndim != 2:
        raise ValueError(f"{args.infile}: expected a 2-D tensor")
    matrix = feature_matrix_from_components(components, levels=args.levels)
    write_tensor(matrix.values, args.out)
    print(f"out={args.out}")
    print(f"shape={matrix.values.shape[0]}x{matrix.values.shape[1]}")
    return 0


def _cmd_train_hmm(args) -> int:
    manifest, base = _load_manifest(args.data)
    label = manifest.get("label", "")
    paths = manifest.get("captures")
    if not paths:
        raise ValueError(f"{args.data}: manifest needs a non-empty 'captures' list")
    sequences = []
    for rel in paths:
        capture = read_capture(base / rel)
        sequences.append(activity_features_from_capture(capture))
        log.info("loaded %s (%d frames)", rel, capture.n_frames)
    model = fit_hmm(
        sequences, n_states=args.states, seed=args.seed, label=label
    )
    save_hmm(model, args.out)
    print(f"out={args.out}")
    print(f"label={model.label}")
    print(f"states={model.n_states}")
    print(f"iterations={len(model.fit_log_likelihoods)}")
    print(f"log_likelihood={model.fit_log_likelihoods[-1]:.6f}")
    return 0


def _load_hmm_dir(path: str) -> dict:
    files = sorted(Path(path).glob("*.hmm"))
    if not files:
        raise ValueError(f"{path}: no .hmm model files found")
    models = {}
    for f in files:
        model = load_hmm(f)
        try:
            key = ActivityLabel(model.label)
        except ValueError:
            raise ValueError(
                f"{f}: model label {model.label!r} is not a known activity code"
            ) from None
        models[key] = model
    return models


def _cmd_classify(args) -> int:
    models = _load_hmm_dir(args.models)
    capture = read_capture(args.capture)
    features = activity_features_from_capture(capture)
    best = classify_activity(models, features)
    for key, model in models.items():
        log.debug("%s log_likelihood=%f", key.name, log_likelihood(model, features))
    print(f"label={best.value}")
    print(f"activity={best.name}")
    return 0


def _count_dataset(manifest_path: str, regime_flag: str | None) -> Dataset:
    manifest, base = _load_manifest(manifest_path)
    regime = regime_flag or manifest.get("regime", "fixed")
    items = manifest.get("items")
    if not items:
        raise ValueError(f"{manifest_path}: manifest needs a non-empty 'items' list")
    samples = []
    for item in items:
        capture = read_capture(base / item["path"])
        label = int(item["label"])
        for window in count_windows_from_capture(capture):
            samples.append((window, label))
        log.info("loaded %s label=%d", item["path"], label)
    return Dataset(samples, regime=regime)


def _cmd_train_count(args) -> int:
    dataset = _count_dataset(args.data, args.regime)
    lr = args.lr if args.lr is not None else REGIME_LEARNING_RATES[dataset.regime]
    network = NETWORK_BUILDERS[args.net](seed=args.seed)
    config = TrainConfig(
        batch_size=args.batch,
        learning_rate=lr,
        max_iterations=args.iters,
        seed=args.seed,
    )
    _, losses = train(network, dataset, config)
    save_network(network, args.out)
    print(f"out={args.out}")
    print(f"regime={dataset.regime}")
    print(f"learning_rate={lr}")
    print(f"iterations={len(losses)}")
    print(f"final_loss={losses[-1]:.6f}")
    print(f"best_loss={min(losses):.6f}")
    return 0


def _cmd_eval(args) -> int:
    network = load_network(args.ckpt)
    dataset = _count_dataset(args.data, None)
    matrix = evaluate(network, dataset)
    for i, row in enumerate(matrix.counts):
        print(f"confusion_row_{i + 1}=" + ",".join(str(int(v)) for v in row))
    print(f"samples={matrix.total}")
    print(f"accuracy={matrix.accuracy:.4f}")
    return 0


def _cmd_online(args) -> int:
    network = load_network(args.ckpt)
    models = _load_hmm_dir(args.hmm) if args.hmm else {}
    capture = read_capture(args.capture)
    session = CountSession(network, models, current_count=args.initial)
    timeline = run_online(session, capture)
    for step in timeline:
        activity = step.activity.value if step.activity else "-"
        event = step.event.kind if step.event else "-"
        print(
            f"window={step.window_index} sample={step.sample_index} "
            f"prediction={step.prediction} count={step.count} "
            f"activity={activity} event={event}"
        )
    print(f"final_count={session.current_count}")
    print(f"amendments={sum(1 for r in session.event_log if r.action == 'finetune')}")
    return 0


def _cmd_gradcheck(args) -> int:
    network = NETWORK_BUILDERS[args.net](seed=args.seed)
    rng = np.random.default_rng(args.seed + 1)
    scale = GRADCHECK_SCALE[args.net]
    if network.input_kind == "summary":
        x = rng.standard_normal((2, network.layers[0].dim)) * scale
    elif args.net == "cnn-lstm-toy":
        x = rng.standard_normal((2, 12, 20)) * scale
    else:
        x = rng.standard_normal((1, 200, 360)) * scale
    labels = 1 + np.arange(x.shape[0]) % 5
    eps = args.eps if args.eps is not None else GRADCHECK_EPS[args.net]
    err = finite_difference_check(
        network,
        x,
        labels,
        eps=eps,
        max_per_array=GRADCHECK_SAMPLES.get(args.net),
    )
    print(f"net={args.net}")
    print(f"max_rel_err={err:.3e}")
    if not err < args.tol:
        raise RuntimeError(f"gradient check failed: {err:.3e} >= {args.tol}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csicount",
        description="WiFi channel-state crowd counting and activity pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("simulate", help="synthesize a capture from a multipath scene")
    p.add_argument("--persons", type=int, default=0, help="moving people in the room")
    p.add_argument("--duration", type=float, required=True, help="seconds of capture")
    p.add_argument("--rate", type=float, default=1500.0, help="packets per second")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=None, help="complex noise sigma")
    p.add_argument("--scene", default=None, help="scene description file (overrides --persons)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("inject", help="add hardware-style phase errors to a capture")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--slope", type=float, default=0.0, help="rad per subcarrier index")
    p.add_argument("--offset", type=float, default=0.0, help="constant phase, rad")
    p.add_argument("--jitter", type=float, default=0.0, help="per-packet phase noise sigma")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_inject)

    p = sub.add_parser("preprocess", help="denoise a capture into a tensor file")
    p.add_argument("--mode", choices=("activity", "counting"), required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--cutoff", type=float, default=200.0, help="low-pass cutoff, Hz (activity)")
    p.add_argument("--keep", type=int, default=10, help="retained components (activity)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("features", help="wavelet energy/variance features from components")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--levels", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("train-hmm", help="fit one activity model from a capture manifest")
    p.add_argument("--data", required=True, help='JSON {"label": code, "captures": [...]}')
    p.add_argument("--states", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_hmm)

    p = sub.add_parser("classify", help="label a capture with the best-scoring model")
    p.add_argument("--models", required=True, help="directory of .hmm files")
    p.add_argument("--capture", required=True)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("train-count", help="train a counting network from a manifest")
    p.add_argument("--data", required=True, help='JSON {"regime": r, "items": [{"path","label"}]}')
    p.add_argument("--regime", choices=("fixed", "semi", "open"), default=None)
    p.add_argument("--net", choices=sorted(NETWORK_BUILDERS), default="cnn-lstm")
    p.add_argument("--lr", type=float, default=None, help="default: per-regime rate")
    p.add_argument("--iters", type=int, default=3000)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_count)

    p = sub.add_parser("eval", help="confusion matrix of a checkpoint on a manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("online", help="run the fused counting session over a capture")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--hmm", default=None, help="directory of .hmm files")
    p.add_argument("--capture", required=True)
    p.add_argument("--initial", type=int, default=0, help="count before the session")
    p.set_defaults(func=_cmd_online)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--net", choices=sorted(NETWORK_BUILDERS), default="cnn-lstm-toy")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--eps", type=float, default=None, help="default: per-net step")
    p.add_argument("--seed", type=int, default=4, help="default sits at a clean evaluation point")
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except (OSError, ValueError, RuntimeError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        log.debug("failure detail", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
