"""Command-line front end.

Verbs: train, play, plot, count-params, env-check.  Exit codes: 0 success,
2 configuration error, 3 runtime error, 4 external-protocol error.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import attention as att
from . import envs, pipeline
from .config import load_config, save_config, RunConfig
from .errors import (
    ConfigError,
    EnvTimeout,
    ModelEnvMismatch,
    ModelParseError,
    ProtocolError,
    SeesawError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_PROTOCOL = 4


def _env_factory(cfg):
    section = cfg.env

    def factory():
        return envs.make_env(section.name, max_frames=section.max_frames,
                             executable=section.executable,
                             timeout=section.timeout,
                             failure_fitness=section.failure_fitness) \
            if section.name == "external" else \
            envs.make_env(section.name, max_frames=section.max_frames)
    return factory


def _protocol(cfg, trials=None):
    return pipeline.EvaluationProtocol(
        root_seed=cfg.seed,
        trials=trials or cfg.pipeline.trials,
        frame_limit=cfg.env.max_frames,
        seed_mode=cfg.pipeline.seed_mode)


def _log(out_dir, message):
    stamp = time.strftime("%Y-%m-%d %H:%M:%S")
    with open(os.path.join(out_dir, "run.log"), "a") as f:
        f.write(f"{stamp} {message}\n")
    print(message)


def cmd_train(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.trials is not None:
        cfg.pipeline.trials = args.trials
    os.makedirs(cfg.out, exist_ok=True)
    save_config(cfg, os.path.join(cfg.out, "config.json"))

    protocol = _protocol(cfg)
    factory = _env_factory(cfg)
    _log(cfg.out, f"stage 1: {cfg.pipeline.generations} generations, "
                  f"seed {cfg.seed}")
    trainer, model = pipeline.train_stage1(
        cfg.neat, cfg.attention, factory, protocol,
        generations=cfg.pipeline.generations,
        cma_population=cfg.cmaes.population_size,
        cma_sigma=cfg.cmaes.init_sigma,
        checkpoint_dir=os.path.join(cfg.out, "checkpoints"),
        resume=args.resume)
    ledger_rows = list(trainer.ledger)
    _log(cfg.out, f"stage 1 done: best fitness {model.fitness}")

    if not args.stage1_only:
        _log(cfg.out, f"stage 2: {cfg.pipeline.stage2_generations} generations")
        model = pipeline.tune_stage2(
            model, factory, protocol,
            budget=cfg.pipeline.stage2_generations,
            cma_population=cfg.cmaes.population_size,
            cma_sigma=cfg.cmaes.init_sigma,
            trace_path=os.path.join(cfg.out, "stage2_trace.csv"),
            ledger=ledger_rows)
        _log(cfg.out, f"stage 2 done: best fitness {model.fitness}")

    ledger_path = os.path.join(cfg.out, "ledger.csv")
    pipeline.write_ledger(ledger_path, ledger_rows)
    model.save(os.path.join(cfg.out, "model.json"))
    _plot_ledgers([ledger_path], os.path.join(cfg.out, "fitness"))
    _log(cfg.out, f"artifacts written to {cfg.out}")
    return EXIT_OK


def _load_model(path):
    try:
        return pipeline.FinalModel.load(path)
    except (OSError, ValueError, KeyError, SeesawError) as e:
        raise ModelParseError(f"cannot load model {path}: {e}")


def cmd_play(args):
    model = _load_model(args.model)
    env = envs.make_env(args.env, executable=args.executable)
    try:
        if env.spec.actions != len(model.genome.output_ids()):
            raise ModelEnvMismatch(
                f"model has {len(model.genome.output_ids())} outputs, env "
                f"{args.env} has {env.spec.actions} actions")
        encoder = pipeline.ObservationEncoder(
            model.attention_params(), model.attention_config)
        if args.dump_frames:
            os.makedirs(args.dump_frames, exist_ok=True)
        scores = []
        from .neat import Network
        for ep in range(args.episodes):
            seed = pipeline.derive_seed(args.seed, ep)
            net = Network(model.genome)
            frame = env.reset(seed)
            total, step = 0.0, 0
            done = False
            while not done and step < env.spec.max_frames:
                if args.dump_frames:
                    grid = att.extract_patches(frame.data, model.attention_config)
                    ranking = att.score_patches(
                        grid, model.attention_params(), model.attention_config)
                    overlay = att.draw_topk_overlay(
                        frame.data, ranking, grid, model.attention_config)
                    att.write_ppm(os.path.join(
                        args.dump_frames, f"ep{ep:03d}_f{step:04d}.ppm"), overlay)
                action = int(np.argmax(net.activate(encoder(frame.data))))
                result = env.step(action)
                total += result.reward
                frame = result.frame
                done = result.done
                step += 1
            scores.append(total)
        scores = np.asarray(scores)
        print(f"episodes: {len(scores)}")
        print(f"mean: {scores.mean():.4f}")
        print(f"std: {scores.std():.4f}")
    finally:
        env.close()
    return EXIT_OK


def _plot_ledgers(paths, out_prefix):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ledgers = [(path, pipeline.read_ledger(path)) for path in paths]
    written = []
    for stage in (1, 2):
        series = []
        for path, rows in ledgers:
            rows = [r for r in rows if r["stage"] == stage
                    and (stage == 2 or r["phase"] == "B")]
            if rows:
                series.append((path, rows))
        if not series:
            continue
        fig, ax = plt.subplots(figsize=(7, 4))
        for path, rows in series:
            gens = [r["generation"] for r in rows]
            label = os.path.basename(path) if len(series) > 1 else None
            suffix = f" ({label})" if label else ""
            ax.plot(gens, [r["best"] for r in rows], label=f"best{suffix}")
            ax.plot(gens, [r["mean"] for r in rows], label=f"mean{suffix}")
        ax.set_xlabel("generation")
        ax.set_ylabel("fitness")
        ax.set_title(f"stage {stage}")
        ax.legend()
        out = f"{out_prefix}_stage{stage}.svg"
        fig.savefig(out)
        plt.close(fig)
        written.append(out)
    return written


def cmd_plot(args):
    out_prefix = args.out or os.path.splitext(args.ledger[0])[0]
    written = _plot_ledgers(args.ledger, out_prefix)
    for path in written:
        print(path)
    return EXIT_OK


def cmd_count_params(args):
    model = _load_model(args.model)
    counts = pipeline.count_parameters(model)
    print(f"attention: {counts['attention']}")
    print(f"genome weights: {counts['genome_weights']}")
    print(f"genome biases: {counts['genome_biases']}")
    print(f"total: {counts['total']}")
    return EXIT_OK


def cmd_env_check(args):
    env = envs.ExternalEnv(args.executable, timeout=args.timeout)
    try:
        spec = env.spec
        print(f"spec: {spec.name} {spec.height}x{spec.width} "
              f"{spec.actions} actions, {spec.max_frames} max frames")
        frame = env.reset(0)
        assert frame.data.shape == (spec.height, spec.width, 3)
        result = env.step(0)
        print(f"step ok: reward={result.reward} done={result.done}")
        print("protocol check passed")
    finally:
        env.close()
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="seesaw-neat",
        description="Self-attention NEAT training toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run stage-1 Seesaw then stage-2 tuning")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int, help="root seed override")
    p.add_argument("--out", help="output directory override")
    p.add_argument("--resume", help="resume from a checkpoint file")
    p.add_argument("--stage1-only", action="store_true",
                   help="skip stage-2 weight tuning")
    p.add_argument("--trials", type=int, help="trials per individual override")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("play", help="replay a trained model and report scores")
    p.add_argument("model")
    p.add_argument("--env", default="patch_chase")
    p.add_argument("--executable", help="external env executable")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump-frames", metavar="DIR",
                   help="write attention-overlay PPM images here")
    p.set_defaults(func=cmd_play)

    p = sub.add_parser("plot", help="render fitness curves from ledger files")
    p.add_argument("ledger", nargs="+")
    p.add_argument("--out", help="output file prefix")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("count-params", help="report learnable parameter counts")
    p.add_argument("model")
    p.set_defaults(func=cmd_count_params)

    p = sub.add_parser("env-check",
                       help="validate an external env against the wire protocol")
    p.add_argument("executable", nargs="+",
                   help="server command (use -- before it if it takes flags)")
    p.add_argument("--timeout", type=float, default=10.0)
    p.set_defaults(func=cmd_env_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProtocolError, EnvTimeout) as e:
        print(f"protocol error: {e}", file=sys.stderr)
        return EXIT_PROTOCOL
    except SeesawError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
