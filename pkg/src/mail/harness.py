"""Command-line entry point, run configuration and metrics files."""
import argparse
import csv
import dataclasses
import logging
import os
import sys

import numpy as np

from . import gradcheck
from .baselines import BcConfig, MfConfig, train_bc, train_mf
from .envs import generate_expert_dataset, lqr_expert, make_env, occupancy, optimal_discriminator
from .numerics import Rng
from .policy import GaussianPolicy
from .replay import ExpertDataset
from .trainer import METRIC_FIELDS, MailConfig, NumericalFailure, Reference, evaluate, MailTrainer

log = logging.getLogger("mail")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (tuple, list)):
        return ":".join(fmt(x) for x in v)
    return str(v)


class MetricsWriter:
    """metrics.csv with a fixed header; flushed after every row."""

    def __init__(self, path):
        self.fh = open(path, "w", newline="", encoding="utf-8")
        self.w = csv.writer(self.fh, lineterminator="\n")
        self.w.writerow(METRIC_FIELDS)
        self.fh.flush()
        self._last_total = -1

    def write(self, row):
        if row["env_transitions_total"] < self._last_total:
            raise ValueError("env_transitions_total must be non-decreasing")
        self._last_total = row["env_transitions_total"]
        self.w.writerow([fmt(row.get(k)) for k in METRIC_FIELDS])
        self.fh.flush()

    def close(self):
        self.fh.close()


def read_config_file(path):
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def write_config_echo(path, items):
    with open(path, "w", encoding="utf-8") as fh:
        for k in sorted(items):
            fh.write(f"{k}={fmt(items[k])}\n")


def parse_ratio(text):
    parts = tuple(int(p) for p in str(text).split(":"))
    if len(parts) != 3:
        raise ValueError("update ratio must look like P:D:F, e.g. 3:1:1")
    return parts


def parse_bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_hidden(text):
    if isinstance(text, tuple):
        return text
    return tuple(int(p) for p in str(text).replace("x", ":").split(":"))


# option name -> parser; CLI flags use dashes, config files either form
OPTIONS = {
    "env": str, "seed": int, "expert": str, "out": str,
    "gamma": float, "horizon": int, "budget_traj": int,
    "policy_lr": float, "disc_lr": float, "fwd_lr": float,
    "update_ratio": parse_ratio, "entropy_weight": float, "clip_norm": float,
    "expert_noise_std": float, "eval_episodes": int, "bc_warmstart": parse_bool,
    "eval_every": int, "steps_per_unit": int, "batch_size": int,
    "traj_per_update": int, "epochs": int, "checkpoint_every": int,
    "policy_hidden": parse_hidden, "disc_hidden": parse_hidden, "fwd_hidden": parse_hidden,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def build_parser():
    p = _Parser(prog="mail", description="Model-based adversarial imitation learning")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, training=True):
        sp.add_argument("--config", help="flat key=value file; flags override it")
        sp.add_argument("--env", default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--seeds", default=None, help="comma-separated seeds, one run each")
        sp.add_argument("--out", default=None)
        if training:
            sp.add_argument("--expert", default=None)
            sp.add_argument("--eval-episodes", type=int, default=None)
            sp.add_argument("--wall-clock", action="store_true",
                            help="fill wall_ms (makes metrics.csv non-reproducible)")

    g = sub.add_parser("gen-expert", help="write an LQR expert dataset as CSV")
    common(g, training=False)
    g.add_argument("--n-traj", type=int, default=25)
    g.add_argument("--horizon", type=int, default=None)
    g.add_argument("--action-noise-std", type=float, default=0.05)

    for name in ("train-mail", "train-mf"):
        t = sub.add_parser(name)
        common(t)
        for flag, typ in [("--gamma", float), ("--horizon", int), ("--budget-traj", int),
                          ("--policy-lr", float), ("--disc-lr", float), ("--clip-norm", float),
                          ("--expert-noise-std", float), ("--eval-every", int),
                          ("--batch-size", int)]:
            t.add_argument(flag, type=typ, default=None)
        if name == "train-mail":
            t.add_argument("--fwd-lr", type=float, default=None)
            t.add_argument("--update-ratio", default=None, help="policy:disc:fwd, default 3:1:1")
            t.add_argument("--steps-per-unit", type=int, default=None)
            t.add_argument("--entropy-weight", type=float, default=None)
            t.add_argument("--bc-warmstart", action="store_const", const="true", default=None)
            t.add_argument("--checkpoint-every", type=int, default=None)
        else:
            t.add_argument("--traj-per-update", type=int, default=None)

    b = sub.add_parser("train-bc")
    common(b)
    b.add_argument("--epochs", type=int, default=None)
    b.add_argument("--policy-lr", type=float, default=None)
    b.add_argument("--batch-size", type=int, default=None)

    e = sub.add_parser("eval", help="mean/std true return of a saved policy")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--env", default="linear2d")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--eval-episodes", type=int, default=100)
    e.add_argument("--horizon", type=int, default=None)

    c = sub.add_parser("gradcheck", help="finite-difference check of every derivative")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--n-seeds", type=int, default=20)

    o = sub.add_parser("oracle-d", help="dump the exact optimal discriminator table")
    o.add_argument("--env", default="grid5x5")
    o.add_argument("--out", default=None)
    return p


def resolve(args):
    """Defaults < config file < flags. Returns a flat dict of options."""
    opts = {}
    if getattr(args, "config", None):
        for k, v in read_config_file(args.config).items():
            if k not in OPTIONS:
                raise UsageError(f"unknown config key {k!r}")
            opts[k] = OPTIONS[k](v)
    for k, v in vars(args).items():
        if v is None or k in ("command", "config", "seeds"):
            continue
        opts[k] = OPTIONS[k](v) if k in OPTIONS and isinstance(v, str) else v
    return opts


def _apply(cfg_cls, opts, renames=None):
    renames = renames or {}
    names = {f.name for f in dataclasses.fields(cfg_cls)}
    kw = {}
    for k, v in opts.items():
        k = renames.get(k, k)
        if k in names:
            kw[k] = v
    return cfg_cls(**kw)


def _linear_env(opts):
    name = opts.get("env", "linear2d")
    if name != "linear2d":
        raise UsageError(f"training needs a continuous environment; got {name!r}")
    kw = {"horizon": opts["horizon"]} if "horizon" in opts else {}
    return make_env(name, **kw)


def _load_expert(opts):
    path = opts.get("expert")
    if not path:
        raise UsageError("--expert is required")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"expert dataset not found: {path}")
    return ExpertDataset.from_csv(path)


def _prepare_out(opts):
    out = opts.get("out")
    if not out:
        raise UsageError("--out is required")
    os.makedirs(out, exist_ok=True)
    return out


def run_training(command, opts):
    seed = opts.get("seed")
    if seed is None:
        raise UsageError("--seed is required (runs are never seeded from the clock)")
    env = _linear_env(opts)
    expert = _load_expert(opts)
    out = _prepare_out(opts)
    rng = Rng(seed)
    ref = Reference.compute(env, lqr_expert(env))
    echo = {"command": command, **opts}
    writer = MetricsWriter(os.path.join(out, "metrics.csv"))
    wall = bool(opts.get("wall_clock"))
    try:
        if command == "train-mail":
            cfg = _apply(MailConfig, opts)
            echo.update(dataclasses.asdict(cfg))
            write_config_echo(os.path.join(out, "config.echo"), echo)
            every = opts.get("checkpoint_every", 100)
            trainer = MailTrainer(cfg, env, expert, rng, on_row=writer.write, wall_clock=wall)
            while trainer.iteration < cfg.budget_traj:
                trainer.step()
                if every and trainer.iteration % every == 0:
                    _save_mail(out, trainer)
            _save_mail(out, trainer)
            policy = trainer.policy
        elif command == "train-mf":
            cfg = _apply(MfConfig, opts)
            echo.update(dataclasses.asdict(cfg))
            write_config_echo(os.path.join(out, "config.echo"), echo)
            res = train_mf(cfg, env, expert, rng, on_row=writer.write, wall_clock=wall)
            policy = res.policy
            policy.save(os.path.join(out, "policy.ckpt"))
            res.discr.save(os.path.join(out, "discriminator.ckpt"))
        else:
            cfg = _apply(BcConfig, opts, renames={"policy_lr": "lr"})
            echo.update(dataclasses.asdict(cfg))
            write_config_echo(os.path.join(out, "config.echo"), echo)
            policy = GaussianPolicy.build(env.state_dim, env.action_dim, MailConfig.policy_hidden, rng)
            hist = train_bc(policy, expert, cfg, rng)
            mean, std = evaluate(policy, env, opts.get("eval_episodes", 10), rng.spawn())
            # BC has no adversarial metrics and never touches the environment
            for i, nll in enumerate(hist, 1):
                last = i == len(hist)
                writer.write({"iteration": i, "env_transitions_total": 0,
                              "mean_true_return": mean if last else None,
                              "std_true_return": std if last else None})
            policy.save(os.path.join(out, "policy.ckpt"))
    finally:
        writer.close()
    mean, std = evaluate(policy, env, opts.get("eval_episodes", 10), Rng(seed + 1))
    print(f"{command} seed={seed}: mean_true_return={mean:.6g} std={std:.6g} "
          f"score={ref.score(mean):.4f} (expert={ref.expert_return:.6g})")


def _save_mail(out, trainer):
    trainer.policy.save(os.path.join(out, "policy.ckpt"))
    trainer.discr.save(os.path.join(out, "discriminator.ckpt"))
    trainer.fwd.save(os.path.join(out, "forward_model.ckpt"))


def cmd_gen_expert(opts):
    env = _linear_env(opts)
    out = opts.get("out")
    if not out:
        raise UsageError("--out is required")
    seed = opts.get("seed")
    if seed is None:
        raise UsageError("--seed is required")
    ds = generate_expert_dataset(env, lqr_expert(env), opts.get("n_traj", 25), Rng(seed),
                                 opts.get("action_noise_std", 0.05))
    ds.to_csv(out)
    print(f"wrote {ds.n_traj} trajectories of length {env.horizon} to {out}")


def cmd_eval(args):
    if not os.path.isfile(args.checkpoint):
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    policy = GaussianPolicy.load(args.checkpoint)
    opts = {"env": args.env}
    if args.horizon:
        opts["horizon"] = args.horizon
    env = _linear_env(opts)
    mean, std = evaluate(policy, env, args.eval_episodes, Rng(args.seed))
    ref = Reference.compute(env, lqr_expert(env))
    print(f"mean_true_return={mean:.17g} std_true_return={std:.17g} score={ref.score(mean):.6f}")


def cmd_gradcheck(args):
    results = gradcheck.run_suite(args.seed, args.n_seeds)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name:<28} max_rel_err={r.max_rel_err:.3e} tol={r.tol:.0e}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def cmd_oracle_d(args):
    mdp = make_env(args.env)
    if not hasattr(mdp, "P"):
        raise UsageError("oracle-d needs a tabular environment (grid5x5)")
    ratio, joint = optimal_discriminator(mdp)
    d_pi, d_e = occupancy(mdp, mdp.policy), occupancy(mdp, mdp.expert)
    fh = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        fh.write("s,a,d_star,d_star_joint,visit_policy,visit_expert\n")
        for s in range(mdp.n_states):
            for a in range(mdp.n_actions):
                fh.write(",".join(fmt(v) for v in (s, a, ratio[s, a], joint[s, a],
                                                   d_pi[s] * mdp.policy[s, a],
                                                   d_e[s] * mdp.expert[s, a])) + "\n")
    finally:
        if args.out:
            fh.close()


def cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        if args.command == "gradcheck":
            return cmd_gradcheck(args)
        if args.command == "oracle-d":
            cmd_oracle_d(args)
            return EXIT_OK
        if args.command == "eval":
            cmd_eval(args)
            return EXIT_OK
        opts = resolve(args)
        if args.command == "gen-expert":
            cmd_gen_expert(opts)
            return EXIT_OK
        seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [opts.get("seed")]
        base_out = opts.get("out")
        for s in seeds:
            o = dict(opts, seed=s)
            if args.seeds and base_out:
                o["out"] = os.path.join(base_out, f"seed_{s}")
            run_training(args.command, o)
        return EXIT_OK
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


def main():
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(cli())


if __name__ == "__main__":
    main()
