"""Command-line entry point: ``gailee {train,eval,generate-data,grad-check,inspect-rewards}``.

Exit codes: 0 success, 1 runtime failure (or a failed gradient check),
2 bad usage, bad configuration or bad input files.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import numerics as F
from .config import ENTITY_MODES, REWARD_MODES, ConfigError, TrainConfig, load_config
from .data import (LABELING_SCHEMAS, build_vocab, default_grammar, default_schema, generate_synthetic_corpus,
                   load_corpus, load_embeddings, load_grammar, load_schema, save_corpus, save_embeddings,
                   save_schema, synthetic_embeddings)

log = logging.getLogger("gailee")

SEED_ENV = "GAIL_EE_SEED"


class UsageError(Exception):
    """Bad user input; maps to exit code 2."""


def _seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None


def _existing(path, what: str) -> Path:
    if path is None or not Path(path).exists():
        raise UsageError(f"{what} not found: {path}")
    return Path(path)


# --------------------------------------------------------------------------
# train / eval

_CONFIG_HELP = {
    "gamma": "discount factor",
    "hidden": "LSTM and feed-forward hidden size",
    "dim_surface": "surface embedding size",
    "dim_pos": "POS embedding size",
    "dim_pretrained": "pretrained embedding size (must match --embeddings)",
    "fixed_reward_correct": "fixed reward for a correct action",
    "fixed_reward_wrong": "fixed reward for a wrong action",
    "epsilon": "exploration probability",
    "dropout": "surface/pretrained token dropout rate",
    "lr": "Adam learning rate for every network",
    "reward_mode": "one of " + ", ".join(REWARD_MODES),
    "labeling_schema": "one of " + ", ".join(LABELING_SCHEMAS),
    "entity_mode": "one of " + ", ".join(ENTITY_MODES),
    "epochs": "training epochs",
    "seed": f"random seed (falls back to ${SEED_ENV}, then 0)",
    "entropy_weight": "weight of the agent entropy term in the discriminator loss",
    "policy_entropy": "entropy weight of the trigger and argument policies (the temperature for boltzmann)",
    "pg_estimator": "boltzmann (cross-entropy to softmax(R / policy_entropy)), expected (every action weighted by "
                    "its probability), behavior (every action weighted by its epsilon-greedy probability) or "
                    "sampled (chosen action only)",
    "dim_action": "previous-action embedding size of the sequence labeler",
    "disc_batch": "sentences per discriminator update",
    "disc_warmup": "discriminator-only passes over the training set before policy updates (gail mode)",
    "checkpoint_every": "write a checkpoint every k epochs",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training configuration (flag > --config file > default)")
    defaults = TrainConfig()
    for key in TrainConfig.keys():
        g.add_argument("--" + key.replace("_", "-"), dest="cfg_" + key, default=None, metavar="V",
                       help=f"{_CONFIG_HELP.get(key, key)} (default {getattr(defaults, key)})")


def _config_from(args) -> TrainConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    if "seed" not in overrides and os.environ.get(SEED_ENV) is not None:
        overrides["seed"] = str(_seed(None))
    if args.config is not None:
        _existing(args.config, "config file")
    return load_config(args.config, **overrides)


def _corpus_paths(args) -> dict[str, Path | None]:
    data = Path(args.data_dir) if args.data_dir else None
    paths = {}
    for split in ("train", "dev", "test"):
        given = getattr(args, split)
        if given is None and data is not None and (data / f"{split}.jsonl").exists():
            given = data / f"{split}.jsonl"
        paths[split] = Path(given) if given is not None else None
    for key, name in (("schema", "schema.json"), ("embeddings", "embeddings.txt")):
        given = getattr(args, key)
        if given is None and data is not None and (data / name).exists():
            given = data / name
        paths[key] = Path(given) if given is not None else None
    return paths


def cmd_train(args) -> int:
    from .trainer import load_trace_spec, run_training

    config = _config_from(args)
    paths = _corpus_paths(args)
    _existing(paths["train"], "training corpus")
    _existing(paths["dev"], "dev corpus")
    if paths["test"] is not None:
        _existing(paths["test"], "test corpus")
    schema = load_schema(_existing(paths["schema"], "schema")) if paths["schema"] else default_schema()
    try:
        train = load_corpus(paths["train"], schema, "train")
        dev = load_corpus(paths["dev"], schema, "dev")
        test = load_corpus(paths["test"], schema, "test") if paths["test"] else None
        pretrained = load_embeddings(paths["embeddings"], config.dim_pretrained) if paths["embeddings"] else None
        spec = load_trace_spec(_existing(args.trace_spec, "trace spec")) if args.trace_spec else None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = run_training(config, train, dev, test, args.out, pretrained, spec)
    print(f"best epoch {result.best_epoch}: dev role-labeling F1 {result.best_dev.f1('role_labeling'):.4f}")
    if result.test is not None:
        for task, s in result.test.scores.items():
            print(f"test {task}: P={s.precision:.4f} R={s.recall:.4f} F1={s.f1:.4f}")
    print(f"artifacts in {result.output_dir}")
    return 0


def cmd_eval(args) -> int:
    from .trainer import METRICS_HEADER, evaluate, load_model

    model_dir = _existing(args.model, "model directory")
    _existing(model_dir / "model.json", "model.json")
    model, _, meta = load_model(model_dir)
    config = model.config
    if args.entity_mode is not None:
        config = config.replace(entity_mode=args.entity_mode)
    try:
        corpus = load_corpus(_existing(args.corpus, "corpus"), model.schema, args.split)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    metrics = evaluate(corpus, model, config, int(meta.get("epoch", 0)), args.split)
    w = csv.writer(sys.stdout)
    w.writerow(METRICS_HEADER)
    w.writerows(metrics.rows())
    return 0


# --------------------------------------------------------------------------
# generate-data


def cmd_generate_data(args) -> int:
    import json

    try:
        grammar = load_grammar(_existing(args.grammar, "grammar")) if args.grammar else default_grammar()
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"invalid grammar {args.grammar}: {exc}") from None
    seed = _seed(args.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            train, dev, test = generate_synthetic_corpus(grammar, seed, args.train_size, args.dev_size,
                                                         args.test_size)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for corpus in (train, dev, test):
        save_corpus(corpus, out / f"{corpus.split}.jsonl")
    save_schema(grammar.schema, out / "schema.json")
    (out / "grammar.json").write_text(json.dumps(grammar.to_dict(), indent=1) + "\n")
    save_embeddings(synthetic_embeddings(grammar, args.embedding_dim, seed), out / "embeddings.txt")
    print(f"wrote {len(train)}/{len(dev)}/{len(test)} sentences to {out}")
    return 0


# --------------------------------------------------------------------------
# grad-check

GRAD_CHECK_TOL = 1e-4


def grad_check_blocks(seed: int = 0):
    """(block name, parameters, loss closure) triples covering every network block.

    Built on a tiny model so the whole sweep runs in seconds; actions are
    drawn once so each closure is a smooth function of the parameters.
    """
    from .extractor import (EventExtractorModel, behavior_pg_loss, boltzmann_pg_loss, classify_argument,
                            classify_trigger, encode_environment, expected_pg_loss, label_sequence, pg_loss,
                            q_update_loss, sequence_q_values)
    from .gail import discriminator_loss
    from .nn import lstm_step, bilstm_forward
    from .trainer import build_bank

    rng = np.random.default_rng(seed)
    grammar = default_grammar()
    train, _, _ = generate_synthetic_corpus(grammar, seed, 4, 1, 1)
    sent = next(s for s in train if s.events and s.events[0].args)
    config = TrainConfig(hidden=3, dim_surface=3, dim_pos=2, dim_pretrained=3, dim_action=2, seed=seed)
    model = EventExtractorModel(grammar.schema, build_vocab(train), config,
                                synthetic_embeddings(grammar, config.dim_pretrained, seed))
    bank = build_bank(model, config)
    # the default init leaves deep-path gradients near 1e-9, below central-difference
    # resolution; a wider draw gives a well-conditioned checking point
    for p in model.parameters() + bank.parameters():
        p.value[...] = rng.normal(scale=0.5, size=p.shape)
    n = len(sent)

    def env():
        return encode_environment(model.encoder, sent, "eval")

    with F.no_tape():
        actions, _, _ = label_sequence(model.seq_head, env())
    targets = rng.normal(size=n)
    proj = F.Tensor(rng.normal(size=(n, model.encoder.width)))
    ev = sent.events[0]
    t_tr = ev.trigger[0]
    ent = sent.entities[ev.args[0].entity]
    bio = model.gold_labels(sent)[ent.start]
    trig_action = int(rng.integers(len(model.trigger_head.actions)))
    role_action = model.schema.roles.index(ev.args[0].role)

    def seq_loss():
        return q_update_loss(sequence_q_values(model.seq_head, env(), actions), actions, targets)

    trig_rewards = rng.uniform(-1, 1, size=len(model.trigger_head.actions))
    role_rewards = rng.uniform(-1, 1, size=len(model.argument_head.actions))

    def trigger_loss():
        dist, _, _ = classify_trigger(model.trigger_head, env(), t_tr)
        return pg_loss(dist, trig_action, 0.7, entropy_weight=0.01)

    def trigger_expected_loss():
        dist, _, _ = classify_trigger(model.trigger_head, env(), t_tr)
        return expected_pg_loss(dist, trig_rewards, entropy_weight=0.01)

    def argument_loss():
        s_ar = model.argument_state(env(), sent, t_tr, ent.start, bio)
        dist, _, _ = classify_argument(model.argument_head, s_ar, ev.type, ent.type, model.schema)
        return pg_loss(dist, role_action, -0.6, entropy_weight=0.01)

    def argument_expected_loss():
        s_ar = model.argument_state(env(), sent, t_tr, ent.start, bio)
        dist, _, _ = classify_argument(model.argument_head, s_ar, ev.type, ent.type, model.schema)
        return expected_pg_loss(dist, role_rewards, entropy_weight=0.01)

    def argument_dist():
        s_ar = model.argument_state(env(), sent, t_tr, ent.start, bio)
        return classify_argument(model.argument_head, s_ar, ev.type, ent.type, model.schema)[0]

    # targets and behavior weights are fixed once so each closure stays smooth
    with F.no_tape():
        role_mask = argument_dist().value[0] > 0
    trig_behavior = rng.dirichlet(np.ones(len(trig_rewards)))
    role_behavior = np.where(role_mask, rng.dirichlet(np.ones(len(role_rewards))), 0.0)

    def trigger_boltzmann_loss():
        dist, _, _ = classify_trigger(model.trigger_head, env(), t_tr)
        return boltzmann_pg_loss(dist, trig_rewards, 0.3)

    def trigger_behavior_loss():
        dist, _, _ = classify_trigger(model.trigger_head, env(), t_tr)
        return behavior_pg_loss(dist, trig_rewards, trig_behavior, 0.01)

    def argument_boltzmann_loss():
        return boltzmann_pg_loss(argument_dist(), role_rewards, 0.3, role_mask)

    def argument_behavior_loss():
        return behavior_pg_loss(argument_dist(), role_rewards, role_behavior, 0.01)

    def encoder_loss():
        return F.sum(F.mul(env(), proj))

    cell = model.encoder.fwd
    x_cell = F.Tensor(rng.normal(size=(1, cell.input_dim)))
    h_cell = F.Tensor(rng.normal(size=(1, cell.hidden_dim)))
    c_cell = F.Tensor(rng.normal(size=(1, cell.hidden_dim)))
    w_cell = F.Tensor(rng.normal(size=(1, cell.hidden_dim)))

    def cell_loss():
        h, c = lstm_step(cell, x_cell, h_cell, c_cell)
        return F.sum(F.mul(F.add(h, c), w_cell))

    x_bi = F.Tensor(rng.normal(size=(n, cell.input_dim)))

    def bilstm_loss():
        return F.sum(F.mul(bilstm_forward(model.encoder.fwd, model.encoder.bwd, x_bi), proj))

    blocks = [
        ("embeddings", model.encoder.tables["surface"].parameters() + model.encoder.tables["pos"].parameters(),
         encoder_loss),
        ("lstm_cell", cell.parameters(), cell_loss),
        ("bilstm", model.encoder.fwd.parameters() + model.encoder.bwd.parameters(), bilstm_loss),
        ("seq_head_mse", model.seq_head.parameters(), seq_loss),
        ("encoder_via_mse", model.encoder.parameters(), seq_loss),
        ("trigger_head_pg", model.trigger_head.parameters(), trigger_loss),
        ("trigger_head_expected_pg", model.trigger_head.parameters(), trigger_expected_loss),
        ("argument_head_pg", model.argument_head.parameters(), argument_loss),
        ("argument_head_expected_pg", model.argument_head.parameters(), argument_expected_loss),
        ("encoder_via_pg", model.encoder.parameters(), argument_loss),
        ("encoder_via_expected_pg", model.encoder.parameters(), argument_expected_loss),
        ("trigger_head_boltzmann_pg", model.trigger_head.parameters(), trigger_boltzmann_loss),
        ("argument_head_boltzmann_pg", model.argument_head.parameters(), argument_boltzmann_loss),
        ("encoder_via_boltzmann_pg", model.encoder.parameters(), argument_boltzmann_loss),
        ("trigger_head_behavior_pg", model.trigger_head.parameters(), trigger_behavior_loss),
        ("argument_head_behavior_pg", model.argument_head.parameters(), argument_behavior_loss),
    ]

    def disc_block(disc):
        # the weighted per-action form used in training
        width, k = disc.state_width, disc.n_actions
        xs = rng.normal(size=(3, width))
        gold = rng.integers(k, size=3)
        agent = rng.dirichlet(np.ones(k), size=3)
        agent[np.arange(3), gold] = 0.0
        weights = 1.0 + rng.uniform(size=3)
        dists = [np.full(k, 1.0 / k)]
        return (disc.name, disc.parameters(),
                lambda: discriminator_loss(disc, xs, gold, entropy_weight=0.01, agent_distributions=dists,
                                           expert_weights=weights, agent_weights=agent, per_action=True))

    blocks += [disc_block(d) for d in bank.all()]
    seq_disc = bank.seq
    xs_e, xs_a = rng.normal(size=(3, seq_disc.state_width)), rng.normal(size=(2, seq_disc.state_width))
    a_e, a_a = rng.integers(seq_disc.n_actions, size=3), rng.integers(seq_disc.n_actions, size=2)
    blocks.append(("disc/seq:sampled_agent", seq_disc.parameters(),
                   lambda: discriminator_loss(seq_disc, xs_e, a_e, xs_a, a_a, 0.01)))
    return blocks


def run_grad_check(seed: int = 0, corrupt_block: str | None = None, corrupt: float = 0.01,
                   max_coords: int = 24, out=sys.stdout) -> dict[str, float]:
    """Max relative error per block; ``corrupt_block`` perturbs one block's analytic gradient."""
    rng = np.random.default_rng(seed)
    report = {}
    blocks = grad_check_blocks(seed)
    names = [b[0] for b in blocks]
    if corrupt_block is not None and corrupt_block not in names:
        raise UsageError(f"unknown block {corrupt_block!r}; choose from {', '.join(names)}")
    for name, params, loss in blocks:
        factor = corrupt if name == corrupt_block else 0.0
        worst = 0.0
        for p in params:
            worst = max(worst, F.finite_difference_check(loss, p, max_coords=max_coords, rng=rng, corrupt=factor))
        report[name] = worst
        status = "ok" if worst < GRAD_CHECK_TOL else "FAIL"
        print(f"{name:28s} max_rel_err={worst:.3e} {status}", file=out)
    return report


def cmd_grad_check(args) -> int:
    report = run_grad_check(_seed(args.seed), args.corrupt_block, args.corrupt_factor, args.max_coords)
    failed = [k for k, v in report.items() if not v < GRAD_CHECK_TOL]
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"all {len(report)} blocks below {GRAD_CHECK_TOL:g}")
    return 0


# --------------------------------------------------------------------------
# inspect-rewards


def inspect_rewards(run_dir, spec, out) -> int:
    """Filter ``rewards.csv`` to the watched (sentence, position, task, action) series."""
    from .trainer import REWARDS_HEADER

    path = _existing(Path(run_dir) / "rewards.csv", "rewards.csv")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    known = {r["sentence_id"] for r in rows}
    for item in spec:
        if item.sentence_id not in known:
            raise UsageError(f"trace spec names unknown sentence {item.sentence_id!r}")
    w = csv.writer(out)
    w.writerow(REWARDS_HEADER)
    for item in spec:
        for action in item.actions:
            series = [r for r in rows if r["sentence_id"] == item.sentence_id and r["position"] == item.position
                      and r["task"] == item.task and r["action"] == action]
            for r in sorted(series, key=lambda r: int(r["epoch"])):
                w.writerow([r[k] for k in REWARDS_HEADER])
    return 0


def cmd_inspect_rewards(args) -> int:
    from .trainer import load_trace_spec

    run_dir = _existing(args.run, "run directory")
    spec_path = args.spec or run_dir / "trace_spec.json"
    try:
        spec = load_trace_spec(_existing(spec_path, "trace spec"))
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"bad trace spec {spec_path}: {exc}") from None
    if args.output:
        with open(args.output, "w", newline="") as fh:
            return inspect_rewards(run_dir, spec, fh)
    return inspect_rewards(run_dir, spec, sys.stdout)


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gailee", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write metrics, reward traces and checkpoints")
    p.add_argument("--data-dir", help="directory holding train/dev/test.jsonl, schema.json, embeddings.txt")
    p.add_argument("--train", help="training corpus (JSONL)")
    p.add_argument("--dev", help="dev corpus used for model selection (JSONL)")
    p.add_argument("--test", help="test corpus scored with the selected model (JSONL)")
    p.add_argument("--schema", help="event schema JSON (default: built-in ACE-style schema)")
    p.add_argument("--embeddings", help="pretrained embedding text file")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--trace-spec", help="JSON list of reward traces to log (default: the ambiguous trigger)")
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a saved model on a corpus")
    p.add_argument("--model", required=True, help="model directory holding model.json and params.ckpt")
    p.add_argument("--corpus", required=True, help="corpus to score (JSONL)")
    p.add_argument("--split", default="test", help="split name written to the output rows")
    p.add_argument("--entity-mode", choices=ENTITY_MODES, help="override the saved entity mode")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("generate-data", help="write a synthetic train/dev/test corpus")
    p.add_argument("--grammar", help="grammar JSON (default: built-in grammar)")
    p.add_argument("--seed", type=int, help=f"random seed (falls back to ${SEED_ENV}, then 0)")
    p.add_argument("--train-size", type=int, default=200, help="training sentences (default 200)")
    p.add_argument("--dev-size", type=int, default=50, help="dev sentences (default 50)")
    p.add_argument("--test-size", type=int, default=50, help="test sentences (default 50)")
    p.add_argument("--embedding-dim", type=int, default=200, help="pretrained vector size (default 200)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("grad-check", help="compare backprop against central differences for every block")
    p.add_argument("--seed", type=int, help=f"random seed (falls back to ${SEED_ENV}, then 0)")
    p.add_argument("--max-coords", type=int, default=24, help="coordinates sampled per parameter (default 24)")
    p.add_argument("--corrupt-block", help="test hook: scale this block's analytic gradient")
    p.add_argument("--corrupt-factor", type=float, default=0.01,
                   help="relative corruption used with --corrupt-block (default 0.01)")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("inspect-rewards", help="extract watched reward series from a run's rewards.csv")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--spec", help="trace spec JSON (default: the run's trace_spec.json)")
    p.add_argument("--output", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_inspect_rewards)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid configuration key {exc.key}: {exc}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures surface as exit 1
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
