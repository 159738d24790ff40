"""Command-line entry point: ``mgcn <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation. Diagnostics go to stderr.
"""

import argparse
import json
import logging
import sys

from . import autodiff as ad
from .config import PATH_KEYS, TrainConfig, config_field_types, parse_value, read_config_file
from .errors import DataError, InvariantError
from .graphs import dump_levi, dump_multigraph, to_levi, to_multigraph, validate
from .kg import Instance, dataset_stats, read_instances, synth_corpus, write_instances
from .metrics import evaluate
from .preprocess import delexicalize, relexicalize

log = logging.getLogger("mgcn")

GRADCHECK_TOLERANCE = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _write_text(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# -- run configuration -----------------------------------------------------------


def _add_model_flags(p):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--aggregation", choices=("sum", "avg", "conv"))
    p.add_argument("--graphs", help="comma-separated graph labels to keep (self is required)")
    p.add_argument("--beam", type=int)
    p.add_argument("--delex", choices=("on", "off"))
    p.add_argument("--encoder", choices=("mgcn", "levi"))
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")


def resolve_run_config(args, base=None):
    """Defaults < ``--config`` file < ``--set`` < dedicated flags.

    Returns ``(TrainConfig, paths)``; unknown keys raise :class:`UsageError`.
    """
    types = config_field_types()
    values = dict(base or {})
    paths = {k: None for k in PATH_KEYS}

    def apply(key, raw, where):
        if key in PATH_KEYS:
            paths[key] = raw.strip()
            return
        if key not in types:
            raise UsageError(f"{where}: unknown config key {key!r}")
        try:
            values[key] = parse_value(types[key], raw)
        except ValueError as exc:
            raise UsageError(f"{where}: bad value for {key}: {exc}") from None

    if getattr(args, "config", None):
        try:
            entries = read_config_file(args.config)
        except OSError as exc:
            raise DataError(f"cannot read config: {exc}", location=args.config) from None
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        for key, (raw, where) in entries.items():
            apply(key, raw, where)
    for item in getattr(args, "set", []) or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        apply(key.strip(), raw, "--set")
    for key in ("seed", "layers", "hidden", "aggregation", "beam", "encoder"):
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    if getattr(args, "graphs", None):
        values["graphs"] = parse_value(tuple, args.graphs)
    if getattr(args, "delex", None):
        values["delex"] = args.delex == "on"
    try:
        config = TrainConfig(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return config, paths


def manifest_text(config, paths):
    """Every effective value as a ``key = value`` file accepted by ``--config``."""
    lines = []
    for key, value in config.to_dict().items():
        if isinstance(value, bool):
            value = "on" if value else "off"
        elif isinstance(value, list):
            value = ",".join(value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    for key in PATH_KEYS:
        if paths.get(key):
            lines.append(f"{key} = {paths[key]}")
    return "\n".join(lines) + "\n"


# -- commands ------------------------------------------------------------------------


def cmd_transform(args):
    out = []
    for i, inst in enumerate(read_instances(args.input)):
        if not inst.triples:
            raise DataError("instance has no triples", location=f"{args.input}: record {i}")
        out.append(f"# instance {i} main={inst.main_entity}")
        if args.levi:
            out.append(dump_levi(to_levi(inst.triples)))
        else:
            mg = to_multigraph(inst.triples)
            problems = validate(mg)
            if problems:
                raise InvariantError("; ".join(problems))
            out.append(dump_multigraph(mg))
    _write_text(args.out, "\n".join(out) + "\n")


def cmd_stats(args):
    instances = read_instances(args.input)
    if not instances:
        raise DataError("no instances", location=args.input)
    stats = dataset_stats(instances)
    if args.json:
        text = json.dumps({k: getattr(stats, k) for k, _ in stats.ROWS}, indent=2) + "\n"
    else:
        text = stats.format() + "\n"
    _write_text(args.out, text)


def cmd_synth(args):
    corpus = synth_corpus(args.seed, args.instances, args.entities, args.relations, args.triples)
    if args.out in (None, "-"):
        for inst in corpus:
            sys.stdout.write(inst.to_json() + "\n")
    else:
        write_instances(corpus, args.out)


def cmd_train(args):
    from .training import save, train

    config, paths = resolve_run_config(args)
    for key in ("train", "valid"):
        override = getattr(args, key)
        if override:
            paths[key] = override
    if args.out:
        paths["checkpoint"] = args.out
    missing = [k for k in ("train", "valid", "checkpoint") if not paths[k]]
    if missing:
        raise UsageError(f"train needs paths for: {', '.join(missing)} (config keys or flags)")
    train_set = read_instances(paths["train"])
    valid_set = read_instances(paths["valid"])

    ckpt_path = paths["checkpoint"]
    _write_text(ckpt_path + ".manifest", manifest_text(config, paths))
    with open(ckpt_path + ".log", "w", encoding="utf-8") as logfh:
        logfh.write("epoch\ttrain_loss\tvalid_perplexity\n")

        def on_epoch(rec):
            logfh.write(f"{rec.epoch}\t{rec.train_loss!r}\t{rec.valid_perplexity!r}\n")
            logfh.flush()

        result = train(config, train_set, valid_set, on_epoch=on_epoch)
    save(result.checkpoint, ckpt_path)
    print(
        f"best epoch {result.best_epoch} valid perplexity {result.checkpoint.best_perplexity:.6f} -> {ckpt_path}"
    )


def generate_texts(ckpt, instances, beam=None):
    model = ckpt.model()
    out = []
    for inst in instances:
        if not inst.triples:
            raise DataError(f"instance for {inst.main_entity!r} has no triples")
        mapping = None
        if ckpt.config.delex:
            inst, mapping = delexicalize(inst)
        tokens = model.generate_tokens(model.graph_for(inst), beam=beam)
        out.append(relexicalize(tokens, mapping) if mapping else " ".join(tokens))
    return out


def cmd_generate(args):
    from .training import load

    ckpt = load(args.checkpoint)
    instances = read_instances(args.input)
    texts = generate_texts(ckpt, instances, beam=args.beam)
    _write_text(args.out, "".join(t + "\n" for t in texts))


def _read_lines(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return [line.split() for line in fh.read().splitlines()]
    except OSError as exc:
        raise DataError(f"cannot read: {exc}", location=path) from None


def cmd_evaluate(args):
    cands, refs = _read_lines(args.candidate), _read_lines(args.reference)
    if len(cands) != len(refs):
        raise DataError(f"{len(cands)} candidate lines vs {len(refs)} reference lines", location=args.candidate)
    if not cands:
        raise DataError("empty candidate file", location=args.candidate)
    report = evaluate(cands, refs, smooth=args.smooth)
    data = report.to_dict()
    if not args.per_instance:
        data.pop("per_instance")
    _write_text(args.out, json.dumps(data, indent=2) + "\n")


GRADCHECK_INSTANCE = Instance("alpha", ["beta"], [("alpha", "likes", "beta")], "alpha likes beta .")


def gradcheck_error(config, eps=1e-5):
    """Max relative backprop/finite-difference error of the full model.

    The model is built from ``config`` (its seed included) and checked on a
    one-triple graph, four nodes with the global node.
    """
    from .model import MGCNModel
    from .preprocess import build_vocab

    inst = GRADCHECK_INSTANCE
    model = MGCNModel.create(config, build_vocab([inst]))
    return ad.grad_check(lambda: model.nll_loss(inst), model.parameters(), eps=eps)


def cmd_gradcheck(args):
    base = {"hidden": 4, "layers": 2, "init_scale": 0.5, "embed_scale": 0.5}
    config, _ = resolve_run_config(args, base=base)
    err = gradcheck_error(config)
    print(f"max_relative_error {err:.3e} (tolerance {GRADCHECK_TOLERANCE:g})")
    if not err < GRADCHECK_TOLERANCE:
        raise InvariantError(f"gradient check failed: {err:.3e} >= {GRADCHECK_TOLERANCE:g}")


def build_parser():
    parser = _Parser(prog="mgcn", description="Multi-graph GCN knowledge-graph-to-text toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("transform", help="dump multi-graph (or Levi graph) structures")
    p.add_argument("input")
    p.add_argument("--levi", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("stats", help="dataset statistics report")
    p.add_argument("input")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="write a synthetic instance file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=16)
    p.add_argument("--entities", type=int, default=40)
    p.add_argument("--relations", type=int, default=8)
    p.add_argument("--triples", type=int, default=6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_model_flags(p)
    p.add_argument("--train")
    p.add_argument("--valid")
    p.add_argument("--out", help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="describe each instance with a trained model")
    p.add_argument("checkpoint")
    p.add_argument("input")
    p.add_argument("--beam", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="BLEU / ROUGE of candidate vs reference lines")
    p.add_argument("candidate")
    p.add_argument("reference")
    p.add_argument("--smooth", action="store_true")
    p.add_argument("--per-instance", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check of a tiny model")
    _add_model_flags(p)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
