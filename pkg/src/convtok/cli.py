"""Command-line entry point: ``convtok {prepare,train-tokenizer,encode,evaluate,simulate,stats}``.

Every subcommand accepts ``--config FILE``, a flat TOML file whose keys are
the subcommand's option names (``max_duration``, ``vocab_size``, ...).
Values from the file replace the built-in defaults; explicit flags win over
both. Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from . import augment, extract, metrics, simulate, tokenizer
from .corpus import RESERVED_SURFACES, CorpusError, TaskToken, load_corpus, save_corpus, write_jsonl

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger("convtok")

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive(x: str) -> float:
    v = float(x)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {x}")
    return v


def _nonneg(x: str) -> float:
    v = float(x)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {x}")
    return v


def _prob(x: str) -> float:
    v = float(x)
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError(f"expected a probability, got {x}")
    return v


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


# --- subcommands ---------------------------------------------------------------


def cmd_prepare(args) -> int:
    config = augment.PackConfig(args.max_duration, augment.parse_tasks(args.tasks))
    conversations = load_corpus(args.corpus)
    utterances = augment.prepare(conversations, config)
    augment.save_utterances(utterances, args.out)
    report = augment.corpus_stats(utterances)
    if args.stats_out:
        _write_text(Path(args.stats_out), json.dumps(report.to_dict(), indent=2) + "\n")
    print(report.format())
    return EXIT_OK


def cmd_stats(args) -> int:
    report = augment.corpus_stats(augment.load_utterances(args.utterances))
    print(json.dumps(report.to_dict(), indent=2) if args.json else report.format())
    return EXIT_OK


def cmd_train_tokenizer(args) -> int:
    utterances = augment.load_utterances(args.utterances)
    vocab = tokenizer.train_bpe(utterances, args.vocab_size, RESERVED_SURFACES)
    tokenizer.save_vocab(vocab, args.out)
    print(f"vocab: {len(vocab)} pieces, {len(vocab.merges)} merges -> {args.out}")
    ok = True
    for token in TaskToken:
        n = len(tokenizer.encode(vocab, [token]))
        ok &= n == 1
        print(f"  {token.surface:<6} {n} piece{'s' if n != 1 else ''}")
    if not ok:
        logger.error("a task token was split into several pieces")
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_encode(args) -> int:
    utterances = augment.load_utterances(args.utterances)
    vocab = tokenizer.load_vocab(args.vocab)
    write_jsonl(({"utt": u.key, "ids": tokenizer.encode(vocab, u.items)} for u in utterances), args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    refs = augment.load_utterances(args.ref)
    hyps = extract.load_hypotheses(args.hyp)
    report = metrics.evaluate_corpus(
        refs,
        hyps,
        metrics.CollarConfig(args.collar),
        extract.FrameSpec(args.frame_dur, args.frame_stride),
        macro=args.macro,
    )
    if args.out:
        _write_text(Path(args.out), json.dumps(report.to_dict(), indent=2) + "\n")
    if args.tsv:
        _write_text(Path(args.tsv), report.to_tsv())
    print(report.summary())
    return EXIT_OK


_SIM_FIELDS = {f.name for f in dataclasses.fields(simulate.SimConfig)}


def cmd_simulate(args) -> int:
    sim_kwargs = {k: v for k, v in vars(args).items() if k in _SIM_FIELDS and v is not None}
    sim = simulate.SimConfig(**sim_kwargs)
    noise = simulate.NoiseConfig(
        sub_rate=args.sub_rate,
        del_rate=args.del_rate,
        ins_rate=args.ins_rate,
        token_drop_rate=args.token_drop_rate,
        frame_jitter=tuple(args.frame_jitter),
        seed=args.noise_seed,
    )
    pack = augment.PackConfig(args.max_duration, augment.parse_tasks(args.tasks))
    spec = extract.FrameSpec(args.frame_dur, args.frame_stride)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    conversations = simulate.generate_corpus(sim)
    utterances = augment.prepare(conversations, pack)
    hyps, log = [], []
    for utt in utterances:
        c = simulate.corrupt(utt, noise, spec)
        hyps.append(c.hypothesis)
        log.append(simulate.edit_log_record(utt, c))
    save_corpus(conversations, out / "corpus.jsonl")
    augment.save_utterances(utterances, out / "utterances.jsonl")
    extract.save_hypotheses(hyps, out / "hypotheses.jsonl")
    write_jsonl(log, out / "edits.jsonl")
    n_words = sum(r["n_ref_words"] for r in log)
    n_err = sum(r["word_errors"] for r in log)
    print(
        f"{len(conversations)} conversations, {len(utterances)} utterances, "
        f"{n_words} words, {n_err} injected word errors -> {out}"
    )
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def _frame_args(p):
    p.add_argument("--frame-dur", dest="frame_dur", type=_positive, default=0.025,
                   help="acoustic frame duration in seconds (default 0.025)")
    p.add_argument("--frame-stride", dest="frame_stride", type=_positive, default=0.020,
                   help="acoustic frame stride in seconds (default 0.020)")


def _pack_args(p):
    p.add_argument("--tasks", default="sc,ep,ne",
                   help="comma-separated subset of sc,ep,ne; empty string for ASR-only")
    p.add_argument("--max-dur", "--max-duration", dest="max_duration", type=_positive, default=20.0,
                   help="maximum packed utterance duration in seconds (default 20)")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat TOML file of option defaults")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="convtok", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", parents=[common], help="pack a corpus into token-augmented utterances")
    p.add_argument("corpus", help="conversation JSONL")
    p.add_argument("out", help="utterance JSONL to write")
    _pack_args(p)
    p.add_argument("--stats-out", help="also write the stats block as JSON")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("stats", parents=[common], help="token statistics of an utterance file")
    p.add_argument("utterances")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train-tokenizer", parents=[common], help="train a BPE vocab with atomic task tokens")
    p.add_argument("utterances")
    p.add_argument("out", help="vocab file to write")
    p.add_argument("--vocab-size", dest="vocab_size", type=int, default=500)
    p.set_defaults(func=cmd_train_tokenizer)

    p = sub.add_parser("encode", parents=[common], help="encode utterances to piece ids")
    p.add_argument("utterances")
    p.add_argument("vocab")
    p.add_argument("out", help="JSONL of {utt, ids}")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("evaluate", parents=[common], help="score hypotheses against reference utterances")
    p.add_argument("ref", help="reference utterance JSONL")
    p.add_argument("hyp", help="hypothesis JSONL")
    p.add_argument("--collar", type=_nonneg, default=0.25, help="timestamp collar in seconds (default 0.25)")
    _frame_args(p)
    p.add_argument("--out", help="report JSON path")
    p.add_argument("--tsv", help="per-utterance breakdown TSV path")
    p.add_argument("--macro", action="store_true", help="add per-utterance macro averages to the report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic corpus and noisy hypotheses")
    p.add_argument("out_dir")
    defaults = simulate.SimConfig()
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--n-conversations", dest="n_conversations", type=int, default=defaults.n_conversations)
    p.add_argument("--noise-seed", dest="noise_seed", type=int, default=0)
    p.add_argument("--sub-rate", dest="sub_rate", type=_prob, default=0.0)
    p.add_argument("--del-rate", dest="del_rate", type=_prob, default=0.0)
    p.add_argument("--ins-rate", dest="ins_rate", type=_prob, default=0.0)
    p.add_argument("--token-drop-rate", dest="token_drop_rate", type=_prob, default=0.0)
    p.add_argument("--jitter", dest="frame_jitter", type=int, nargs=2, default=[0, 0], metavar=("LO", "HI"),
                   help="emission frame jitter range in frames")
    _pack_args(p)
    _frame_args(p)
    p.set_defaults(func=cmd_simulate)
    # generator fields reachable only through --config
    p.set_defaults(**{f: None for f in _SIM_FIELDS - {"seed", "n_conversations"}})
    parser.subcommands = sub.choices
    return parser


def default_sim_config() -> Path:
    return Path(str(resources.files("convtok").joinpath("data").joinpath("sim_default.toml")))


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    with open(args.config, "rb") as f:
        values = tomllib.load(f)
    sub = parser.subcommands[args.command]
    known = {a.dest for a in sub._actions} | set(sub._defaults)
    known -= {"help", "config", "func", "command"}
    overrides = {}
    for key, value in values.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise UsageError(f"{args.config}: unknown option {key!r} for '{args.command}'")
        if isinstance(value, dict):
            raise UsageError(f"{args.config}: option {key!r} must be a flat value")
        overrides[dest] = value
    sub.set_defaults(**overrides)
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.WARNING,
            format="%(name)s: %(levelname)s: %(message)s",
        )
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    except (CorpusError, ValueError, tomllib.TOMLDecodeError) as exc:
        print(f"convtok: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"convtok: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
