"""Command-line entry point: synth | lm | train | decode | eval | experiment."""
from __future__ import annotations

import argparse
import os
import statistics
import sys

from . import __version__
from .config import RunConfig, echo_config, parse_config
from .decode import BeamParams, beam_search_decode, greedy_decode
from .errors import ConfigError, InputError
from .lm import read_arpa, train_ngram_lm, write_arpa
from .metrics import evaluate, write_report
from .models import (
    Model,
    ModelDims,
    TaskSpec,
    TrainConfig,
    build_model,
    load_model,
    model_forward,
    save_model,
    train,
    write_history,
)
from .synth import DatasetConfig, generate_dataset, load_samples, read_manifest
from .util import parallel_map, sha256_file
from .vocab import build_alphabet, build_ngram_vocab, load_vocab, save_vocab


def _dims_from(cfg: RunConfig) -> ModelDims:
    return ModelDims(
        img_h=cfg["img_h"],
        feat_window=cfg["feat_window"],
        feat_dim=cfg["feat_dim"],
        frame_window=cfg["frame_window"],
        hidden=cfg["hidden"],
        branch_hidden=cfg["branch_hidden"],
    )


def _beam_from(cfg: RunConfig, lm_level: str) -> BeamParams:
    return BeamParams(
        width=cfg["beam_width"],
        alpha_char=cfg["alpha_char"],
        alpha_word=cfg["alpha_word"],
        word_bonus=cfg["word_bonus"],
        lm=lm_level,
        prune_logp=cfg["prune_logp"],
    )


def cmd_synth(cfg: RunConfig) -> int:
    ds = DatasetConfig(
        n_train=cfg["n_train"],
        n_val=cfg["n_val"],
        n_test=cfg["n_test"],
        lexicon_size=cfg["lexicon_size"],
        words_min=cfg["words_min"],
        words_max=cfg["words_max"],
        seed=cfg["seed"],
    )
    paths = generate_dataset(cfg["out"], ds)
    echo_config(cfg, cfg["out"], __version__)
    total = ds.n_train + ds.n_val + ds.n_test
    print(f"wrote {total} lines under {paths.root}")
    return 0


def cmd_lm(cfg: RunConfig) -> int:
    if not os.path.exists(cfg["corpus"]):
        raise InputError(f"corpus file {cfg['corpus']} does not exist")
    with open(cfg["corpus"], encoding="utf-8") as f:
        corpus = [line.rstrip("\n") for line in f if line.strip()]
    levels = ("char", "word") if cfg["level"] == "both" else (cfg["level"],)
    os.makedirs(cfg["out"], exist_ok=True)
    for level in levels:
        model = train_ngram_lm(corpus, cfg["order"], level)
        path = os.path.join(cfg["out"], f"{level}_{cfg['order']}.arpa")
        write_arpa(model, path)
        print(f"wrote {path} ({len(model.table)} entries)")
    echo_config(cfg, cfg["out"], __version__)
    return 0


def _build_tasks(transcripts, ns, topk):
    tasks = []
    for n in ns:
        vocab = build_alphabet(transcripts) if n == 1 else build_ngram_vocab(transcripts, n, topk)
        tasks.append(TaskSpec(n=n, vocab=vocab))
    return tasks


def cmd_train(cfg: RunConfig) -> int:
    train_set = load_samples(cfg["train_manifest"])
    val_set = load_samples(cfg["val_manifest"])
    transcripts = [s.transcript for s in train_set]
    tasks = _build_tasks(transcripts, sorted(set(cfg["tasks"])), cfg["topk"])
    model = build_model(cfg["kind"], tasks, _dims_from(cfg), cfg["seed"])
    weights = {}
    if cfg["task_weights"]:
        if len(cfg["task_weights"]) != len(tasks):
            raise ConfigError("task_weights length must match tasks")
        weights = {t.n: w for t, w in zip(tasks, cfg["task_weights"])}
    tc = TrainConfig(
        epochs=cfg["epochs"],
        lr_initial=cfg["lr_initial"],
        lr_reduced=cfg["lr_reduced"],
        batch_size=cfg["batch_size"],
        seed=cfg["seed"],
        augment=cfg["augment"],
        task_weights=weights,
    )
    model, history = train(model, train_set, val_set, tc)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    hashes = {}
    for t in tasks:
        vpath = os.path.join(out, f"vocab_{t.n}.txt")
        save_vocab(t.vocab, vpath)
        hashes[f"vocab_sha_{t.n}"] = sha256_file(vpath)
    save_model(model, os.path.join(out, "checkpoint.txt"), extra_meta=hashes)
    write_history(history, os.path.join(out, "history.tsv"))
    echo_config(cfg, out, __version__)
    last = history[-1]
    print(
        f"trained {cfg['kind']} tasks={[t.n for t in tasks]} "
        f"epochs={len(history)} best val CER={min(h.val_cer for h in history):.4f} "
        f"(final {last.val_cer:.4f})"
    )
    return 0


def _load_model_dir(model_dir) -> Model:
    ckpt = os.path.join(model_dir, "checkpoint.txt")
    if not os.path.exists(ckpt):
        raise InputError(f"missing checkpoint file {ckpt}")
    vocabs = {}
    for name in sorted(os.listdir(model_dir)):
        if name.startswith("vocab_") and name.endswith(".txt"):
            n = int(name[len("vocab_") : -len(".txt")])
            vocabs[n] = load_vocab(os.path.join(model_dir, name))
    if 1 not in vocabs:
        raise InputError(f"missing unigram vocabulary dump in {model_dir}")
    return load_model(ckpt, vocabs)


def _decode_samples(model, samples, decoder, lm, params):
    alphabet = model.vocabs()[1]

    def one(sample):
        grid = model_forward(model, sample.image)[1]
        if decoder == "greedy":
            return greedy_decode(grid, alphabet)
        return beam_search_decode(grid, alphabet, lm=lm, params=params)

    return parallel_map(one, samples)


def cmd_decode(cfg: RunConfig) -> int:
    model = _load_model_dir(cfg["model_dir"])
    samples = load_samples(cfg["manifest"])
    decoder = cfg["decoder"]
    if decoder not in ("greedy", "beam"):
        raise ConfigError(f"decoder must be greedy|beam, got {decoder!r}")
    lm = None
    params = _beam_from(cfg, cfg["lm"])
    if decoder == "beam" and cfg["lm"] != "none":
        if not cfg["lm_path"]:
            raise ConfigError("beam decoding with an LM needs lm_path")
        if not os.path.exists(cfg["lm_path"]):
            raise InputError(f"missing LM file {cfg['lm_path']}")
        lm = read_arpa(cfg["lm_path"])
        if lm.level != cfg["lm"]:
            raise ConfigError(
                f"LM level mismatch: config says {cfg['lm']!r}, file is {lm.level!r}"
            )
    hyps = _decode_samples(model, samples, decoder, lm, params)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    hyp_path = os.path.join(out, "hyps.tsv")
    with open(hyp_path, "w", encoding="utf-8") as f:
        for sample, text in zip(samples, hyps):
            f.write(f"{sample.id}\t{text}\n")
    echo_config(cfg, out, __version__)
    print(f"decoded {len(samples)} lines -> {hyp_path}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    rows = read_manifest(cfg["manifest"])
    if not os.path.exists(cfg["hyps"]):
        raise InputError(f"missing hypotheses file {cfg['hyps']}")
    hyp_by_id = {}
    with open(cfg["hyps"], encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            sample_id, _, text = line.partition("\t")
            hyp_by_id[sample_id] = text
    refs, hyps = [], []
    for sample_id, _, transcript in rows:
        if sample_id not in hyp_by_id:
            raise InputError(f"hypotheses file lacks id {sample_id!r}")
        refs.append(transcript)
        hyps.append(hyp_by_id[sample_id])
    report = evaluate(refs, hyps)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    write_report(report, os.path.join(out, "report.tsv"))
    echo_config(cfg, out, __version__)
    print(report.summary())
    return 0


DECODER_NAMES = ("greedy", "beam_char", "beam_word")


def cmd_experiment(cfg: RunConfig) -> int:
    """Train {archs} x {seeds}, decode the test split three ways, report medians."""
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    data_dir = os.path.join(out, "dataset")
    ds = DatasetConfig(
        n_train=cfg["n_train"],
        n_val=cfg["n_val"],
        n_test=cfg["n_test"],
        lexicon_size=cfg["lexicon_size"],
        words_min=cfg["words_min"],
        words_max=cfg["words_max"],
        seed=cfg["data_seed"],
    )
    paths = generate_dataset(data_dir, ds)
    train_set = load_samples(paths.manifests["train"])
    val_set = load_samples(paths.manifests["val"])
    test_set = load_samples(paths.manifests["test"])
    transcripts = [s.transcript for s in train_set]

    # LMs come from the training split only; the test split never leaks in
    with open(paths.corpus, encoding="utf-8") as f:
        corpus = [line.rstrip("\n") for line in f if line.strip()]
    lm_dir = os.path.join(out, "lms")
    os.makedirs(lm_dir, exist_ok=True)
    lms = {}
    for level in ("char", "word"):
        lms[level] = train_ngram_lm(corpus, cfg["lm_order"], level)
        write_arpa(lms[level], os.path.join(lm_dir, f"{level}_{cfg['lm_order']}.arpa"))

    results = []  # (arch_label, tasks_label, decoder, seed, wer, cer)
    refs = [s.transcript for s in test_set]
    for arch in cfg["archs"]:
        kind, ns = arch["kind"], sorted(set(arch["tasks"]))
        tasks_label = "+".join(str(n) for n in ns)
        for seed in cfg["seeds"]:
            tasks = _build_tasks(transcripts, ns, cfg["topk"])
            model = build_model(kind, tasks, _dims_from(cfg), seed)
            tc = TrainConfig(
                epochs=cfg["epochs"],
                lr_initial=cfg["lr_initial"],
                lr_reduced=cfg["lr_reduced"],
                batch_size=cfg["batch_size"],
                seed=seed,
                augment=cfg["augment"],
            )
            model, history = train(model, train_set, val_set, tc)
            run_dir = os.path.join(out, "runs", f"{kind}_{tasks_label}_s{seed}")
            os.makedirs(run_dir, exist_ok=True)
            save_model(model, os.path.join(run_dir, "checkpoint.txt"))
            write_history(history, os.path.join(run_dir, "history.tsv"))
            for decoder in DECODER_NAMES:
                if decoder == "greedy":
                    hyps = _decode_samples(model, test_set, "greedy", None, None)
                else:
                    level = decoder.split("_")[1]
                    params = _beam_from(cfg, level)
                    hyps = _decode_samples(model, test_set, "beam", lms[level], params)
                report = evaluate(refs, hyps)
                hyp_path = os.path.join(run_dir, f"hyps_{decoder}.tsv")
                with open(hyp_path, "w", encoding="utf-8") as f:
                    for sample, text in zip(test_set, hyps):
                        f.write(f"{sample.id}\t{text}\n")
                write_report(report, os.path.join(run_dir, f"report_{decoder}.tsv"))
                results.append((kind, tasks_label, decoder, seed, report.wer, report.cer))
                print(
                    f"{kind:7s} {tasks_label:9s} seed={seed} {decoder:10s} "
                    f"WER={report.wer:.4f} CER={report.cer:.4f}"
                )

    with open(os.path.join(out, "results.tsv"), "w", encoding="utf-8") as f:
        f.write("arch\ttasks\tdecoder\tseed\twer\tcer\n")
        for kind, tl, dec, seed, wer, cer in results:
            f.write(f"{kind}\t{tl}\t{dec}\t{seed}\t{wer!r}\t{cer!r}\n")

    lines = ["arch     tasks      decoder     medWER%  medCER%"]
    summary_rows = []
    for arch in cfg["archs"]:
        kind, ns = arch["kind"], sorted(set(arch["tasks"]))
        tl = "+".join(str(n) for n in ns)
        for dec in DECODER_NAMES:
            wers = [r[4] for r in results if r[:3] == (kind, tl, dec)]
            cers = [r[5] for r in results if r[:3] == (kind, tl, dec)]
            med_wer = statistics.median(wers)
            med_cer = statistics.median(cers)
            summary_rows.append((kind, tl, dec, med_wer, med_cer))
            lines.append(f"{kind:8s} {tl:10s} {dec:11s} {100*med_wer:7.2f}  {100*med_cer:7.2f}")
    table = "\n".join(lines)
    with open(os.path.join(out, "table.txt"), "w", encoding="utf-8") as f:
        f.write(table + "\n")
    with open(os.path.join(out, "medians.tsv"), "w", encoding="utf-8") as f:
        f.write("arch\ttasks\tdecoder\tmedian_wer\tmedian_cer\n")
        for kind, tl, dec, mw, mc in summary_rows:
            f.write(f"{kind}\t{tl}\t{dec}\t{mw!r}\t{mc!r}\n")
    echo_config(cfg, out, __version__)
    print(table)
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "lm": cmd_lm,
    "train": cmd_train,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="htrkit",
        description="CTC line recognizer with n-gram multi-task training and LM decoding",
    )
    parser.add_argument("--version", action="version", version=f"htrkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        if name == "decode":
            p.add_argument("--beam-width", type=int, default=None)
            p.add_argument("--lm", default=None, help="ARPA language model path")
            p.add_argument("--lm-level", choices=("char", "word"), default=None)
            p.add_argument("--alpha", type=float, default=None, help="LM weight")
            p.add_argument("--beta", type=float, default=None, help="word insertion bonus")
    return parser


def _apply_overrides(cfg: RunConfig, args) -> None:
    if args.out is not None:
        cfg.values["out"] = os.path.abspath(args.out)
    if args.seed is not None:
        if cfg.command == "experiment":
            cfg.values["seeds"] = [args.seed]
        elif cfg.command == "synth":
            cfg.values["seed"] = args.seed
        elif "seed" in cfg.values:
            cfg.values["seed"] = args.seed
    if cfg.command == "decode":
        if args.beam_width is not None:
            cfg.values["beam_width"] = args.beam_width
            cfg.values["decoder"] = "beam"
        if args.lm is not None:
            cfg.values["lm_path"] = os.path.abspath(args.lm)
            cfg.values["decoder"] = "beam"
        if args.lm_level is not None:
            cfg.values["lm"] = args.lm_level
        if args.alpha is not None:
            cfg.values["alpha_char"] = args.alpha
            cfg.values["alpha_word"] = args.alpha
        if args.beta is not None:
            cfg.values["word_bonus"] = args.beta


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, args.command)
        _apply_overrides(cfg, args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, InputError, OSError) as e:
        print(f"htrkit {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
