"""Single executable exposing all workflows.

Subcommands: validate, stats, pairs, corrupt, eval, agree, gleu,
mm-score, lm-train, lm-ppl. Exit codes: 0 success, 1 validation or
runtime errors, 2 usage errors. Randomized subcommands take --seed and
default to 0 with a logged notice; outputs are written atomically.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from reveval import __version__
from reveval.agreement import compute_agreement
from reveval.corpus_model import (
    Aspect,
    CorpusError,
    corpus_stats,
    document_to_xml,
    parse_corpus,
    parse_document_string,
    revised_text,
    source_text,
)
from reveval.corruption import build_worse_testset, parse_noise_config
from reveval.gec_metrics import (
    GleuConfig,
    extract_edits,
    gleu_report,
    max_match_f05,
    tokenize,
)
from reveval.irc_harness import evaluate_metric, per_aspect_report, save_report
from reveval.metric_runtime import MetricError, create_metric
from reveval.ngram_lm import NgramModel, fit_text
from reveval.pair_extraction import (
    export_training_pairs,
    extract_pairs,
    load_split,
    read_pairs_jsonl,
    write_pairs_csv,
    write_pairs_jsonl,
)

log = logging.getLogger("reveval")


def write_atomic(path, text: str) -> None:
    """Write via a sibling temp file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, payload) -> None:
    write_atomic(path, json.dumps(payload, ensure_ascii=False, indent=2) + "\n")


def resolved_seed(args) -> int:
    if args.seed is None:
        log.info("no --seed given; defaulting to 0")
        return 0
    return args.seed


def _load_corpus(path):
    return parse_corpus(path)


def _selected_doc_ids(args):
    if not getattr(args, "split", None):
        return None
    split = load_split(args.split)
    side = getattr(args, "side", "test")
    ids = split.test_doc_ids if side == "test" else split.train_doc_ids
    if not ids:
        raise ValueError(f"split file {args.split} has no {side} documents")
    return ids


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    docs = _load_corpus(args.corpus)
    for doc in docs:
        again = parse_document_string(document_to_xml(doc))
        if again != doc:
            print(
                f"round-trip mismatch for doc {doc.id!r} editor {doc.editor!r}",
                file=sys.stderr,
            )
            return 1
    n_edits = sum(len(d.edits) for d in docs)
    print(f"OK: {len(docs)} documents, {n_edits} edits, round trip exact")
    return 0


def cmd_stats(args) -> int:
    docs = _load_corpus(args.corpus)
    stats = corpus_stats(docs)
    lines = [f"{'aspect':<15}{'count':>7}{'percent':>9}"]
    for aspect in Aspect:
        lines.append(
            f"{aspect.value:<15}{stats.counts[aspect]:>7}"
            f"{stats.percentages[aspect]:>9.1f}"
        )
    lines.append(f"{'total':<15}{stats.total_labels:>7}{100.0:>9.1f}")
    lines.append(f"beyond-GEC ratio: {stats.beyond_gec_ratio:.3f}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        payload = {
            "total_edits": stats.total_edits,
            "total_labels": stats.total_labels,
            "counts": {a.value: c for a, c in stats.counts.items()},
            "percentages": {a.value: p for a, p in stats.percentages.items()},
            "beyond_gec_ratio": stats.beyond_gec_ratio,
            "by_meta": {
                attr: {
                    value: {a.value: c for a, c in counter.items()}
                    for value, counter in values.items()
                }
                for attr, values in stats.by_meta.items()
            },
        }
        write_json(args.out, payload)
    return 0


def cmd_pairs(args) -> int:
    docs = _load_corpus(args.corpus)
    pairs = extract_pairs(docs, _selected_doc_ids(args))
    if args.training_export:
        seed = resolved_seed(args)
        records = export_training_pairs(pairs, args.swap_fraction, seed)
        write_atomic(
            args.out,
            "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records),
        )
        print(f"wrote {len(records)} training pairs to {args.out}")
        return 0
    if args.format == "csv":
        write_pairs_csv(pairs, args.out)
    else:
        write_pairs_jsonl(pairs, args.out)
    print(f"wrote {len(pairs)} snippet pairs to {args.out}")
    return 0


def cmd_corrupt(args) -> int:
    docs = _load_corpus(args.corpus)
    cfg = parse_noise_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    pairs = build_worse_testset(docs, cfg)
    write_pairs_jsonl(pairs, args.out)
    print(f"wrote {len(pairs)} worse-quality pairs to {args.out}")
    return 0


def cmd_eval(args) -> int:
    if args.pairs:
        pairs = read_pairs_jsonl(args.pairs)
    elif args.corpus:
        docs = _load_corpus(args.corpus)
        pairs = extract_pairs(docs, _selected_doc_ids(args))
    else:
        raise ValueError("eval needs --corpus or --pairs")
    if not pairs:
        print("no pairs to evaluate", file=sys.stderr)
        return 1
    seed = resolved_seed(args)
    metric = create_metric(args.metric, tie_epsilon=args.tie_epsilon)
    try:
        report = evaluate_metric(
            metric,
            pairs,
            seed=seed,
            resamples=args.resamples,
            jobs=args.jobs,
        )
    finally:
        metric.close()
    print(per_aspect_report(report), end="")
    print(f"ties: {report.tie_rate:.3f}  errors: {report.error_count}")
    if args.out:
        save_report(report, args.out)
    return 0


def cmd_agree(args) -> int:
    docs = _load_corpus(args.corpus)
    report = compute_agreement(docs, raw_labels=args.raw_labels)
    print(
        f"detection  avg {report.detection.avg:.3f}"
        f"  min {report.detection.min:.3f}  max {report.detection.max:.3f}"
    )
    print(
        f"correction avg {report.correction.avg:.3f}"
        f"  min {report.correction.min:.3f}  max {report.correction.max:.3f}"
    )
    if args.out:
        write_json(args.out, report.to_dict())
    return 0


def _read_lines(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def _corpus_instances(args):
    """(sources, hypotheses, reference_texts) from corpus XML: one instance
    per paper, hypothesis from --hyp-editor ('source' for the unedited
    text), references from every other editor's revision."""
    docs = _load_corpus(args.corpus)
    by_paper: dict[str, list] = {}
    for doc in docs:
        by_paper.setdefault(doc.id, []).append(doc)
    ref_editors = set(args.ref_editors.split(",")) if args.ref_editors else None
    sources, hypotheses, references = [], [], []
    for paper in sorted(by_paper):
        versions = sorted(by_paper[paper], key=lambda d: d.editor)
        src = source_text(versions[0])
        if args.hyp_editor == "source":
            hyp = src
            ref_docs = versions
        else:
            hyp_doc = next(
                (d for d in versions if d.editor == args.hyp_editor), None
            )
            if hyp_doc is None:
                continue
            hyp = revised_text(hyp_doc)
            ref_docs = [d for d in versions if d.editor != args.hyp_editor]
        if ref_editors is not None:
            ref_docs = [d for d in ref_docs if d.editor in ref_editors]
        if not ref_docs:
            continue
        sources.append(src)
        hypotheses.append(hyp)
        references.append([revised_text(d) for d in ref_docs])
    if not sources:
        raise ValueError("no instances found for the requested editors")
    return sources, hypotheses, references


def _text_instances(args):
    sources = _read_lines(args.src)
    hypotheses = _read_lines(args.hyp)
    reference_files = [_read_lines(path) for path in args.ref]
    for lines in reference_files:
        if len(lines) != len(sources):
            raise ValueError("reference file length does not match source file")
    if len(hypotheses) != len(sources):
        raise ValueError("hypothesis file length does not match source file")
    references = [
        [column[i] for column in reference_files] for i in range(len(sources))
    ]
    return sources, hypotheses, references


def _gather_instances(args):
    if args.corpus:
        return _corpus_instances(args)
    if not (args.src and args.hyp and args.ref):
        raise ValueError("need either --corpus or all of --src/--hyp/--ref")
    return _text_instances(args)


def cmd_gleu(args) -> int:
    sources, hypotheses, references = _gather_instances(args)
    cfg = GleuConfig(
        max_n=args.max_n, iterations=args.iterations, seed=resolved_seed(args)
    )
    report = gleu_report(sources, hypotheses, references, cfg)
    print(f"GLEU: {report.score:.2f} (std {report.std_dev:.2f})")
    if args.out:
        write_json(
            args.out,
            {
                "score": report.score,
                "std_dev": report.std_dev,
                "per_instance": report.per_instance,
            },
        )
    return 0


def cmd_mm_score(args) -> int:
    sources, hypotheses, references = _gather_instances(args)
    reference_edit_sets = []
    for src, refs in zip(sources, references):
        src_tokens = tokenize(src).tokens
        reference_edit_sets.append(
            [extract_edits(src_tokens, tokenize(ref).tokens) for ref in refs]
        )
    result = max_match_f05(sources, hypotheses, reference_edit_sets)
    print(
        f"precision {result.precision:.4f}  recall {result.recall:.4f}"
        f"  F0.5 {result.f05:.4f}"
    )
    if args.out:
        write_json(
            args.out,
            {
                "precision": result.precision,
                "recall": result.recall,
                "f05": result.f05,
                "tp": result.tp,
                "fp": result.fp,
                "fn": result.fn,
            },
        )
    return 0


def cmd_lm_train(args) -> int:
    if args.corpus:
        docs = _load_corpus(args.corpus)
        lines = []
        from reveval.corruption import split_sentences

        for doc in docs:
            for paragraph in source_text(doc).split("\n\n"):
                lines.extend(split_sentences(paragraph))
    else:
        lines = []
        for path in args.input:
            lines.extend(_read_lines(path))
    model = fit_text(lines, order=args.order, min_count=args.min_count)
    blob = model.to_bytes()
    Path(args.out).write_bytes(blob)
    print(
        f"trained order-{args.order} model on {len(lines)} sentences"
        f" ({model.vocab_size} types) -> {args.out}"
    )
    return 0


def cmd_lm_ppl(args) -> int:
    model = NgramModel.load(args.model)
    lines = [l for l in _read_lines(args.input) if l.strip()]
    sentences = [tokenize(line).tokens for line in lines]
    ppl = model.corpus_perplexity(sentences)
    print(f"perplexity: {ppl:.3f}")
    per_line = None
    if args.per_line:
        per_line = [model.perplexity(s) for s in sentences]
        for line, value in zip(lines, per_line):
            print(f"{value:10.3f}  {line}")
    if args.out:
        payload = {"perplexity": ppl}
        if per_line is not None:
            payload["per_line"] = per_line
        write_json(args.out, payload)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_seed(parser, help_text="seed for randomized steps (default 0, logged)"):
    parser.add_argument("--seed", type=int, default=None, help=help_text)


def _add_instance_inputs(parser):
    parser.add_argument("--corpus", help="corpus file or directory of XML documents")
    parser.add_argument("--src", help="source text file, one instance per line")
    parser.add_argument("--hyp", help="hypothesis text file, one instance per line")
    parser.add_argument(
        "--ref",
        action="append",
        default=[],
        help="reference text file (repeat for multiple annotators)",
    )
    parser.add_argument(
        "--hyp-editor",
        default="source",
        help="corpus mode: editor whose revision is scored, or 'source'",
    )
    parser.add_argument(
        "--ref-editors",
        default="",
        help="corpus mode: comma-separated reference editors (default: all others)",
    )
    parser.add_argument("--out", help="write a JSON report here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reveval",
        description="Document-revision evaluation toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"reveval {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="increase log verbosity"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("validate", help="parse a corpus and check round-trip fidelity")
    p.add_argument("--corpus", required=True, help="corpus file or directory")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="aspect distribution and beyond-GEC ratio")
    p.add_argument("--corpus", required=True, help="corpus file or directory")
    p.add_argument("--out", help="write JSON statistics here")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("pairs", help="extract snippet pairs")
    p.add_argument("--corpus", required=True, help="corpus file or directory")
    p.add_argument("--split", help="split file (JSON or newline-delimited ids)")
    p.add_argument(
        "--side",
        choices=["train", "test"],
        default="test",
        help="which side of the split to extract (default test)",
    )
    p.add_argument("--out", required=True, help="output path")
    p.add_argument(
        "--format", choices=["jsonl", "csv"], default="jsonl", help="output format"
    )
    p.add_argument(
        "--training-export",
        action="store_true",
        help="emit labeled (a, b) training pairs instead of snippet pairs",
    )
    p.add_argument(
        "--swap-fraction",
        type=float,
        default=0.5,
        help="fraction of training pairs with the revised text in slot a",
    )
    _add_seed(p)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("corrupt", help="build worse-quality revision pairs")
    p.add_argument("--corpus", required=True, help="corpus file or directory")
    p.add_argument("--config", required=True, help="key=value noise config file")
    p.add_argument("--out", required=True, help="output pairs.jsonl path")
    _add_seed(p, "override the seed from the config file")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("eval", help="classification accuracy of a metric over pairs")
    p.add_argument("--corpus", help="corpus file or directory")
    p.add_argument("--pairs", help="pre-extracted pairs.jsonl (alternative to --corpus)")
    p.add_argument("--split", help="split file restricting the corpus")
    p.add_argument(
        "--side",
        choices=["train", "test"],
        default="test",
        help="which side of the split to evaluate (default test)",
    )
    p.add_argument(
        "--metric",
        required=True,
        help="metric spec: native-ppl:<model>, adapter:<cmd>, oracle,"
        " oracle:inverted, random:<seed>",
    )
    p.add_argument("--tie-epsilon", type=float, default=0.0, help="score tie margin")
    p.add_argument(
        "--resamples", type=int, default=1000, help="bootstrap resamples for CIs"
    )
    p.add_argument(
        "--jobs",
        type=int,
        default=os.cpu_count() or 1,
        help="concurrent metric calls (default: logical cores)",
    )
    p.add_argument("--out", help="write the JSON report here")
    _add_seed(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("agree", help="inter-annotator agreement")
    p.add_argument("--corpus", required=True, help="corpus file or directory")
    p.add_argument(
        "--raw-labels",
        action="store_true",
        help="match raw labels instead of aspects for correction agreement",
    )
    p.add_argument("--out", help="write agreement JSON here")
    p.set_defaults(func=cmd_agree)

    p = sub.add_parser("gleu", help="sampled-reference GLEU")
    _add_instance_inputs(p)
    p.add_argument("--max-n", type=int, default=4, help="largest n-gram order")
    p.add_argument("--iterations", type=int, default=500, help="sampling iterations")
    _add_seed(p)
    p.set_defaults(func=cmd_gleu)

    p = sub.add_parser("mm-score", help="span-match F0.5 against gold edits")
    _add_instance_inputs(p)
    p.set_defaults(func=cmd_mm_score)

    p = sub.add_parser("lm-train", help="fit the n-gram language model")
    p.add_argument(
        "--input", action="append", default=[], help="training text, one sentence per line"
    )
    p.add_argument("--corpus", help="train on a corpus's source text instead")
    p.add_argument("--order", type=int, default=3, help="n-gram order")
    p.add_argument(
        "--min-count", type=int, default=1, help="tokens below this count become <unk>"
    )
    p.add_argument("--out", required=True, help="model output path")
    p.set_defaults(func=cmd_lm_train)

    p = sub.add_parser("lm-ppl", help="perplexity of a text under a saved model")
    p.add_argument("--model", required=True, help="model file from lm-train")
    p.add_argument("--input", required=True, help="text file, one sentence per line")
    p.add_argument("--per-line", action="store_true", help="print per-line perplexity")
    p.add_argument("--out", help="write JSON results here")
    p.set_defaults(func=cmd_lm_ppl)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (CorpusError, MetricError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
