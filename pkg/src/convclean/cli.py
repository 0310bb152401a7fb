"""Command-line entry point: preprocess, chunk, serve, aggregate, kappa,
detect, evaluate, stats.

Exit codes: 0 ok, 1 usage, 2 data error, 3 detector/protocol error.
Outputs are reproducible: timestamps go to a ``.meta.json`` sidecar, never
into the artifact itself, and partial outputs are removed on error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from typing import Optional

from . import chunking, markup, model, pipeline, quality
from .detectors import (
    AcknowledgmentHeuristic,
    Detector,
    DetectorError,
    ExternalDetector,
    NegativeDetector,
    OracleDetector,
    RepetitionHeuristic,
    default_heuristic_bundle,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DETECTOR = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def load_config(args) -> model.PipelineConfig:
    """flags > config file > defaults"""
    values = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fp:
            values.update(json.load(fp))
    for key in (
        "chunk_target_tokens", "chunk_overlap_fraction", "qualification_threshold",
        "std_max_seq", "mtd_max_seq", "min_annotations_per_hit", "keep_uncertain_words",
    ):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return model.PipelineConfig(**values)


class _AtomicOutput:
    """Write to <path>.part, rename on success, unlink on failure."""

    def __init__(self, path: str):
        self.path = path
        self.tmp = path + ".part"
        self.fp = None

    def __enter__(self):
        self.fp = open(self.tmp, "w", encoding="utf-8")
        return self.fp

    def __exit__(self, exc_type, exc, tb):
        self.fp.close()
        if exc_type is None:
            os.replace(self.tmp, self.path)
        else:
            os.unlink(self.tmp)
        return False


def write_sidecar(path: str, cfg: model.PipelineConfig, command: str) -> None:
    with open(path + ".meta.json", "w", encoding="utf-8") as fp:
        json.dump(
            {"command": command, "config": asdict(cfg), "written_at": time.time()},
            fp, indent=2,
        )
        fp.write("\n")


# --- subcommands -------------------------------------------------------------


def cmd_preprocess(args) -> int:
    cfg = load_config(args)
    with open(args.input, encoding="utf-8") as fp:
        raws = [markup.raw_conversation_from_obj(o) for o in model.read_jsonl(fp)]
    cleaned = []
    all_traces = []
    for raw in raws:
        conv, traces = markup.preprocess_conversation(raw, cfg.keep_uncertain_words)
        cleaned.append(conv)
        all_traces.append((raw.conv_id, traces))
    with _AtomicOutput(args.output) as fp:
        model.write_conversations(cleaned, fp)
    if args.traces:
        with _AtomicOutput(args.traces) as fp:
            for conv_id, traces in all_traces:
                obj = {
                    "conv_id": conv_id,
                    "slash_units": [
                        {"kept": [list(s) for s in t.kept],
                         "removed": [[list(s), r] for s, r in t.removed]}
                        for t in traces
                    ],
                }
                fp.write(json.dumps(obj, ensure_ascii=False) + "\n")
        write_sidecar(args.traces, cfg, "preprocess")
    write_sidecar(args.output, cfg, "preprocess")
    return EXIT_OK


def cmd_chunk(args) -> int:
    cfg = load_config(args)
    with open(args.input, encoding="utf-8") as fp:
        convs = model.read_conversations(fp)
    with _AtomicOutput(args.output) as fp:
        for conv in convs:
            for hit in chunking.chunk_conversation(conv, cfg):
                fp.write(json.dumps(chunking.hit_to_obj(hit), ensure_ascii=False) + "\n")
    write_sidecar(args.output, cfg, "chunk")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import AnnotationService, create_app

    cfg = load_config(args)
    service = AnnotationService(
        args.log,
        qualification_threshold=cfg.qualification_threshold,
        min_annotations_per_hit=cfg.min_annotations_per_hit,
    )
    port = args.port or int(os.environ.get("CONVCLEAN_PORT", "8400"))
    uvicorn.run(create_app(service), host=args.host, port=port)
    return EXIT_OK


def cmd_aggregate(args) -> int:
    from .service import AnnotationService

    cfg = load_config(args)
    service = AnnotationService(
        args.log,
        qualification_threshold=cfg.qualification_threshold,
        min_annotations_per_hit=cfg.min_annotations_per_hit,
    )
    export = service.export_labels()
    service.close()
    with _AtomicOutput(args.output) as fp:
        for obj in export["labels"]:
            fp.write(json.dumps(obj, ensure_ascii=False) + "\n")
    if export["unlabeled_turns"]:
        print(f"{len(export['unlabeled_turns'])} unlabeled turns", file=sys.stderr)
    write_sidecar(args.output, cfg, "aggregate")
    return EXIT_OK


def cmd_kappa(args) -> int:
    from .service import AnnotationService

    cfg = load_config(args)
    service = AnnotationService(args.log)
    turns: dict[tuple[str, int], list[list[str]]] = {}
    conv_turns: dict[str, dict[int, list[str]]] = {}
    for hit in service.hits.values():
        if hit.role == "qualification":
            continue
        for t in hit.turns:
            conv_turns.setdefault(hit.conv_id, {})[t["turn_index"]] = [
                model.token_id(hit.conv_id, t["turn_index"], tok["position"])
                for tok in t["tokens"]
            ]
    for conv_id, tmap in conv_turns.items():
        for turn_index, tids in tmap.items():
            raters = [
                quality.annotation_kappa_labels(a, tids)
                for a in service.submissions
                if set(tids) <= set(a.token_ids)
                and service.hits[a.hit_id].role != "qualification"
            ]
            if len(raters) >= 2:
                turns[(conv_id, turn_index)] = raters
    service.close()
    mean = quality.corpus_fleiss_kappa(turns.values())
    per_turn = {
        f"{c}:{t}": quality.fleiss_kappa(r) for (c, t), r in sorted(turns.items())
    }
    with _AtomicOutput(args.output) as fp:
        json.dump(
            {"mean_kappa": mean, "turns_scored": len(turns), "per_turn": per_turn},
            fp, indent=2,
        )
        fp.write("\n")
    write_sidecar(args.output, cfg, "kappa")
    return EXIT_OK


def _build_detector(name: str, scope: str, max_seq: int, gold: dict) -> Detector:
    if name == "oracle":
        return OracleDetector(gold, scope=scope, max_seq=max_seq)
    if name == "negative":
        det = NegativeDetector(scope=scope, max_seq=max_seq)
        return det
    if name == "ack":
        return AcknowledgmentHeuristic(max_seq=max_seq)
    if name == "repetition":
        return RepetitionHeuristic(max_seq=max_seq)
    if name == "heuristic":
        return default_heuristic_bundle(max_seq=max_seq)
    if name.startswith("external:"):
        return ExternalDetector(name[len("external:"):].split(), scope=scope, max_seq=max_seq)
    raise UsageError(f"unknown detector {name!r}")


def cmd_detect(args) -> int:
    cfg = load_config(args)
    with open(args.input, encoding="utf-8") as fp:
        convs = model.read_conversations(fp)
    gold = {}
    if args.gold:
        with open(args.gold, encoding="utf-8") as fp:
            gold = {ls.conv_id: ls for ls in model.read_labels(fp)}

    results = []
    for conv in convs:
        if args.mode == "two-stage":
            std = _build_detector(args.std, "single_turn", cfg.std_max_seq, gold)
            mtd = _build_detector(args.mtd, "multi_turn", cfg.mtd_max_seq, gold)
            labels = pipeline.run_two_stage(conv, std, mtd, cfg, jobs=args.jobs)
        else:
            det = _build_detector(args.detector, "multi_turn", cfg.mtd_max_seq, gold)
            labels = pipeline.run_combined(conv, det, cfg, jobs=args.jobs)
        results.append((conv, labels))

    with _AtomicOutput(args.output) as fp:
        model.write_labels([ls for _, ls in results], fp)
    write_sidecar(args.output, cfg, "detect")
    if args.cleaned:
        with _AtomicOutput(args.cleaned) as fp:
            for conv, labels in results:
                fp.write(f"== {conv.conv_id} ==\n")
                fp.write(pipeline.render_cleaned(conv, labels))
        write_sidecar(args.cleaned, cfg, "detect")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = load_config(args)
    with open(args.pred, encoding="utf-8") as fp:
        preds = {ls.conv_id: ls for ls in model.read_labels(fp)}
    with open(args.gold, encoding="utf-8") as fp:
        golds = {ls.conv_id: ls for ls in model.read_labels(fp)}
    universe = None
    if args.transcripts:
        with open(args.transcripts, encoding="utf-8") as fp:
            convs = model.read_conversations(fp)
        universe = {tid for c in convs for tid in c.token_ids()}
    pred_all: set[str] = set()
    gold_all: set[str] = set()
    for conv_id, ls in preds.items():
        pred_all |= ls.removed_ids()
    for conv_id, ls in golds.items():
        gold_all |= ls.removed_ids()
    report = quality.token_prf(pred_all, gold_all, universe)
    per_cat: dict[str, dict[str, int]] = {}
    for ls in golds.values():
        for tid, cat in ls.removals.items():
            row = per_cat.setdefault(cat.value, {"gold": 0, "hit": 0})
            row["gold"] += 1
            if tid in pred_all:
                row["hit"] += 1
    obj = report.to_obj()
    obj["per_category_recall"] = {
        cat: row["hit"] / row["gold"] for cat, row in sorted(per_cat.items())
    }
    with _AtomicOutput(args.output) as fp:
        json.dump(obj, fp, indent=2)
        fp.write("\n")
    write_sidecar(args.output, cfg, "evaluate")
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = load_config(args)
    with open(args.transcripts, encoding="utf-8") as fp:
        convs = model.read_conversations(fp)
    labels = []
    if args.labels:
        with open(args.labels, encoding="utf-8") as fp:
            labels = model.read_labels(fp)
    report = model.dataset_stats(convs, labels)
    with _AtomicOutput(args.output) as fp:
        json.dump(
            {
                "conversations": report.conversations,
                "turns": report.turns,
                "tokens": report.tokens,
                "cleanup_tokens": report.cleanup_tokens,
                "category_counts": dict(report.category_counts),
                "category_percentages": dict(report.category_percentages),
                "per_split": {k: dict(v) for k, v in report.per_split.items()},
            },
            fp, indent=2,
        )
        fp.write("\n")
    write_sidecar(args.output, cfg, "stats")
    return EXIT_OK


# --- argument wiring ---------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--chunk-target-tokens", dest="chunk_target_tokens", type=int)
    p.add_argument("--chunk-overlap-fraction", dest="chunk_overlap_fraction", type=float)
    p.add_argument("--qualification-threshold", dest="qualification_threshold", type=float)
    p.add_argument("--std-max-seq", dest="std_max_seq", type=int)
    p.add_argument("--mtd-max-seq", dest="mtd_max_seq", type=int)
    p.add_argument("--min-annotations-per-hit", dest="min_annotations_per_hit", type=int)


def build_parser() -> _Parser:
    parser = _Parser(prog="convclean", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="raw markup transcripts -> canonical transcripts")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--traces", help="trace sidecar path")
    p.add_argument("--keep-uncertain-words", dest="keep_uncertain_words",
                   action="store_const", const=True, default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("chunk", help="transcripts -> HIT manifest")
    p.add_argument("input")
    p.add_argument("output")
    _add_config_flags(p)
    p.set_defaults(func=cmd_chunk)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--log", required=True, help="append-only command log path")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, help="default: $CONVCLEAN_PORT or 8400")
    _add_config_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("aggregate", help="service log -> aggregated gold labels")
    p.add_argument("--log", required=True)
    p.add_argument("output")
    _add_config_flags(p)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("kappa", help="service log -> agreement report")
    p.add_argument("--log", required=True)
    p.add_argument("output")
    _add_config_flags(p)
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("detect", help="run a cleanup pipeline")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--mode", choices=["two-stage", "combined"], required=True)
    p.add_argument("--std", default="negative", help="stage-1 detector (two-stage mode)")
    p.add_argument("--mtd", default="negative", help="stage-2 detector (two-stage mode)")
    p.add_argument("--detector", default="heuristic", help="detector (combined mode)")
    p.add_argument("--gold", help="gold labels (required for oracle detectors)")
    p.add_argument("--cleaned", help="also write cleaned transcript text here")
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="predictions vs gold -> metrics report")
    p.add_argument("pred")
    p.add_argument("gold")
    p.add_argument("output")
    p.add_argument("--transcripts", help="restrict to this corpus' token universe")
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--transcripts", required=True)
    p.add_argument("--labels")
    p.add_argument("output")
    _add_config_flags(p)
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(json.dumps({"error": "usage", "detail": str(e)}), file=sys.stderr)
        return EXIT_USAGE
    except (DetectorError, pipeline.PipelineError) as e:
        print(json.dumps({"error": type(e).__name__, "detail": str(e)}), file=sys.stderr)
        return EXIT_DETECTOR
    except (
        model.ModelError, markup.MarkupError, markup.PreprocessError,
        chunking.ChunkingError, quality.QualityError,
        OSError, json.JSONDecodeError, KeyError, ValueError,
    ) as e:
        print(json.dumps({"error": type(e).__name__, "detail": str(e)}), file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
