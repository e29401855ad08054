"""Batch command-line surface: train, index, search, eval.

Every command is deterministic for a fixed --seed. Operational failures exit
nonzero after printing a single ``error[<code>]: message`` line to stderr.
Log verbosity comes from the MODIR_LOG environment variable (debug, info,
warning, error).
"""

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import data, encoder, evaluation, index as index_mod, scoring
from .config import RunConfig
from .errors import (
    InvalidConfigError,
    ModirError,
    StageError,
    UnknownLanguageError,
    UnknownMetricError,
    UnknownPassageError,
)

log = logging.getLogger("modir")

_STAGE_STREAM = {"pretrain": 1, "finetune": 2, "extend": 3}


def _load_config(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if args.config:
        return RunConfig.from_file(args.config, **overrides)
    return RunConfig(**overrides)


def _records_by_id(records):
    return {rec.id: rec for rec in records}


def _prepare_record(rec, cfg: RunConfig, vocab: int, kind: str) -> scoring.PreparedSequence:
    tokens = data.tokenize(rec.text, vocab)
    if kind == "query":
        return scoring.prepare_query(tokens, cfg.n, rec.language)
    return scoring.prepare_passage(tokens, cfg.m, rec.language)


def _encode_corpus(records, params, cfg: RunConfig, kind: str) -> dict:
    out = {}
    for rec in records:
        if rec.embeddings is not None:
            out[rec.id] = rec.embeddings
        else:
            if params is None:
                raise InvalidConfigError(
                    f"record {rec.id!r} is raw text; pass --checkpoint so it can be encoded"
                )
            out[rec.id] = encoder.encode(_prepare_record(rec, cfg, params.vocab_size, kind), params)
    return out


def _write_report(path, losses):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        for step, loss in enumerate(losses, start=1):
            fh.write(f"{step},{loss:.10f}\n")


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    cfg = _load_config(args)
    corpus = data.read_jsonl_records(args.corpus)
    text_records = [r for r in corpus if r.text is not None]
    if not text_records:
        raise InvalidConfigError("training needs text records in the corpus")

    if args.stage == "pretrain":
        if args.checkpoint_in:
            params = encoder.load_checkpoint(args.checkpoint_in)
            if params.stage != "pretrain":
                raise StageError(f"cannot resume pretraining from stage {params.stage!r}")
        else:
            langs = sorted({r.language for r in text_records})
            params = encoder.init_params(
                langs, vocab=cfg.vocab, d=cfg.d, d_out=cfg.d_out,
                n_layers=cfg.n_layers, bottleneck=cfg.bottleneck, seed=cfg.seed,
            )
        losses = _run_mlm(params, text_records, cfg, cfg.pretrain_steps, stage="pretrain")
    elif args.stage == "finetune":
        if not args.checkpoint_in:
            raise InvalidConfigError("finetune needs --checkpoint-in from the pretrain stage")
        params = encoder.load_checkpoint(args.checkpoint_in)
        params.set_stage("finetune")
        losses = _run_finetune(params, text_records, cfg, args)
    else:  # extend
        if not args.checkpoint_in:
            raise InvalidConfigError("extend needs --checkpoint-in from an earlier stage")
        if not args.lang:
            raise InvalidConfigError("extend needs --lang naming the new language")
        params = encoder.load_checkpoint(args.checkpoint_in)
        encoder.add_language(params, args.lang, init_seed=(cfg.seed, _STAGE_STREAM["extend"], 0))
        new_lang_records = [r for r in text_records if r.language == args.lang]
        if not new_lang_records:
            raise UnknownLanguageError(f"corpus has no text records in language {args.lang!r}")
        losses = _run_mlm(params, new_lang_records, cfg, cfg.extend_steps, stage="extend")

    encoder.save_checkpoint(params, args.checkpoint_out)
    report = args.report or f"{args.checkpoint_out}.losses.csv"
    _write_report(report, losses)
    print(f"stage={args.stage} steps={len(losses)} final_loss={losses[-1] if losses else 0.0:.6f}")
    print(f"checkpoint={args.checkpoint_out} report={report}")
    return 0


def _run_mlm(params, records, cfg: RunConfig, steps: int, stage: str):
    rng = np.random.default_rng((cfg.seed, _STAGE_STREAM[stage]))
    losses = []
    for step in range(steps):
        rec = records[step % len(records)]
        seq = scoring.prepare_passage(data.tokenize(rec.text, params.vocab_size), cfg.m, rec.language)
        _, loss = encoder.mlm_step(params, seq, rec.language, cfg.mask_rate, cfg.learning_rate, rng)
        losses.append(loss)
    return losses


def _run_finetune(params, text_records, cfg: RunConfig, args):
    if not args.queries or not args.triples:
        raise InvalidConfigError("finetune needs --queries and --triples")
    passages = _records_by_id(text_records)
    queries = _records_by_id([r for r in data.read_jsonl_records(args.queries) if r.text is not None])
    triples = []
    for qid, pos_id, neg_id in data.read_triples(args.triples):
        if qid not in queries:
            raise UnknownPassageError(f"triple references unknown query id {qid!r}")
        for pid in (pos_id, neg_id):
            if pid not in passages:
                raise UnknownPassageError(f"triple references unknown passage id {pid!r}")
        triples.append(
            encoder.TrainingTriple(
                query=_prepare_record(queries[qid], cfg, params.vocab_size, "query"),
                positive=_prepare_record(passages[pos_id], cfg, params.vocab_size, "passage"),
                hard_negative=_prepare_record(passages[neg_id], cfg, params.vocab_size, "passage"),
            )
        )
    if not triples:
        raise InvalidConfigError("triples file is empty")
    batches = [
        encoder.Batch(tuple(triples[i : i + cfg.batch_size]))
        for i in range(0, len(triples), cfg.batch_size)
    ]
    losses = []
    for step in range(cfg.finetune_steps):
        _, loss = encoder.finetune_step(batches[step % len(batches)], params, cfg.learning_rate)
        losses.append(loss)
    return losses


# ---------------------------------------------------------------------------
# index


def cmd_index(args) -> int:
    cfg = _load_config(args)
    records = data.read_records(args.corpus)
    if not records:
        raise InvalidConfigError("corpus is empty")
    params = encoder.load_checkpoint(args.checkpoint) if args.checkpoint else None
    corpus = _encode_corpus(records, params, cfg, "passage")
    idx = index_mod.build_index(corpus, seed=cfg.seed)
    index_mod.save_index(idx, args.out)
    print(
        f"embeddings={idx.embedding_count} centroids={idx.centroid_count} "
        f"bits_per_embedding={idx.bits_per_embedding}"
    )
    print(f"index={args.out}")
    return 0


# ---------------------------------------------------------------------------
# search


def cmd_search(args) -> int:
    cfg = _load_config(args)
    idx = index_mod.load_index(args.index)
    params = encoder.load_checkpoint(args.checkpoint) if args.checkpoint else None
    queries = _encode_corpus(data.read_records(args.queries), params, cfg, "query")

    final_k = args.k if args.k is not None else cfg.final_k
    candidate_k = args.candidate_k if args.candidate_k is not None else max(cfg.candidate_k, final_k)
    n_probe = args.nprobe if args.nprobe is not None else min(cfg.n_probe, idx.centroid_count)
    oracle_corpus = idx.decompressed_corpus() if args.exact else None

    run = {}
    latencies = []
    for qid, matrix in queries.items():
        started = time.perf_counter()
        if args.exact:
            ranked = evaluation.brute_force_search(matrix, oracle_corpus, final_k)
        else:
            params_s = index_mod.SearchParams(n_probe=n_probe, candidate_k=candidate_k, final_k=final_k)
            ranked = index_mod.search(matrix, idx, params_s)
        latencies.append((time.perf_counter() - started) * 1000.0)
        run[qid] = ranked
    evaluation.write_run(run, args.out)
    print(f"queries={len(run)} run={args.out}")
    if args.timing and latencies:
        arr = np.array(latencies)
        print(
            f"latency_ms mean={arr.mean():.2f} median={np.median(arr):.2f} "
            f"p95={np.percentile(arr, 95):.2f} max={arr.max():.2f}"
        )
    return 0


# ---------------------------------------------------------------------------
# eval


_METRICS = {"mrr": evaluation.mrr_at_k, "recall": evaluation.recall_at_k}


def _parse_metric(spec: str):
    name, sep, cutoff = spec.strip().lower().partition("@")
    if not sep or name not in _METRICS:
        supported = ", ".join(f"{m}@K" for m in sorted(_METRICS))
        raise UnknownMetricError(f"unknown metric {spec!r}; supported: {supported}")
    try:
        k = int(cutoff)
    except ValueError:
        raise UnknownMetricError(f"bad cutoff in {spec!r}") from None
    return name, k


def cmd_eval(args) -> int:
    run = evaluation.read_run(args.run)
    qrels = evaluation.read_qrels(args.qrels)
    metrics = [_parse_metric(m) for m in args.metrics.split(",") if m.strip()]
    if not metrics:
        raise UnknownMetricError("no metrics requested")
    _, skipped = evaluation.evaluable_queries(run, qrels)
    for name, k in metrics:
        value = _METRICS[name](run, qrels, k)
        print(f"{name}@{k} {value:.4f}")
    if skipped:
        print(f"skipped_queries {len(skipped)}")
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modir", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one learning stage and write a checkpoint")
    train.add_argument("--stage", required=True, choices=("pretrain", "finetune", "extend"))
    train.add_argument("--corpus", required=True, help="JSONL passage records")
    train.add_argument("--queries", help="JSONL query records (finetune)")
    train.add_argument("--triples", help="qid pos_pid neg_pid lines (finetune)")
    train.add_argument("--lang", help="new language id (extend)")
    train.add_argument("--checkpoint-in", dest="checkpoint_in")
    train.add_argument("--checkpoint-out", dest="checkpoint_out", required=True)
    train.add_argument("--report", help="loss curve CSV (default: <checkpoint-out>.losses.csv)")
    train.set_defaults(func=cmd_train)

    index_p = sub.add_parser("index", help="encode a corpus and build the compressed index")
    index_p.add_argument("--corpus", required=True, help="JSONL records or binary embedding block")
    index_p.add_argument("--checkpoint", help="encoder checkpoint (needed for text records)")
    index_p.add_argument("--out", required=True, help="index directory")
    index_p.set_defaults(func=cmd_index)

    search_p = sub.add_parser("search", help="rank passages for each query")
    search_p.add_argument("--index", required=True)
    search_p.add_argument("--queries", required=True, help="JSONL records or binary embedding block")
    search_p.add_argument("--checkpoint", help="encoder checkpoint (needed for text queries)")
    search_p.add_argument("--k", type=int, help="results per query")
    search_p.add_argument("--nprobe", type=int)
    search_p.add_argument("--candidate-k", dest="candidate_k", type=int)
    search_p.add_argument("--exact", action="store_true", help="brute-force oracle over the decompressed corpus")
    search_p.add_argument("--timing", action="store_true", help="print a per-query latency summary")
    search_p.add_argument("--out", required=True, help="TREC run file")
    search_p.set_defaults(func=cmd_search)

    eval_p = sub.add_parser("eval", help="score a run file against qrels")
    eval_p.add_argument("--run", required=True)
    eval_p.add_argument("--qrels", required=True)
    eval_p.add_argument("--metrics", default="mrr@10,recall@100", help="comma list, e.g. mrr@10,recall@100")
    eval_p.set_defaults(func=cmd_eval)

    for p in (train, index_p, search_p, eval_p):
        p.add_argument("--config", help="JSON file of RunConfig overrides")
        p.add_argument("--seed", type=int, help="overrides the config seed")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MODIR_LOG", "warning").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ModirError as exc:
        print(f"error[{exc.code}]: {exc.message}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
