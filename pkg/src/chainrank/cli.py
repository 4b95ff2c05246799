"""Command-line entry point: ``chainrank <verb> ...``.

Exit codes: 0 success, 2 configuration error, 3 IO or input-data error,
4 backend error, 5 invariant violation (including non-finite training loss).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write_text, read_jsonl
from .chaingen import (
    GenerationConfig,
    audit_chain,
    generate_chains,
    load_taxonomy,
    read_chains,
    read_seeds,
    write_chains,
)
from .evalkit import (
    AXES,
    judge_many,
    mcqa_accuracy,
    mcqa_answer,
    mean_scores,
    meteor_lite,
    ranking_accuracy,
    rouge_l,
    spearman,
    write_csv,
    write_report,
)
from .exceptions import (
    BackendError,
    ConfigurationError,
    InvalidInputError,
    InvariantViolation,
    NonFiniteLossError,
    UndefinedCorrelationError,
)
from .llmgateway import BackendConfig, BackendKind, LLMClient, TemplateStore
from .rankloss import Objective
from .toypolicy import (
    ChainRanker,
    load_dataset,
    load_policy,
    make_synth_dataset,
    save_dataset,
    save_policy,
    split_dataset,
)
from .transform import chain_to_mcq, chain_to_ynq, write_mcq, write_ynq

log = logging.getLogger("chainrank")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_BACKEND, EXIT_INVARIANT = 0, 2, 3, 4, 5


@dataclass
class RunConfig:
    """Everything a command needs; JSON config file first, then flag overrides."""

    seed: int = 0
    input: str | None = None
    out_dir: str = "out"
    taxonomy: str | None = None
    template_dir: str | None = None
    backend: dict = field(default_factory=lambda: {"kind": "MOCK"})
    loss: dict = field(default_factory=lambda: {"objective": "PL_DPO", "beta": 0.3, "ntp_weight": 0.1})
    train: dict = field(
        default_factory=lambda: {"learning_rate": 1e-2, "steps": 500, "batch_size": 8, "weight_decay": 0.01}
    )
    chain_len: int = 4
    concurrency: int = 4

    def validate(self):
        if self.chain_len < 1:
            raise ConfigurationError("chain_len must be >= 1")
        if self.concurrency < 1:
            raise ConfigurationError("concurrency must be >= 1")
        if not self.out_dir:
            raise ConfigurationError("out_dir must be non-empty")
        self.backend_config()
        return self

    def backend_config(self):
        try:
            return BackendConfig(**self.backend)
        except TypeError as exc:
            raise ConfigurationError(f"bad backend config: {exc}") from None

    def to_record(self):
        return dataclasses.asdict(self)

    def fingerprint(self):
        blob = json.dumps(self.to_record(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path}: invalid JSON ({exc.msg})") from None
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"config {path}: unknown keys {unknown}")
        cfg = cls()
        for key, value in data.items():
            if isinstance(getattr(cfg, key), dict) and isinstance(value, dict):
                getattr(cfg, key).update(value)
            else:
                setattr(cfg, key, value)
        return cfg


# ------------------------------------------------------------------ helpers


def _out(cfg, name):
    path = Path(cfg.out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _need_input(cfg, what):
    if not cfg.input:
        raise ConfigurationError(f"{what} needs --input")
    return cfg.input


def _write_json(path, record):
    atomic_write_text(path, json.dumps(record, sort_keys=True, indent=2) + "\n")


def _client(cfg):
    templates = TemplateStore(*([cfg.template_dir] if cfg.template_dir else []))
    return LLMClient(cfg.backend_config(), templates=templates, seed=cfg.seed)


def _taxonomy(cfg):
    return load_taxonomy(cfg.taxonomy) if cfg.taxonomy else None


def _report(cfg, body):
    return {"config_fingerprint": cfg.fingerprint(), **body}


# ----------------------------------------------------------------- commands


def cmd_chain_gen(cfg, args):
    seeds = read_seeds(_need_input(cfg, "chain-gen"))
    out = _out(cfg, args.output)
    existing = read_chains(out) if out.exists() else []
    done = {c.video_id for c in existing}
    todo = [s for s in seeds if s.video_id not in done]
    gen_cfg = GenerationConfig(
        max_resamples=args.max_resamples,
        passthrough=not args.recaption,
        min_seed_words=args.min_seed_words,
    )
    chains, report = generate_chains(
        todo,
        cfg.chain_len,
        _client(cfg),
        seed=cfg.seed,
        taxonomy=_taxonomy(cfg),
        config=gen_cfg,
        concurrency=cfg.concurrency,
        independent=args.independent,
    )
    write_chains(out, existing + chains)
    body = report.to_record()
    body.update({"skipped_existing": len(seeds) - len(todo), "output": str(out), "total_chains": len(existing) + len(chains)})
    body = _report(cfg, body)
    _write_json(_out(cfg, args.output + ".report.json"), body)
    log.info("chain-gen: %d new chains, %d already present", len(chains), len(seeds) - len(todo))
    return body


def cmd_audit(cfg, args):
    chains = read_chains(_need_input(cfg, "audit"))
    rng = np.random.default_rng(cfg.seed)
    k = min(args.sample, len(chains))
    picked = sorted(int(i) for i in rng.choice(len(chains), k, replace=False)) if chains else []
    judge = _client(cfg) if args.judge else None
    tax = _taxonomy(cfg)
    reports = [audit_chain(chains[i], judge, tax) for i in picked]
    judged = [r.order_pass for r in reports if r.order_pass is not None]
    summary = {
        "requested": args.sample,
        "audited": k,
        "shortfall": max(0, args.sample - len(chains)),
        "structural_pass_rate": float(np.mean([r.structural_pass for r in reports])) if reports else None,
        "order_judged": len(judged),
        "order_pass_rate": float(np.mean(judged)) if judged else None,
    }
    if summary["shortfall"]:
        log.warning("audit: asked for %d chains, dataset has %d", args.sample, len(chains))
    summary = _report(cfg, summary)
    write_report(_out(cfg, "audit.jsonl"), [r.to_record() for r in reports], summary)
    return summary


def _mix_counts(n, weights):
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size != 3 or np.any(weights < 0) or weights.sum() <= 0:
        raise ConfigurationError("--mix needs three non-negative weights, e.g. 1/1/1")
    exact = n * weights / weights.sum()
    counts = np.floor(exact).astype(int)
    # largest remainder, ties to the earlier kind
    for i in np.argsort(-(exact - counts), kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    return counts.tolist()


def cmd_transform(cfg, args):
    chains = [c for c in read_chains(_need_input(cfg, "transform")) if len(c.captions) >= 2]
    try:
        weights = [float(x) for x in args.mix.split("/")]
    except ValueError:
        raise ConfigurationError(f"bad --mix {args.mix!r}") from None
    n_mcq, n_ynq, n_cap = _mix_counts(len(chains), weights)
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(chains))
    parts = [
        [chains[i] for i in order[:n_mcq]],
        [chains[i] for i in order[n_mcq : n_mcq + n_ynq]],
        [chains[i] for i in order[n_mcq + n_ynq :]],
    ]
    client = _client(cfg)
    mcq = [chain_to_mcq(c, client, rng, shuffle=not args.no_shuffle) for c in parts[0]]
    ynq = [chain_to_ynq(c, client) for c in parts[1]]
    write_mcq(_out(cfg, "mcq.jsonl"), mcq)
    write_ynq(_out(cfg, "ynq.jsonl"), ynq)
    write_chains(_out(cfg, "caption_chains.jsonl"), parts[2])
    manifest = _report(cfg, {"mix": weights, "mcq": len(mcq), "ynq": len(ynq), "caption": len(parts[2]), "input_chains": len(chains)})
    _write_json(_out(cfg, "transform_manifest.json"), manifest)
    return manifest


def cmd_synth(cfg, args):
    data = make_synth_dataset(
        args.count,
        vocab_size=args.vocab_size,
        ctx_dim=args.ctx_dim,
        seq_len=args.seq_len,
        chain_len=cfg.chain_len,
        seed=cfg.seed,
        structure=args.structure,
        negatives=args.negatives,
    )
    train_set, heldout = split_dataset(data, args.heldout_fraction)
    save_dataset(_out(cfg, "synth_train.jsonl"), train_set)
    save_dataset(_out(cfg, "synth_heldout.jsonl"), heldout)
    body = _report(cfg, {"train": len(train_set), "heldout": len(heldout), "structure": args.structure})
    _write_json(_out(cfg, "synth_manifest.json"), body)
    return body


def _ranker(cfg):
    params = {**cfg.loss, **cfg.train}
    params["objective"] = Objective.parse(params.get("objective", "PL_DPO")).value
    try:
        return ChainRanker(random_state=cfg.seed).set_params(**params)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None


def cmd_train(cfg, args):
    data = load_dataset(_need_input(cfg, "train"))
    sizes = [None]
    if args.sweep:
        try:
            sizes = [int(x) for x in args.sweep.split(",")]
        except ValueError:
            raise ConfigurationError(f"bad --sweep {args.sweep!r}") from None
    results = []
    for L in sizes:
        subset = data if L is None else [ex.truncated(L + 1) for ex in data]
        ranker = _ranker(cfg).fit(subset)
        suffix = "" if L is None else f"_L{L}"
        ckpt = _out(cfg, f"policy{suffix}.ckpt")
        meta = {"config_fingerprint": cfg.fingerprint(), "chain_len": L, "objective": ranker.objective}
        save_policy(ckpt, ranker.policy_, meta)
        save_policy(_out(cfg, f"reference{suffix}.ckpt"), ranker.reference_, meta)
        ranker.loss_trace_.to_csv(_out(cfg, f"trace{suffix}.csv"))
        results.append({"chain_len": L, "checkpoint": str(ckpt), "final_loss": ranker.loss_trace_.total[-1]})
    body = _report(cfg, {"runs": results})
    _write_json(_out(cfg, "train_report.json"), body)
    return body


def _pred_pairs(path):
    rows = read_jsonl(path)
    for r in rows:
        if "predicted" not in r or "reference" not in r:
            raise InvalidInputError(f"{path}: records need 'predicted' and 'reference'")
    return rows


def cmd_eval(cfg, args):
    kind = args.eval_kind
    if kind == "ngram":
        rows = []
        for i, r in enumerate(_pred_pairs(_need_input(cfg, "eval ngram"))):
            rl, me = rouge_l(r["predicted"], r["reference"]), meteor_lite(r["predicted"], r["reference"])
            rows.append({"id": r.get("id", i), "rouge_l": rl.value, "meteor_lite": me.value})
        summary = {
            "count": len(rows),
            "rouge_l": float(np.mean([r["rouge_l"] for r in rows])) if rows else None,
            "meteor_lite": float(np.mean([r["meteor_lite"] for r in rows])) if rows else None,
        }
        write_csv(_out(cfg, "ngram.csv"), rows, ["id", "rouge_l", "meteor_lite"])
    elif kind == "judge":
        src = _pred_pairs(_need_input(cfg, "eval judge"))
        scores = judge_many([(r["predicted"], r["reference"]) for r in src], _client(cfg), cfg.concurrency)
        rows = [{"id": r.get("id", i), **s.to_record()} for i, (r, s) in enumerate(zip(src, scores))]
        summary = {"count": len(rows), "means": mean_scores(scores) if scores else None}
        write_csv(_out(cfg, "judge.csv"), rows, ["id", *AXES])
    elif kind == "rank-acc":
        data = load_dataset(_need_input(cfg, "eval rank-acc"))
        rows = []
        for name, path in (("model", args.checkpoint), ("baseline", args.baseline)):
            if path:
                acc = ranking_accuracy(load_policy(path), data)
                rows.append({"id": name, "checkpoint": path, **acc.to_record()})
        if not rows:
            raise ConfigurationError("eval rank-acc needs --checkpoint")
        summary = {r["id"]: {k: r[k] for k in ("exact_order_rate", "pairwise_rate", "tie_count", "degenerate")} for r in rows}
    elif kind == "mcqa":
        src = read_jsonl(_need_input(cfg, "eval mcqa"))
        policy = load_policy(args.checkpoint) if args.checkpoint else None
        rows = []
        for i, r in enumerate(src):
            if "letter_logprobs" in r:
                ans = mcqa_answer(r["letter_logprobs"], None, r["letters"])
            elif policy is not None:
                ans = mcqa_answer(policy, np.asarray(r["context"], dtype=np.float64), r["letters"], r.get("prompt", []))
            else:
                raise ConfigurationError("eval mcqa needs --checkpoint or letter_logprobs records")
            rows.append({"id": r.get("id", i), "predicted": ans, "answer": r["answer"], "correct": ans == r["answer"]})
        summary = {
            "count": len(rows),
            "accuracy": mcqa_accuracy([r["predicted"] for r in rows], [r["answer"] for r in rows]) if rows else None,
        }
    elif kind == "agreement":
        if not args.other:
            raise ConfigurationError("eval agreement needs --other")
        a, b = read_jsonl(_need_input(cfg, "eval agreement")), read_jsonl(args.other)
        if len(a) != len(b):
            raise InvalidInputError("agreement files have different record counts")
        rows = []
        for ax in AXES:
            try:
                rho = spearman([r[ax] for r in a], [r[ax] for r in b])
            except KeyError:
                raise InvalidInputError(f"agreement records need the {ax!r} score") from None
            except UndefinedCorrelationError:
                # a constant axis has no rank variance; report it rather than abort
                rho = None
            rows.append({"axis": ax, "spearman": rho})
        summary = {r["axis"]: r["spearman"] for r in rows}
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigurationError(f"unknown eval kind {kind!r}")
    summary = _report(cfg, {"kind": kind, **summary})
    write_report(_out(cfg, f"eval_{kind}.jsonl"), rows, summary)
    return summary


COMMANDS = {
    "chain-gen": cmd_chain_gen,
    "audit": cmd_audit,
    "transform": cmd_transform,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
}


# ------------------------------------------------------------------- parser


def build_parser():
    # SUPPRESS keeps a subcommand's unset flags from clobbering values given before the verb
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON run configuration; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--mock", action="store_true", help="use the deterministic mock backend")
    common.add_argument("--concurrency", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--input", help="input dataset path")
    common.add_argument("--chain-len", type=int)
    common.add_argument("--taxonomy", help="taxonomy JSON file")
    common.add_argument("--template-dir", help="directory of prompt templates overriding the built-ins")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="chainrank", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=f"chainrank {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("chain-gen", parents=[common], help="generate caption chains from seed captions")
    g.add_argument("--output", default="chains.jsonl", help="file name inside --out")
    g.add_argument("--independent", action="store_true", help="independent single-error negatives instead of a chain")
    g.add_argument("--max-resamples", type=int, default=3)
    g.add_argument("--recaption", action="store_true", help="always recaption, even single long captions")
    g.add_argument("--min-seed-words", type=int, default=8)

    a = sub.add_parser("audit", parents=[common], help="audit a seeded sample of chains")
    a.add_argument("--sample", type=int, default=100)
    a.add_argument("--judge", action="store_true", help="also ask the backend to judge consecutive order")

    t = sub.add_parser("transform", parents=[common], help="convert chains into MCQ / YNQ / caption splits")
    t.add_argument("--mix", default="1/0/0", help="MCQ/YNQ/caption weights, e.g. 1/1/1")
    t.add_argument("--no-shuffle", action="store_true")

    s = sub.add_parser("synth", parents=[common], help="write a synthetic token-chain dataset")
    s.add_argument("--count", type=int, default=1000)
    s.add_argument("--vocab-size", type=int, default=32)
    s.add_argument("--ctx-dim", type=int, default=16)
    s.add_argument("--seq-len", type=int, default=24)
    s.add_argument("--structure", choices=["nested", "single", "fresh"], default="nested")
    s.add_argument("--negatives", choices=["uniform", "teacher", "prior"], default="uniform")
    s.add_argument("--heldout-fraction", type=float, default=0.2)

    tr = sub.add_parser("train", parents=[common], help="train the toy policy with a ranking objective")
    tr.add_argument("--objective", choices=[o.value for o in Objective] + ["RANK", "DPO"])
    tr.add_argument("--beta", type=float)
    tr.add_argument("--ntp-weight", type=float)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--steps", type=int)
    tr.add_argument("--batch-size", type=int)
    tr.add_argument("--sweep", help="comma-separated chain lengths, one checkpoint each (e.g. 2,3,4,5)")

    e = sub.add_parser("eval", parents=[common], help="evaluation reports")
    e.add_argument("eval_kind", choices=["judge", "ngram", "rank-acc", "mcqa", "agreement"])
    e.add_argument("--checkpoint")
    e.add_argument("--baseline", help="second checkpoint for rank-acc comparison")
    e.add_argument("--other", help="second judge-score file for agreement")
    return p


def resolve_config(args):
    config_path = getattr(args, "config", None)
    cfg = RunConfig.load(config_path) if config_path else RunConfig()
    concurrency = getattr(args, "concurrency", None)
    overrides = {
        "seed": getattr(args, "seed", None),
        "concurrency": concurrency,
        "out_dir": getattr(args, "out", None),
        "input": getattr(args, "input", None),
        "chain_len": getattr(args, "chain_len", None),
        "taxonomy": getattr(args, "taxonomy", None),
        "template_dir": getattr(args, "template_dir", None),
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "mock", False):
        cfg.backend = {**cfg.backend, "kind": BackendKind.MOCK.value}
    cfg.backend.setdefault("max_in_flight", cfg.concurrency)
    if concurrency is not None:
        cfg.backend["max_in_flight"] = concurrency
    if args.command == "train":
        for key, value in (("objective", args.objective), ("beta", args.beta), ("ntp_weight", args.ntp_weight)):
            if value is not None:
                cfg.loss[key] = value
        for key, value in (("learning_rate", args.lr), ("steps", args.steps), ("batch_size", args.batch_size)):
            if value is not None:
                cfg.train[key] = value
    return cfg.validate()


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        result = COMMANDS[args.command](cfg, args)
    except ConfigurationError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (InvariantViolation, NonFiniteLossError) as exc:
        log.error("invariant violation: %s", exc)
        return EXIT_INVARIANT
    except BackendError as exc:
        log.error("backend error: %s", exc)
        return EXIT_BACKEND
    except (OSError, InvalidInputError) as exc:
        log.error("input/output error: %s", exc)
        return EXIT_IO
    print(json.dumps(result, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
