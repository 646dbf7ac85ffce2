"""Desk harness: training, decoding sessions, evaluation, sweeps and ledger audit.

File formats
------------
models dir
    ``manifest.json`` (vocabulary, order, smoothing, seed, shard -> document
    ids, model file names), ``private_XX.json`` per shard, ``public.json``.
config
    flat YAML mapping with keys ``alpha, beta, N, sigma, lambda, T, top_k,
    delta, mode, seed`` plus optional ``eps_budget, query_budget,
    subsample_q`` (baseline mode), ``symmetric_screen`` and
    ``projection_tol``. ``T: inf`` disables screening, ``T: -inf`` screens
    out every query.
ledger
    JSON lines. The first record is a header carrying the format version,
    order, delta and config snapshot; every following record is one query.
report
    a single JSON document (see :class:`EvalReport`).
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .accountant import (
    BaselineConfig,
    LedgerEntry,
    LedgerError,
    PrivacyLedger,
    data_independent_bound,
    rdp_to_dp,
    utility_gap_bound,
)
from .decoder import ADAPTIVE, BASELINE, DecodingConfig, decode_adaptive, decode_baseline
from .ensemble import NGramModel, Vocabulary, partition_corpus, read_documents, train_ngram
from .projection import project_many
from .screening import ScreeningConfig

LEDGER_FORMAT = "adapmixed-ledger"
LEDGER_VERSION = 1
MANIFEST_NAME = "manifest.json"
PUBLIC_NAME = "public.json"
SWEEP_HEADER = ["param", "value", "eps_rdp", "eps_dp", "ppl", "screened_out"]
SWEEP_PARAMS = ("threshold", "top_k", "beta", "ensemble_size", "screen_lambda_sigma", "alpha")
# n-gram settings for the bundled corpus
DESK_ORDER = 3
DESK_SMOOTHING = 0.02


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class LedgerFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def bundled_corpus_dir() -> Path:
    return Path(str(resources.files("adapmixed") / "data"))


def _num(x):
    # JSON has no infinities; spell them the way the config does
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else "-inf" if x < 0 else "nan"
    return x


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


# --------------------------------------------------------------------------
# config


_REQUIRED = ("alpha", "beta", "N", "sigma", "lambda", "T", "top_k")
_KNOWN = set(_REQUIRED) | {
    "delta", "mode", "seed", "eps_budget", "query_budget", "subsample_q", "symmetric_screen", "projection_tol",
}


def _as_float(raw: dict, key: str, default=None) -> float:
    if key not in raw:
        if default is None:
            raise ConfigError(key, "missing")
        return default
    try:
        return float(raw[key])
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {raw[key]!r}") from None


def _as_int(raw: dict, key: str, default=None) -> int:
    val = _as_float(raw, key, default)
    if not math.isfinite(val) or int(val) != val:
        raise ConfigError(key, f"expected an integer, got {raw[key]!r}")
    return int(val)


def config_from_mapping(raw: dict) -> DecodingConfig:
    """Build a :class:`DecodingConfig` from the flat key-value config."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a flat mapping")
    unknown = sorted(set(raw) - _KNOWN)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    alpha = _as_float(raw, "alpha")
    mode = str(raw.get("mode", ADAPTIVE))
    baseline = None
    try:
        if mode == BASELINE or "eps_budget" in raw:
            baseline = BaselineConfig(
                _as_float(raw, "eps_budget"), _as_int(raw, "query_budget"), _as_float(raw, "subsample_q", 1.0)
            )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("eps_budget/query_budget/subsample_q", str(exc)) from None

    def build(field, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(field, str(exc)) from None

    screening = build("lambda/sigma/T/top_k", lambda: ScreeningConfig(
        lambda_screen=_as_float(raw, "lambda"),
        sigma=_as_float(raw, "sigma"),
        threshold=_as_float(raw, "T"),
        top_k=_as_int(raw, "top_k"),
        alpha=alpha,
        symmetric=bool(raw.get("symmetric_screen", False)),
    ))
    return build("alpha/beta/N/delta/mode", lambda: DecodingConfig(
        alpha=alpha,
        beta=_as_float(raw, "beta"),
        ensemble_size=_as_int(raw, "N"),
        screening=screening,
        delta=_as_float(raw, "delta", 1e-5),
        mode=mode,
        baseline=baseline,
        seed=_as_int(raw, "seed", 0),
        projection_tol=_as_float(raw, "projection_tol", 1e-6),
    ))


def config_to_mapping(cfg: DecodingConfig) -> dict:
    out = {
        "alpha": cfg.alpha, "beta": cfg.beta, "N": cfg.ensemble_size, "sigma": cfg.screening.sigma,
        "lambda": cfg.screening.lambda_screen, "T": _num(cfg.screening.threshold), "top_k": cfg.screening.top_k,
        "delta": cfg.delta, "mode": cfg.mode, "seed": cfg.seed,
        "symmetric_screen": cfg.screening.symmetric, "projection_tol": cfg.projection_tol,
    }
    if cfg.baseline is not None:
        out.update(eps_budget=cfg.baseline.eps_budget, query_budget=cfg.baseline.query_budget,
                   subsample_q=cfg.baseline.subsample_q)
    return out


def load_config(path) -> DecodingConfig:
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    return config_from_mapping(raw)


# --------------------------------------------------------------------------
# training


@dataclass
class Ensemble:
    private: list[NGramModel]
    public: NGramModel
    vocab: Vocabulary
    manifest: dict


def cmd_train_shards(corpus_path, n: int, order: int, smoothing: float, seed: int, out_dir, *,
                     public_path=None, public_fraction: float = 0.2, per_line: bool = True,
                     level: str = "char") -> dict:
    """Shard a private corpus, train one model per shard plus a public model, persist all.

    Without ``public_path`` a seeded ``public_fraction`` of the documents is
    held out as the public split. Every precondition is checked before any
    file is written.
    """
    docs = read_documents(corpus_path, per_line)
    if public_path is not None:
        public_docs = read_documents(public_path, per_line)
        private_ids = list(range(len(docs)))
    else:
        rng = np.random.default_rng(seed)
        order_ids = rng.permutation(len(docs)).tolist()
        n_public = max(1, int(round(public_fraction * len(docs))))
        public_docs = [docs[i] for i in sorted(order_ids[:n_public])]
        private_ids = sorted(order_ids[n_public:])
    if len(private_ids) < n:
        raise ValueError(f"cannot split {len(private_ids)} private documents into {n} shards")
    if not public_docs:
        raise ValueError("public split is empty")

    vocab = Vocabulary.build(docs + public_docs, level)
    encoded = [vocab.encode(docs[i]) for i in private_ids]
    sharded = partition_corpus(encoded, n, seed, vocab)
    private = [train_ngram(shard, order, smoothing, vocab) for shard in sharded.shards]
    public = train_ngram([vocab.encode(d) for d in public_docs], order, smoothing, vocab)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = [f"private_{i:02d}.json" for i in range(n)]
    for name, model in zip(names, private):
        model.save(out / name)
    public.save(out / PUBLIC_NAME)
    manifest = {
        "format": "adapmixed-models",
        "version": 1,
        "order": order,
        "smoothing_alpha": smoothing,
        "seed": seed,
        "vocabulary": vocab.to_dict(),
        "private_models": names,
        "public_model": PUBLIC_NAME,
        # document ids index the private corpus in file order
        "shards": {str(s): [private_ids[j] for j in ids] for s, ids in sharded.shard_manifest.items()},
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def train_desk_models(out_dir, n: int = 16, seed: int = 0) -> dict:
    """Train ``n`` private shard models and the public model on the bundled corpus."""
    root = bundled_corpus_dir()
    return cmd_train_shards(root / "private.txt", n, DESK_ORDER, DESK_SMOOTHING, seed, out_dir,
                            public_path=root / "public.txt")


def load_ensemble(models_dir) -> Ensemble:
    root = Path(models_dir)
    manifest = json.loads((root / MANIFEST_NAME).read_text(encoding="utf-8"))
    private = [NGramModel.load(root / name) for name in manifest["private_models"]]
    public = NGramModel.load(root / manifest["public_model"])
    vocab = Vocabulary.from_dict(manifest["vocabulary"])
    for m in private + [public]:
        if m.vocab != vocab:
            raise ValueError("model vocabulary differs from the manifest vocabulary")
    return Ensemble(private, public, vocab, manifest)


def query_stream(eval_path, vocab: Vocabulary, order: int, max_queries: int | None = None,
                 per_line: bool = True) -> list[tuple[list[int], int]]:
    """(context, next token) pairs over the evaluation text, teacher-forced."""
    queries = []
    for doc in read_documents(eval_path, per_line):
        ids = vocab.encode(doc)
        for i in range(order - 1, len(ids)):
            queries.append((ids[:i], ids[i]))
            if max_queries is not None and len(queries) >= max_queries:
                return queries
    return queries


# --------------------------------------------------------------------------
# decoding sessions


@dataclass(frozen=True)
class EvalReport:
    perplexity: float
    queries_answered: int
    queries_screened_out: int
    eps_rdp_final: float
    eps_dp_final: float
    eps_screen_total: float
    eps_decode_total: float
    data_independent_rdp_total: float
    utility_gap_bound: float | None
    likelihood: str
    config_snapshot: dict

    def to_json(self) -> str:
        return json.dumps({k: _num(v) for k, v in asdict(self).items()}, sort_keys=True, indent=1) + "\n"


def _ledger_header(cfg: DecodingConfig) -> dict:
    return {"record": "header", "format": LEDGER_FORMAT, "version": LEDGER_VERSION,
            "alpha": cfg.alpha, "delta": cfg.delta, "config": config_to_mapping(cfg)}


def run_session(ens: Ensemble, queries: Sequence[tuple[list[int], int]], cfg: DecodingConfig,
                likelihood: str = "sampled", ledger_lines: list[str] | None = None):
    """Decode every query; return ``(report, ledger)``.

    ``likelihood`` picks the distribution perplexity is scored against:
    ``"sampled"`` (what the sampler actually drew from) or ``"projected"``
    (the projected ensemble average, even on screened-out queries).
    When ``ledger_lines`` is a list, serialized ledger records are appended.
    """
    if likelihood not in ("sampled", "projected"):
        raise ValueError(f"likelihood must be 'sampled' or 'projected', got {likelihood!r}")
    members = ens.private[: cfg.ensemble_size]
    if len(members) < cfg.ensemble_size:
        raise ConfigError("N", f"models dir has only {len(ens.private)} private models")
    if cfg.screening.top_k > len(ens.vocab):
        raise ConfigError("top_k", f"exceeds vocabulary size {len(ens.vocab)}")

    ledger = PrivacyLedger(cfg.alpha, cfg.delta)
    if ledger_lines is not None:
        ledger_lines.append(_dump(_ledger_header(cfg)))
    logprobs = []
    gap_lams, gap_priv, gap_pub = [], [], []

    for qi, (context, target) in enumerate(queries):
        p0 = ens.public.predict(context)
        if cfg.mode == ADAPTIVE:
            dists = [m.predict(context) for m in members]
            out = decode_adaptive(dists, p0, cfg, ledger, query_index=qi)
            if not out.screened_out:
                gap_lams.append(out.lambdas)
                gap_priv.append([d[target] for d in dists])
                gap_pub.append(p0[target])
        else:
            def provider(idx, _ctx=context):
                return [members[i].predict(_ctx) for i in idx]

            out = decode_baseline(provider, p0, cfg, ledger, query_index=qi)
            dists = None

        scored = out.dist
        if likelihood == "projected" and (cfg.mode != ADAPTIVE or out.screened_out):
            if dists is None:
                dists = [m.predict(context) for m in members]
            _, projected, _ = project_many(np.stack(dists), p0, cfg.alpha, cfg.beta * cfg.alpha, cfg.projection_tol)
            scored = projected.sum(axis=0) / len(dists)
        lp = float(np.log(scored[target]))
        logprobs.append(lp)

        if ledger_lines is not None:
            ledger_lines.append(_dump({
                "record": "query", "query_index": qi, "screened": out.screened_out,
                "eps_screen": out.eps_screen, "eps_decode": out.eps_decode,
                "eps_rdp_cum": ledger.eps_rdp_total, "eps_dp_cum": ledger.eps_dp_total,
                "token": out.token, "target": int(target), "logprob": lp,
                "digest": out.output_dist_digest, "lambdas": list(out.lambdas),
                "noisy_divergence": _num(out.noisy_divergence), "capped": out.capped,
            }))

    gap = None
    if gap_lams:
        gap = utility_gap_bound(np.array(gap_lams).T, np.array(gap_priv).T, np.array(gap_pub))
    n_queries = len(queries)
    report = EvalReport(
        perplexity=perplexity_from_logprobs(logprobs),
        queries_answered=n_queries,
        queries_screened_out=sum(e.screened_out for e in ledger.entries),
        eps_rdp_final=ledger.eps_rdp_total,
        eps_dp_final=ledger.eps_dp_total,
        eps_screen_total=ledger.eps_screen_total,
        eps_decode_total=ledger.eps_decode_total,
        data_independent_rdp_total=n_queries * data_independent_bound(cfg.alpha, cfg.beta, cfg.ensemble_size),
        utility_gap_bound=gap,
        likelihood=likelihood,
        config_snapshot=config_to_mapping(cfg),
    )
    return report, ledger


def perplexity_from_logprobs(logprobs: Iterable[float]) -> float:
    lps = list(logprobs)
    if not lps:
        return math.nan
    return math.exp(-math.fsum(lps) / len(lps))


def cmd_decode(models_dir, eval_path, config, ledger_out, report_out, *, max_queries: int | None = None,
               likelihood: str = "sampled", per_line: bool = True) -> EvalReport:
    """Run a decoding session over the evaluation text and write ledger and report."""
    cfg = config if isinstance(config, DecodingConfig) else load_config(config)
    ens = load_ensemble(models_dir)
    queries = query_stream(eval_path, ens.vocab, ens.manifest["order"], max_queries, per_line)
    lines: list[str] = []
    report, _ = run_session(ens, queries, cfg, likelihood, lines)
    Path(ledger_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    Path(report_out).write_text(report.to_json(), encoding="utf-8")
    return report


# --------------------------------------------------------------------------
# evaluation


def cmd_evaluate(models_dir, eval_path, *, max_queries: int | None = None, per_line: bool = True) -> dict:
    """Perplexity of the public model, every private model and their plain average."""
    ens = load_ensemble(models_dir)
    queries = query_stream(eval_path, ens.vocab, ens.manifest["order"], max_queries, per_line)
    pub, ensemble = [], []
    private = [[] for _ in ens.private]
    for context, target in queries:
        pub.append(math.log(ens.public.predict(context)[target]))
        probs = [m.predict(context)[target] for m in ens.private]
        for acc, p in zip(private, probs):
            acc.append(math.log(p))
        ensemble.append(math.log(math.fsum(probs) / len(probs)))
    return {
        "queries": len(queries),
        "public": perplexity_from_logprobs(pub),
        "private": [perplexity_from_logprobs(x) for x in private],
        "ensemble": perplexity_from_logprobs(ensemble),
    }


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple
    base: DecodingConfig

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMS:
            raise ConfigError("param", f"must be one of {', '.join(SWEEP_PARAMS)}")
        for v in self.values:
            self.configure(v)

    def configure(self, value) -> DecodingConfig:
        b, s = self.base, self.base.screening
        try:
            if self.parameter == "threshold":
                return replace(b, screening=replace(s, threshold=float(value)))
            if self.parameter == "top_k":
                return replace(b, screening=replace(s, top_k=int(value)))
            if self.parameter == "beta":
                return replace(b, beta=float(value))
            if self.parameter == "ensemble_size":
                return replace(b, ensemble_size=int(value))
            if self.parameter == "alpha":
                return replace(b, alpha=float(value), screening=replace(s, alpha=float(value)))
            lam, sigma = value
            return replace(b, screening=replace(s, lambda_screen=float(lam), sigma=float(sigma)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(self.parameter, f"illegal value {value!r}: {exc}") from None


def parse_sweep_value(parameter: str, text: str):
    if parameter == "screen_lambda_sigma":
        lam, sigma = text.split(":")
        return (float(lam), float(sigma))
    if parameter in ("top_k", "ensemble_size"):
        return int(text)
    return float(text)


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ":".join(repr(float(v)) for v in value)
    return str(_num(value)) if isinstance(value, float) else str(value)


def _sweep_row(args):
    ens, queries, cfg, ledger_path = args
    lines = [] if ledger_path else None
    report, _ = run_session(ens, queries, cfg, "sampled", lines)
    if ledger_path:
        Path(ledger_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return report


def cmd_sweep(spec: SweepSpec, models_dir, eval_path, out_csv, *, max_queries: int | None = None,
              parallel: bool = False, ledger_dir=None, per_line: bool = True) -> list[dict]:
    """One decoding run per swept value with the base seed; rows written in value order.

    If a run fails, the rows already written stay and a final ``# INVALID``
    line marks the file before the error propagates.
    """
    ens = load_ensemble(models_dir)
    queries = query_stream(eval_path, ens.vocab, ens.manifest["order"], max_queries, per_line)
    jobs = []
    for i, value in enumerate(spec.values):
        ledger_path = Path(ledger_dir) / f"run_{i:02d}.jsonl" if ledger_dir else None
        jobs.append((ens, queries, spec.configure(value), ledger_path))
    if ledger_dir:
        Path(ledger_dir).mkdir(parents=True, exist_ok=True)

    rows = []
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        fh.flush()
        try:
            if parallel:
                with ProcessPoolExecutor() as pool:
                    reports = pool.map(_sweep_row, jobs)
                    for value, report in zip(spec.values, reports):
                        rows.append(_emit(writer, fh, spec.parameter, value, report))
            else:
                for value, job in zip(spec.values, jobs):
                    rows.append(_emit(writer, fh, spec.parameter, value, _sweep_row(job)))
        except Exception as exc:
            fh.write(f"# INVALID: run failed: {exc}\n")
            raise
    return rows


def _emit(writer, fh, parameter, value, report: EvalReport) -> dict:
    row = {"param": parameter, "value": _format_value(value), "eps_rdp": report.eps_rdp_final,
           "eps_dp": report.eps_dp_final, "ppl": report.perplexity, "screened_out": report.queries_screened_out}
    writer.writerow([row[k] for k in SWEEP_HEADER])
    fh.flush()
    return row


# --------------------------------------------------------------------------
# ledger audit


@dataclass(frozen=True)
class AccountResult:
    eps_rdp: float
    eps_dp: float
    entries: int
    mismatches: list
    perplexity: float


def read_ledger(path):
    """Parse a ledger file into ``(header, records)``; errors carry the line number."""
    header, records = None, []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LedgerFormatError(lineno, f"not valid JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or "record" not in rec:
                raise LedgerFormatError(lineno, "missing 'record' field")
            if rec["record"] == "header":
                if header is not None or records:
                    raise LedgerFormatError(lineno, "header must be the first record")
                if rec.get("format") != LEDGER_FORMAT or rec.get("version") != LEDGER_VERSION:
                    raise LedgerFormatError(lineno, "unsupported ledger format or version")
                header = rec
            elif rec["record"] == "query":
                for key in ("query_index", "screened", "eps_screen", "eps_decode"):
                    if key not in rec:
                        raise LedgerFormatError(lineno, f"missing field {key!r}")
                if not all(isinstance(rec[k], (int, float)) for k in ("eps_screen", "eps_decode")):
                    raise LedgerFormatError(lineno, "eps fields must be numbers")
                records.append((lineno, rec))
            else:
                raise LedgerFormatError(lineno, f"unknown record type {rec['record']!r}")
    if header is None:
        raise LedgerFormatError(1, "missing header record")
    return header, records


def cmd_account(ledger_path, alpha: float | None = None, delta: float | None = None) -> AccountResult:
    """Recompute totals from the per-query entries and compare with the stored running totals."""
    header, records = read_ledger(ledger_path)
    alpha = header["alpha"] if alpha is None else alpha
    delta = header["delta"] if delta is None else delta
    ledger = PrivacyLedger(alpha, delta)
    mismatches = []
    for lineno, rec in records:
        try:
            ledger.append(LedgerEntry(rec["query_index"], rec["eps_screen"], rec["eps_decode"], bool(rec["screened"])))
        except LedgerError as exc:
            raise LedgerFormatError(lineno, str(exc)) from None
        stored = rec.get("eps_rdp_cum")
        if stored is not None and stored != ledger.eps_rdp_total:
            mismatches.append({"line": lineno, "field": "eps_rdp_cum", "stored": stored,
                               "recomputed": ledger.eps_rdp_total})
        stored_dp = rec.get("eps_dp_cum")
        if stored_dp is not None and alpha == header["alpha"] and delta == header["delta"]:
            if stored_dp != ledger.eps_dp_total:
                mismatches.append({"line": lineno, "field": "eps_dp_cum", "stored": stored_dp,
                                   "recomputed": ledger.eps_dp_total})
    ppl = perplexity_from_logprobs(rec["logprob"] for _, rec in records if "logprob" in rec)
    return AccountResult(ledger.eps_rdp_total, rdp_to_dp(ledger.eps_rdp_total, alpha, delta),
                         len(records), mismatches, ppl)
