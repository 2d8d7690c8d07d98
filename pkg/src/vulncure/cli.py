"""Command-line entry point: one subcommand per pipeline stage."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable, Optional

from . import __version__
from . import analysis, cwe, dates, names
from .config import ConfigError, WorkspaceConfig
from .core import Corpus, SeverityLabel
from .ingest import (
    FeedFormatError,
    NoFeedsError,
    dump_corpus,
    load_corpus,
    load_external_vendor_list,
    load_snapshot_with_stats,
)
from .severity import (
    AdamConfig,
    CweTable,
    RegressionModel,
    backfill_v3,
    evaluate,
    ground_truth_samples,
    ground_truth_transition,
    pca_project,
    split_dataset,
    train_dnn,
    train_linear,
    transition_csv,
)
from .severity.pca import RankError

log = logging.getLogger("vulncure")

EXIT_OK, EXIT_DATA, EXIT_PREREQ = 0, 1, 2

RAW_CORPUS = "corpus.raw.json"
WORK_CORPUS = "corpus.corrected.json"


class MissingPrerequisite(Exception):
    """A required input artifact does not exist (exit code 2)."""


def atomic_write(path: Path, data: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    """Tracks one subcommand's inputs and outputs and writes its manifest."""

    def __init__(self, cfg: WorkspaceConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.counts: dict = {}

    @property
    def out(self) -> Path:
        return self.cfg.output_dir

    def need(self, path: Path, hint: str) -> Path:
        if not path.exists():
            raise MissingPrerequisite(f"missing {self.cfg.rel(path)} ({hint})")
        if path.is_file():
            self.inputs[self.cfg.rel(path)] = _sha256(path)
        else:
            for f in sorted(p for p in path.rglob("*") if p.is_file()):
                self.inputs[self.cfg.rel(f)] = _sha256(f)
        return path

    def write(self, path: Path, data: str | bytes) -> None:
        atomic_write(path, data)
        self.outputs[self.cfg.rel(path)] = _sha256(path)

    def raw_corpus(self) -> Corpus:
        path = self.need(self.out / RAW_CORPUS, "run `ingest` first")
        return load_corpus(path.read_text(encoding="utf-8"))

    def work_corpus(self) -> Corpus:
        path = self.out / WORK_CORPUS
        if not path.exists():
            return self.raw_corpus()
        self.need(path, "")
        return load_corpus(path.read_text(encoding="utf-8"))

    def save_work_corpus(self, corpus: Corpus) -> None:
        self.write(self.out / WORK_CORPUS, dump_corpus(corpus))

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "version": __version__,
            "seed": self.cfg.seed,
            "config": {k: v for k, v in sorted(self.cfg.raw.items())},
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
            "counts": self.counts,
        }
        atomic_write(
            self.out / "manifests" / f"{self.command}.json",
            json.dumps(manifest, indent=1, sort_keys=True) + "\n",
        )


# --- subcommands -------------------------------------------------------------


def cmd_ingest(run: Run, args) -> None:
    cfg = run.cfg
    run.need(cfg.feeds_dir, "directory of nvdcve-*.json[.gz] feeds")
    try:
        corpus, stats = load_snapshot_with_stats(cfg.feeds_dir)
    except NoFeedsError as exc:
        raise MissingPrerequisite(str(exc)) from exc
    text = dump_corpus(corpus)
    run.write(run.out / RAW_CORPUS, text)
    run.write(run.out / WORK_CORPUS, text)
    run.write(run.out / "ingest_stats.json", json.dumps(stats.as_dict(), indent=1) + "\n")
    run.counts = {"records": len(corpus), **stats.as_dict()}


def cmd_estimate_dates(run: Run, args) -> None:
    cfg = run.cfg
    corpus = run.work_corpus()
    if cfg.fixtures_dir.exists():
        run.need(cfg.fixtures_dir, "")
    store = dates.load_page_store(cfg.fixtures_dir)
    registry = dates.ExtractorRegistry.default(use_min=cfg.use_min_page_date)
    corpus = dates.estimate_corpus(corpus, store, registry)
    run.save_work_corpus(corpus)

    rows = dates.lag_cdf(corpus)
    run.write(run.out / "dates" / "lag_cdf.csv", dates.lag_cdf_csv(rows))
    cov = dates.rank_domains(corpus)
    lines = ["rank,domain,url_count,coverage"]
    for i, (dom, n) in enumerate(cov.ranked, 1):
        lines.append(f"{i},{dom},{n},{cov.coverage_at(i):.6f}")
    run.write(run.out / "dates" / "domains.csv", "\n".join(lines) + "\n")
    by_sev = dates.lag_by_severity(corpus)
    run.write(
        run.out / "dates" / "lag_by_severity.csv",
        "label,mean_lag_days\n" + "".join(f"{k.value},{v:.4f}\n" for k, v in by_sev.items()),
    )
    improved = sum(1 for r in corpus if r.edd.lag_days > 0)
    run.counts = {
        "records": len(corpus),
        "pages_stored": len(store),
        "records_with_lag": improved,
        "cdf_at_0": dates.cdf_at(rows, 0),
        "cdf_at_6": dates.cdf_at(rows, 6),
    }


def _name_pairs(raw: Corpus, decisions) -> tuple[list, list, names.NameMapping, Corpus]:
    """Vendor pairs on the raw corpus; when every vendor pair is decided,
    also product pairs on the vendor-consolidated corpus."""
    vendor_pairs = names.candidate_vendor_pairs(raw)
    counts = names.cve_count_table(raw)
    vendor_decisions = {k: d for k, d in decisions.items() if k[0] is names.Kind.VENDOR}
    vmap = names.build_mapping(vendor_pairs, vendor_decisions, counts)
    consolidated, _ = names.apply_mapping(raw, vmap)
    product_pairs = names.all_product_pairs(consolidated)
    return vendor_pairs, product_pairs, vmap, consolidated


def cmd_name_candidates(run: Run, args) -> None:
    cfg = run.cfg
    raw = run.raw_corpus()
    decisions = names.read_decisions(cfg.decisions_file)
    if cfg.decisions_file.exists():
        run.need(cfg.decisions_file, "")
    try:
        vendor_pairs, product_pairs, _, _ = _name_pairs(raw, decisions)
    except names.UndecidedPairsError:
        vendor_pairs = names.candidate_vendor_pairs(raw)
        product_pairs = []
    run.write(
        run.out / "names" / "worksheet.tsv",
        names.worksheet_tsv(vendor_pairs + product_pairs, decisions),
    )
    undecided = [p for p in vendor_pairs + product_pairs if p.key not in decisions]
    if not any(p.key not in decisions for p in vendor_pairs):
        stats = names.pattern_stats(vendor_pairs, decisions)
        run.write(run.out / "names" / "pattern_stats.tsv", names.pattern_stats_tsv(stats))
    run.counts = {
        "vendor_pairs": len(vendor_pairs),
        "product_pairs": len(product_pairs),
        "undecided": len(undecided),
    }


def cmd_name_apply(run: Run, args) -> None:
    cfg = run.cfg
    raw = run.raw_corpus()
    run.need(cfg.decisions_file, "review decisions TSV; run `name-candidates` and adjudicate")
    decisions = names.read_decisions(cfg.decisions_file)
    vendor_pairs, product_pairs, vmap, consolidated = _name_pairs(raw, decisions)
    product_decisions = {k: d for k, d in decisions.items() if k[0] is names.Kind.PRODUCT}
    pmap = names.build_mapping(
        product_pairs, product_decisions, names.cve_count_table(consolidated)
    )
    mapping = vmap.merged(pmap)
    run.write(cfg.mapping_file, mapping.to_tsv())

    corpus = run.work_corpus()
    corpus, stats = names.apply_mapping(corpus, mapping)
    run.save_work_corpus(corpus)
    run.counts = {"mapping_entries": len(mapping), **stats.as_dict()}

    external = {}
    for path in cfg.vendor_lists:
        run.need(path, "external vendor list")
        external[path.name] = names.remap_external_vendor_list(
            load_external_vendor_list(path), mapping
        )
    summary = {
        "apply": stats.as_dict(),
        "vendor_entries": sum(1 for k in mapping.entries if k[0] is names.Kind.VENDOR),
        "product_entries": sum(1 for k in mapping.entries if k[0] is names.Kind.PRODUCT),
        "vendor_targets": len({e.canonical for k, e in mapping.entries.items() if k[0] is names.Kind.VENDOR}),
        "external_lists": external,
    }
    run.write(run.out / "names" / "apply_stats.json", json.dumps(summary, indent=1, sort_keys=True) + "\n")
    log.info("name-apply changed %d record(s)", stats.records_changed)
    print(f"records changed: {stats.records_changed}")


def cmd_extract_cwe(run: Run, args) -> None:
    cfg = run.cfg
    catalog = cwe.CweCatalog.load(run.need(cfg.cwe_catalog, "CWE catalog TSV"))
    raw = run.raw_corpus()
    corpus = run.work_corpus()
    corpus, quarantine = cwe.merge_corpus(corpus, catalog)
    run.save_work_corpus(corpus)
    report = cwe.cwe_gap_report(raw, corpus, len(quarantine))
    run.write(run.out / "cwe" / "gap_report.csv", report.to_csv())
    run.write(
        run.out / "cwe" / "quarantine.tsv",
        "cve_id\tcwe_id\n" + "".join(f"{a}\t{b}\n" for a, b in sorted(quarantine)),
    )
    run.counts = report.as_dict()


def cmd_train_severity(run: Run, args) -> None:
    cfg = run.cfg
    corpus = run.work_corpus()
    dual = [r for r in corpus if r.v2 is not None and r.v3 is not None]
    table = CweTable.from_records(dual)
    samples = ground_truth_samples(corpus, table)
    if len(samples) < 2:
        raise ValueError("not enough dual-scored records to train on")
    train, test = split_dataset(samples, cfg.split_ratio, cfg.seed, cfg.split_stratify_on)
    if not test:
        test = train
    linear = train_linear(train, cwe_table=table)
    adam = AdamConfig(
        learning_rate=cfg.learning_rate, batch_size=cfg.batch_size, epochs=cfg.epochs
    )
    dnn = train_dnn(train, cfg.seed, adam, cwe_table=table)
    sev = run.out / "severity"
    reports = {}
    for name, model in (("linear", linear), ("dnn", dnn)):
        rep = evaluate(model, test)
        reports[name] = rep.as_dict()
        run.write(sev / f"eval_{name}.json", rep.to_json())
        run.write(sev / f"eval_{name}_transition.csv", transition_csv(rep.transition))
    run.write(sev / "ground_truth_transition.csv", transition_csv(ground_truth_transition(corpus)))

    try:
        pca = pca_project([s.features for s in samples], 3, seed=cfg.seed)
        lines = ["cve_id,v2_label,v3_label,pc1,pc2,pc3"]
        from .core import CvssVersion, score_to_label

        for s, pt in zip(samples, pca.points):
            v3 = score_to_label(s.target, CvssVersion.V3).value
            lines.append(f"{s.cve_id},{s.v2_label.value},{v3}," + ",".join(f"{x:.6f}" for x in pt))
        lines.append("")
        run.write(sev / "pca_projection.csv", "\n".join(lines))
        run.write(
            sev / "pca_variance.json",
            json.dumps({"explained_variance_ratio": pca.explained_variance_ratio.tolist()}, indent=1) + "\n",
        )
    except RankError as exc:
        log.warning("PCA skipped: %s", exc)

    chosen = dnn if cfg.model == "dnn" else linear
    run.write(cfg.model_file, chosen.to_json())
    run.counts = {
        "samples": len(samples),
        "train": len(train),
        "test": len(test),
        "model": cfg.model,
        "linear_aer": reports["linear"]["aer"],
        "dnn_aer": reports["dnn"]["aer"],
        "dnn_accuracy": reports["dnn"]["overall_accuracy"],
    }


def cmd_backfill_v3(run: Run, args) -> None:
    cfg = run.cfg
    path = run.need(cfg.model_file, "run `train-severity` first")
    model = RegressionModel.from_json(path.read_text(encoding="utf-8"))
    corpus = run.work_corpus()
    res = backfill_v3(corpus, model)
    run.save_work_corpus(res.corpus)
    run.write(run.out / "severity" / "pv3_transition.csv", transition_csv(res.transition))
    run.counts = {"predicted": res.predicted, "skipped_no_v2": res.skipped_no_v2}


def _report_set(corpus: Corpus, tag, catalog, raw: Optional[Corpus]) -> list[analysis.Report]:
    A = analysis
    reports = [
        A.top_dates(corpus, A.DateField.PUBLISHED, tag=tag),
        A.day_of_week_histogram(corpus, A.DateField.PUBLISHED, tag=tag),
        A.severity_distribution(corpus, A.Scheme.V2, tag=tag),
        A.severity_distribution(corpus, A.Scheme.V2, by_year=True, tag=tag),
        A.severity_distribution(corpus, A.Scheme.V3_FEED, tag=tag),
        A.severity_distribution(corpus, A.Scheme.V3_FEED, by_year=True, tag=tag),
        A.top_cwe_by_severity(corpus, A.Scheme.V2, SeverityLabel.HIGH, catalog=catalog, tag=tag),
        A.top_cwe_by_severity(corpus, A.Scheme.V3_FEED, SeverityLabel.CRITICAL, catalog=catalog, tag=tag),
        A.top_vendors(corpus, A.VendorMetric.CVE_COUNT, tag=tag),
        A.top_vendors(corpus, A.VendorMetric.PRODUCT_COUNT, tag=tag),
    ]
    if all(r.edd is not None for r in corpus):
        reports += [
            A.top_dates(corpus, A.DateField.EDD, tag=tag),
            A.day_of_week_histogram(corpus, A.DateField.EDD, tag=tag),
        ]
    has_pv3 = not any(r.v2 is not None and r.v3 is None for r in corpus)
    if has_pv3 and any(r.v3 is not None and r.v3.provenance.value == "Predicted" for r in corpus):
        reports += [
            A.severity_distribution(corpus, A.Scheme.PV3, tag=tag),
            A.severity_distribution(corpus, A.Scheme.PV3, by_year=True, tag=tag),
            A.top_cwe_by_severity(corpus, A.Scheme.PV3, SeverityLabel.CRITICAL, catalog=catalog, tag=tag),
        ]
    if raw is not None:
        reports.append(A.mislabeled_severity_breakdown(raw, corpus, A.Scheme.V2))
        if has_pv3:
            reports.append(A.mislabeled_severity_breakdown(raw, corpus, A.Scheme.PV3))
    return reports


def cmd_report(run: Run, args) -> None:
    cfg = run.cfg
    which = getattr(args, "corpus", "corrected") or "corrected"
    raw = run.raw_corpus()
    if which == "raw":
        corpus, tag, base = raw, analysis.CorpusTag.RAW, None
    else:
        corpus, tag, base = run.work_corpus(), analysis.CorpusTag.CORRECTED, raw
    catalog = cwe.CweCatalog.load(cfg.cwe_catalog) if cfg.cwe_catalog.exists() else cwe.CweCatalog()
    meta = {"version": __version__, "seed": cfg.seed}
    outdir = run.out / "reports" / which
    index = []
    for rep in _report_set(corpus, tag, catalog, base):
        run.write(outdir / f"{rep.name}.csv", rep.to_csv())
        run.write(outdir / f"{rep.name}.json", rep.to_json(meta))
        index.append({"name": rep.name, "rows": len(rep.rows)})
    if which == "corrected" and all(r.edd is not None for r in corpus):
        by_sev = dates.lag_by_severity(corpus)
        rep = analysis.Report(
            "lag_by_severity",
            ("label", "mean_lag_days"),
            tuple((k.value, v) for k, v in by_sev.items()),
            tag,
        )
        run.write(outdir / f"{rep.name}.csv", rep.to_csv())
        run.write(outdir / f"{rep.name}.json", rep.to_json(meta))
        index.append({"name": rep.name, "rows": len(rep.rows)})
    run.write(
        outdir / "index.json",
        json.dumps({"corpus_tag": tag.value, "reports": index, **meta}, indent=1, sort_keys=True) + "\n",
    )
    run.counts = {"reports": len(index)}
    # the manifest for `report` is per corpus
    run.command = f"report-{which}"


PIPELINE = (
    "ingest",
    "estimate-dates",
    "name-candidates",
    "name-apply",
    "extract-cwe",
    "train-severity",
    "backfill-v3",
)

COMMANDS: dict[str, Callable] = {
    "ingest": cmd_ingest,
    "estimate-dates": cmd_estimate_dates,
    "name-candidates": cmd_name_candidates,
    "name-apply": cmd_name_apply,
    "train-severity": cmd_train_severity,
    "backfill-v3": cmd_backfill_v3,
    "extract-cwe": cmd_extract_cwe,
    "report": cmd_report,
}


def _run_one(cfg: WorkspaceConfig, name: str, args) -> None:
    run = Run(cfg, name)
    COMMANDS[name](run, args)
    run.finish()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vulncure", description=__doc__)
    parser.add_argument("--config", default=None, help="workspace config file (key = value)")
    parser.add_argument("--seed", type=int, default=None, help="override run.seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "pipeline"):
        sp = sub.add_parser(name)
        if name in ("report", "pipeline"):
            sp.add_argument("--corpus", choices=("raw", "corrected"), default=None)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config_path = args.config
        if config_path is None and Path("vulncure.conf").exists():
            config_path = "vulncure.conf"
        cfg = WorkspaceConfig.load(config_path, seed=args.seed)
        if args.command == "pipeline":
            for name in PIPELINE:
                _run_one(cfg, name, args)
            corpora = [args.corpus] if args.corpus else ["raw", "corrected"]
            for which in corpora:
                _run_one(cfg, "report", argparse.Namespace(corpus=which))
        else:
            _run_one(cfg, args.command, args)
    except MissingPrerequisite as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PREREQ
    except (ConfigError, FeedFormatError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
