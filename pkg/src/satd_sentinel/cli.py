"""Command-line entry point (``satd-sentinel``).

Exit codes: 0 success, 1 findings present (``scan --gate``), 2 usage error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from pathlib import Path

from . import __version__
from .classifier import (
    Hyper,
    LabeledCorpus,
    Model,
    evaluate,
    fixed_scorer,
    load_bundled_model,
    load_desk_corpus,
    majority_fitter,
    model_fitter,
    pattern_scorer,
    train,
)
from .comments import WORKTREE
from .config import Config, load_config
from .errors import ConfigError, ForgeError, ModelError, ScenarioError, SentinelError, StoreError, TrainingError
from .forge.base import IssueState
from .pipeline import scan_files
from .refs import BUILTIN_PATTERNS, RepoId
from .render import confidence_text, excerpt
from .store import Store

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

SCAN_SCHEMA_VERSION = 1
DEFAULT_HOME = "local/repository"

log = logging.getLogger("satd_sentinel")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def default_forge_factory(config: Config):
    from .forge.github import GitHubClient

    token = config.token()
    if not token:
        raise UsageError(f"environment variable {config.service.token_env} is not set")
    reasons = config.service.resolved_close_reasons
    return GitHubClient(
        token,
        config.service.api_url,
        min_interval=config.service.min_request_interval,
        closed_reasons=tuple(reasons) if reasons else None,
    )


# scan


def _read_tree(root: Path):
    for path in sorted(root.rglob("*")):
        if path.is_file() and ".git" not in path.relative_to(root).parts:
            yield path.relative_to(root).as_posix(), path.read_bytes


def _finding_json(finding, statuses) -> dict:
    c = finding.comment
    keys = sorted({r.key for r in finding.refs})
    out = {
        "file_path": c.file_path,
        "start_line": c.start_line,
        "end_line": c.end_line,
        "kind": c.kind.value,
        "body_text": c.body_text,
        "label": finding.label.value,
        "confidence": finding.confidence,
        "source": finding.source.value,
        "refs": [{"issue": str(r.key), "url": r.key.url, "raw_match": r.raw_match} for r in finding.refs],
    }
    if statuses is not None:
        out["issue_status"] = {str(k): statuses[k].value for k in keys}
        out["ready_to_be_fixed"] = all(statuses[k] is IssueState.RESOLVED for k in keys)
    return out


def _scan_report(args, result, statuses) -> dict:
    return {
        "schema_version": SCAN_SCHEMA_VERSION,
        "root": str(args.path),
        "ref": args.ref,
        "files_scanned": result.files_scanned,
        "comments": result.comments,
        "findings": [_finding_json(f, statuses) for f in result.findings],
        "cross_references": len(result.cross_references),
        "diagnostics": list(result.diagnostics),
    }


def _print_scan_text(report: dict, out) -> None:
    print(
        f"{report['files_scanned']} file(s), {report['comments']} comment(s), "
        f"{len(report['findings'])} On-hold SATD finding(s)",
        file=out,
    )
    for f in report["findings"]:
        tag = "pattern match" if f["source"] == "Pattern" else f"{f['confidence']:.2f}"
        ready = ""
        if "ready_to_be_fixed" in f:
            ready = "  READY" if f["ready_to_be_fixed"] else ""
        refs = ", ".join(r["issue"] for r in f["refs"])
        print(f"{f['file_path']}:{f['start_line']}\t{tag}\t{refs}{ready}", file=out)
        print(f"    {f['body_text'].splitlines()[0] if f['body_text'] else ''}", file=out)


def _print_scan_markdown(report: dict, findings, out) -> None:
    print(f"## On-hold SATD in `{report['root']}`", file=out)
    print("", file=out)
    print(f"{len(findings)} finding(s) in {report['files_scanned']} file(s).", file=out)
    for finding, f in zip(findings, report["findings"]):
        status = ""
        if "ready_to_be_fixed" in f:
            status = " **ready to be fixed**" if f["ready_to_be_fixed"] else ""
        print(f"- `{f['file_path']}:{f['start_line']}` ({confidence_text(finding)}){status}", file=out)
        for line in excerpt(f["body_text"]).split("\n"):
            print(f"  > {line}", file=out)
        print("  " + ", ".join(f"[{r['issue']}]({r['url']})" for r in f["refs"]), file=out)


def cmd_scan(args, out, forge_factory) -> int:
    root = Path(args.path)
    if not root.exists():
        raise UsageError(f"path {root} does not exist")
    config = load_config(args.config) if args.config else Config()
    home_text = args.home
    if home_text is None and len(config.repos) == 1:
        home_text = str(next(iter(config.repos)))
    home = RepoId.parse(home_text or DEFAULT_HOME)
    repo_cfg = config.repos.get(home)
    ref_patterns = repo_cfg.ref_patterns if repo_cfg else list(BUILTIN_PATTERNS)
    onhold = repo_cfg.onhold_patterns if repo_cfg else []
    model_path = args.model or (repo_cfg.model_path if repo_cfg else None)
    try:
        model = Model.load(model_path) if model_path else load_bundled_model()
    except ModelError as exc:
        print(f"error: cannot load model: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    files = list(_read_tree(root)) if root.is_dir() else [(root.name, root.read_bytes)]
    result = scan_files(files, config.profiles, home, ref_patterns, model, onhold, args.ref)
    statuses = None
    if args.check_issues:
        forge = forge_factory(config)
        statuses = {}
        for key in sorted({r.key for f in result.findings for r in f.refs}):
            try:
                statuses[key] = forge.fetch_issue_status(key).state
            except ForgeError as exc:
                print(f"warning: status of {key} unavailable: {exc}", file=sys.stderr)
                statuses[key] = IssueState.UNKNOWN
    for diag in result.diagnostics:
        print(f"warning: {diag}", file=sys.stderr)
    report = _scan_report(args, result, statuses)
    if args.format == "json":
        json.dump(report, out, indent=2, sort_keys=True)
        out.write("\n")
    elif args.format == "markdown":
        _print_scan_markdown(report, result.findings, out)
    else:
        _print_scan_text(report, out)
    if args.gate and result.findings:
        return EXIT_FINDINGS
    return EXIT_OK


# train / eval


def _corpus(path) -> LabeledCorpus:
    if path is None:
        return load_desk_corpus()
    if not Path(path).is_file():
        raise UsageError(f"corpus {path} does not exist")
    return LabeledCorpus.load(path)


def cmd_train(args, out, _forge_factory) -> int:
    corpus = _corpus(args.corpus)
    hyper = Hyper(l2=args.l2, epochs=args.epochs, seed=args.seed, calibrate=args.calibrate)
    try:
        model = train(corpus, hyper)
    except TrainingError as exc:
        raise UsageError(str(exc)) from None
    model.save(args.out)
    summary = {
        "out": str(args.out),
        "records": len(corpus),
        "features": len(model.vocabulary.terms),
        "vocab_version": model.vocab_version,
        "corpus_digest": corpus.digest,
    }
    if args.format == "json":
        json.dump(summary, out, indent=2, sort_keys=True)
        out.write("\n")
    else:
        print(f"wrote {args.out}: {summary['records']} records, {summary['features']} features", file=out)
    return EXIT_OK


def _eval_table(report, out, name="model") -> None:
    print(f"{name}: {report.effective_folds} fold(s) (requested {report.requested_folds}, seed {report.seed})", file=out)
    print("fold\tsize\tprecision\trecall\tf_measure\tauc\ttp\tfp\ttn\tfn", file=out)
    for f in report.folds:
        c = f.confusion
        print(
            f"{f.fold}\t{f.size}\t{f.precision:.4f}\t{f.recall:.4f}\t{f.f_measure:.4f}\t{f.auc:.4f}"
            f"\t{c['tp']}\t{c['fp']}\t{c['tn']}\t{c['fn']}",
            file=out,
        )
    c = report.confusion
    print(
        f"mean\t{sum(f.size for f in report.folds)}\t{report.precision:.4f}\t{report.recall:.4f}"
        f"\t{report.f_measure:.4f}\t{report.auc:.4f}\t{c['tp']}\t{c['fp']}\t{c['tn']}\t{c['fn']}",
        file=out,
    )


def cmd_eval(args, out, _forge_factory) -> int:
    if args.folds < 2:
        raise UsageError("--folds must be at least 2")
    corpus = _corpus(args.corpus)
    if args.model:
        try:
            model = Model.load(args.model)
        except ModelError as exc:
            print(f"error: cannot load model: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        fit = fixed_scorer(model.predict_proba)
    else:
        fit = model_fitter(Hyper(l2=args.l2, epochs=args.epochs))
    try:
        report = evaluate(corpus, fit, args.folds, args.seed)
        baselines = {}
        if args.baselines:
            baselines = {
                "majority": evaluate(corpus, majority_fitter(), args.folds, args.seed),
                "pattern": evaluate(corpus, fixed_scorer(pattern_scorer()), args.folds, args.seed),
            }
    except TrainingError as exc:
        raise UsageError(str(exc)) from None
    if args.format == "json":
        payload = report.to_dict()
        if baselines:
            payload["baselines"] = {k: v.to_dict()["mean"] for k, v in baselines.items()}
        json.dump(payload, out, indent=2, sort_keys=True)
        out.write("\n")
    else:
        _eval_table(report, out)
        for name, rep in baselines.items():
            print(f"{name}\tf_measure={rep.f_measure:.4f}\tauc={rep.auc:.4f}", file=out)
    if args.plot_dir:
        from .plots import write_eval_artifacts

        for path in write_eval_artifacts(report, args.plot_dir, baselines):
            print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


# service commands


def _service(config: Config, forge_factory, secret_required: bool = False):
    from .service import BotService

    secret = config.secret()
    if secret_required and not secret:
        raise UsageError(f"environment variable {config.service.webhook_secret_env} is not set")
    if not config.repos:
        raise UsageError("configuration lists no repositories")
    forge = forge_factory(config)
    store = Store(config.service.store_path)
    return BotService(config, forge, store, secret=secret)


def cmd_serve(args, out, forge_factory) -> int:
    from .server import WebhookServer

    config = load_config(args.config)
    service = _service(config, forge_factory, secret_required=True)
    host = args.host or config.service.host
    port = config.service.port if args.port is None else args.port
    try:
        server = WebhookServer(service, host, port)
    except OSError as exc:
        print(f"error: cannot listen on {host}:{port}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    stop = threading.Event()

    def _signal(signum, _frame):
        log.info("signal %s received; shutting down", signum)
        stop.set()

    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, _signal)
    service.start(workers=config.service.workers, monitor_interval=args.monitor_interval)
    server.start()
    print(f"listening on {host}:{server.port}", file=sys.stderr)
    stop.wait()
    server.stop()
    service.stop()
    service.store.close()
    return EXIT_OK


def cmd_poll_now(args, out, forge_factory) -> int:
    config = load_config(args.config)
    service = _service(config, forge_factory)
    flipped = service.tick(force=True)
    if args.format == "json":
        json.dump({"flipped": flipped}, out, indent=2)
        out.write("\n")
    else:
        for fid in flipped:
            f = service.store.get_finding(fid)
            where = f"{f.finding.comment.file_path}:{f.finding.comment.start_line}" if f else ""
            print(f"{fid}\t{where}", file=out)
    service.store.close()
    return EXIT_OK


def _open_store(config: Config) -> Store:
    return Store(config.service.store_path)


def cmd_watch_list(args, out, _forge_factory) -> int:
    config = load_config(args.config)
    store = _open_store(config)
    watches = [w.to_dict() for w in store.watches()]
    store.close()
    if args.format == "json":
        json.dump({"schema_version": 1, "watches": watches}, out, indent=2, sort_keys=True)
        out.write("\n")
    else:
        for w in watches:
            print(f"{w['issue']}\t{w['status']}\t{len(w['linked_findings'])} finding(s)", file=out)
    return EXIT_OK


def cmd_export(args, out, _forge_factory) -> int:
    config = load_config(args.config)
    store = _open_store(config)
    json.dump(store.export(), out, indent=2, sort_keys=True)
    out.write("\n")
    store.close()
    return EXIT_OK


def cmd_scenario_run(args, out, _forge_factory) -> int:
    from .harness import Scenario, run_scenario

    try:
        scenario = Scenario.load(args.file)
        config = Config.from_dict(scenario.config)
    except (ScenarioError, ConfigError) as exc:
        raise UsageError(str(exc)) from None
    from .harness import Harness

    result = run_scenario(scenario, Harness(config))
    if args.transcript:
        print(result.transcript(), file=out)
    if result.passed:
        print(f"PASS {scenario.name} ({len(result.outbox)} post(s))", file=out)
        return EXIT_OK
    print(f"FAIL {scenario.name}: {result.failure}", file=out)
    return EXIT_FINDINGS


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="satd-sentinel", description="Find On-hold SATD comments and watch the issues they wait on.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("scan", help="scan a local tree offline")
    s.add_argument("path")
    s.add_argument("--ref", default=WORKTREE, help="label recorded as the commit of each comment")
    s.add_argument("--model", help="model file (default: bundled model)")
    s.add_argument("--config", help="config file for languages and patterns")
    s.add_argument("--home", help="owner/repo that bare #N references resolve to")
    s.add_argument("--format", choices=("text", "json", "markdown"), default="text")
    s.add_argument("--gate", action="store_true", help="exit 1 when any On-hold finding exists")
    s.add_argument("--check-issues", action="store_true", help="fetch issue statuses (network)")
    s.set_defaults(func=cmd_scan)

    t = sub.add_parser("train", help="train a classifier model")
    t.add_argument("--corpus", help="TSV corpus (default: bundled desk corpus)")
    t.add_argument("--out", required=True)
    t.add_argument("--l2", type=float, default=Hyper.l2)
    t.add_argument("--epochs", type=int, default=Hyper.epochs)
    t.add_argument("--seed", type=int, default=Hyper.seed)
    t.add_argument("--calibrate", action="store_true", help="fit Platt scaling on the training scores")
    t.add_argument("--format", choices=("text", "json"), default="text")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="k-fold cross-validation")
    e.add_argument("--corpus")
    e.add_argument("--model", help="score with a fixed pre-trained model instead of retraining per fold")
    e.add_argument("--folds", type=int, default=5)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--l2", type=float, default=Hyper.l2)
    e.add_argument("--epochs", type=int, default=Hyper.epochs)
    e.add_argument("--baselines", action="store_true", help="also report majority and pattern baselines")
    e.add_argument("--plot-dir", help="write folds.tsv, roc.png and fold_metrics.png here")
    e.add_argument("--format", choices=("text", "json"), default="text")
    e.set_defaults(func=cmd_eval)

    sv = sub.add_parser("serve", help="run the webhook service")
    sv.add_argument("--config", required=True)
    sv.add_argument("--host")
    sv.add_argument("--port", type=int)
    sv.add_argument("--monitor-interval", type=float, default=60.0, help="seconds between monitor cycles")
    sv.set_defaults(func=cmd_serve)

    pn = sub.add_parser("poll-now", help="run one monitor cycle")
    pn.add_argument("--config", required=True)
    pn.add_argument("--format", choices=("text", "json"), default="text")
    pn.set_defaults(func=cmd_poll_now)

    wl = sub.add_parser("watch-list", help="list watched issues")
    wl.add_argument("--config", required=True)
    wl.add_argument("--format", choices=("text", "json"), default="text")
    wl.set_defaults(func=cmd_watch_list)

    ex = sub.add_parser("export", help="dump the store as JSON")
    ex.add_argument("--config", required=True)
    ex.set_defaults(func=cmd_export)

    sc = sub.add_parser("scenario", help="mock-forge scenarios")
    sc_sub = sc.add_subparsers(dest="scenario_command", parser_class=_Parser)
    run = sc_sub.add_parser("run", help="replay a scenario file")
    run.add_argument("file")
    run.add_argument("--transcript", action="store_true", help="print every post")
    run.set_defaults(func=cmd_scenario_run)
    return p


def main(argv=None, out=None, forge_factory=None) -> int:
    out = out or sys.stdout
    forge_factory = forge_factory or default_forge_factory
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        if not getattr(args, "func", None):
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return args.func(args, out, forge_factory)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help / --version
        return int(exc.code or 0)
    except (StoreError, ForgeError, SentinelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
