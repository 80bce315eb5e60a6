"""Command-line driver: ``fuzz``, ``infer``, ``replay``, ``eval-seg``, ``mock``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .config import NOSNIPPET, SNIPPET, CampaignConfig, ConfigError
from .evaluation import evaluate_annotations
from .framing import Framing
from .inference import read_annotations
from .message import MalformedCorpus, load_seed_corpus
from .mock import BUILTIN_PROFILES, MockDevice, ProfileError, builtin_corpus, load_profile, serve
from .mutation import MutationConfig
from .orchestrator import Campaign
from .report import (FINDINGS_LOG, JsonlSink, ReportError, build_report, emit_report, fingerprint,
                     render_summary, replay)
from .transport import (CommandRestarter, ControlChannelRestarter, LoopbackSession, NoRestarter,
                        ResetRestarter, SocketSession, TargetConfig, TargetUnreachable)

EXIT_OK = 0
EXIT_CRASHES = 1
EXIT_CONFIG = 2
EXIT_UNREACHABLE = 3

INPROC = "inproc:"

log = logging.getLogger("snippetfuzz")


def _target_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--target", required=True, help="host:port, or inproc:<profile> for the built-in mock")
    p.add_argument("--proto", choices=("tcp", "udp"), default=None)
    p.add_argument("--framing", default=None, help="delim:<hex>, len:<width>:<big|little> or timeout")
    p.add_argument("--corpus", default=None, help="seed corpus JSON (defaults to the profile's corpus for inproc)")
    p.add_argument("--response-timeout-ms", type=int, default=2000)
    p.add_argument("--probe-interval-ms", type=int, default=1000)
    p.add_argument("--boot-wait-ms", type=int, default=10000)
    p.add_argument("--control-port", type=int, default=None,
                   help="mock control port used to restart the target (default: corpus restart_command)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="snippetfuzz", description="Response-guided snippet fuzzer for network devices")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fuzz", help="run a campaign")
    _target_args(f)
    f.add_argument("--mode", choices=(SNIPPET, NOSNIPPET), default=SNIPPET)
    f.add_argument("--time-budget", type=float, default=None, help="seconds")
    f.add_argument("--exec-budget", type=int, default=None)
    f.add_argument("--havoc-budget", type=int, default=None)
    f.add_argument("--rng-seed", type=int, required=True)
    f.add_argument("--out", default="out")

    i = sub.add_parser("infer", help="snippet determination only; print partitions")
    _target_args(i)
    i.add_argument("--seed", action="append", default=None, help="seed id (repeatable; default all)")
    i.add_argument("--rng-seed", type=int, default=0)
    i.add_argument("--annotations", default=None, help="also write annotation records to this JSONL file")
    i.add_argument("--label", action="store_true",
                   help="run the deterministic mutation plans to label data-bearing snippets")

    r = sub.add_parser("replay", help="rebuild the report from a findings log")
    r.add_argument("log")
    r.add_argument("--out", default=None)
    r.add_argument("--check", default=None, help="report.json to compare against (timestamps ignored)")

    e = sub.add_parser("eval-seg", help="score annotations against per-byte ground truth")
    e.add_argument("annotations", help="report.json or annotation JSONL")
    e.add_argument("ground_truth", help="ground-truth JSONL, or inproc:<profile> to label with the mock grammar")

    m = sub.add_parser("mock", help="serve a mock device")
    m.add_argument("profile", help=f"one of {', '.join(BUILTIN_PROFILES)} or a profile JSON path")
    m.add_argument("--host", default="127.0.0.1")
    m.add_argument("--port", type=int, default=None)
    m.add_argument("--proto", choices=("tcp", "udp"), default=None)
    return ap


def open_target(args):
    """(session, restarter, corpus) for the parsed target arguments."""
    spec = args.target
    framing = Framing.parse(args.framing) if args.framing else None
    timing = dict(response_timeout_ms=args.response_timeout_ms,
                  probe_repeat_interval_ms=args.probe_interval_ms, boot_wait_ms=args.boot_wait_ms)
    if spec.startswith(INPROC):
        name = spec[len(INPROC):]
        profile = load_profile(name)
        cfg = TargetConfig(protocol=args.proto or profile.protocol, framing=framing or profile.framing, **timing)
        device = MockDevice(profile)
        session = LoopbackSession(device, cfg)
        if args.corpus:
            corpus = load_seed_corpus(args.corpus)
        elif name in BUILTIN_PROFILES:
            corpus = builtin_corpus(name)
        else:
            raise ConfigError("--corpus is required for a profile file")
        return session, ResetRestarter(device), corpus
    host, sep, port = spec.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise ConfigError(f"--target must be host:port or inproc:<profile>, got {spec!r}")
    if not args.corpus:
        raise ConfigError("--corpus is required for a network target")
    corpus = load_seed_corpus(args.corpus)
    cfg = TargetConfig(host, int(port), args.proto or "tcp", framing or Framing(), **timing)
    if args.control_port is not None:
        restarter = ControlChannelRestarter(host, args.control_port)
    elif corpus.restart_command:
        restarter = CommandRestarter(corpus.restart_command)
    else:
        restarter = NoRestarter()
    return SocketSession(cfg), restarter, corpus


def cmd_fuzz(args) -> int:
    if args.time_budget is None and args.exec_budget is None:
        raise ConfigError("fuzz needs --time-budget and/or --exec-budget")
    session, restarter, corpus = open_target(args)
    mutation = MutationConfig()
    if args.havoc_budget is not None:
        mutation = MutationConfig.from_dict({**mutation.to_dict(), "havoc_budget": args.havoc_budget})
    config = CampaignConfig(rng_seed=args.rng_seed, target=session.config, corpus_path=args.corpus,
                            mode=args.mode, time_budget_s=args.time_budget, exec_budget=args.exec_budget,
                            mutation=mutation, out_dir=args.out, target_spec=args.target)
    out = Path(args.out)
    session.open()
    sink = JsonlSink(out / FINDINGS_LOG)
    try:
        report = Campaign(corpus, session, config, restarter, sink).fuzz()
    finally:
        sink.close()
        session.close()
    (out / "config.json").write_text(config.dumps())
    emit_report(report, out)
    sys.stdout.write(render_summary(report))
    return EXIT_CRASHES if report["findings"] else EXIT_OK


def cmd_infer(args) -> int:
    session, restarter, corpus = open_target(args)
    config = CampaignConfig(rng_seed=args.rng_seed, target=session.config, target_spec=args.target)
    wanted = set(args.seed) if args.seed else None
    session.open()
    campaign = Campaign(corpus, session, config, restarter)
    records = []
    try:
        for seed in list(corpus.seeds):
            if wanted is not None and seed.id not in wanted:
                continue
            for idx, m in enumerate(seed.sequence):
                if not m:
                    continue
                campaign.run_snippet_determination(seed, idx)
            if args.label:
                campaign.run_mutation_stage(seed, havoc=False)
            data = campaign.state.data_ranges
            for idx, m in enumerate(seed.sequence):
                print(f"{seed.id}#{idx} ({len(m)} bytes)")
                for ss in seed.snippet_annotations.get(idx, []):
                    ranges = data.get((seed.id, idx), set())
                    parts = " | ".join(("*" if (s.start, s.end) in ranges else "") + repr(m[s.start:s.end])[2:-1]
                                       for s in ss.snippets)
                    print(f"  round {ss.round}: {parts}")
        records = build_report(campaign.state.events)["annotations"]
        if not args.label:
            for r in records:
                del r["data"]
    finally:
        session.close()
    if args.annotations:
        with open(args.annotations, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return EXIT_CRASHES if campaign.state.findings else EXIT_OK


def cmd_replay(args) -> int:
    report, problems = replay(args.log)
    for p in problems:
        print(f"replay mismatch: {p}", file=sys.stderr)
    if args.out:
        emit_report(report, args.out)
    sys.stdout.write(render_summary(report))
    if args.check:
        live = json.loads(Path(args.check).read_text())
        same = fingerprint(live) == fingerprint(report)
        print(f"report matches {args.check}: {'yes' if same else 'NO'}")
        if not same:
            return EXIT_CONFIG
    if problems:
        return EXIT_CONFIG
    return EXIT_CRASHES if report["findings"] else EXIT_OK


def _load_annotations(path) -> tuple:
    """(annotation records, seed sequences by id) from a report or a JSONL file."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
    if isinstance(doc, dict) and "annotations" in doc:
        seqs = {s["id"]: [bytes.fromhex(m) for m in s["sequence"]] for s in doc["seeds"]}
        return doc["annotations"], seqs
    return read_annotations(path), {}


def cmd_eval_seg(args) -> int:
    annotations, seqs = _load_annotations(args.annotations)
    if args.ground_truth.startswith(INPROC):
        device = MockDevice(load_profile(args.ground_truth[len(INPROC):]))
        truth = []
        for seed_id, msg_idx in sorted({(a["seed"], a["message_index"]) for a in annotations}):
            if seed_id not in seqs:
                raise ConfigError("labelling with a mock needs a report.json that lists seed sequences")
            labels = device.ground_truth(seqs[seed_id][msg_idx])
            if labels is not None:
                truth.append({"seed": seed_id, "message_index": msg_idx, "labels": labels})
    else:
        truth = read_annotations(args.ground_truth)
    result = evaluate_annotations(annotations, truth)
    for m in result["messages"]:
        print(f"{m['seed']}#{m['message_index']}: {m['score']:.3f} (round {m['round']})")
    for key in result["missing"]:
        print(f"{key}: no annotation")
    if result["median"] is not None:
        print(f"mean {result['mean']:.3f}  median {result['median']:.3f}")
    return EXIT_OK


def cmd_mock(args) -> int:
    profile = load_profile(args.profile)
    if args.proto:
        profile.protocol = args.proto
    server = serve(profile, args.host, args.port)
    print(f"{profile.name} ({profile.grammar}) on {profile.protocol} {args.host}:{server.port}, "
          f"control on tcp {args.host}:{server.port + 1}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


COMMANDS = {"fuzz": cmd_fuzz, "infer": cmd_infer, "replay": cmd_replay, "eval-seg": cmd_eval_seg,
            "mock": cmd_mock}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except TargetUnreachable as exc:
        print(f"error: target unreachable: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except (ConfigError, MalformedCorpus, ProfileError, ValueError, ReportError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


__all__ = ["main", "build_parser", "open_target"]
