"""Command-line interface.

Every command exits 0 on success and nonzero with a single machine-parseable
``error: <Type>: <message>`` line on stderr otherwise. Results are printed
and, when --out is given, also written as files under that directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis as an
from .datastore import find_recordings, load_recording, validate
from .errors import ChatBCIError
from .figures import ErpFigureSpec, erp_figure
from .ideation import (
    IDEA_PROMPT_TEMPLATE,
    MockLiteratureClient,
    generate_ideas,
    novelty_check,
    save_ideas,
)
from .knowledge import summarize_directory
from .llm import MockProvider
from .preprocess import EpochSet, FilterSpec, common_average_reference, epoch, filter_signal
from .training import AugmentSpec, PipelineConfig, TrainConfig, train
from .workspace import AppConfig, Workspace


def _parse_filter(text: str) -> FilterSpec:
    parts = text.split(":")
    kind = parts[0]
    if kind == "bandpass":
        return FilterSpec(kind, (float(parts[1]), float(parts[2])))
    return FilterSpec(kind, float(parts[1]))


def _parse_window(text: str) -> tuple[float, float]:
    lo, hi = text.split(":")
    return float(lo), float(hi)


def _write_out(out_dir: str | None, name: str, payload: dict) -> None:
    if out_dir is None:
        return
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    (path / name).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _load_epochs(args) -> EpochSet:
    parts = []
    for rec_path in find_recordings(args.data):
        rec = load_recording(rec_path)
        if args.subjects and rec.subject_id not in args.subjects:
            continue
        if rec.session != args.session:
            continue
        if not args.no_car:
            rec = common_average_reference(rec)
        for spec in args.filters or []:
            rec = filter_signal(rec, spec)
        parts.append(epoch(rec, args.window))
    if not parts:
        raise ChatBCIError(
            f"no recordings matched subjects={args.subjects} session={args.session!r} under {args.data}"
        )
    return EpochSet.concat(parts)


def cmd_validate(args) -> int:
    reports = {}
    ok = True
    paths = find_recordings(args.dataset_dir)
    if not paths:
        raise ChatBCIError(f"no recordings found under {args.dataset_dir}")
    for path in paths:
        report = validate(load_recording(path))
        reports[path.name] = report.to_dict()
        ok = ok and report.passed
        print(f"{path.name}: {'pass' if report.passed else 'FAIL'}")
    _write_out(args.out, "validation.json", {"recordings": reports, "pass": ok})
    return 0 if ok else 1


def cmd_analysis(args) -> int:
    ep = _load_epochs(args)
    if args.command == "erp":
        result = an.erp(ep)
        payload = result.to_dict()
        if args.out and args.figure:
            channels = tuple(ch for ch in ErpFigureSpec().channels if ch in result.channel_names)
            fig = erp_figure(result, ErpFigureSpec(channels=channels or tuple(result.channel_names[:7])))
            fig.save(Path(args.out))
            print(f"figure: {fig.figure_id}")
    elif args.command == "psd":
        payload = an.psd(ep, segment_s=args.segment, overlap=args.overlap).to_dict()
    else:
        payload = an.class_channel_stats(ep, outlier_k=args.outlier_k).to_dict()
    print(json.dumps({"trials": ep.n_trials, "channels": ep.n_channels}, indent=2))
    _write_out(args.out, f"{args.command}.json", payload)
    return 0


def cmd_train(args) -> int:
    decoder_cfg = {"include_eog": args.include_eog}
    train_cfg = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        early_stop_patience=min(args.patience, args.epochs),
        val_fraction=args.val_fraction,
        seed=args.seed,
        augment=AugmentSpec.disabled() if args.no_augment else AugmentSpec(),
    )
    pipeline = PipelineConfig(
        filters=tuple(args.filters) if args.filters else (FilterSpec("lowpass", 40.0),),
        window_s=args.window,
    )
    run = train(
        args.subject,
        decoder_cfg,
        train_cfg,
        data_dir=args.data,
        out_dir=args.out or "runs",
        pipeline=pipeline,
    )
    print(
        json.dumps(
            {
                "run_id": run.run_id,
                "status": run.status,
                "best_val_acc": run.best_val_acc,
                "eval_accuracy": run.eval_accuracy,
            },
            indent=2,
        )
    )
    return 0 if run.status == "finished" else 1


def cmd_ideate(args) -> int:
    if not args.offline:
        print("online providers need a configured service; using the offline mock", file=sys.stderr)
    provider = MockProvider()
    if args.responses:
        provider = MockProvider(json.loads(Path(args.responses).read_text(encoding="utf-8")))
    else:
        # Offline default: a canned deck so the command is useful without a provider.
        reply = "\n".join(
            f"Question: Candidate question {i} about {args.topic}?\n"
            f"Gap: Open gap {i}.\nMotivation: Why it matters {i}.\nApproach: Plan {i}."
            for i in range(1, args.n + 1)
        )
        provider.add_response(IDEA_PROMPT_TEMPLATE.format(n=args.n, topic=args.topic), reply)
    cards, report = generate_ideas(args.n, args.topic, provider)
    client = MockLiteratureClient([])
    for card in cards:
        novelty_check(card, client)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        save_ideas(cards, Path(args.out) / "ideas.jsonl")
    print(json.dumps({"ideas": [c.to_dict() for c in cards], "dropped": report.dropped}, indent=2))
    return 0


def cmd_summarize(args) -> int:
    text = summarize_directory(args.directory, args.level)
    print(text, end="")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / f"summary_level{args.level}.txt").write_text(text, encoding="utf-8")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    config = AppConfig.from_file(args.config) if args.config else AppConfig()
    serve(config, host=args.host, port=args.port, ui_dir=args.ui)
    return 0


def cmd_chat(args) -> int:
    config = AppConfig.from_file(args.config) if args.config else AppConfig()
    workspace = Workspace(config)
    session = workspace.create_session()
    print(f"session {session.session_id} (provider: {workspace.config.provider.get('name')})")
    print("type a message, 'phase <name>' to switch phase, or 'quit'")
    phase = "experiment_design"
    try:
        for line in sys.stdin if not sys.stdin.isatty() else iter(lambda: input("> "), None):
            line = line.strip()
            if not line:
                continue
            if line in ("quit", "exit"):
                break
            if line.startswith("phase "):
                phase = line.split(None, 1)[1]
                print(f"(phase set to {phase})")
                continue
            reply, actions = session.send(line, phase)
            print(reply.content)
            for action in actions:
                print(f"[action {action.action_id} {action.kind}: {action.state}]")
    except (EOFError, KeyboardInterrupt):
        pass
    finally:
        workspace.close()
    print(f"transcript: {session.transcript_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chatbci", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate every recording under a dataset directory")
    p.add_argument("dataset_dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    for name in ("erp", "psd", "stats"):
        p = sub.add_parser(name, help=f"compute {name} over epoched recordings")
        p.add_argument("--data", required=True)
        p.add_argument("--subjects", nargs="*", default=None)
        p.add_argument("--session", default="train", choices=("train", "eval"))
        p.add_argument("--filters", nargs="*", type=_parse_filter, default=None,
                       help="e.g. lowpass:40 highpass:4 bandpass:8:30")
        p.add_argument("--window", type=_parse_window, default=(0.0, 4.0), help="start:end seconds")
        p.add_argument("--no-car", action="store_true")
        p.add_argument("--out")
        if name == "erp":
            p.add_argument("--figure", action="store_true", help="also render the ERP grid")
        if name == "psd":
            p.add_argument("--segment", type=float, default=1.0)
            p.add_argument("--overlap", type=float, default=0.5)
        if name == "stats":
            p.add_argument("--outlier-k", type=float, default=6.0)
        p.set_defaults(func=cmd_analysis)

    p = sub.add_parser("train", help="within-subject training run")
    p.add_argument("--subject", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--include-eog", action="store_true")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=30)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--filters", nargs="*", type=_parse_filter, default=None)
    p.add_argument("--window", type=_parse_window, default=(0.0, 4.0))
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ideate", help="generate structured research ideas")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--topic", default="EEG motor imagery decoding")
    p.add_argument("--offline", action="store_true")
    p.add_argument("--responses", help="JSON file of canned mock replies")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ideate)

    p = sub.add_parser("summarize", help="summarize a directory tree")
    p.add_argument("directory")
    p.add_argument("--level", type=int, default=0, choices=(0, 1, 2))
    p.add_argument("--out")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--config")
    p.add_argument("--ui", help="directory with the built web UI")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("chat", help="terminal chat session")
    p.add_argument("--config")
    p.set_defaults(func=cmd_chat)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ChatBCIError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
