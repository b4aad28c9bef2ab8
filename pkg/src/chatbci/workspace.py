"""Single-process workspace: datasets, analyses, runs, figures, sessions.

Persistence is the filesystem layout defined by the other modules (no
database): recordings under ``data_dir``, everything produced under
``artifacts_dir``. The workspace is also the action executor behind chat
sessions, dispatching by action kind.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import analysis as an
from .datastore import find_recordings, load_recording, validate
from .errors import ChatBCIError, SpecError
from .figures import CurvesFigureSpec, ErpFigureSpec, RenderedFigure, curves_figure, erp_figure
from .knowledge import KnowledgeStore, seed_store
from .llm import (
    RESEARCH_PHASES,
    AutonomyPolicy,
    ChatSession,
    MockProvider,
    OpenAICompatibleProvider,
    PendingAction,
)
from .preprocess import EpochSet, FilterSpec, common_average_reference, epoch, filter_signal
from .training import PipelineConfig, TrainConfig, TrainRun, train


@dataclass
class AppConfig:
    data_dir: str = "data"
    artifacts_dir: str = "artifacts"
    provider: dict = field(default_factory=lambda: {"name": "mock"})
    autonomy: dict = field(default_factory=dict)
    budget_tokens: int = 1200
    max_parallel_runs: int = 2

    @classmethod
    def from_file(cls, path: str | Path) -> "AppConfig":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dict(payload)

    @classmethod
    def from_dict(cls, d: dict) -> "AppConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise SpecError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def autonomy_policy(self) -> AutonomyPolicy:
        levels = {phase: 1 for phase in RESEARCH_PHASES}
        levels.update({str(k): int(v) for k, v in self.autonomy.items()})
        return AutonomyPolicy(levels)


class Workspace:
    def __init__(self, config: AppConfig, clock=time.time):
        self.config = config
        self.clock = clock
        self.data_dir = Path(config.data_dir)
        self.artifacts_dir = Path(config.artifacts_dir)
        self.artifacts_dir.mkdir(parents=True, exist_ok=True)
        self.kb: KnowledgeStore = seed_store(self.artifacts_dir / "kb")
        self.sessions: dict[str, ChatSession] = {}
        self.reports: dict[str, dict] = {}
        self.figures: dict[str, dict] = {}
        self.runs: dict[str, dict] = {}
        self._futures: dict[str, Future] = {}
        self._pool = ThreadPoolExecutor(max_workers=max(1, config.max_parallel_runs))
        self._lock = threading.Lock()
        self._counters = {"session": 0, "report": 0}
        self._dataset_cache: list[dict] | None = None

    def close(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)

    # -- providers & sessions ---------------------------------------------

    def make_provider(self):
        cfg = self.config.provider
        name = cfg.get("name", "mock")
        if name == "mock":
            responses = {}
            path = cfg.get("responses_path")
            if path:
                responses = json.loads(Path(path).read_text(encoding="utf-8"))
            return MockProvider(responses)
        if name == "openai-compatible":
            return OpenAICompatibleProvider(
                base_url=cfg["base_url"],
                model=cfg.get("model", "gpt-4o"),
                temperature=float(cfg.get("temperature", 0.2)),
                max_tokens=int(cfg.get("max_tokens", 1024)),
            )
        raise SpecError(f"unknown provider {name!r}")

    def create_session(self, provider=None) -> ChatSession:
        with self._lock:
            self._counters["session"] += 1
            session_id = f"sess-{self._counters['session']:04d}"
        session = ChatSession(
            session_id=session_id,
            provider=provider or self.make_provider(),
            store=self.kb,
            transcript_path=self.artifacts_dir / "sessions" / f"{session_id}.jsonl",
            policy=self.config.autonomy_policy(),
            budget_tokens=self.config.budget_tokens,
            clock=self.clock,
        )
        session.executor = lambda action: self.dispatch(action, session=session)
        self.sessions[session_id] = session
        return session

    # -- datasets -----------------------------------------------------------

    def datasets(self, refresh: bool = False) -> list[dict]:
        """Inventory of recording directories with validation summaries."""
        if self._dataset_cache is not None and not refresh:
            return self._dataset_cache
        rows = []
        for path in find_recordings(self.data_dir):
            try:
                rec = load_recording(path)
                report = validate(rec)
                rows.append(
                    {
                        "id": path.name,
                        "subject_id": rec.subject_id,
                        "session": rec.session,
                        "sampling_rate_hz": rec.sampling_rate_hz,
                        "n_channels": rec.n_channels,
                        "n_samples": rec.n_samples,
                        "validation": report.to_dict(),
                    }
                )
            except ChatBCIError as exc:
                rows.append({"id": path.name, "error": str(exc)})
        self._dataset_cache = rows
        return rows

    def _load_epochs(self, params: dict) -> EpochSet:
        subjects = params.get("subjects")
        session = params.get("session", "train")
        window = tuple(params.get("window", (0.0, 4.0)))
        use_car = bool(params.get("car", True))
        filter_specs = [FilterSpec.from_dict(f) for f in params.get("filters", [])]
        parts = []
        for path in find_recordings(self.data_dir):
            rec = load_recording(path)
            if subjects and rec.subject_id not in subjects:
                continue
            if rec.session != session:
                continue
            if use_car:
                rec = common_average_reference(rec)
            for spec in filter_specs:
                rec = filter_signal(rec, spec)
            parts.append(epoch(rec, window))
        if not parts:
            raise SpecError(
                f"no recordings matched subjects={subjects} session={session!r} under {self.data_dir}"
            )
        return EpochSet.concat(parts)

    # -- analyses -----------------------------------------------------------

    def _new_report_id(self) -> str:
        with self._lock:
            self._counters["report"] += 1
            return f"rep-{self._counters['report']:04d}"

    def compute_analysis(self, kind: str, params: dict) -> tuple[dict, object]:
        """Synchronous analysis; returns (JSON-able result, result object)."""
        if kind == "validate":
            results = {}
            for row in self.datasets(refresh=True):
                results[row["id"]] = row.get("validation", {"error": row.get("error")})
            return {"recordings": results}, results
        ep = self._load_epochs(params or {})
        if kind == "erp":
            obj = an.erp(ep)
        elif kind == "psd":
            obj = an.psd(
                ep,
                segment_s=float(params.get("segment_s", 1.0)),
                overlap=float(params.get("overlap", 0.5)),
            )
        elif kind == "stats":
            obj = an.class_channel_stats(ep, outlier_k=float(params.get("outlier_k", 6.0)))
        else:
            raise SpecError(f"unknown analysis kind {kind!r}")
        return obj.to_dict(), obj

    def run_analysis(self, kind: str, params: dict) -> str:
        """Synchronous analysis registered under a fresh report id."""
        report_id = self._new_report_id()
        entry = {"report_id": report_id, "kind": kind, "params": params, "status": "running"}
        self.reports[report_id] = entry
        try:
            result, obj = self.compute_analysis(kind, params or {})
        except Exception as exc:
            entry["status"] = "failed"
            entry["error"] = str(exc)
            raise
        entry["status"] = "done"
        entry["result"] = result
        entry["object"] = obj
        out = self.artifacts_dir / "reports" / f"{report_id}.json"
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(
            json.dumps({k: v for k, v in entry.items() if k != "object"}, indent=2) + "\n",
            encoding="utf-8",
        )
        return report_id

    def start_analysis(self, kind: str, params: dict) -> str:
        """Background analysis for the 202 + poll REST contract."""
        report_id = self._new_report_id()
        entry = {"report_id": report_id, "kind": kind, "params": params, "status": "running"}
        self.reports[report_id] = entry

        def work():
            try:
                result, obj = self.compute_analysis(kind, params or {})
                entry["result"] = result
                entry["object"] = obj
                entry["status"] = "done"
            except Exception as exc:  # noqa: BLE001 - reported via status
                entry["status"] = "failed"
                entry["error"] = str(exc)

        self._pool.submit(work)
        return report_id

    # -- figures ------------------------------------------------------------

    def register_figure(self, rendered: RenderedFigure) -> str:
        png, data = rendered.save(self.artifacts_dir / "figures")
        self.figures[rendered.figure_id] = {
            "figure_id": rendered.figure_id,
            "kind": rendered.kind,
            "png_path": str(png),
            "data_path": str(data),
        }
        return rendered.figure_id

    def make_erp_figure(self, report_id: str, spec: ErpFigureSpec | None = None) -> str:
        entry = self.reports.get(report_id)
        if entry is None or entry.get("kind") != "erp" or "object" not in entry:
            raise SpecError(f"no finished ERP report {report_id!r}")
        erp_obj = entry["object"]
        if spec is None:
            available = [ch for ch in ErpFigureSpec().channels if ch in erp_obj.channel_names]
            spec = ErpFigureSpec(channels=tuple(available or erp_obj.channel_names))
        return self.register_figure(erp_figure(erp_obj, spec))

    def make_curves_figure(self, run_ids: list[str]) -> str:
        runs = []
        for rid in run_ids:
            entry = self.runs.get(rid)
            if entry is None or entry.get("run") is None:
                raise SpecError(f"unknown or metric-less run {rid!r}")
            runs.append(entry["run"])
        return self.register_figure(curves_figure(runs, CurvesFigureSpec()))

    # -- training runs --------------------------------------------------------

    def start_run(
        self,
        subject_id: str,
        decoder_cfg: dict | None = None,
        train_cfg: dict | TrainConfig | None = None,
        pipeline: dict | PipelineConfig | None = None,
        session: ChatSession | None = None,
    ) -> str:
        if isinstance(train_cfg, dict):
            train_cfg = TrainConfig.from_dict(train_cfg)
        train_cfg = train_cfg or TrainConfig()
        if isinstance(pipeline, dict):
            pipeline = PipelineConfig.from_dict(pipeline)
        pipeline = pipeline or PipelineConfig()
        decoder_cfg = dict(decoder_cfg or {})

        digest = hashlib.sha256(
            json.dumps(
                {"subject": subject_id, "decoder": decoder_cfg, "train": train_cfg.to_dict()},
                sort_keys=True,
            ).encode()
        ).hexdigest()[:10]
        run_id = f"run-{subject_id}-{digest}"
        with self._lock:
            n = sum(1 for rid in self.runs if rid.startswith(run_id))
            if n:
                run_id = f"{run_id}-{n + 1}"
            entry = {"run_id": run_id, "status": "queued", "run": None, "error": None}
            self.runs[run_id] = entry
        stop_flag = threading.Event()
        entry["stop"] = stop_flag

        live = TrainRun(run_id=run_id, subject_id=subject_id)
        entry["run"] = live
        entry["status"] = "running"

        def work():
            try:
                result = train(
                    subject_id,
                    decoder_cfg,
                    train_cfg,
                    data_dir=self.data_dir,
                    out_dir=self.artifacts_dir / "runs",
                    pipeline=pipeline,
                    run_id=run_id,
                    should_stop=stop_flag.is_set,
                    on_epoch=live.epochs.append,
                )
                # keep the shared epoch list the UI is polling
                result.epochs = live.epochs
                entry["run"] = result
                entry["status"] = result.status
                if session is not None:
                    session._record_event(
                        {
                            "event": "run_completed",
                            "run_id": run_id,
                            "status": result.status,
                            "eval_accuracy": result.eval_accuracy,
                        },
                        "execution",
                        f"training run {run_id} {result.status}",
                    )
            except Exception as exc:  # noqa: BLE001 - reported via status
                entry["status"] = "failed"
                entry["error"] = str(exc)

        self._futures[run_id] = self._pool.submit(work)
        return run_id

    def run_snapshot(self, run_id: str) -> dict:
        entry = self.runs.get(run_id)
        if entry is None:
            raise KeyError(run_id)
        run: TrainRun | None = entry.get("run")
        return {
            "run_id": run_id,
            "status": entry["status"],
            "error": entry.get("error"),
            "subject_id": run.subject_id if run else None,
            "metrics": list(run.epochs) if run else [],
            "best_epoch": run.best_epoch if run else None,
            "best_val_acc": run.best_val_acc if run else None,
            "eval_accuracy": run.eval_accuracy if run else None,
            "confusion": run.confusion if run else None,
        }

    def wait_run(self, run_id: str, timeout: float = 600.0) -> dict:
        future = self._futures.get(run_id)
        if future is not None:
            future.result(timeout=timeout)
        return self.run_snapshot(run_id)

    def stop_run(self, run_id: str) -> None:
        entry = self.runs.get(run_id)
        if entry and "stop" in entry:
            entry["stop"].set()

    # -- action dispatch -------------------------------------------------------

    def dispatch(self, action: PendingAction, session: ChatSession | None = None) -> dict:
        """Execute an approved/automatic action; returns its result reference."""
        payload = action.payload or {}
        if action.kind == "analysis":
            op = payload.get("op", "erp")
            report_id = self.run_analysis(op, payload.get("params", {}))
            return {"report_id": report_id}
        if action.kind == "training_run":
            run_id = self.start_run(
                subject_id=payload["subject_id"],
                decoder_cfg=payload.get("decoder"),
                train_cfg=payload.get("train"),
                pipeline=payload.get("pipeline"),
                session=session,
            )
            return {"run_id": run_id}
        if action.kind == "figure":
            if "erp_report_id" in payload:
                fid = self.make_erp_figure(payload["erp_report_id"])
            elif "run_ids" in payload:
                fid = self.make_curves_figure(payload["run_ids"])
            else:
                raise SpecError("figure action needs erp_report_id or run_ids")
            return {"figure_id": fid}
        if action.kind in ("code", "test_generation"):
            out = self.artifacts_dir / "code"
            out.mkdir(parents=True, exist_ok=True)
            artifact_id = f"{action.kind}-{action.action_id}"
            path = out / f"{artifact_id}.txt"
            path.write_text(str(payload.get("content", "")) + "\n", encoding="utf-8")
            return {"artifact_id": artifact_id}
        raise SpecError(f"no dispatch rule for action kind {action.kind!r}")
