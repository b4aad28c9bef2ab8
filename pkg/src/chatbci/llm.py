"""Provider-agnostic chat bridge with transcript persistence and the
per-phase autonomy gate for AI-proposed actions.

The transcript is an append-only JSONL file; every state transition of the
session (messages, proposals, approvals, executions, policy changes) is a
line, so replaying the file reconstructs the session exactly. The mock
provider makes every test and scripted session run offline and
deterministically.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import httpx

from .errors import ProviderError, SpecError, StateError
from .knowledge import ContextBundle, KnowledgeStore, assemble_context

RESEARCH_PHASES = (
    "idea_generation",
    "experiment_design",
    "code_generation",
    "execution",
    "visualization",
    "interpretation",
)

# 0: manual (advisory only), 1: propose (human approves), 2: auto with
# after-the-fact review, 3: fully automatic.
AUTONOMY_LEVELS = (0, 1, 2, 3)

ACTION_KINDS = ("analysis", "code", "test_generation", "training_run", "figure")
ACTION_STATES = ("pending", "approved", "rejected", "executed", "flagged_for_review", "failed")

API_KEY_ENV = "CHATBCI_LLM_API_KEY"


@dataclass
class ChatMessage:
    role: str  # human | assistant | system
    content: str
    timestamp: float
    phase: str

    def __post_init__(self):
        if not self.content:
            raise SpecError("message content must be non-empty")
        if self.phase not in RESEARCH_PHASES:
            raise SpecError(f"unknown research phase {self.phase!r}")


@dataclass
class AutonomyPolicy:
    levels: dict[str, int]

    def __post_init__(self):
        for phase in RESEARCH_PHASES:
            if phase not in self.levels:
                raise SpecError(f"autonomy policy must cover phase {phase!r}")
        for phase, level in self.levels.items():
            if phase not in RESEARCH_PHASES:
                raise SpecError(f"unknown phase {phase!r} in policy")
            if level not in AUTONOMY_LEVELS:
                raise SpecError(f"autonomy level must be 0..3, got {level} for {phase}")

    @classmethod
    def default(cls) -> "AutonomyPolicy":
        return cls({phase: 1 for phase in RESEARCH_PHASES})

    def with_level(self, phase: str, level: int) -> "AutonomyPolicy":
        levels = dict(self.levels)
        levels[phase] = level
        return AutonomyPolicy(levels)

    def to_dict(self) -> dict:
        return dict(self.levels)


@dataclass
class PendingAction:
    action_id: str
    kind: str
    payload: dict
    phase: str
    state: str = "pending"
    note: str | None = None
    result_ref: dict | None = None
    error: str | None = None

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise SpecError(f"unknown action kind {self.kind!r}")
        if self.state not in ACTION_STATES:
            raise SpecError(f"unknown action state {self.state!r}")

    def to_dict(self) -> dict:
        return {
            "action_id": self.action_id,
            "kind": self.kind,
            "payload": self.payload,
            "phase": self.phase,
            "state": self.state,
            "note": self.note,
            "result_ref": self.result_ref,
            "error": self.error,
        }


class MockProvider:
    """Deterministic canned-response provider keyed on the last human message.

    ``responses`` maps ``key_for(text)`` digests to replies; unmatched
    messages get a stable echo reply, so whole sessions are reproducible
    bit for bit.
    """

    name = "mock"

    def __init__(self, responses: dict[str, str] | None = None):
        self.responses = dict(responses or {})

    @staticmethod
    def key_for(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]

    def add_response(self, prompt: str, reply: str) -> None:
        self.responses[self.key_for(prompt)] = reply

    def complete(self, messages: list[dict]) -> str:
        last_human = next(
            (m["content"] for m in reversed(messages) if m["role"] == "human"), ""
        )
        key = self.key_for(last_human)
        if key in self.responses:
            return self.responses[key]
        return f"[mock:{key}] acknowledged: {last_human[:80]}"


class OpenAICompatibleProvider:
    """Thin client for a /chat/completions style endpoint."""

    name = "openai-compatible"

    def __init__(
        self,
        base_url: str,
        model: str,
        temperature: float = 0.2,
        max_tokens: int = 1024,
        api_key: str | None = None,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self._client = client or httpx.Client(timeout=60.0)

    def complete(self, messages: list[dict]) -> str:
        role_map = {"human": "user", "assistant": "assistant", "system": "system"}
        body = {
            "model": self.model,
            "messages": [
                {"role": role_map[m["role"]], "content": m["content"]} for m in messages
            ],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        resp = self._client.post(
            f"{self.base_url}/chat/completions",
            json=body,
            headers={"Authorization": f"Bearer {self.api_key}"},
        )
        resp.raise_for_status()
        payload = resp.json()
        return payload["choices"][0]["message"]["content"]


def gate(action: PendingAction, policy: AutonomyPolicy) -> str:
    """Disposition for a freshly proposed action under the policy.

    Returns one of "rejected", "pending", "execute_and_flag", "execute".
    Only the session applies the side effects.
    """
    if action.phase not in policy.levels:
        raise SpecError(f"phase {action.phase!r} not covered by policy")
    level = policy.levels[action.phase]
    if level == 0:
        return "rejected"
    if level == 1:
        return "pending"
    if level == 2:
        return "execute_and_flag"
    return "execute"


ACTION_MARKER = "ACTION:"


def parse_actions(reply: str) -> tuple[list[dict], list[str]]:
    """Extract ``ACTION: {json}`` proposal lines from an assistant reply."""
    proposals: list[dict] = []
    problems: list[str] = []
    for line in reply.splitlines():
        stripped = line.strip()
        if not stripped.startswith(ACTION_MARKER):
            continue
        raw = stripped[len(ACTION_MARKER):].strip()
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            problems.append(f"unparseable action line: {exc}")
            continue
        if not isinstance(obj, dict) or obj.get("kind") not in ACTION_KINDS:
            problems.append(f"action line missing a valid kind: {raw[:60]}")
            continue
        proposals.append({"kind": obj["kind"], "payload": obj.get("payload", {})})
    return proposals, problems


class ChatSession:
    """One conversation: transcript, autonomy policy, and gated actions.

    ``executor`` performs an approved/auto action and returns a result
    reference dict; without one, execution fails gracefully into the
    action's error field. ``clock`` is injectable for reproducible logs.
    """

    def __init__(
        self,
        session_id: str,
        provider,
        store: KnowledgeStore | None,
        transcript_path: str | Path,
        policy: AutonomyPolicy | None = None,
        executor: Callable[[PendingAction], dict] | None = None,
        budget_tokens: int = 1200,
        retrieve_k: int = 4,
        clock: Callable[[], float] = time.time,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.session_id = session_id
        self.provider = provider
        self.store = store
        self.transcript_path = Path(transcript_path)
        self.transcript_path.parent.mkdir(parents=True, exist_ok=True)
        self.policy = policy or AutonomyPolicy.default()
        self.executor = executor
        self.budget_tokens = budget_tokens
        self.retrieve_k = retrieve_k
        self.clock = clock
        self.sleep = sleep
        self.messages: list[ChatMessage] = []
        self.actions: dict[str, PendingAction] = {}
        self.artifact_ids: list[str] = []
        self._counter = 0
        self._lock = threading.Lock()
        if not self.transcript_path.exists():
            self._record_event(
                {"event": "policy_set", "policy": self.policy.to_dict()},
                "experiment_design",
                "session created",
            )

    # -- transcript ------------------------------------------------------

    def _write_line(self, role: str, content: str, phase: str, action_event: dict | None = None):
        line = {"ts": self.clock(), "role": role, "content": content, "phase": phase}
        if action_event is not None:
            line["action_event"] = action_event
        with self.transcript_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(line) + "\n")

    def _record_message(self, msg: ChatMessage):
        self.messages.append(msg)
        self._write_line(msg.role, msg.content, msg.phase)

    def _record_event(self, event: dict, phase: str, content: str = ""):
        self._write_line("system", content, phase, action_event=event)

    # -- policy ----------------------------------------------------------

    def set_policy(self, policy: AutonomyPolicy, phase: str = "experiment_design"):
        self.policy = policy
        self._record_event(
            {"event": "policy_set", "policy": policy.to_dict()}, phase, "autonomy policy updated"
        )

    # -- chat ------------------------------------------------------------

    def build_context(self, query: str) -> ContextBundle:
        if self.store is None or len(self.store) == 0:
            return ContextBundle(excerpts=[], budget=self.budget_tokens)
        ranked = self.store.retrieve(query, self.retrieve_k)
        return assemble_context(ranked, self.budget_tokens)

    def send(self, content: str, phase: str = "experiment_design") -> tuple[ChatMessage, list[PendingAction]]:
        """One exchange: context-injected provider call, transcript append,
        then gating of any proposed actions. Returns (reply, new actions)."""
        with self._lock:
            human = ChatMessage("human", content, self.clock(), phase)
            bundle = self.build_context(content)
            provider_messages = []
            if bundle.excerpts:
                provider_messages.append({"role": "system", "content": bundle.render()})
            provider_messages += [
                {"role": m.role, "content": m.content} for m in self.messages
            ]
            provider_messages.append({"role": "human", "content": content})

            reply_text = None
            last_error: Exception | None = None
            for attempt in range(3):  # first try + 2 retries
                try:
                    reply_text = self.provider.complete(provider_messages)
                    break
                except Exception as exc:  # noqa: BLE001 - provider boundary
                    last_error = exc
                    if attempt < 2:
                        self.sleep(0.2 * 2**attempt)
            if reply_text is None:
                self._record_message(human)
                self._write_line("system", f"provider error: {last_error}", phase)
                raise ProviderError(f"provider unreachable after retries: {last_error}")

            self._record_message(human)
            reply = ChatMessage("assistant", reply_text, self.clock(), phase)
            self._record_message(reply)

            proposals, problems = parse_actions(reply_text)
            for problem in problems:
                self._write_line("system", f"action parse: {problem}", phase)
            new_actions = [self._propose(p["kind"], p["payload"], phase) for p in proposals]
            return reply, new_actions

    # -- actions ---------------------------------------------------------

    def _propose(self, kind: str, payload: dict, phase: str) -> PendingAction:
        self._counter += 1
        action = PendingAction(
            action_id=f"act-{self._counter:04d}", kind=kind, payload=payload, phase=phase
        )
        self.actions[action.action_id] = action
        self._record_event(
            {"event": "proposed", "action": action.to_dict()}, phase,
            f"action {action.action_id} proposed ({kind})",
        )
        disposition = gate(action, self.policy)
        if disposition == "rejected":
            action.state = "rejected"
            action.note = "autonomy level 0 (manual): proposal recorded as advisory only"
            self._record_event(
                {"event": "rejected", "action_id": action.action_id, "note": action.note}, phase
            )
        elif disposition == "pending":
            pass  # waits for an explicit human decision
        elif disposition == "execute_and_flag":
            self._execute(action, flag_for_review=True)
        else:
            self._execute(action, flag_for_review=False)
        return action

    def propose_action(self, kind: str, payload: dict, phase: str) -> PendingAction:
        """Programmatic proposal path (used by tests and the audit suite)."""
        with self._lock:
            return self._propose(kind, payload, phase)

    def approve(self, action_id: str) -> PendingAction:
        with self._lock:
            action = self._get_action(action_id)
            if action.state != "pending":
                raise StateError(
                    f"cannot approve action {action_id} in state {action.state!r}"
                )
            action.state = "approved"
            self._record_event({"event": "approved", "action_id": action_id}, action.phase)
            self._execute(action, flag_for_review=False)
            return action

    def reject(self, action_id: str, reason: str = "") -> PendingAction:
        with self._lock:
            action = self._get_action(action_id)
            if action.state != "pending":
                raise StateError(
                    f"cannot reject action {action_id} in state {action.state!r}"
                )
            action.state = "rejected"
            action.note = reason or None
            self._record_event(
                {"event": "rejected", "action_id": action_id, "note": action.note}, action.phase
            )
            return action

    def _get_action(self, action_id: str) -> PendingAction:
        if action_id not in self.actions:
            raise StateError(f"unknown action {action_id!r}")
        return self.actions[action_id]

    def _execute(self, action: PendingAction, flag_for_review: bool) -> None:
        try:
            if self.executor is None:
                raise StateError("no executor configured for this session")
            ref = self.executor(action)
        except Exception as exc:  # noqa: BLE001 - captured into the action
            action.state = "failed"
            action.error = str(exc)
            self._record_event(
                {"event": "failed", "action_id": action.action_id, "error": action.error},
                action.phase,
            )
            return
        action.result_ref = ref
        action.state = "flagged_for_review" if flag_for_review else "executed"
        for value in (ref or {}).values():
            if isinstance(value, str):
                self.artifact_ids.append(value)
        event = {
            "event": "executed",
            "action_id": action.action_id,
            "result_ref": ref,
            "flagged": flag_for_review,
        }
        self._record_event(event, action.phase, f"action {action.action_id} executed")
        if flag_for_review:
            self._record_event(
                {"event": "flagged", "action_id": action.action_id}, action.phase
            )

    def state_snapshot(self) -> dict:
        return {
            "session_id": self.session_id,
            "policy": self.policy.to_dict(),
            "messages": [
                {"role": m.role, "content": m.content, "phase": m.phase} for m in self.messages
            ],
            "actions": {aid: a.to_dict() for aid, a in sorted(self.actions.items())},
            "artifact_ids": list(self.artifact_ids),
        }


def replay_transcript(path: str | Path) -> dict:
    """Reconstruct the session state purely from its transcript file."""
    messages: list[dict] = []
    actions: dict[str, dict] = {}
    policy = AutonomyPolicy.default().to_dict()
    artifact_ids: list[str] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        if not raw.strip():
            continue
        line = json.loads(raw)
        event = line.get("action_event")
        if event is None:
            if line["role"] in ("human", "assistant"):
                messages.append(
                    {"role": line["role"], "content": line["content"], "phase": line["phase"]}
                )
            continue
        name = event["event"]
        if name == "policy_set":
            policy = event["policy"]
        elif name == "proposed":
            action = dict(event["action"])
            actions[action["action_id"]] = action
        elif name == "approved":
            actions[event["action_id"]]["state"] = "approved"
        elif name == "rejected":
            actions[event["action_id"]]["state"] = "rejected"
            actions[event["action_id"]]["note"] = event.get("note")
        elif name == "executed":
            a = actions[event["action_id"]]
            a["state"] = "flagged_for_review" if event.get("flagged") else "executed"
            a["result_ref"] = event.get("result_ref")
            for value in (event.get("result_ref") or {}).values():
                if isinstance(value, str):
                    artifact_ids.append(value)
        elif name == "failed":
            a = actions[event["action_id"]]
            a["state"] = "failed"
            a["error"] = event.get("error")
        elif name == "flagged":
            pass  # state already set by the executed event
    return {
        "policy": policy,
        "messages": messages,
        "actions": actions,
        "artifact_ids": artifact_ids,
    }
