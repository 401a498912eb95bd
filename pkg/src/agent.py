"""
Peer node: detects the skills a task needs, acquires missing ones from their
owners, executes owned skills and serves skill requests from other agents.
"""
import copy
import re
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType
from typing import Callable, Dict, FrozenSet, Iterable, Mapping, Optional

from .classifier import (
    MessageClassifier,
    RequestComposer,
    classify_message,
    compose_skill_request,
)
from .costs import CostLedger, task_cost
from .detection import SkillDetector, detect_skills
from .errors import (
    AcquisitionError,
    FrameDecodeError,
    FrameTooLargeError,
    IntegrationError,
    NotExecutableError,
    NotOwnedError,
    RemoteCallError,
    SkillConflictError,
    SkillFlowError,
    SkillUnavailableError,
    StartupError,
    TransportError,
    TransportTimeoutError,
)
from .models import (
    AgentId,
    BodyKind,
    CostProfile,
    MessageClass,
    Mode,
    Scenario,
    SkillDescriptor,
)
from .protocol import (
    Ack,
    FrameDecoder,
    Message,
    ProtocolError,
    SkillRequest,
    SkillTransfer,
    TaskText,
    encode_frame,
)
from .register import SkillRegister
from .transport import Connection, TcpTransport, Transport
from .utils import get_logger

logger = get_logger(__name__)

DEFAULT_ACQUISITION_TIMEOUT = 10.0
DEFAULT_SERVE_GRACE = 5.0

_QUOTED_NAME_RE = re.compile(r"['`\"]([A-Za-z_]\w*)['`\"]")
_DEF_NAME_RE = re.compile(r"\bdef\s+([A-Za-z_]\w*)\s*\(")


@dataclass
class AgentCounters:
    messages_sent: int = 0
    messages_received: int = 0
    skills_acquired: int = 0
    skills_served: int = 0
    remote_exchanges: int = 0
    local_executions: int = 0


@dataclass(frozen=True)
class AgentSnapshot:
    id: AgentId
    owned_skills: Mapping[str, SkillDescriptor]
    register: SkillRegister
    counters: AgentCounters
    ledger: CostLedger


@dataclass(frozen=True)
class Integration:
    skill: str
    executable: bool
    new: bool
    warning: Optional[str] = None


@dataclass
class TaskOutcome:
    prompt: str
    skills: FrozenSet[str]
    results: Dict[str, str] = field(default_factory=dict)

    def reply(self) -> str:
        if not self.skills:
            return f"No skills needed for: {self.prompt}"
        return "; ".join(f"{name}: {self.results[name]}" for name in sorted(self.results))


@dataclass
class Session:
    """Per-connection state: skills transferred and awaiting an ack."""

    pending: Dict[str, Optional[AgentId]] = field(default_factory=dict)


def remote_query_text(skill: str) -> str:
    return f"Please run the skill '{skill}' and reply with the result."


class Agent:
    def __init__(
        self,
        agent_id: AgentId,
        owned: Iterable[SkillDescriptor] = (),
        register: Optional[SkillRegister] = None,
        peers: Optional[Mapping[str, AgentId]] = None,
        detector: Optional[SkillDetector] = None,
        classifier: Optional[MessageClassifier] = None,
        composer: Optional[RequestComposer] = None,
        transport: Optional[Transport] = None,
        app_handler: Optional[Callable[[str], str]] = None,
        cost_profiles: Optional[Mapping[str, CostProfile]] = None,
        scenario: Scenario = Scenario.SKILLFLOW,
        acquisition_timeout: float = DEFAULT_ACQUISITION_TIMEOUT,
        register_path: Optional[Path] = None,
    ) -> None:
        self.id = agent_id
        self.register = register if register is not None else SkillRegister()
        self.peers: Dict[str, AgentId] = dict(peers or {})
        self.detector = detector
        self.classifier = classifier
        self.composer = composer
        self.transport = transport
        self.app_handler = app_handler
        self.cost_profiles = dict(cost_profiles or {})
        self.scenario = Scenario(scenario)
        self.acquisition_timeout = acquisition_timeout
        self.register_path = Path(register_path) if register_path else None
        self.counters = AgentCounters()
        self.ledger = CostLedger()
        self._owned: Mapping[str, SkillDescriptor] = MappingProxyType({})
        # Single writer for owned skills, register, counters and ledger.
        self._lock = threading.RLock()
        for descriptor in owned:
            self._store(descriptor)

    def __repr__(self) -> str:
        return f"Agent({self.id.id!r}, owned={sorted(self._owned)})"

    # ------------------------------------------------------------------
    # State
    # ------------------------------------------------------------------
    def _store(self, descriptor: SkillDescriptor) -> None:
        with self._lock:
            self.register.record(
                descriptor.name,
                descriptor.description,
                self.id.id,
                body_digest=descriptor.digest,
                body_kind=descriptor.body_kind,
            )
            self._owned = MappingProxyType({**self._owned, descriptor.name: descriptor})

    def _count(self, **deltas: int) -> None:
        with self._lock:
            for name, delta in deltas.items():
                setattr(self.counters, name, getattr(self.counters, name) + delta)

    @property
    def owned_skills(self) -> Mapping[str, SkillDescriptor]:
        return self._owned

    def owns(self, skill: str) -> bool:
        return skill in self._owned

    def snapshot(self) -> AgentSnapshot:
        with self._lock:
            return AgentSnapshot(
                id=self.id,
                owned_skills=MappingProxyType(dict(self._owned)),
                register=self.register.copy(),
                counters=replace(self.counters),
                ledger=copy.deepcopy(self.ledger),
            )

    def save_register(self) -> None:
        if self.register_path is None:
            return
        with self._lock:
            self.register.save(self.register_path)

    def new_session(self) -> Session:
        return Session()

    # ------------------------------------------------------------------
    # Skills
    # ------------------------------------------------------------------
    def integrate_skill(self, descriptor: SkillDescriptor) -> Integration:
        with self._lock:
            existing = self._owned.get(descriptor.name)
            if existing is not None:
                if existing.digest != descriptor.digest or existing.body_kind != descriptor.body_kind:
                    raise SkillConflictError(
                        f"skill '{descriptor.name}' already owned with a different body"
                    )
                return Integration(descriptor.name, existing.executable, new=False)
            self._store(descriptor)
            self.counters.skills_acquired += 1
        warning = None
        if not descriptor.executable:
            warning = f"skill '{descriptor.name}' stored as opaque text and will not be executed"
            logger.warning(warning)
        logger.info("%s integrated skill %s | %s", self.id.id, descriptor.name, self.counters)
        return Integration(descriptor.name, descriptor.executable, new=True, warning=warning)

    def execute_skill(self, skill: str) -> str:
        descriptor = self._owned.get(skill)
        if descriptor is None:
            raise NotOwnedError(f"{self.id.id} does not own skill '{skill}'")
        if not descriptor.executable:
            raise NotExecutableError(f"skill '{skill}' has an opaque body and cannot be executed")
        self._count(local_executions=1)
        return descriptor.body

    def _owner_of(self, skill: str) -> AgentId:
        with self._lock:
            owners = [o for o in self.register.lookup(skill) if o != self.id.id]
        if not owners:
            raise SkillUnavailableError(skill)
        owner = owners[0]
        peer = self.peers.get(owner)
        if peer is None:
            raise AcquisitionError(skill, owner, "no known address for owner")
        return peer

    def _transport(self, transport: Optional[Transport]) -> Transport:
        chosen = transport or self.transport
        if chosen is None:
            raise TransportError(f"{self.id.id} has no transport configured")
        return chosen

    def acquire_skill(self, skill: str, transport: Optional[Transport] = None) -> Integration:
        peer = self._owner_of(skill)
        with self._lock:
            register = self.register.copy()
        text = compose_skill_request(skill, peer.id, register, self.composer)
        try:
            with self._transport(transport).connect(peer, self.acquisition_timeout) as conn:
                self._count(messages_sent=1)
                reply = conn.request(SkillRequest(skill=skill, requester=self.id, text=text), self.acquisition_timeout)
                self._count(messages_received=1, remote_exchanges=1)
                if isinstance(reply, ProtocolError):
                    raise AcquisitionError(skill, peer.id, f"{reply.code}: {reply.detail}")
                if not isinstance(reply, SkillTransfer) or reply.descriptor.name != skill:
                    raise IntegrationError(f"expected a transfer of '{skill}' from {peer.id}, got {reply!r}")
                integration = self.integrate_skill(reply.descriptor)
                self._send_ack(conn, skill)
        except TransportTimeoutError as e:
            raise AcquisitionError(skill, peer.id, f"timed out: {e}") from e
        except TransportError as e:
            raise AcquisitionError(skill, peer.id, str(e)) from e
        return integration

    def _send_ack(self, conn: Connection, skill: str) -> None:
        # The skill is already integrated; a lost ack only leaves the provider's register behind.
        self._count(messages_sent=1)
        try:
            conn.request(Ack(ref=skill), self.acquisition_timeout)
        except TransportError as e:
            logger.warning("%s: ack for %s to %s failed: %s", self.id.id, skill, conn.peer.id, e)
            return
        self._count(messages_received=1)

    def ensure_skills(self, skills: Iterable[str], transport: Optional[Transport] = None) -> None:
        for skill in sorted(skills):
            if not self.owns(skill):
                self.acquire_skill(skill, transport)

    def skill_flow(self, prompt: str, transport: Optional[Transport] = None) -> FrozenSet[str]:
        with self._lock:
            register = self.register.copy()
        detected = detect_skills(prompt, register, self.detector)
        self.ensure_skills(detected, transport)
        return detected

    def query_remote(self, skill: str, transport: Optional[Transport] = None) -> str:
        """Have an owner execute ``skill`` and return its output (the baseline path)."""
        peer = self._owner_of(skill)
        try:
            with self._transport(transport).connect(peer, self.acquisition_timeout) as conn:
                self._count(messages_sent=1)
                reply = conn.request(TaskText(text=remote_query_text(skill)), self.acquisition_timeout)
                self._count(messages_received=1, remote_exchanges=1)
        except TransportError as e:
            raise RemoteCallError(skill, peer.id, str(e)) from e
        if not isinstance(reply, TaskText):
            raise RemoteCallError(skill, peer.id, f"unexpected reply {reply!r}")
        prefix = f"{skill}: "
        return reply.text[len(prefix):] if reply.text.startswith(prefix) else reply.text

    def _record_cost(self, skill: str, mode: Mode, owned_before: bool) -> None:
        profile = self.cost_profiles.get(skill)
        if profile is None:
            return
        scenario = Scenario.BASELINE if mode is Mode.BASELINE else self.scenario
        requestor, provider, acquires = task_cost(scenario, profile, owned_before)
        with self._lock:
            self.ledger.append(skill, requestor, provider, acquires)

    def perform_task(self, prompt: str, mode: Mode = Mode.SKILLFLOW, transport: Optional[Transport] = None) -> TaskOutcome:
        mode = Mode(mode)
        with self._lock:
            register = self.register.copy()
        detected = detect_skills(prompt, register, self.detector)
        owned_before = {skill: self.owns(skill) for skill in detected}
        outcome = TaskOutcome(prompt=prompt, skills=detected)
        if mode is Mode.SKILLFLOW:
            self.ensure_skills(detected, transport)
        for skill in sorted(detected):
            if mode is Mode.SKILLFLOW or self.owns(skill):
                outcome.results[skill] = self.execute_skill(skill)
            else:
                outcome.results[skill] = self.query_remote(skill, transport)
            self._record_cost(skill, mode, owned_before[skill])
        return outcome

    # ------------------------------------------------------------------
    # Incoming traffic
    # ------------------------------------------------------------------
    def respond(self, text: str) -> str:
        """Default application handler for ordinary task text."""
        named = [skill for skill in self._owned if f"'{skill}'" in text]
        if named:
            return "; ".join(f"{skill}: {self.execute_skill(skill)}" for skill in sorted(named))
        return self.perform_task(text).reply()

    def _transfer(self, skill: str, requester: Optional[AgentId], session: Session) -> Message:
        descriptor = self._owned.get(skill)
        if descriptor is None:
            return ProtocolError(code="not_owner", detail=f"{self.id.id} does not own '{skill}'")
        session.pending[skill] = requester
        if requester is not None:
            with self._lock:
                self.peers.setdefault(requester.id, requester)
        self._count(skills_served=1)
        logger.info("%s served skill %s to %s | %s", self.id.id, skill, requester or "?", self.counters)
        return SkillTransfer(descriptor=descriptor)

    def _integrate_text(self, text: str) -> Message:
        match = _DEF_NAME_RE.search(text) or _QUOTED_NAME_RE.search(text)
        if match is None:
            return ProtocolError(code="bad_code", detail="could not find a skill name in the code")
        name = match.group(1)
        descriptor = SkillDescriptor(
            name=name, description="received as text", body_kind=BodyKind.OPAQUE_TEXT, body=text
        )
        self.integrate_skill(descriptor)
        return Ack(ref=name)

    def _handle_text(self, text: str, session: Session) -> Message:
        with self._lock:
            known = self.register.known_skills()
        label = classify_message(text, known, self.classifier).label
        if label is MessageClass.ASKING_FOR_CODE:
            wanted = [name for name, _ in known if name in text]
            owned = [name for name in wanted if self.owns(name)]
            if not wanted:
                return ProtocolError(code="not_owner", detail="no registered skill named in the request")
            return self._transfer((owned or wanted)[0], None, session)
        if label is MessageClass.INCOMING_CODE:
            return self._integrate_text(text)
        handler = self.app_handler or self.respond
        return TaskText(text=handler(text))

    def handle_incoming(self, message: Message, session: Optional[Session] = None) -> Optional[Message]:
        """Reply to one inbound message; errors become ProtocolError replies."""
        session = session or Session()
        self._count(messages_received=1)
        logger.debug("%s received %s", self.id.id, type(message).__name__)
        try:
            reply = self._dispatch(message, session)
        except SkillFlowError as e:
            logger.warning("%s failed to handle %s: %s", self.id.id, type(message).__name__, e)
            reply = ProtocolError(code=type(e).__name__, detail=str(e))
        if reply is not None:
            self._count(messages_sent=1)
        return reply

    def _dispatch(self, message: Message, session: Session) -> Optional[Message]:
        if isinstance(message, SkillRequest):
            return self._transfer(message.skill, message.requester, session)
        if isinstance(message, Ack):
            requester = session.pending.pop(message.ref, None)
            if requester is not None:
                with self._lock:
                    self.register.record(message.ref, self.register.description(message.ref), requester.id)
            return Ack(ref=message.ref)
        if isinstance(message, TaskText):
            return self._handle_text(message.text, session)
        if isinstance(message, SkillTransfer):
            self.integrate_skill(message.descriptor)
            return Ack(ref=message.descriptor.name)
        if isinstance(message, ProtocolError):
            logger.warning("%s received error %s: %s", self.id.id, message.code, message.detail)
            return None
        return ProtocolError(code="bad_frame", detail=f"unsupported message {type(message).__name__}")

    # ------------------------------------------------------------------
    # Serving
    # ------------------------------------------------------------------
    def serve(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        status_port: Optional[int] = None,
        grace: float = DEFAULT_SERVE_GRACE,
    ) -> "NodeHandle":
        handle = NodeHandle(self, host, port, grace)
        if self.transport is None:
            self.transport = TcpTransport()
        handle.start(status_port=status_port)
        return handle


class _NodeServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True
    block_on_close = False
    request_queue_size = 128


class NodeHandle:
    """A running node: ``stop``, ``join`` and ``snapshot``."""

    def __init__(self, agent: Agent, host: str, port: int, grace: float = DEFAULT_SERVE_GRACE) -> None:
        self.agent = agent
        self.grace = grace
        self._stopping = threading.Event()
        self._active = 0
        self._idle = threading.Condition()
        self._thread: Optional[threading.Thread] = None
        self._status = None
        try:
            self._server = _NodeServer((host, port), self._handler_class())
        except OSError as e:
            raise StartupError(f"cannot bind {host}:{port}: {e}") from None
        bound_host, bound_port = self._server.server_address[:2]
        self.address = (bound_host, bound_port)
        agent.id = replace(agent.id, host=bound_host, port=bound_port)

    def _handler_class(self):
        node = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self) -> None:
                node._serve_connection(self.request)

        return Handler

    def start(self, status_port: Optional[int] = None) -> None:
        self._thread = threading.Thread(
            target=self._server.serve_forever, kwargs={"poll_interval": 0.1}, daemon=True
        )
        self._thread.start()
        if status_port is not None:
            from .api import StatusServer

            self._status = StatusServer(self.agent, self.address[0], status_port)
            self._status.start()
        logger.info("%s listening on %s:%d", self.agent.id.id, *self.address)

    def _serve_connection(self, conn: socket.socket) -> None:
        with self._idle:
            self._active += 1
        session = self.agent.new_session()
        decoder = FrameDecoder()
        conn.settimeout(0.2)
        try:
            while True:
                try:
                    message = decoder.next_message()
                except FrameTooLargeError as e:
                    self._send(conn, ProtocolError(code="bad_frame", detail=str(e)))
                    return
                except FrameDecodeError as e:
                    self._send(conn, ProtocolError(code="bad_frame", detail=str(e)))
                    continue
                if message is not None:
                    reply = self.agent.handle_incoming(message, session)
                    if reply is not None:
                        self._send(conn, reply)
                    continue
                if self._stopping.is_set() and decoder.pending == 0:
                    return
                try:
                    chunk = conn.recv(65536)
                except socket.timeout:
                    continue
                if not chunk:
                    return
                decoder.feed(chunk)
        except OSError as e:
            logger.warning("%s dropped a connection: %s", self.agent.id.id, e)
        finally:
            with self._idle:
                self._active -= 1
                self._idle.notify_all()

    @staticmethod
    def _send(conn: socket.socket, message: Message) -> None:
        conn.sendall(encode_frame(message))

    def snapshot(self) -> AgentSnapshot:
        return self.agent.snapshot()

    @property
    def active_connections(self) -> int:
        with self._idle:
            return self._active

    def stop(self, grace: Optional[float] = None) -> None:
        if self._stopping.is_set():
            return
        self._stopping.set()
        self._server.shutdown()
        self._server.server_close()
        deadline = time.monotonic() + (self.grace if grace is None else grace)
        with self._idle:
            while self._active and time.monotonic() < deadline:
                self._idle.wait(timeout=max(0.0, deadline - time.monotonic()))
            if self._active:
                logger.warning("%s stopped with %d connections still open", self.agent.id.id, self._active)
        if self._status is not None:
            self._status.stop()
        self.agent.save_register()
        logger.info("%s stopped | %s", self.agent.id.id, self.agent.counters)

    def join(self, timeout: Optional[float] = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)

    def __enter__(self) -> "NodeHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()
