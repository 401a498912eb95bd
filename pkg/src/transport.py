"""Request/response connections between agents: real TCP and an in-process loopback."""
import socket
import threading
import time
from typing import TYPE_CHECKING, Callable, Dict, Iterable, Optional, Protocol, Set

from .errors import FrameDecodeError, TransportError, TransportTimeoutError
from .models import AgentId
from .protocol import FrameDecoder, Message, decode_frame, encode_frame
from .utils import get_logger

if TYPE_CHECKING:
    from .agent import Agent, Session

logger = get_logger(__name__)

RECV_CHUNK = 65536


class Connection(Protocol):
    peer: AgentId

    def request(self, message: Message, timeout: float) -> Message: ...

    def close(self) -> None: ...

    def __enter__(self) -> "Connection": ...

    def __exit__(self, *exc) -> None: ...


class Transport(Protocol):
    def connect(self, peer: AgentId, timeout: float) -> Connection: ...


class _ConnectionBase:
    peer: AgentId

    def __enter__(self):
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        pass


class TcpConnection(_ConnectionBase):
    def __init__(self, sock: socket.socket, peer: AgentId) -> None:
        self.sock = sock
        self.peer = peer
        self._decoder = FrameDecoder()

    def send(self, message: Message) -> None:
        try:
            self.sock.sendall(encode_frame(message))
        except socket.timeout:
            raise TransportTimeoutError(f"send to {self.peer.address} timed out") from None
        except OSError as e:
            raise TransportError(f"send to {self.peer.address} failed: {e}") from None

    def receive(self, timeout: float) -> Message:
        deadline = time.monotonic() + timeout
        while True:
            message = self._decoder.next_message()
            if message is not None:
                return message
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TransportTimeoutError(f"no reply from {self.peer.address} within {timeout}s")
            self.sock.settimeout(remaining)
            try:
                chunk = self.sock.recv(RECV_CHUNK)
            except socket.timeout:
                raise TransportTimeoutError(f"no reply from {self.peer.address} within {timeout}s") from None
            except OSError as e:
                raise TransportError(f"receive from {self.peer.address} failed: {e}") from None
            if not chunk:
                raise TransportError(f"{self.peer.address} closed the connection")
            self._decoder.feed(chunk)

    def request(self, message: Message, timeout: float) -> Message:
        self.send(message)
        return self.receive(timeout)

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class TcpTransport:
    def connect(self, peer: AgentId, timeout: float) -> TcpConnection:
        try:
            sock = socket.create_connection((peer.host, peer.port), timeout=timeout)
        except socket.timeout:
            raise TransportTimeoutError(f"connecting to {peer.address} timed out") from None
        except OSError as e:
            raise TransportError(f"cannot connect to {peer.id} at {peer.address}: {e}") from None
        return TcpConnection(sock, peer)


class LoopbackConnection(_ConnectionBase):
    """Routes frames straight into the target agent, through the real codec."""

    def __init__(self, transport: "LoopbackTransport", target: "Agent", peer: AgentId) -> None:
        self.transport = transport
        self.target = target
        self.peer = peer
        self.session = target.new_session()

    def request(self, message: Message, timeout: float) -> Message:
        self.transport.before_call(self.peer)
        try:
            inbound = decode_frame(encode_frame(message))
            reply = self.target.handle_incoming(inbound, self.session)
            if reply is None:
                raise TransportError(f"{self.peer.id} sent no reply")
            return decode_frame(encode_frame(reply))
        except FrameDecodeError as e:
            raise TransportError(f"loopback frame to {self.peer.id} failed: {e}") from None


class LoopbackTransport:
    """
    In-process transport with identical message semantics to TCP.

    ``latency`` seconds are slept before every request. ``offline`` peers
    refuse connections, and ``fault_schedule(peer, call_index)`` returning
    True makes that request fail as a dropped connection.
    """

    def __init__(
        self,
        agents: Iterable["Agent"] = (),
        latency: float = 0.0,
        offline: Iterable[str] = (),
        fault_schedule: Optional[Callable[[AgentId, int], bool]] = None,
    ) -> None:
        self._agents: Dict[str, "Agent"] = {}
        self.latency = latency
        self.offline: Set[str] = set(offline)
        self.fault_schedule = fault_schedule
        self.calls = 0
        self._lock = threading.Lock()
        for agent in agents:
            self.attach(agent)

    def attach(self, agent: "Agent") -> None:
        self._agents[agent.id.id] = agent

    def connect(self, peer: AgentId, timeout: float) -> LoopbackConnection:
        target = self._agents.get(peer.id)
        if target is None or peer.id in self.offline:
            raise TransportError(f"cannot connect to {peer.id}: peer offline")
        return LoopbackConnection(self, target, peer)

    def before_call(self, peer: AgentId) -> None:
        with self._lock:
            self.calls += 1
            index = self.calls
        if self.latency:
            time.sleep(self.latency)
        if peer.id in self.offline:
            raise TransportError(f"{peer.id} went offline")
        if self.fault_schedule and self.fault_schedule(peer, index):
            raise TransportError(f"connection to {peer.id} dropped (scheduled fault {index})")
