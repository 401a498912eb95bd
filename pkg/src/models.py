import hashlib
import re
from dataclasses import dataclass
from enum import Enum

from .errors import InvalidArgumentError, InvalidSkillNameError

_SKILL_NAME_RE = re.compile(r"^[^\s\x00-\x1f\x7f]+$")


def validate_skill_name(name: str) -> str:
    if not isinstance(name, str) or not _SKILL_NAME_RE.match(name):
        raise InvalidSkillNameError(f"invalid skill name: {name!r}")
    return name


def body_digest(body: str) -> str:
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


class BodyKind(str, Enum):
    CONST_STRING = "const_string"
    OPAQUE_TEXT = "opaque_text"


class Scenario(str, Enum):
    BASELINE = "baseline"
    SKILLFLOW = "skillflow"
    SKILLFLOW_PAID = "skillflow_paid"


class Perspective(str, Enum):
    REQUESTOR = "requestor"
    SYSTEM = "system"


class Mode(str, Enum):
    BASELINE = "baseline"
    SKILLFLOW = "skillflow"


class MessageClass(str, Enum):
    ASKING_FOR_CODE = "asking_for_code"
    INCOMING_CODE = "incoming_code"
    CONTINUE = "continue"


@dataclass(frozen=True)
class AgentId:
    id: str
    host: str = "127.0.0.1"
    port: int = 0

    def __post_init__(self) -> None:
        if not self.id or any(c.isspace() or c == "," for c in self.id):
            raise InvalidArgumentError(f"invalid agent id: {self.id!r}")
        if not self.host or not 0 <= self.port <= 65535:
            raise InvalidArgumentError(f"invalid address {self.host}:{self.port}")

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    @classmethod
    def parse(cls, agent_id: str, address: str) -> "AgentId":
        host, sep, port = address.rpartition(":")
        if not sep or not port.isdigit():
            raise InvalidArgumentError(f"address must be host:port, got {address!r}")
        return cls(id=agent_id, host=host, port=int(port))

    def __str__(self) -> str:
        return self.id


@dataclass(frozen=True)
class SkillDescriptor:
    name: str
    description: str
    body_kind: BodyKind
    body: str

    def __post_init__(self) -> None:
        validate_skill_name(self.name)
        # Accept the wire spelling as well as the enum.
        object.__setattr__(self, "body_kind", BodyKind(self.body_kind))

    @property
    def digest(self) -> str:
        return body_digest(self.body)

    @property
    def executable(self) -> bool:
        return self.body_kind is BodyKind.CONST_STRING


@dataclass(frozen=True)
class CostProfile:
    buy: float
    exec: float
    comm: float


@dataclass(frozen=True)
class CostParams:
    mu_b: float
    mu_e: float
    mu_c: float
    sigma_b: float = 10.0
    sigma_e: float = 10.0
    sigma_c: float = 10.0
    delta_b: float = 0.0
    delta_e: float = 1.0
    delta_c: float = 1.0

    def __post_init__(self) -> None:
        if min(self.sigma_b, self.sigma_e, self.sigma_c) < 0:
            raise InvalidArgumentError("standard deviations must be >= 0")
        if min(self.delta_b, self.delta_e, self.delta_c) < 0:
            raise InvalidArgumentError("cost floors must be >= 0")

    @property
    def mus(self) -> tuple:
        return (self.mu_b, self.mu_e, self.mu_c)

    @classmethod
    def from_triples(cls, mus, sigmas=(10.0, 10.0, 10.0), deltas=(0.0, 1.0, 1.0)) -> "CostParams":
        return cls(*mus, *sigmas, *deltas)
