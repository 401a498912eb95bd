"""
Sectioned INI configuration validated into pydantic models.

Values come from the optional ``--config`` file and are overridden by
command-line flags. Relative paths resolve against the config file's
directory (the working directory when there is no file).
"""
import configparser
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Type, TypeVar

from pydantic import BaseModel, ValidationError, field_validator, model_validator

from .bench import DEFAULT_SKILLS_PATH, DEFAULT_TEMPLATES_PATH, LatencyModel
from .chat import KEY_ENV, MODEL_ENV, URL_ENV
from .errors import ConfigError
from .models import AgentId, CostParams, Scenario

SECTIONS = ("sim", "node", "bench", "adapter")

Triple = Tuple[float, float, float]
M = TypeVar("M", bound=BaseModel)


def split_list(value: Any) -> List[str]:
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return list(value)


def _triple(value: Any) -> Any:
    if value is None:
        return None
    parts = split_list(value)
    if len(parts) != 3:
        raise ValueError(f"expected three comma-separated numbers, got {value!r}")
    return tuple(float(p) for p in parts)


class SimSettings(BaseModel):
    mu: Optional[Triple] = None
    sigma: Triple = (10.0, 10.0, 10.0)
    delta: Triple = (0.0, 1.0, 1.0)
    num_skills: int = 20
    num_tasks: int = 400
    seeds: int = 10
    seed: int = 0
    scenario: Scenario = Scenario.SKILLFLOW_PAID
    simplex_sum: float = 20
    checkpoints: List[int] = [20, 100, 400]
    mu_b: float = 4.0
    ratios: List[float] = [0.25, 0.5, 1.0, 2.0, 4.0]
    ratio_total: float = 8.0
    workers: int = 1

    @field_validator("mu", "sigma", "delta", mode="before")
    @classmethod
    def _triples(cls, value: Any) -> Any:
        return _triple(value)

    @field_validator("checkpoints", "ratios", mode="before")
    @classmethod
    def _lists(cls, value: Any) -> Any:
        return split_list(value)

    @field_validator("num_skills", "num_tasks", "seeds", "workers")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be >= 1")
        return value

    @property
    def seed_list(self) -> List[int]:
        return list(range(self.seed, self.seed + self.seeds))

    def cost_params(self) -> CostParams:
        if self.mu is None:
            raise ConfigError("sim: mu is required (--mu B,E,C)")
        return CostParams.from_triples(self.mu, self.sigma, self.delta)


class NodeSettings(BaseModel):
    id: str = "CalendarAssistant"
    listen: str = "127.0.0.1:0"
    register_path: Optional[Path] = None
    catalog: Path = DEFAULT_SKILLS_PATH
    peers: Dict[str, str] = {}
    status_port: Optional[int] = None
    acquisition_timeout: float = 10.0
    serve_grace: float = 5.0

    @field_validator("peers", mode="before")
    @classmethod
    def _peers(cls, value: Any) -> Any:
        if not isinstance(value, str):
            return value
        peers = {}
        for item in split_list(value):
            name, sep, address = item.partition("=")
            if not sep:
                raise ValueError(f"peer entries look like id=host:port, got {item!r}")
            peers[name.strip()] = address.strip()
        return peers

    @model_validator(mode="after")
    def _addresses(self) -> "NodeSettings":
        self.agent_id()
        self.peer_ids()
        return self

    def agent_id(self) -> AgentId:
        return AgentId.parse(self.id, self.listen)

    def peer_ids(self) -> Dict[str, AgentId]:
        return {name: AgentId.parse(name, address) for name, address in self.peers.items()}


class BenchSettings(BaseModel):
    remote_ms: float = 200.0
    local_ms: float = 5.0
    negotiation_ms: float = 20.0
    runs: int = 20
    tasks: int = 20
    seed: int = 0
    workers: int = 1
    templates: Path = DEFAULT_TEMPLATES_PATH
    catalog: Path = DEFAULT_SKILLS_PATH
    wall_clock: bool = False

    @field_validator("runs", "tasks", "workers")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be >= 1")
        return value

    def latency(self) -> LatencyModel:
        return LatencyModel(self.remote_ms, self.local_ms, self.negotiation_ms)


class AdapterSettings(BaseModel):
    url: Optional[str] = None
    key: Optional[str] = None
    model: str = "gpt-4o-mini"
    timeout: float = 30.0

    @property
    def enabled(self) -> bool:
        return bool(self.url)


_PATH_FIELDS = {"node": ("register_path", "catalog"), "bench": ("templates", "catalog")}
_MODELS: Dict[str, Type[BaseModel]] = {
    "sim": SimSettings,
    "node": NodeSettings,
    "bench": BenchSettings,
    "adapter": AdapterSettings,
}


class ConfigFile:
    """Raw sections of an INI file plus the directory paths resolve against."""

    def __init__(self, sections: Optional[Mapping[str, Mapping[str, str]]] = None, base_dir: Optional[Path] = None):
        self.sections = {name: dict(values) for name, values in (sections or {}).items()}
        self.base_dir = base_dir or Path.cwd()

    @classmethod
    def load(cls, path: Optional[Path | str]) -> "ConfigFile":
        if path is None:
            return cls()
        source = Path(path)
        parser = configparser.ConfigParser()
        try:
            with open(source, "r", encoding="utf-8") as f:
                parser.read_file(f)
        except OSError as e:
            raise ConfigError(f"cannot read config file {source}: {e}") from None
        except configparser.Error as e:
            raise ConfigError(f"invalid config file {source}: {e}") from None
        unknown = set(parser.sections()) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)} in {source}")
        return cls({name: dict(parser[name]) for name in parser.sections()}, source.resolve().parent)

    def _resolve(self, section: str, values: Dict[str, Any]) -> Dict[str, Any]:
        for key in _PATH_FIELDS.get(section, ()):
            value = values.get(key)
            if value == "":
                values[key] = None
            elif value is not None and not Path(value).is_absolute():
                values[key] = self.base_dir / Path(value)
        return values

    def section(self, name: str, overrides: Optional[Mapping[str, Any]] = None) -> Any:
        """Validated settings for ``name``: file values, then environment (adapter), then flags."""
        values: Dict[str, Any] = self._resolve(name, dict(self.sections.get(name, {})))
        if name == "adapter":
            env = {"url": os.environ.get(URL_ENV), "key": os.environ.get(KEY_ENV), "model": os.environ.get(MODEL_ENV)}
            values.update({k: v for k, v in env.items() if v})
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return build_settings(_MODELS[name], values, name)


def build_settings(model: Type[M], values: Mapping[str, Any], section: str = "") -> M:
    try:
        return model(**values)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or section}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"invalid [{section}] settings: {problems}") from None
