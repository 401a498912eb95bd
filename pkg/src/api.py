"""Read-only FastAPI status endpoint for a running agent node."""
import threading
from typing import Dict, List, Optional

import uvicorn
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .agent import Agent
from .utils import get_logger

logger = get_logger(__name__)


class SkillInfo(BaseModel):
    name: str
    description: str
    body_kind: str
    executable: bool


class RegisterRow(BaseModel):
    skill: str
    description: str
    owners: List[str]


class SnapshotResponse(BaseModel):
    id: str
    address: str
    owned_skills: List[SkillInfo]
    counters: Dict[str, int]
    tasks_recorded: int


def create_app(agent: Agent) -> FastAPI:
    app = FastAPI(
        title="SkillFlow Node Status",
        description="Owned skills, register and counters of one agent",
        version="1.0.0",
    )

    @app.get("/")
    def root():
        return {
            "name": "SkillFlow Node Status",
            "agent": agent.id.id,
            "endpoints": {
                "/health": "GET - Health check",
                "/snapshot": "GET - Owned skills and counters",
                "/register": "GET - Local skill register",
                "/register/{skill}": "GET - One register entry",
            },
        }

    @app.get("/health")
    def health():
        return {"status": "healthy", "agent": agent.id.id}

    @app.get("/snapshot", response_model=SnapshotResponse)
    def snapshot():
        snap = agent.snapshot()
        return SnapshotResponse(
            id=snap.id.id,
            address=snap.id.address,
            owned_skills=[
                SkillInfo(
                    name=d.name,
                    description=d.description,
                    body_kind=d.body_kind.value,
                    executable=d.executable,
                )
                for d in sorted(snap.owned_skills.values(), key=lambda d: d.name)
            ],
            counters=vars(snap.counters),
            tasks_recorded=len(snap.ledger),
        )

    @app.get("/register", response_model=List[RegisterRow])
    def register():
        snap = agent.snapshot()
        return [
            RegisterRow(skill=name, description=entry.description, owners=entry.owners)
            for name, entry in sorted(snap.register.entries.items())
        ]

    @app.get("/register/{skill}", response_model=RegisterRow)
    def register_entry(skill: str):
        snap = agent.snapshot()
        entry = snap.register.entries.get(skill)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"skill '{skill}' is not in the register")
        return RegisterRow(skill=skill, description=entry.description, owners=entry.owners)

    return app


class StatusServer:
    """Runs ``create_app(agent)`` under uvicorn on a background thread."""

    def __init__(self, agent: Agent, host: str, port: int) -> None:
        config = uvicorn.Config(create_app(agent), host=host, port=port, log_level="warning")
        self._server = uvicorn.Server(config)
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self._thread.start()
        logger.info("Status API on %s:%d", self._server.config.host, self._server.config.port)

    def stop(self, timeout: float = 5.0) -> None:
        self._server.should_exit = True
        if self._thread is not None:
            self._thread.join(timeout)
