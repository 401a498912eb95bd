"""
Calendar-agent application benchmark.

Three agents are built from the skill catalog. A calendar assistant that
owns nothing works through template-generated tasks, either querying the
providers every time (baseline) or acquiring skills on first use
(skillflow). Elapsed time per task is modeled from the runtime's own
exchange counters and a latency model, so runs are reproducible.
"""
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from functools import partial
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .agent import Agent
from .costs import make_rng
from .errors import ConfigError, InvalidArgumentError, NegotiationFailedError, SkillFlowError
from .models import AgentId, BodyKind, Mode, SkillDescriptor
from .register import register_from_catalog
from .scheduling import Calendar, Event, TimeWindow, negotiate_schedule
from .stats import bh_fdr_adjust, mean_ci95, welch_t_test
from .transport import LoopbackTransport
from .utils import derive_seed, get_logger

logger = get_logger(__name__)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"
DEFAULT_SKILLS_PATH = CONFIG_DIR / "skills.json"
DEFAULT_TEMPLATES_PATH = CONFIG_DIR / "task_templates.json"

REQUESTOR_ID = "CalendarAssistant"
WEEK_START = datetime(2025, 1, 6)  # Monday
WORKDAY_HOURS = (9, 17)
WEEKDAYS = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday")
BUSY_BLOCKS_PER_DAY = 2
MEETING_LENGTH = timedelta(minutes=60)

BENCH_COLUMNS = ["run", "iteration", "mode", "elapsed_ms", "skills_learned_pct", "task_id"]
ANALYSIS_COLUMNS = ["iteration", "mean_baseline", "ci_baseline", "mean_skillflow", "ci_skillflow", "p", "q"]


# ----------------------------------------------------------------------
# Catalog and templates
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class AgentSpec:
    id: str
    skills: Tuple[SkillDescriptor, ...] = ()


def _read_json(path: Path | str, what: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read {what} file {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} file {path} is not valid JSON: {e}") from None


def load_catalog(path: Path | str = DEFAULT_SKILLS_PATH) -> List[AgentSpec]:
    data = _read_json(path, "skill catalog")
    specs: List[AgentSpec] = []
    seen: Dict[str, str] = {}
    try:
        for agent in data["agents"]:
            skills = []
            for skill in agent.get("skills", []):
                descriptor = SkillDescriptor(
                    name=skill["name"],
                    description=skill["description"],
                    body_kind=skill.get("body_kind", BodyKind.CONST_STRING),
                    body=skill["body"],
                )
                if descriptor.name in seen:
                    raise ConfigError(
                        f"skill '{descriptor.name}' listed for both {seen[descriptor.name]} and {agent['id']}"
                    )
                seen[descriptor.name] = agent["id"]
                skills.append(descriptor)
            specs.append(AgentSpec(id=agent["id"], skills=tuple(skills)))
    except (KeyError, TypeError) as e:
        raise ConfigError(f"skill catalog {path} is missing field {e}") from None
    except InvalidArgumentError as e:
        raise ConfigError(f"skill catalog {path}: {e}") from None
    if REQUESTOR_ID not in {s.id for s in specs}:
        raise ConfigError(f"skill catalog {path} has no {REQUESTOR_ID} agent")
    return specs


def catalog_skills(catalog: Sequence[AgentSpec]) -> Dict[str, str]:
    """Skill name -> initial owner id."""
    return {d.name: spec.id for spec in catalog for d in spec.skills}


@dataclass(frozen=True)
class TaskTemplate:
    text: str
    required_skills: FrozenSet[str]
    title: str = "Meeting"


@dataclass(frozen=True)
class TemplateSet:
    templates: Tuple[TaskTemplate, ...]
    slots: Dict[str, Tuple[str, ...]] = field(default_factory=dict)


def load_templates(
    path: Path | str = DEFAULT_TEMPLATES_PATH, catalog: Optional[Sequence[AgentSpec]] = None
) -> TemplateSet:
    data = _read_json(path, "task template")
    known = set(catalog_skills(catalog or load_catalog()))
    try:
        slots = {name: tuple(values) for name, values in data["slots"].items()}
        templates = tuple(
            TaskTemplate(
                text=t["text"],
                required_skills=frozenset(t["required_skills"]),
                title=t.get("title", "Meeting"),
            )
            for t in data["templates"]
        )
    except (KeyError, TypeError, AttributeError) as e:
        raise ConfigError(f"task templates {path} are missing field {e}") from None
    if not templates:
        raise ConfigError(f"task templates {path} define no templates")
    for template in templates:
        unknown = template.required_skills - known
        if unknown:
            raise ConfigError(f"template {template.text!r} references unknown skills {sorted(unknown)}")
        if not template.required_skills:
            raise ConfigError(f"template {template.text!r} requires no skills")
    if "day" in slots and not set(slots["day"]) <= set(WEEKDAYS):
        raise ConfigError(f"day slot values must be weekdays, got {slots['day']}")
    return TemplateSet(templates=templates, slots=slots)


# ----------------------------------------------------------------------
# Tasks
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class CalendarAction:
    """Put ``title`` in the calendar somewhere inside [start, end)."""

    title: str
    start: datetime
    end: datetime
    counterpart: Optional[str] = None
    action: str = "add_event"

    @property
    def window(self) -> TimeWindow:
        return TimeWindow(self.start, self.end)


@dataclass(frozen=True)
class BenchTask:
    id: int
    prompt: str
    required_skills: FrozenSet[str]
    calendar_actions: Tuple[CalendarAction, ...]


def _day_window(day: str) -> Tuple[datetime, datetime]:
    date = WEEK_START + timedelta(days=WEEKDAYS.index(day))
    return date.replace(hour=WORKDAY_HOURS[0]), date.replace(hour=WORKDAY_HOURS[1])


def generate_tasks(
    template_set: TemplateSet,
    n: int = 20,
    seed: int = 0,
    required: Optional[Sequence[str]] = None,
) -> List[BenchTask]:
    """
    Fill ``n`` tasks from the templates. The first tasks use every template
    once, the rest pick templates at random. ``required`` (default: every
    skill the templates mention) must all be needed by some task.
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    templates = template_set.templates
    rng = make_rng(seed)
    picks = list(range(min(n, len(templates))))
    picks += [int(i) for i in rng.integers(0, len(templates), size=n - len(picks))]

    slots = dict(template_set.slots)
    slots.setdefault("day", WEEKDAYS)
    tasks = []
    for task_id, pick in enumerate(picks, start=1):
        template = templates[pick]
        values = {name: choices[int(rng.integers(0, len(choices)))] for name, choices in slots.items()}
        try:
            prompt = template.text.format(**values)
            title = template.title.format(**values)
        except KeyError as e:
            raise ConfigError(f"template {template.text!r} uses unknown slot {e}") from None
        start, end = _day_window(values["day"])
        counterpart = values.get("person") if "{person}" in template.text else None
        action = CalendarAction(title=title, start=start, end=end, counterpart=counterpart)
        tasks.append(BenchTask(task_id, prompt, template.required_skills, (action,)))

    wanted = set(required) if required is not None else set().union(*(t.required_skills for t in templates))
    covered = set().union(*(t.required_skills for t in tasks))
    missing = wanted - covered
    if missing:
        raise ConfigError(f"{n} tasks do not cover skills {sorted(missing)}")
    return tasks


# ----------------------------------------------------------------------
# Runs
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class LatencyModel:
    remote_ms: float = 200.0
    local_ms: float = 5.0
    negotiation_ms: float = 20.0

    def __post_init__(self) -> None:
        if min(self.remote_ms, self.local_ms, self.negotiation_ms) < 0:
            raise InvalidArgumentError("latencies must be >= 0")
        if self.remote_ms < self.local_ms:
            raise InvalidArgumentError("remote_ms must be >= local_ms")

    def elapsed_ms(self, remote: int, local: int, negotiation: int) -> float:
        return remote * self.remote_ms + local * self.local_ms + negotiation * self.negotiation_ms


@dataclass(frozen=True)
class IterationRecord:
    task_id: int
    elapsed_ms: float
    skills_learned_pct: float
    failed: bool = False
    remote_exchanges: int = 0
    local_executions: int = 0
    negotiation_messages: int = 0


@dataclass
class RunRecord:
    mode: Mode
    run: int
    iterations: List[IterationRecord] = field(default_factory=list)

    @property
    def failures(self) -> int:
        return sum(1 for it in self.iterations if it.failed)

    def elapsed(self) -> np.ndarray:
        """Elapsed time per iteration, NaN where the task failed."""
        return np.array([math.nan if it.failed else it.elapsed_ms for it in self.iterations], dtype=float)

    def cumulative_mean(self) -> np.ndarray:
        """Mean time per completed task up to each iteration."""
        values = self.elapsed()
        done = ~np.isnan(values)
        totals = np.cumsum(np.where(done, values, 0.0))
        counts = np.cumsum(done)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(counts > 0, totals / np.maximum(counts, 1), np.nan)


def build_agents(
    catalog: Sequence[AgentSpec], transport: Optional[LoopbackTransport] = None, **agent_options
) -> Dict[str, Agent]:
    """One agent per catalog entry, all sharing the initial register, wired on a loopback transport."""
    transport = transport or LoopbackTransport()
    register = register_from_catalog(
        (d.name, d.description, spec.id) for spec in catalog for d in spec.skills
    )
    ids = {spec.id: AgentId(spec.id) for spec in catalog}
    agents = {}
    for spec in catalog:
        agent = Agent(
            ids[spec.id],
            owned=spec.skills,
            register=register.copy(),
            peers=ids,
            transport=transport,
            **agent_options,
        )
        transport.attach(agent)
        agents[spec.id] = agent
    return agents


def _seed_calendars(rng: np.random.Generator, people: Sequence[str]) -> Dict[str, Calendar]:
    hours = WORKDAY_HOURS[1] - WORKDAY_HOURS[0]
    calendars = {}
    for person in sorted(people):
        calendar = Calendar(person)
        for day in WEEKDAYS:
            start, _ = _day_window(day)
            for offset in sorted(rng.choice(hours, size=BUSY_BLOCKS_PER_DAY, replace=False)):
                begin = start + timedelta(hours=int(offset))
                calendar.add_event(Event("Busy", begin, begin + MEETING_LENGTH))
        calendars[person] = calendar
    return calendars


def _schedule(task: BenchTask, own: Calendar, others: Dict[str, Calendar]) -> int:
    """Apply the task's calendar actions; returns negotiation messages exchanged."""
    messages = 0
    for action in task.calendar_actions:
        if action.counterpart:
            try:
                outcome = negotiate_schedule(
                    own, others[action.counterpart], action.window, MEETING_LENGTH, action.title
                )
                messages += outcome.messages
            except NegotiationFailedError as e:
                messages += e.messages_exchanged
                logger.info("Task %d: %s", task.id, e)
            continue
        slot = own.earliest_free_slot(action.window, MEETING_LENGTH)
        if slot is None:
            logger.info("Task %d: no free slot for %s", task.id, action.title)
        else:
            own.add_event(Event(action.title, slot, slot + MEETING_LENGTH))
    return messages


def run_single(
    mode: Mode,
    tasks: Sequence[BenchTask],
    latency: LatencyModel,
    seed: int = 0,
    run: int = 0,
    catalog: Optional[Sequence[AgentSpec]] = None,
    wall_clock: bool = False,
    **agent_options,
) -> RunRecord:
    mode = Mode(mode)
    catalog = catalog if catalog is not None else load_catalog()
    rng = make_rng(seed)
    order = [tasks[int(i)] for i in rng.permutation(len(tasks))]
    people = {a.counterpart for t in tasks for a in t.calendar_actions if a.counterpart}
    others = _seed_calendars(rng, people)
    own = Calendar(REQUESTOR_ID)

    agents = build_agents(catalog, **agent_options)
    requestor = agents[REQUESTOR_ID]
    foreign = len(catalog_skills(catalog)) - len(requestor.owned_skills)
    initial = len(requestor.owned_skills)

    record = RunRecord(mode=mode, run=run)
    for task in order:
        before = replace(requestor.counters)
        started = time.perf_counter()
        failed = False
        negotiation = 0
        try:
            requestor.perform_task(task.prompt, mode)
        except SkillFlowError as e:
            failed = True
            logger.warning("Run %d task %d failed (%s): %s", run, task.id, mode.value, e)
        if not failed:
            negotiation = _schedule(task, own, others)
        after = requestor.counters
        remote = after.remote_exchanges - before.remote_exchanges
        local = after.local_executions - before.local_executions
        if wall_clock:
            elapsed = (time.perf_counter() - started) * 1000.0
        else:
            elapsed = latency.elapsed_ms(remote, local, negotiation)
        learned = len(requestor.owned_skills) - initial
        record.iterations.append(
            IterationRecord(
                task_id=task.id,
                elapsed_ms=elapsed,
                skills_learned_pct=100.0 * learned / foreign if foreign else 100.0,
                failed=failed,
                remote_exchanges=remote,
                local_executions=local,
                negotiation_messages=negotiation,
            )
        )
    logger.info(
        "Run %d (%s): %d tasks, %d failed, %d skills acquired",
        run, mode.value, len(order), record.failures, requestor.counters.skills_acquired,
    )
    return record


def run_benchmark(
    mode: Mode,
    tasks: Sequence[BenchTask],
    latency: LatencyModel = LatencyModel(),
    runs: int = 20,
    seed: int = 0,
    catalog: Optional[Sequence[AgentSpec]] = None,
    workers: int = 1,
    **options,
) -> List[RunRecord]:
    """``runs`` independent runs; run r shuffles tasks with seed derive_seed(seed, r)."""
    if runs < 1:
        raise InvalidArgumentError("runs must be >= 1")
    catalog = catalog if catalog is not None else load_catalog()
    single = partial(run_single, Mode(mode), tasks, latency, catalog=catalog, **options)
    jobs = [(derive_seed(seed, r), r) for r in range(runs)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda job: single(seed=job[0], run=job[1]), jobs))
    return [single(seed=s, run=r) for s, r in jobs]


# ----------------------------------------------------------------------
# Analysis
# ----------------------------------------------------------------------
def _cumulative_matrix(records: Sequence[RunRecord]) -> np.ndarray:
    return np.vstack([r.cumulative_mean() for r in records])


def _summary(values: np.ndarray) -> Tuple[float, float]:
    if values.size >= 2:
        return mean_ci95(values)
    if values.size == 1:
        return float(values[0]), math.nan
    return math.nan, math.nan


def analyze_runs(baseline: Sequence[RunRecord], skillflow: Sequence[RunRecord]) -> pd.DataFrame:
    """
    Per iteration: mean and 95% CI of each run's cumulative mean time per
    task, Welch's t-test between modes and BH-adjusted q-values.
    """
    if len(baseline) < 2 or len(skillflow) < 2:
        raise InvalidArgumentError("need at least 2 runs per mode")
    lengths = {len(r.iterations) for r in [*baseline, *skillflow]}
    if len(lengths) != 1:
        raise InvalidArgumentError(f"runs have mismatched iteration counts {sorted(lengths)}")

    base = _cumulative_matrix(baseline)
    flow = _cumulative_matrix(skillflow)
    rows = []
    for j in range(base.shape[1]):
        b = base[:, j][~np.isnan(base[:, j])]
        s = flow[:, j][~np.isnan(flow[:, j])]
        mean_b, ci_b = _summary(b)
        mean_s, ci_s = _summary(s)
        if b.size >= 2 and s.size >= 2:
            try:
                t_stat, p = welch_t_test(b, s)
            except InvalidArgumentError:
                # constant, distinct cumulative means in both modes
                t_stat, p = math.copysign(math.inf, mean_b - mean_s), 0.0
        else:
            t_stat, p = math.nan, 1.0
        rows.append(
            {
                "iteration": j + 1,
                "mean_baseline": mean_b,
                "ci_baseline": ci_b,
                "mean_skillflow": mean_s,
                "ci_skillflow": ci_s,
                "t": t_stat,
                "p": p,
            }
        )
    frame = pd.DataFrame(rows)
    frame["q"] = bh_fdr_adjust(frame["p"].tolist())
    return frame


# ----------------------------------------------------------------------
# CSV
# ----------------------------------------------------------------------
def records_to_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    rows = [
        {
            "run": record.run,
            "iteration": i,
            "mode": record.mode.value,
            "elapsed_ms": math.nan if it.failed else it.elapsed_ms,
            "skills_learned_pct": it.skills_learned_pct,
            "task_id": it.task_id,
        }
        for record in records
        for i, it in enumerate(record.iterations, start=1)
    ]
    return pd.DataFrame(rows, columns=BENCH_COLUMNS)


def write_bench_csv(records: Sequence[RunRecord], path: Path | str) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    records_to_frame(records).to_csv(target, index=False, float_format="%.6f", lineterminator="\n")
    logger.info("Wrote %d runs to %s", len(records), target)
    return target


def read_bench_csv(path: Path | str) -> List[RunRecord]:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigError(f"cannot read benchmark file {path}: {e}") from None
    missing = set(BENCH_COLUMNS[:5]) - set(frame.columns)
    if missing:
        raise ConfigError(f"benchmark file {path} lacks columns {sorted(missing)}")

    records = []
    for (mode, run), group in frame.sort_values(["mode", "run", "iteration"]).groupby(["mode", "run"], sort=True):
        record = RunRecord(mode=Mode(mode), run=int(run))
        for row in group.itertuples(index=False):
            failed = bool(pd.isna(row.elapsed_ms))
            record.iterations.append(
                IterationRecord(
                    task_id=int(getattr(row, "task_id", row.iteration)),
                    elapsed_ms=0.0 if failed else float(row.elapsed_ms),
                    skills_learned_pct=float(row.skills_learned_pct),
                    failed=failed,
                )
            )
        records.append(record)
    return records


def write_analysis_csv(analysis: pd.DataFrame, path: Path | str) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    analysis[ANALYSIS_COLUMNS].to_csv(target, index=False, float_format="%.6g", lineterminator="\n")
    logger.info("Wrote analysis of %d iterations to %s", len(analysis), target)
    return target
