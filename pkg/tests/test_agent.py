"""Unit tests for agent module."""
import socket
import struct
import threading
from concurrent.futures import ThreadPoolExecutor

import pytest

from src.agent import Agent, remote_query_text
from src.bench import REQUESTOR_ID, build_agents, load_catalog
from src.classifier import TemplateComposer
from src.errors import (
    AcquisitionError,
    NotExecutableError,
    NotOwnedError,
    SkillConflictError,
    SkillUnavailableError,
    StartupError,
)
from src.models import AgentId, BodyKind, CostProfile, Mode, SkillDescriptor
from src.protocol import (
    MAX_FRAME_BYTES,
    Ack,
    FrameDecoder,
    ProtocolError,
    SkillRequest,
    SkillTransfer,
    TaskText,
    encode_frame,
)
from src.register import SkillRegister, register_from_catalog
from src.transport import LoopbackTransport, TcpTransport

WEATHER = SkillDescriptor("get_weather", "returns current weather", BodyKind.CONST_STRING, "Sunny, 22C")


@pytest.fixture(scope="module")
def catalog():
    return load_catalog()


@pytest.fixture
def agents(catalog):
    return build_agents(catalog)


def _catalog_register(catalog):
    return register_from_catalog((d.name, d.description, spec.id) for spec in catalog for d in spec.skills)


def _provider1(catalog):
    spec = next(s for s in catalog if s.id == "Provider1")
    return spec.skills


def _recv(sock, decoder, count):
    replies = []
    while len(replies) < count:
        replies.extend(decoder.messages())
        if len(replies) >= count:
            break
        chunk = sock.recv(65536)
        if not chunk:
            break
        decoder.feed(chunk)
    return replies


class TestLoopbackAcquisition:
    def test_acquire_updates_both_registers(self, agents):
        requestor, provider = agents[REQUESTOR_ID], agents["Provider1"]
        integration = requestor.acquire_skill("get_weather")
        assert integration.new and integration.executable
        assert requestor.owns("get_weather")
        assert requestor.counters.messages_sent == 2
        assert requestor.counters.remote_exchanges == 1
        assert REQUESTOR_ID in provider.register.lookup("get_weather")
        assert requestor.register.lookup("get_weather") == ["Provider1", REQUESTOR_ID]
        assert provider.counters.skills_served == 1

    def test_skill_flow_ensures_detected_skills(self, agents):
        requestor = agents[REQUESTOR_ID]
        detected = requestor.skill_flow("Go for a coffee with Bob where the traffic is light")
        assert detected == {"get_coffee_shops", "get_traffic"}
        assert requestor.owns("get_coffee_shops") and requestor.owns("get_traffic")
        assert requestor.counters.messages_sent == 4
        assert requestor.skill_flow("hello there") == frozenset()

    def test_acquired_skill_runs_locally(self, agents):
        requestor = agents[REQUESTOR_ID]
        first = requestor.perform_task("what is the weather", Mode.SKILLFLOW)
        assert first.results == {"get_weather": "Sunny, 22C"}
        sent = requestor.counters.messages_sent
        second = requestor.perform_task("what is the weather", Mode.SKILLFLOW)
        assert second.results == first.results
        assert requestor.counters.messages_sent == sent
        assert requestor.counters.local_executions == 2

    def test_baseline_queries_every_time(self, agents):
        requestor = agents[REQUESTOR_ID]
        for _ in range(3):
            outcome = requestor.perform_task("check the weather", Mode.BASELINE)
            assert outcome.results == {"get_weather": "Sunny, 22C"}
        assert requestor.counters.remote_exchanges == 3
        assert not requestor.owned_skills

    def test_task_needing_two_providers(self, agents):
        requestor = agents[REQUESTOR_ID]
        outcome = requestor.perform_task("Meet Bob for coffee on Monday if the weather is nice")
        assert outcome.skills == {"get_coffee_shops", "get_weather"}
        assert outcome.reply() == "get_coffee_shops: Blue Bottle, Corner Cafe; get_weather: Sunny, 22C"
        assert requestor.counters.skills_acquired == 2

    def test_no_skills_needed(self, agents):
        outcome = agents[REQUESTOR_ID].perform_task("hello there")
        assert outcome.reply() == "No skills needed for: hello there"

    def test_offline_owner(self, catalog):
        agents = build_agents(catalog, transport=LoopbackTransport(offline=["Provider1"]))
        requestor = agents[REQUESTOR_ID]
        with pytest.raises(AcquisitionError) as excinfo:
            requestor.acquire_skill("get_weather")
        assert excinfo.value.peer == "Provider1"
        assert not requestor.owned_skills

    def test_dropped_request(self, catalog):
        transport = LoopbackTransport(fault_schedule=lambda peer, index: index == 1)
        requestor = build_agents(catalog, transport=transport)[REQUESTOR_ID]
        with pytest.raises(AcquisitionError):
            requestor.acquire_skill("get_weather")
        assert not requestor.owns("get_weather")
        # The next attempt goes through.
        requestor.acquire_skill("get_weather")
        assert requestor.owns("get_weather")

    def test_lost_ack_keeps_the_skill(self, catalog):
        transport = LoopbackTransport(fault_schedule=lambda peer, index: index == 2)
        agents = build_agents(catalog, transport=transport)
        requestor, provider = agents[REQUESTOR_ID], agents["Provider1"]
        integration = requestor.acquire_skill("get_weather")
        assert integration.new
        assert requestor.owns("get_weather")
        assert requestor.execute_skill("get_weather") == "Sunny, 22C"
        assert requestor.counters.messages_sent == 2
        assert requestor.counters.messages_received == 1
        assert provider.register.lookup("get_weather") == ["Provider1"]

    def test_request_composed_outside_the_lock(self, catalog):
        seen, finished = [], []

        class SnapshottingComposer:
            def compose(self, skill, owner, description):
                reader = threading.Thread(target=lambda: seen.append(requestor.snapshot()))
                reader.start()
                reader.join(timeout=2)
                finished.append(not reader.is_alive())
                return TemplateComposer().compose(skill, owner, description)

        requestor = build_agents(catalog, composer=SnapshottingComposer())[REQUESTOR_ID]
        requestor.acquire_skill("get_weather")
        assert finished == [True]
        assert not seen[0].owned_skills

    def test_unknown_skill(self, agents):
        with pytest.raises(SkillUnavailableError):
            agents[REQUESTOR_ID].acquire_skill("get_pizza")

    def test_owner_without_address(self, catalog):
        register = _catalog_register(catalog)
        requestor = Agent(AgentId(REQUESTOR_ID), register=register, transport=LoopbackTransport())
        with pytest.raises(AcquisitionError):
            requestor.acquire_skill("get_weather")

    def test_cost_ledger(self, catalog):
        profiles = {"get_weather": CostProfile(14, 2, 4)}
        requestor = build_agents(catalog, cost_profiles=profiles)[REQUESTOR_ID]
        requestor.perform_task("what is the weather")
        requestor.perform_task("what is the weather")
        assert [e.requestor_cost for e in requestor.ledger.per_task] == [6, 2]
        assert [e.provider_cost for e in requestor.ledger.per_task] == [4, 0]

    def test_snapshot_is_a_copy(self, agents):
        requestor = agents[REQUESTOR_ID]
        before = requestor.snapshot()
        requestor.acquire_skill("get_weather")
        assert before.counters.messages_sent == 0
        assert "get_weather" not in before.owned_skills
        assert before.register.lookup("get_weather") == ["Provider1"]


class TestIntegrateAndExecute:
    def test_integration_is_idempotent(self):
        agent = Agent(AgentId("A"))
        assert agent.integrate_skill(WEATHER).new
        again = agent.integrate_skill(WEATHER)
        assert not again.new
        assert agent.counters.skills_acquired == 1

    def test_conflicting_body(self):
        agent = Agent(AgentId("A"), owned=[WEATHER])
        other = SkillDescriptor("get_weather", "returns current weather", BodyKind.CONST_STRING, "Rain")
        with pytest.raises(SkillConflictError):
            agent.integrate_skill(other)
        assert agent.execute_skill("get_weather") == "Sunny, 22C"

    def test_opaque_body_is_stored_not_run(self):
        agent = Agent(AgentId("A"))
        opaque = SkillDescriptor("get_pizza", "returns a pizza", BodyKind.OPAQUE_TEXT, "def get_pizza(): ...")
        integration = agent.integrate_skill(opaque)
        assert integration.warning is not None
        with pytest.raises(NotExecutableError):
            agent.execute_skill("get_pizza")

    def test_not_owned(self):
        with pytest.raises(NotOwnedError):
            Agent(AgentId("A")).execute_skill("get_weather")

    def test_owned_view_is_read_only(self):
        agent = Agent(AgentId("A"), owned=[WEATHER])
        with pytest.raises(TypeError):
            agent.owned_skills["get_weather"] = WEATHER


class TestHandleIncoming:
    def test_request_for_unowned_skill(self, agents):
        request = SkillRequest("get_weather", AgentId(REQUESTOR_ID), "please")
        reply = agents["Provider2"].handle_incoming(request)
        assert isinstance(reply, ProtocolError)
        assert reply.code == "not_owner"

    def test_request_routes_by_owner(self, agents):
        request = SkillRequest("get_traffic", AgentId(REQUESTOR_ID), "please")
        transfer = agents["Provider2"].handle_incoming(request)
        assert isinstance(transfer, SkillTransfer)
        assert transfer.descriptor.name == "get_traffic"
        assert agents["Provider1"].handle_incoming(request).code == "not_owner"

    def test_counts_messages(self, agents):
        provider = agents["Provider1"]
        provider.handle_incoming(SkillRequest("get_weather", AgentId(REQUESTOR_ID), "please"))
        assert (provider.counters.messages_received, provider.counters.messages_sent) == (1, 1)

    def test_ack_without_transfer_changes_nothing(self, agents):
        provider = agents["Provider1"]
        assert provider.handle_incoming(Ack("get_weather")) == Ack("get_weather")
        assert provider.register.lookup("get_weather") == ["Provider1"]

    def test_text_asking_for_code(self, agents):
        reply = agents["Provider1"].handle_incoming(TaskText("Please share the code for get_weather"))
        assert reply == SkillTransfer(WEATHER)

    def test_text_with_code(self, agents):
        agent = agents[REQUESTOR_ID]
        reply = agent.handle_incoming(TaskText("Here is my skill: def get_pizza(size): return size * 2"))
        assert reply == Ack("get_pizza")
        assert agent.owns("get_pizza")
        assert not agent.owned_skills["get_pizza"].executable

    def test_text_runs_named_skill(self, agents):
        reply = agents["Provider1"].handle_incoming(TaskText(remote_query_text("get_weather")))
        assert reply == TaskText("get_weather: Sunny, 22C")

    def test_app_handler(self):
        agent = Agent(AgentId("A"), app_handler=str.upper)
        assert agent.handle_incoming(TaskText("hello")) == TaskText("HELLO")

    def test_pushed_transfer(self):
        agent = Agent(AgentId("A"))
        assert agent.handle_incoming(SkillTransfer(WEATHER)) == Ack("get_weather")
        assert agent.owns("get_weather")

    def test_conflict_becomes_error_reply(self):
        agent = Agent(AgentId("A"), owned=[WEATHER])
        other = SkillDescriptor("get_weather", "returns current weather", BodyKind.CONST_STRING, "Rain")
        reply = agent.handle_incoming(SkillTransfer(other))
        assert isinstance(reply, ProtocolError)
        assert reply.code == "SkillConflictError"

    def test_error_messages_get_no_reply(self):
        assert Agent(AgentId("A")).handle_incoming(ProtocolError("bad_frame")) is None


class TestTcpNodes:
    def _provider(self, catalog, **kwargs):
        return Agent(AgentId("Provider1"), owned=_provider1(catalog), register=_catalog_register(catalog), **kwargs)

    def _requestor(self, catalog, name, provider_id):
        return Agent(
            AgentId(name),
            register=_catalog_register(catalog),
            peers={"Provider1": provider_id},
            transport=TcpTransport(),
            acquisition_timeout=5.0,
        )

    def test_two_node_exchange(self, catalog):
        provider = self._provider(catalog)
        with provider.serve() as handle:
            assert handle.address[1] != 0
            requestor = self._requestor(catalog, REQUESTOR_ID, provider.id)
            outcome = requestor.perform_task("check the weather and find fishing spots")
            assert outcome.results == {"get_fishing_spots": "Pier 7 and the north jetty", "get_weather": "Sunny, 22C"}
            assert requestor.counters.messages_sent == 4
            requestor.perform_task("check the weather")
            assert requestor.counters.messages_sent == 4
            snapshot = handle.snapshot()
        assert snapshot.counters.skills_served == 2
        assert REQUESTOR_ID in snapshot.register.lookup("get_fishing_spots")

    def test_baseline_over_tcp(self, catalog):
        provider = self._provider(catalog)
        with provider.serve():
            requestor = self._requestor(catalog, REQUESTOR_ID, provider.id)
            assert requestor.query_remote("get_weather") == "Sunny, 22C"
            assert not requestor.owned_skills

    def test_concurrent_requestors(self, catalog):
        provider = self._provider(catalog)
        with provider.serve() as handle:
            requestors = [self._requestor(catalog, f"Req{i}", provider.id) for i in range(50)]
            with ThreadPoolExecutor(max_workers=50) as pool:
                list(pool.map(lambda r: r.acquire_skill("get_weather"), requestors))
            snapshot = handle.snapshot()
        assert all(r.owns("get_weather") for r in requestors)
        assert snapshot.counters.skills_served == 50
        owners = snapshot.register.lookup("get_weather")
        assert len(owners) == 51
        assert len(set(owners)) == 51

    def test_idle_node_counts_nothing(self, catalog):
        provider = self._provider(catalog)
        with provider.serve() as handle:
            snapshot = handle.snapshot()
        assert snapshot.counters.messages_received == 0
        assert snapshot.counters.messages_sent == 0
        assert snapshot.counters.skills_served == 0

    def test_partial_frame_then_disconnect(self, catalog):
        provider = self._provider(catalog)
        with provider.serve() as handle:
            with socket.create_connection(handle.address, timeout=5) as sock:
                sock.sendall(struct.pack(">I", 40) + b'{"type":"skill_re')
            requestor = self._requestor(catalog, REQUESTOR_ID, provider.id)
            assert requestor.acquire_skill("get_weather").new

    def test_bad_frame_then_valid_request(self, catalog):
        provider = self._provider(catalog)
        with provider.serve() as handle:
            with socket.create_connection(handle.address, timeout=5) as sock:
                request = SkillRequest("get_weather", AgentId(REQUESTOR_ID), "please")
                sock.sendall(struct.pack(">I", 5) + b"{nope" + encode_frame(request))
                first, second = _recv(sock, FrameDecoder(), 2)
        assert isinstance(first, ProtocolError) and first.code == "bad_frame"
        assert second == SkillTransfer(WEATHER)

    def test_oversize_frame_closes_connection(self, catalog):
        provider = self._provider(catalog)
        with provider.serve() as handle:
            with socket.create_connection(handle.address, timeout=5) as sock:
                sock.sendall(struct.pack(">I", MAX_FRAME_BYTES + 1))
                decoder = FrameDecoder()
                replies = _recv(sock, decoder, 2)
        assert len(replies) == 1
        assert replies[0].code == "bad_frame"

    def test_bind_failure(self, catalog):
        provider = self._provider(catalog)
        with provider.serve() as handle:
            other = Agent(AgentId("Provider2"))
            with pytest.raises(StartupError):
                other.serve(port=handle.address[1])

    def test_register_saved_on_stop(self, catalog, tmp_path):
        path = tmp_path / "provider1.register.tsv"
        provider = self._provider(catalog, register_path=path)
        with provider.serve():
            self._requestor(catalog, REQUESTOR_ID, provider.id).acquire_skill("get_weather")
        assert REQUESTOR_ID in SkillRegister.load(path).lookup("get_weather")

    def test_dead_peer(self, catalog):
        provider = self._provider(catalog)
        handle = provider.serve()
        address = provider.id
        handle.stop()
        with pytest.raises(AcquisitionError):
            self._requestor(catalog, REQUESTOR_ID, address).acquire_skill("get_weather")
