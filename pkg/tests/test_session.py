import json

import pytest

from microworld.language import ParseError
from microworld.session import (
    InvalidConfig,
    SessionConfig,
    SessionNotFound,
    SessionStore,
    actions_from_graph,
    parse_program_line,
    program_line,
    replay_program,
    state_digest,
)
from microworld.world import (
    At,
    Give,
    Grab,
    Move,
    PreconditionViolation,
    World,
    WorldState,
)


def make_config(goal=()):
    world = World(["mary", "john"], ["kitchen", "garden", "office"], ["apple"])
    initial = WorldState({"mary": "kitchen", "john": "garden"}, {"apple": "kitchen"})
    return SessionConfig(
        world=world,
        initial=initial,
        acting_agent="mary",
        segments=["Grab the apple.", "Take it to the garden."],
        goal=goal,
    )


def test_create_session_initial_observation():
    store = SessionStore()
    session = store.create(make_config())
    assert "You are mary" in session.summary()
    assert "kitchen" in session.summary()
    assert "apple" in session.summary()


def test_duplicate_entity_names_rejected():
    with pytest.raises(InvalidConfig):
        SessionConfig.from_dict(
            {
                "world": {"agents": ["mary"], "locations": ["mary"], "objects": []},
                "initial": {"agent_location": {"mary": "mary"}, "object_place": {}},
                "acting_agent": "mary",
                "segments": ["x"],
            }
        )


def test_sessions_are_isolated():
    store = SessionStore()
    s1 = store.create(make_config())
    s2 = store.create(make_config())
    assert s1.id != s2.id
    store.execute(s1.id, "grab the apple")
    assert s2.state.object_place["apple"] == "kitchen"
    assert s1.state.object_place["apple"] != "kitchen"


def test_execute_command_success_and_failure():
    store = SessionStore()
    session = store.create(make_config())
    result = store.execute(session.id, "grab the apple", segment=0)
    assert result["goal_reached"] is False
    assert result["delta"]["object_place"]["apple"] == {"carried_by": "mary"}
    with pytest.raises(PreconditionViolation):
        store.execute(session.id, "grab the apple")  # already carried
    assert len(session.steps) == 1  # failed command appended nothing
    with pytest.raises(ParseError):
        store.execute(session.id, "fly to the moon")


def test_goal_reached_after_command():
    store = SessionStore()
    session = store.create(make_config(goal=(At("mary", "garden"),)))
    result = store.execute(session.id, "go to the garden")
    assert result["goal_reached"] is True


def test_state_untouched_on_error():
    store = SessionStore()
    session = store.create(make_config())
    digest = state_digest(session.state)
    with pytest.raises(PreconditionViolation):
        store.execute(session.id, "drop the apple")
    assert state_digest(session.state) == digest


def test_trace_records_digests_and_segments():
    store = SessionStore()
    session = store.create(make_config())
    store.execute(session.id, "grab the apple", segment=0)
    store.execute(session.id, "go to the garden", segment=1)
    steps = session.steps
    assert [s.index for s in steps] == [0, 1]
    assert steps[0].post_digest == steps[1].pre_digest
    assert steps[0].segment == 0 and steps[1].segment == 1


def test_program_export_and_replay_round_trip():
    store = SessionStore()
    session = store.create(make_config())
    store.execute(session.id, "grab the apple")
    store.execute(session.id, "go to the garden")
    store.execute(session.id, "drop the apple")
    program = session.export("program")
    assert program.splitlines() == [
        "grab(mary, apple)",
        "move(mary, garden)",
        "drop(mary, apple)",
    ]
    final = replay_program(session.config.world, session.config.initial, program.splitlines())
    assert state_digest(final) == session.steps[-1].post_digest


def test_program_line_round_trip():
    for action in (Move("mary", "garden"), Grab("mary", "apple"), Give("mary", "john", "apple")):
        assert parse_program_line(program_line(action)) == action
    with pytest.raises(ValueError):
        parse_program_line("teleport(mary)")
    with pytest.raises(ValueError):
        parse_program_line("move(mary)")


def test_replay_reports_failing_line():
    world = World(["mary"], ["kitchen", "garden"], ["apple"])
    initial = WorldState({"mary": "kitchen"}, {"apple": "garden"})
    with pytest.raises(PreconditionViolation) as exc:
        replay_program(world, initial, ["move(mary, garden)", "move(mary, garden)"])
    assert "line 2" in str(exc.value.statement)


def test_empty_session_exports():
    store = SessionStore()
    session = store.create(make_config())
    assert session.export("trace-jsonl") == []
    assert session.export("program") == ""
    graph = session.export("action-graph")
    kinds = {n["kind"] for n in graph["nodes"]}
    assert kinds == {"entity"}
    assert graph["edges"] == []


def test_action_graph_construction_and_inversion():
    store = SessionStore()
    session = store.create(make_config())
    store.execute(session.id, "grab the apple")
    store.execute(session.id, "go to the garden")
    graph = session.export("action-graph")
    action_nodes = [n for n in graph["nodes"] if n["kind"] == "action"]
    assert len(action_nodes) == 2
    temporal = [e for e in graph["edges"] if e["role"] == "next"]
    assert temporal == [{"from": "a0", "to": "a1", "role": "next"}]
    actions = actions_from_graph(graph)
    assert actions == [s.action for s in session.steps]


def test_trace_jsonl_replays_to_same_digests():
    store = SessionStore()
    session = store.create(make_config())
    for cmd in ("grab the apple", "go to the office", "drop the apple"):
        store.execute(session.id, cmd)
    lines = session.export("trace-jsonl")
    fresh = SessionStore().create(make_config())
    fresh_store = SessionStore()
    fresh = fresh_store.create(make_config())
    for line in lines:
        step = json.loads(line)
        result = fresh_store.execute(fresh.id, step["command"], step["segment"])
    for a, b in zip(session.steps, fresh.steps):
        assert a.pre_digest == b.pre_digest and a.post_digest == b.post_digest


def test_persistence_recovery(tmp_path):
    store = SessionStore(str(tmp_path))
    session = store.create(make_config())
    store.execute(session.id, "grab the apple", segment=0)
    store.execute(session.id, "go to the garden")
    final_digest = session.steps[-1].post_digest
    sid = session.id

    fresh = SessionStore(str(tmp_path))  # simulates a restart
    recovered = fresh.get(sid)
    assert len(recovered.steps) == 2
    assert recovered.steps[-1].post_digest == final_digest
    assert recovered.steps[0].segment == 0
    with pytest.raises(SessionNotFound):
        fresh.get("nope")


def test_segment_out_of_range():
    store = SessionStore()
    session = store.create(make_config())
    with pytest.raises(InvalidConfig):
        store.execute(session.id, "grab the apple", segment=9)
