import random

import pytest

from microworld.world import World, WorldState


@pytest.fixture
def small_world():
    return World(["mary", "john"], ["kitchen", "garden", "office"], ["apple"])


@pytest.fixture
def small_state(small_world):
    return WorldState(
        {"mary": "kitchen", "john": "garden"}, {"apple": "kitchen"}
    )


def random_legal_statements(world, state, n, seed):
    """A random ground-truth-legal statement sequence (for property tests)."""
    from microworld.world import LocationFact, Negation, Statement

    rng = random.Random(seed)
    statements = []
    prev_move = None
    for i in range(n):
        kind = rng.random()
        if kind < 0.6:
            actions = world.legal_actions(state)
            event = actions[rng.randrange(len(actions))]
            agent = event.agent
            vacated = (
                (agent, state.agent_location[agent])
                if type(event).__name__ in ("Move", "CoMove")
                else None
            )
        elif kind < 0.8:
            agent = world.agents[rng.randrange(len(world.agents))]
            event = LocationFact(agent, state.agent_location[agent])
            vacated = None
        elif prev_move is not None and state.agent_location[prev_move[0]] != prev_move[1]:
            event = Negation(prev_move[0], prev_move[1])
            vacated = None
        else:
            agent = world.agents[rng.randrange(len(world.agents))]
            event = LocationFact(agent, state.agent_location[agent])
            vacated = None
        stmt = Statement(event, index=i)
        state = world.apply_statement(state, stmt)
        statements.append(stmt)
        prev_move = vacated
    return statements
