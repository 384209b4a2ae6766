import pytest

from microworld.env import (
    Environment,
    Episode,
    PolicyReturnedIllegalAction,
    RandomPolicy,
    ScriptedPolicy,
    run_policy,
)
from microworld.world import At, Move, World, WorldState


@pytest.fixture
def env():
    world = World(["mary"], ["kitchen", "garden"], ["apple"])
    initial = WorldState({"mary": "kitchen"}, {"apple": "garden"})
    return Environment(world, initial, goal=[At("mary", "garden")], seed=3)


def test_scripted_policy_reaches_goal_in_one_step(env):
    episode = run_policy(env, ScriptedPolicy([Move("mary", "garden")]), max_steps=10)
    assert episode.reached_goal
    assert len(episode.actions) == 1
    assert episode.rewards == [1]


def test_scripted_policy_illegal_action_detected(env):
    policy = ScriptedPolicy([Move("mary", "kitchen")])  # already there
    with pytest.raises(PolicyReturnedIllegalAction):
        run_policy(env, policy, max_steps=5)


def test_random_policy_deterministic_by_seed(env):
    e1 = run_policy(env, RandomPolicy(9), max_steps=20)
    e2 = run_policy(env, RandomPolicy(9), max_steps=20)
    assert e1.actions == e2.actions
    assert e1.observations == e2.observations
    assert e1.rewards == e2.rewards


def test_random_policy_usually_reaches_goal():
    # Monte Carlo over seeds, frozen threshold: a 2-location world with one
    # grabbable object still reaches a 1-move goal within 50 steps.
    world = World(["mary"], ["kitchen", "garden"], ["apple"])
    initial = WorldState({"mary": "kitchen"}, {"apple": "kitchen"})
    env = Environment(world, initial, goal=[At("mary", "garden")], seed=0)
    reached = sum(
        run_policy(env, RandomPolicy(seed), max_steps=50).reached_goal
        for seed in range(1000)
    )
    assert reached >= 990


def test_goal_already_true_gives_empty_episode():
    world = World(["mary"], ["kitchen", "garden"])
    env = Environment(
        world, WorldState({"mary": "kitchen"}, {}), goal=[At("mary", "kitchen")]
    )
    episode = run_policy(env, RandomPolicy(0), max_steps=5)
    assert episode.reached_goal and episode.actions == []


def test_observations_are_rendered_sentences(env):
    episode = run_policy(env, ScriptedPolicy([Move("mary", "garden")]), max_steps=5)
    assert episode.observations[0].startswith("Mary ")
    assert episode.observations[0].endswith("garden.")
