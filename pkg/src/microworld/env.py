"""Agent-environment loop: deterministic episodes over the micro-world.

The environment owns the declared world, a current state, an optional goal
(a conjunction of propositions giving a 0/1 reward), and renders each
applied statement as the observation.  Policies map (observation history,
legal actions) to an action; a random and a scripted policy are provided
as sanity-check drivers.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import language
from .world import Statement, World, WorldError, WorldState


class PolicyReturnedIllegalAction(WorldError):
    pass


@dataclass
class Episode:
    observations: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    reached_goal: bool = False


class Environment:
    """Deterministic world with rendered observations and a goal reward."""

    def __init__(self, world: World, initial: WorldState, goal=None, lexicon=None, seed=0):
        world.validate_state(initial)
        self.world = world
        self.initial = initial
        self.goal = tuple(goal) if goal else ()
        self.lexicon = lexicon or language.default_lexicon()
        self.seed = seed
        self.reset()

    def reset(self) -> None:
        self.state = self.initial
        self._step = 0

    def reward(self, state: WorldState) -> int:
        if not self.goal:
            return 0
        return int(all(self.world.holds(state, p) for p in self.goal))

    def step(self, action) -> tuple:
        """Apply one action; returns (observation text, reward)."""
        stmt = Statement(action, index=self._step)
        self.state = self.world.apply_statement(self.state, stmt)
        sentence = language.render(
            stmt, self.lexicon, rng_seed=self.seed * 65537 + self._step
        )
        self._step += 1
        return sentence.text, self.reward(self.state)

    def legal_actions(self) -> list:
        return self.world.legal_actions(self.state)


class RandomPolicy:
    """Uniform choice over the legal actions; deterministic by seed."""

    def __init__(self, seed: int):
        self.seed = seed
        self._rng = random.Random(seed)

    def reset(self):
        self._rng = random.Random(self.seed)

    def __call__(self, observations, legal):
        return legal[self._rng.randrange(len(legal))]


class ScriptedPolicy:
    """Plays a fixed action list, then stops."""

    def __init__(self, actions):
        self.actions = list(actions)
        self._i = 0

    def reset(self):
        self._i = 0

    def __call__(self, observations, legal):
        if self._i >= len(self.actions):
            return None
        action = self.actions[self._i]
        self._i += 1
        return action


def run_policy(env: Environment, policy, max_steps: int) -> Episode:
    """Roll out one episode until the goal predicate fires or steps run out."""
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    env.reset()
    if hasattr(policy, "reset"):
        policy.reset()
    episode = Episode()
    if env.reward(env.state):
        episode.reached_goal = True
        return episode
    for _ in range(max_steps):
        legal = env.legal_actions()
        action = policy(episode.observations, legal)
        if action is None:
            break
        if action not in legal:
            raise PolicyReturnedIllegalAction(repr(action))
        obs, reward = env.step(action)
        episode.observations.append(obs)
        episode.actions.append(action)
        episode.rewards.append(reward)
        if reward:
            episode.reached_goal = True
            break
    return episode
