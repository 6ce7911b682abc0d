"""Python access to the gymgrid core.

Configs are plain dicts with the same fields as the JSON files the CLI reads.
"""

import json

from . import _gymgrid
from ._gymgrid import gol_step, gol_step_conv

__all__ = ["Env", "Trainer", "gol_step", "gol_step_conv", "oracle_plan", "evaluate", "random_baseline"]


class Env:
    """One Game of Life or Power Puzzle environment."""

    def __init__(self, **config):
        self._env = _gymgrid.Env(json.dumps(config))

    def reset(self, seed=None):
        return self._env.reset(seed)

    def step(self, action):
        """Returns (observation, reward, done, info)."""
        return self._env.step(int(action))

    def observe(self):
        return self._env.observe()

    def inject_human_action(self, action, force=False):
        return self._env.inject_human_action(int(action), force)

    def board_text(self):
        return self._env.board_text()

    @property
    def config(self):
        return json.loads(self._env.config_json)

    @property
    def action_count(self):
        return self._env.action_count

    @property
    def done(self):
        return self._env.done

    @property
    def step_index(self):
        return self._env.step_index

    @property
    def episode_return(self):
        return self._env.episode_return


class Trainer:
    def __init__(self, train=None, env=None, model=None):
        self._t = _gymgrid.Trainer(json.dumps(train or {}), json.dumps(env or {}), json.dumps(model or {}))

    @classmethod
    def resume(cls, checkpoint_dir):
        self = cls.__new__(cls)
        self._t = _gymgrid.Trainer.resume(str(checkpoint_dir))
        return self

    def update(self):
        return self._t.update()

    def run(self, out_dir):
        self._t.run(str(out_dir))

    def save(self, checkpoint_dir):
        self._t.save(str(checkpoint_dir))

    def inject_human_action(self, action, force=False):
        return self._t.inject_human_action(int(action), force)

    @property
    def frames(self):
        return self._t.frames

    @property
    def updates(self):
        return self._t.updates

    @property
    def finished(self):
        return self._t.finished

    @property
    def recent_mean_return(self):
        return self._t.recent_mean_return

    @property
    def last_human_substituted(self):
        return list(self._t.last_human_substituted)


def oracle_plan(board_text, horizon=100, brute_force=False):
    return json.loads(_gymgrid.oracle_plan(board_text, horizon, brute_force))


def evaluate(checkpoint_dir, env, episodes=100, column=-1, deterministic=True, seed=0x5EED):
    return json.loads(_gymgrid.evaluate(str(checkpoint_dir), json.dumps(env), episodes, column, deterministic, seed))


def random_baseline(env, episodes=100, seed=0x5EED):
    return json.loads(_gymgrid.random_baseline(json.dumps(env), episodes, seed))
