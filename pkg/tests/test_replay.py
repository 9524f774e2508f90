import numpy as np
import pytest

from marketgym.agents.replay import ReplayBuffer
from marketgym.errors import ShapeMismatch


def fill(buf, count, obs_dim):
    for i in range(count):
        buf.add(np.full(obs_dim, float(i)), i % 3, float(i),
                np.full(obs_dim, float(i) + 0.5), i % 5 == 0)


def test_fifo_eviction_keeps_newest():
    buf = ReplayBuffer(capacity=4, obs_dim=2, action_dim=None,
                       rng=np.random.default_rng(0))
    fill(buf, 7, 2)
    assert len(buf) == 4
    dump = buf.dump()
    # inserts 0..6 with capacity 4: 3, 4, 5, 6 remain, oldest first
    np.testing.assert_array_equal(dump["rewards"], [3.0, 4.0, 5.0, 6.0])
    np.testing.assert_array_equal(dump["obs"][:, 0], [3.0, 4.0, 5.0, 6.0])
    np.testing.assert_array_equal(dump["actions"], [0, 1, 2, 0])


def test_dump_before_wraparound():
    buf = ReplayBuffer(capacity=10, obs_dim=1, action_dim=None,
                       rng=np.random.default_rng(0))
    fill(buf, 3, 1)
    dump = buf.dump()
    np.testing.assert_array_equal(dump["rewards"], [0.0, 1.0, 2.0])
    np.testing.assert_array_equal(dump["dones"], [1.0, 0.0, 0.0])


def test_sample_shapes_vector_actions():
    buf = ReplayBuffer(capacity=16, obs_dim=3, action_dim=2,
                       rng=np.random.default_rng(1))
    for i in range(10):
        buf.add(np.zeros(3), np.array([i, -i]), 0.0, np.zeros(3), False)
    batch = buf.sample(6)
    assert batch["obs"].shape == (6, 3)
    assert batch["actions"].shape == (6, 2)
    assert batch["rewards"].shape == (6,)
    assert batch["dones"].shape == (6,)


def test_sample_requires_enough_transitions():
    buf = ReplayBuffer(capacity=8, obs_dim=1, action_dim=None,
                       rng=np.random.default_rng(2))
    fill(buf, 3, 1)
    with pytest.raises(ValueError):
        buf.sample(4)
    buf.sample(3)
    with pytest.raises(ValueError):
        buf.sample(0)


def test_shape_validation():
    buf = ReplayBuffer(capacity=4, obs_dim=2, action_dim=2,
                       rng=np.random.default_rng(3))
    with pytest.raises(ShapeMismatch):
        buf.add(np.zeros(3), np.zeros(2), 0.0, np.zeros(2), False)
    with pytest.raises(ShapeMismatch):
        buf.add(np.zeros(2), np.zeros(1), 0.0, np.zeros(2), False)
    with pytest.raises(ValueError):
        ReplayBuffer(capacity=0, obs_dim=1, action_dim=None,
                     rng=np.random.default_rng(0))


def test_sampling_is_deterministic_given_rng():
    draws = []
    for _ in range(2):
        buf = ReplayBuffer(capacity=32, obs_dim=1, action_dim=None,
                           rng=np.random.default_rng(42))
        fill(buf, 20, 1)
        draws.append(buf.sample(8)["rewards"])
    np.testing.assert_array_equal(draws[0], draws[1])
