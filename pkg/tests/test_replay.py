import numpy as np
import pytest

from fedfog.replay import ReplayBuffer, Transition


def fill(buf, n, dim_s=2, dim_a=1):
    for i in range(n):
        buf.add(np.full(dim_s, float(i)), np.full(dim_a, float(i)),
                float(i), np.full(dim_s, float(i) + 0.5))


class TestReplayBuffer:
    def test_grows_then_saturates(self):
        buf = ReplayBuffer(5, 2, 1)
        assert len(buf) == 0
        fill(buf, 3)
        assert len(buf) == 3
        fill(buf, 10)
        assert len(buf) == 5

    def test_oldest_first_overwrite(self):
        buf = ReplayBuffer(3, 1, 1)
        for i in range(5):
            buf.add([float(i)], [0.0], 0.0, [0.0])
        held = sorted(buf.states[:len(buf), 0].tolist())
        assert held == [2.0, 3.0, 4.0]

    def test_sample_without_replacement(self):
        buf = ReplayBuffer(10, 1, 1)
        fill(buf, 10, dim_s=1)
        rng = np.random.default_rng(0)
        for _ in range(20):
            batch = buf.sample(10, rng)
            assert sorted(batch.state[:, 0].tolist()) == [float(i) for i in range(10)]

    def test_sample_shapes_and_fields(self):
        buf = ReplayBuffer(50, 4, 3)
        fill(buf, 20, dim_s=4, dim_a=3)
        batch = buf.sample(8, np.random.default_rng(1))
        assert isinstance(batch, Transition)
        assert batch.state.shape == (8, 4)
        assert batch.action.shape == (8, 3)
        assert batch.reward.shape == (8,)
        assert batch.next_state.shape == (8, 4)

    def test_sample_is_copy_of_stored_values(self):
        buf = ReplayBuffer(4, 2, 1)
        s = np.array([1.0, 2.0])
        buf.add(s, [0.5], -1.25, [3.0, 4.0])
        s[:] = 99.0          # caller mutating its array must not reach the buffer
        batch = buf.sample(1, np.random.default_rng(2))
        np.testing.assert_array_equal(batch.state[0], [1.0, 2.0])
        assert batch.reward[0] == -1.25
        np.testing.assert_array_equal(batch.next_state[0], [3.0, 4.0])

    def test_oversample_rejected(self):
        buf = ReplayBuffer(10, 1, 1)
        fill(buf, 3, dim_s=1)
        with pytest.raises(ValueError):
            buf.sample(4, np.random.default_rng(3))

    def test_zero_capacity_rejected(self):
        with pytest.raises(ValueError):
            ReplayBuffer(0, 1, 1)

    def test_sampling_deterministic_under_seeded_rng(self):
        buf = ReplayBuffer(30, 1, 1)
        fill(buf, 30, dim_s=1)
        a = buf.sample(6, np.random.default_rng(7))
        b = buf.sample(6, np.random.default_rng(7))
        np.testing.assert_array_equal(a.state, b.state)
