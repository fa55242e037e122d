import math

import numpy as np

from bsbu.errors import InfeasibleActionError, ValidationError
from bsbu.model import (Action, ControlModel, PointBatch, PostActionValue,
                        State, compose_transition, discounted_path_reward)
from bsbu.vamodel import VariableAnnuityModel

from .common.bsbu_test_case import BsbuTestCase


class _Law(object):
    representative = 1.0


class ToyModel(ControlModel):
    """One account, withdraw nothing or 0.1 of it, reward is the withdrawal"""

    def __init__(self, horizon=1, discount=0.9975):
        self.horizon = horizon
        self.discount = discount
        self.innovation_law = _Law()

    @property
    def initial_state(self):
        return State((1.0,), (0,))

    def pre_action_map(self, t, x, a):
        return PostActionValue((x.continuous[0] - a.continuous[0],),
                               x.discrete)

    def innovation_map(self, t, k, eps):
        return State((k.continuous[0] * float(eps),), k.discrete)

    def feasible_actions(self, t, x):
        if x.continuous[0] < 0.1:
            return [Action((0.0,), (0,))]
        return [Action((0.0,), (0,)), Action((0.1,), (0,))]

    def intermediate_reward(self, t, x, a):
        return a.continuous[0]

    def terminal_reward(self, x):
        return x.continuous[0]

    def post_action_labels(self, t):
        return [(0,)]


class PointBatchTest(BsbuTestCase):

    def test_from_points(self):
        batch = PointBatch.from_points([State((1.0,), (0,)),
                                        State((2.5,), (3,))])
        self.assertEqual(2, len(batch))
        self.assertEqual((2, 1), batch.continuous.shape)
        self.assertEqual((2.5,), batch.point(1).continuous)
        self.assertEqual((3,), batch.point(1).discrete)
        self.assertIsInstance(batch.point(0, State), State)

    def test_from_no_points(self):
        with self.assertRaises(ValidationError):
            PointBatch.from_points([])

    def test_rows_must_match(self):
        with self.assertRaises(ValidationError):
            PointBatch(np.zeros(3), np.zeros(2, dtype=int))

    def test_repeat_and_where(self):
        ones = PointBatch.repeat(State((1.0,), (2,)), 4)
        self.assertEqual(4, len(ones))
        self.assertListEqual([2, 2, 2, 2], list(ones.discrete[:, 0]))
        zeros = PointBatch(np.zeros(4), np.zeros(4, dtype=int))
        mixed = ones.where(np.array([True, False, True, False]), zeros)
        self.assertListEqual([1.0, 0.0, 1.0, 0.0], list(mixed.continuous[:, 0]))
        self.assertListEqual([2, 0, 2, 0], list(mixed.discrete[:, 0]))
        self.assertEqual(2, len(mixed.take(np.array([0, 2]))))


class HybridPointTest(BsbuTestCase):

    def test_coercion(self):
        x = State(1, 2)
        self.assertEqual((1.0,), x.continuous)
        self.assertEqual((2,), x.discrete)
        self.assertTrue(x.is_finite())
        self.assertFalse(State((float('nan'),), (0,)).is_finite())

    def test_hashable(self):
        self.assertEqual(1, len({State((1.0,), (0,)), State((1.0,), (0,))}))


class TransitionTest(BsbuTestCase):

    def setUp(self):
        BsbuTestCase.setUp(self)
        self.model = VariableAnnuityModel()

    def _step(self, t, W, I, gamma, tau, eps):
        return compose_transition(self.model, t, State((W,), (I,)),
                                  Action((gamma,), (tau,)), eps)

    def test_no_withdrawal(self):
        x = self._step(1, 1.0, 0, 0.0, 0, 1.01)
        self.assertAlmostEqual(1.01, x.continuous[0], places=12)
        self.assertEqual((0,), x.discrete)

    def test_surrender(self):
        x = self._step(2, 1.0, 0, 1.0, 1, 0.97)
        self.assertEqual(0.0, x.continuous[0])
        self.assertEqual((2,), x.discrete)

    def test_guaranteed_withdrawal_keeps_first_time(self):
        x = self._step(5, 0.5, 3, 0.03, 1, 1.0)
        self.assertAlmostEqual(0.47, x.continuous[0], places=12)
        self.assertEqual((3,), x.discrete)

    def test_infeasible_action(self):
        with self.assertRaises(InfeasibleActionError) as ctx:
            self._step(3, 1.0, 0, 0.5, 1, 1.0)
        self.assertEqual(3, ctx.exception.t)
        self.assertEqual(3, len(ctx.exception.feasible))

    def test_non_finite_input(self):
        with self.assertRaises(ValidationError):
            self._step(1, 1.0, 0, 0.0, 0, float('inf'))
        with self.assertRaises(ValidationError):
            self._step(1, float('nan'), 0, 0.0, 0, 1.0)


class DiscountedPathRewardTest(BsbuTestCase):

    def test_terminal_only(self):
        model = ToyModel(horizon=1, discount=0.9975)
        path = [(0, State((1.0,), (0,)), Action((0.0,), (0,)))]
        self.assertAlmostEqual(
            1.197, discounted_path_reward(model, path, State((1.2,), (0,))),
            places=12)

    def test_with_intermediate_rewards(self):
        model = ToyModel(horizon=2, discount=0.9)
        path = [(0, State((1.0,), (0,)), Action((0.1,), (0,))),
                (1, State((0.95,), (0,)), Action((0.0,), (0,)))]
        total = discounted_path_reward(model, path, State((1.5,), (0,)))
        self.assertAlmostEqual(0.1 + 0.81 * 1.5, total, places=12)

    def test_path_must_cover_horizon(self):
        model = ToyModel(horizon=2)
        path = [(0, State((1.0,), (0,)), Action((0.0,), (0,)))]
        with self.assertRaises(ValidationError):
            discounted_path_reward(model, path, State((1.0,), (0,)))
        path = [(1, State((1.0,), (0,)), Action((0.0,), (0,))),
                (0, State((1.0,), (0,)), Action((0.0,), (0,)))]
        with self.assertRaises(ValidationError):
            discounted_path_reward(model, path, State((1.0,), (0,)))


class DefaultBatchApiTest(BsbuTestCase):
    """The looping batch methods of ControlModel agree with the point maps"""

    def setUp(self):
        BsbuTestCase.setUp(self)
        self.model = ToyModel(horizon=3)
        self.states = PointBatch(np.array([0.05, 0.5, 2.0]),
                                 np.zeros(3, dtype=int))

    def test_state_labels(self):
        self.assertListEqual([(0,)], self.model.state_labels(0))
        self.assertListEqual([(0,)], self.model.state_labels(2))

    def test_no_monolithic_transition(self):
        self.assertIsNone(self.model.transition(0, State((1.0,), (0,)),
                                                Action((0.0,), (0,)), 1.0))

    def test_action_choices_pad_with_last_action(self):
        choices = self.model.action_choices(1, self.states)
        self.assertEqual(2, len(choices))
        # the first state has one feasible action, repeated in slot 1
        self.assertListEqual([0.0, 0.1, 0.1], list(choices[1].continuous[:, 0]))

    def test_batch_maps(self):
        acts = self.model.action_choices(1, self.states)[1]
        post = self.model.pre_action_batch(1, self.states, acts)
        self.assertArrayAlmostEqual([0.05, 0.4, 1.9], post.continuous[:, 0])
        nxt = self.model.innovation_batch(1, post, np.array([2.0, 1.0, 0.5]))
        self.assertArrayAlmostEqual([0.1, 0.4, 0.95], nxt.continuous[:, 0])
        self.assertArrayAlmostEqual(
            [0.0, 0.1, 0.1], self.model.reward_batch(1, self.states, acts))
        self.assertArrayAlmostEqual(
            [0.05, 0.5, 2.0], self.model.terminal_reward_batch(self.states))

    def test_vectorised_va_matches_point_maps(self):
        model = VariableAnnuityModel()
        rng = np.random.default_rng(5)
        t = 6
        W = rng.uniform(0.0, 3.0, size=50)
        I = rng.integers(0, t, size=50)
        states = PointBatch(W, I)
        eps = rng.lognormal(0.0, 0.05, size=50)
        for acts in model.action_choices(t, states):
            post = model.pre_action_batch(t, states, acts)
            nxt = model.innovation_batch(t, post, eps)
            rewards = model.reward_batch(t, states, acts)
            for m in range(50):
                x = states.point(m, State)
                a = acts.point(m, Action)
                k = model.pre_action_map(t, x, a)
                self.assertEqual(k.continuous, tuple(post.continuous[m]))
                self.assertEqual(k.discrete, tuple(post.discrete[m]))
                y = model.innovation_map(t, k, eps[m])
                self.assertEqual(y.continuous, tuple(nxt.continuous[m]))
                self.assertAlmostEqual(model.intermediate_reward(t, x, a),
                                       rewards[m], places=14)

    def test_discount_of_va(self):
        self.assertAlmostEqual(math.exp(-0.03 / 12),
                               VariableAnnuityModel().discount, places=15)
