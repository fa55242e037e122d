import math

import numpy as np

from bsbu.errors import InfeasibleActionError, ValidationError
from bsbu.model import Action, PointBatch, State, compose_transition
from bsbu.truncation import truncation_error_bound
from bsbu.vamodel import (VaAction, VaContract, VaState, VariableAnnuityModel,
                          guarantee_rate, va_feasible_actions,
                          va_moment_bound, va_reward, va_reward_bound,
                          va_tail_probability, va_truncation_bound)

from .common.bsbu_test_case import BsbuTestCase


def _pairs(actions):
    return [(a.continuous, a.discrete) for a in actions]


class VaContractTest(BsbuTestCase):

    def test_defaults(self):
        c = VaContract()
        self.assertEqual(12, c.T)
        self.assertEqual(1.0, c.P0)
        self.assertAlmostEqual(math.exp(-0.0025), c.discount, places=15)
        self.assertEqual(12, len(c.rates))

    def test_guarantee_rates(self):
        c = VaContract()
        self.assertListEqual([0.03] * 4 + [0.05] * 4 + [0.07] * 4,
                             [guarantee_rate(c, i) for i in range(12)])
        with self.assertRaises(ValidationError):
            guarantee_rate(c, 12)

    def test_invalid_contracts(self):
        with self.assertRaises(ValidationError):
            VaContract(T=0)
        with self.assertRaises(ValidationError):
            VaContract(kappa=1.5)
        with self.assertRaises(ValidationError):
            VaContract(W0=0.0)
        # the schedule must cover every first-withdrawal time
        with self.assertRaises(ValidationError):
            VaContract(T=13)
        self.assertEqual(3, VaContract().with_horizon(3).T)


class ActionTest(BsbuTestCase):

    def setUp(self):
        BsbuTestCase.setUp(self)
        self.contract = VaContract()

    def test_null_action_at_inception(self):
        self.assertListEqual([((0.0,), (0,))], _pairs(va_feasible_actions(
            self.contract, 0, VaState(1.0, 0))))

    def test_bang_bang_set(self):
        self.assertListEqual(
            [((0.0,), (0,)), ((0.03,), (1,)), ((1.0,), (1,))],
            _pairs(va_feasible_actions(self.contract, 3, VaState(1.0, 0))))
        self.assertListEqual(
            [((0.0,), (1,)), ((0.05,), (1,)), ((2.0,), (1,))],
            _pairs(va_feasible_actions(self.contract, 7, VaState(2.0, 5))))

    def test_coinciding_actions_listed_once(self):
        self.assertListEqual(
            [((0.0,), (1,)), ((0.03,), (1,))],
            _pairs(va_feasible_actions(self.contract, 5, VaState(0.03, 2))))

    def test_va_state_and_action(self):
        x = VaState(1.5, 2)
        self.assertEqual((1.5, 2), (x.W, x.I))
        a = VaAction(0.03, 1)
        self.assertEqual((0.03, 1), (a.gamma, a.tau))


class RewardTest(BsbuTestCase):

    def setUp(self):
        BsbuTestCase.setUp(self)
        self.contract = VaContract()
        self.x = VaState(1.0, 0)

    def test_examples(self):
        self.assertAlmostEqual(0.03, va_reward(self.contract, 3, self.x,
                                               VaAction(0.03, 1)), places=14)
        self.assertAlmostEqual(0.224, va_reward(self.contract, 3, self.x,
                                                VaAction(1.0, 1)), places=14)
        self.assertEqual(0.0, va_reward(self.contract, 3, self.x,
                                        VaAction(0.0, 0)))
        self.assertEqual(0.0, va_reward(self.contract, 0, self.x,
                                        VaAction(0.0, 0)))

    def test_infeasible(self):
        with self.assertRaises(InfeasibleActionError):
            va_reward(self.contract, 3, self.x, VaAction(0.5, 1))
        with self.assertRaises(InfeasibleActionError):
            va_reward(self.contract, 0, self.x, VaAction(1.0, 1))

    def test_penalty_slope(self):
        model = VariableAnnuityModel(self.contract)
        gamma = np.linspace(0.03, 3.0, 50)
        states = PointBatch(np.full(50, 5.0), np.zeros(50, dtype=int))
        rewards = model.reward_batch(3, states,
                                     PointBatch(gamma, np.ones(50, dtype=int)))
        self.assertArrayAlmostEqual(np.full(49, 0.2),
                                    np.diff(rewards) / np.diff(gamma))

    def test_terminal_reward(self):
        model = VariableAnnuityModel(self.contract)
        self.assertEqual(1.7, model.terminal_reward(VaState(1.7, 4)))


class DynamicsTest(BsbuTestCase):

    def setUp(self):
        BsbuTestCase.setUp(self)
        self.model = VariableAnnuityModel()

    def test_transition_consistency(self):
        rng = np.random.default_rng(31)
        for _ in range(10000):
            t = int(rng.integers(1, 12))
            I = int(rng.integers(0, t))
            x = State((rng.uniform(0.0, 4.0),), (I,))
            acts = self.model.feasible_actions(t, x)
            a = acts[int(rng.integers(0, len(acts)))]
            e = rng.lognormal(0.0, 0.05)
            y = compose_transition(self.model, t, x, a, e)
            self.assertEqual(y, self.model.transition(t, x, a, e))
            W, gamma, tau = x.continuous[0], a.continuous[0], a.discrete[0]
            self.assertAlmostEqual(max(W - gamma, 0.0) * e, y.continuous[0],
                                   places=12)
            self.assertEqual(t if (I == 0 and tau == 1) else I,
                             y.discrete[0])

    def test_first_withdrawal_time_recorded(self):
        for t in range(12):
            for I in range(12):
                for tau in (0, 1):
                    k = self.model.pre_action_map(t, State((1.0,), (I,)),
                                                  Action((0.0,), (tau,)))
                    expected = t if (I == 0 and tau == 1) else I
                    self.assertEqual((expected,), k.discrete)
                    batch = self.model.pre_action_batch(
                        t, PointBatch(np.ones(1), np.array([I])),
                        PointBatch(np.zeros(1), np.array([tau])))
                    self.assertEqual(expected, batch.discrete[0, 0])

    def test_labels(self):
        self.assertListEqual([(0,)], self.model.state_labels(0))
        self.assertListEqual([(0,), (1,), (2,)],
                             self.model.post_action_labels(2))
        self.assertListEqual([(0,), (1,), (2,)], self.model.state_labels(3))
        self.assertEqual(((1.0,), (0,)), (self.model.initial_state.continuous,
                                          self.model.initial_state.discrete))

    def test_action_choices_match_feasible_sets(self):
        rng = np.random.default_rng(32)
        t = 8
        states = PointBatch(rng.uniform(0.1, 4.0, 40), rng.integers(0, t, 40))
        choices = self.model.action_choices(t, states)
        self.assertEqual(3, len(choices))
        for m in range(40):
            feasible = _pairs(self.model.feasible_actions(
                t, states.point(m, State)))
            self.assertListEqual(feasible,
                                 [(c.point(m).continuous, c.point(m).discrete)
                                  for c in choices])
        self.assertEqual(1, len(self.model.action_choices(0, states)))


class TailProbabilityTest(BsbuTestCase):

    def setUp(self):
        BsbuTestCase.setUp(self)
        self.contract = VaContract()

    def test_default_bound(self):
        p = va_tail_probability(self.contract, 4.0)
        # the two reflection terms are about 2.08e-20 and 2.06e-20
        self.assertGreaterEqual(p, 1e-20)
        self.assertLessEqual(p, 4.5e-20)
        self.assertAlmostEqual(1.0, p / 4.143e-20, places=2)

    def test_near_initial_value(self):
        self.assertAlmostEqual(1.0, va_tail_probability(
            self.contract, 1.0 + 1e-12), places=6)

    def test_decreasing_in_bound(self):
        grid = np.linspace(1.1, 8.0, 70)
        values = [va_tail_probability(self.contract, R) for R in grid]
        self.assertTrue(all(0.0 <= v <= 1.0 for v in values))
        self.assertTrue(all(a > b for a, b in zip(values, values[1:])
                            if a > 0.0))
        self.assertGreater(va_tail_probability(self.contract, 2.0),
                           va_tail_probability(self.contract, 4.0))

    def test_preconditions(self):
        with self.assertRaises(ValidationError):
            va_tail_probability(self.contract, 1.0)
        with self.assertRaises(ValidationError):
            va_tail_probability(VaContract(sigma=0.0), 4.0)


class TruncationBoundTest(BsbuTestCase):

    def test_default_contract(self):
        contract = VaContract()
        self.assertEqual(16.0, va_reward_bound(contract, 4.0))
        zeta = va_moment_bound(contract)
        self.assertGreater(zeta, 1.0)
        self.assertLess(zeta, 1.1)
        bound = truncation_error_bound(va_truncation_bound(contract, 4.0))
        self.assertGreater(bound, 0.0)
        self.assertLess(bound, 1e-7)
