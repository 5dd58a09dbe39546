"""Problem factories loaded by the CLI tests through ``factory: custom_examples:<name>``."""
import dataclasses

import numpy as np

from safegame.barrier import ExactValue
from safegame.problems import bounded_problem


def negative_adversary_weight(gamma1, gamma2, T_p):
    p = bounded_problem(gamma1, gamma2, T_p)
    cost = dataclasses.replace(p.game.cost,
                               adversary_weight=lambda X: np.broadcast_to(-np.eye(2), (len(X), 2, 2)))
    return dataclasses.replace(p, name="negative_weight", game=dataclasses.replace(p.game, cost=cost))


def without_exact(gamma1, gamma2, T_p):
    return dataclasses.replace(bounded_problem(gamma1, gamma2, T_p), name="no_exact", exact=None)


def wrong_value(gamma1, gamma2, T_p):
    p = bounded_problem(gamma1, gamma2, T_p)
    e = p.exact
    doubled = ExactValue(lambda X: 2 * e.value_fn(X), lambda X: 2 * e.gradient_fn(X), e.level, "doubled")
    return dataclasses.replace(p, name="doubled", exact=doubled)


def not_a_problem(gamma1, gamma2, T_p):
    return 42
