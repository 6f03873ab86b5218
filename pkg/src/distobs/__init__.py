"""Distributed observers and tracking control for leader-follower networks.

The leader is an autonomous nonlinear system that admits an observable
canonical form; each follower runs a local copy of the canonical-form
observer, coupled to its neighbours over a directed graph, and feeds the
estimate into a feedback-linearizing tracking law.
"""

from . import control, geometry, graph, lemma_lab, linalg, models, observer, sim
from .exceptions import (ConvergenceError, DimensionError, DistObsError,
                         DivergenceError, DomainError, PreconditionError,
                         SingularityError, UnsupportedError)
from .graph import DirectedGraph, coupling_bound, parse_arcs, ring
from .models import make_follower, make_leader
from .observer import convergence_certificate, design_gain
from .scenario import Scenario, load_scenario, parse_scenario
from .sim import fit_decay_rate, simulate, tracking_metrics

__version__ = '0.1.0'
