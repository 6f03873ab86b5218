"""Directed communication topology among followers.

Arc ``j -> i`` (``a_ij = 1``) means follower i receives follower j's estimate.
Pins ``b_i = 1`` mark followers that hear the leader directly.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, PreconditionError
from .linalg import spectral_bounds

__all__ = ['DirectedGraph', 'laplacian', 'pinned_matrix',
           'is_globally_reachable', 'coupling_bound', 'ring', 'parse_arcs']


@dataclass(frozen=True)
class DirectedGraph:
    """Unweighted digraph on ``n`` followers plus leader pins.

    Parameters
    ----------
    adjacency : (n, n) array_like of {0, 1}
        ``adjacency[i, j] = 1`` for the arc from follower j to follower i.
    pins : (n,) array_like of {0, 1}
    """

    adjacency: np.ndarray
    pins: np.ndarray

    def __post_init__(self):
        A = np.array(self.adjacency, dtype=float)
        b = np.array(self.pins, dtype=float).ravel()
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"adjacency must be square, got {A.shape}")
        if b.shape != (A.shape[0],):
            raise DimensionError(f"pins must have length {A.shape[0]}")
        if not (np.isin(A, (0.0, 1.0)).all() and np.isin(b, (0.0, 1.0)).all()):
            raise PreconditionError("adjacency and pins must be 0/1 valued")
        if np.any(np.diag(A)):
            raise PreconditionError("self loops are not allowed")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, 'adjacency', A)
        object.__setattr__(self, 'pins', b)

    @property
    def n(self):
        return self.adjacency.shape[0]

    def arcs(self):
        """List of ``(j, i)`` pairs, zero-based, for every arc j -> i."""
        i, j = np.nonzero(self.adjacency)
        return sorted(zip(j.tolist(), i.tolist()))

    def permuted(self, perm):
        """Relabel followers so that new node k is old node ``perm[k]``."""
        perm = np.asarray(perm)
        return DirectedGraph(self.adjacency[np.ix_(perm, perm)], self.pins[perm])


def ring(n, pinned=(0,)):
    """Directed ring 1 -> 2 -> ... -> n -> 1 with the given zero-based pins."""
    A = np.zeros((n, n))
    if n > 1:
        for k in range(n):
            A[(k + 1) % n, k] = 1.0
    b = np.zeros(n)
    b[list(pinned)] = 1.0
    return DirectedGraph(A, b)


def parse_arcs(n, arcs, pins):
    """Build a graph from one-based ``"j -> i"`` strings and one-based pins."""
    A = np.zeros((n, n))
    for k, text in enumerate(arcs):
        parts = str(text).split('->')
        if len(parts) != 2:
            raise PreconditionError(f"arcs[{k}]: expected 'j -> i', got {text!r}")
        try:
            j, i = (int(p) for p in parts)
        except ValueError:
            raise PreconditionError(f"arcs[{k}]: node labels must be integers, "
                                    f"got {text!r}") from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise PreconditionError(f"arcs[{k}]: node out of range 1..{n}")
        if i == j:
            raise PreconditionError(f"arcs[{k}]: self loop at node {i}")
        A[i - 1, j - 1] = 1.0
    b = np.zeros(n)
    for p in pins:
        if not 1 <= int(p) <= n:
            raise PreconditionError(f"pin {p} out of range 1..{n}")
        b[int(p) - 1] = 1.0
    return DirectedGraph(A, b)


def laplacian(g):
    """``D - A`` with D the diagonal of in-degrees."""
    A = g.adjacency
    return np.diag(A.sum(axis=1)) - A


def pinned_matrix(g):
    """``L + diag(pins)``."""
    return laplacian(g) + np.diag(g.pins)


def is_globally_reachable(g):
    """BFS from the leader through pinned nodes along the arcs."""
    seen = np.asarray(g.pins, bool).copy()
    queue = deque(np.flatnonzero(seen).tolist())
    while queue:
        j = queue.popleft()
        for i in np.flatnonzero(g.adjacency[:, j]):
            if not seen[i]:
                seen[i] = True
                queue.append(int(i))
    return bool(seen.all())


def coupling_bound(g):
    """Smallest admissible coupling gain ``1 / (2 min Re lambda(L + B))``."""
    if not is_globally_reachable(g):
        raise PreconditionError("leader not globally reachable; Assumption 2 "
                                "violated")
    lo = spectral_bounds(pinned_matrix(g))[1]
    return 1.0 / (2.0 * lo)
