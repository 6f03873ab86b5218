"""Monte-Carlo checks of two spectral inequalities used in the convergence
analysis.

Notation: ``sbar(X)`` is the largest real part over the spectrum of X, which
for symmetric X is the largest eigenvalue.

Lemma 4
    ``sbar(P A + A^T P) <= sqrt(sbar(A^T A)) sbar(P)`` as stated. The
    argument behind it loses a factor 2 (``A = P = I`` gives 2 <= 1), so
    the lab asserts ``<= 2 sqrt(sbar(A^T A)) sbar(P)`` and records the stated
    constant alongside.
Lemma 5
    With ``P M + M^T P = -2 mu I`` and M Hurwitz,
    ``sbar(P) sbar(M) <= -mu`` and ``sbar(P) sbar(M + M^T) >= -2 mu``, with
    ``sbar(P) sbar(M) = -mu`` when M is symmetric.

Every trial draws from its own generator, seeded from the master seed via
``numpy.random.SeedSequence``, so results do not depend on ``jobs``.
"""

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import PreconditionError
from .linalg import solve_lyapunov, spectral_bounds

__all__ = ['TrialRecord', 'random_hurwitz', 'verify_lemma4', 'verify_lemma5',
           'export_scatter', 'trial_seeds', 'summarize', 'lemma4_record',
           'SATISFY_TOL']

SATISFY_TOL = 1e-9
EQUALITY_TOL = 1e-8


@dataclass(frozen=True)
class TrialRecord:
    """One inequality evaluation.

    ``margin`` is oriented so that a non-negative value means the inequality
    holds: ``rhs - lhs`` for upper bounds, ``lhs - rhs`` for lower bounds.
    For the equality check, ``margin = -|lhs - rhs|``.

    ``printed_rhs``/``printed_margin`` carry the as-stated Lemma 4 bound;
    they are NaN for the other checks.
    """

    seed: int
    dim: int
    lhs: float
    rhs: float
    margin: float
    kind: str = ''
    trial: int = 0
    printed_rhs: float = float('nan')
    printed_margin: float = float('nan')
    tol: float = SATISFY_TOL

    @property
    def satisfied(self):
        return self.margin >= -self.tol

    @property
    def printed_satisfied(self):
        return self.printed_margin >= -self.tol


def trial_seeds(seed, trials):
    """Independent 63-bit seeds, one per trial."""
    state = np.random.SeedSequence(int(seed)).generate_state(int(trials),
                                                             np.uint64)
    return [int(v >> np.uint64(1)) for v in state]


def sbar(X):
    return spectral_bounds(X)[0]


def random_hurwitz(dim, seed, margin=0.1, symmetric=False):
    """Uniform ``[-1, 1]`` entries shifted so that ``sbar(M) = -margin``.

    With ``symmetric=True`` the symmetric part of the draw is shifted instead.
    """
    if not margin > 0:
        raise PreconditionError(f"margin must be positive, got {margin}")
    rng = np.random.default_rng(seed)
    M = rng.uniform(-1.0, 1.0, (int(dim), int(dim)))
    if symmetric:
        M = 0.5 * (M + M.T)
    return M - (sbar(M) + margin) * np.eye(int(dim))


def _lemma4_trial(args):
    k, seed, dim = args
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1.0, 1.0, (dim, dim))
    G = rng.uniform(-1.0, 1.0, (dim, dim))
    P = G.T @ G + 0.1 * np.eye(dim)
    return _lemma4_record(A, P, seed, k)


def _lemma4_record(A, P, seed=0, trial=0):
    A = np.atleast_2d(np.asarray(A, float))
    P = np.atleast_2d(np.asarray(P, float))
    T = P @ A + A.T @ P
    lhs = float(np.linalg.eigvalsh(T).max())
    printed = float(np.sqrt(np.linalg.eigvalsh(A.T @ A).max())
                    * np.linalg.eigvalsh(P).max())
    return TrialRecord(seed=seed, dim=A.shape[0], lhs=lhs, rhs=2.0 * printed,
                       margin=2.0 * printed - lhs, kind='lemma4',
                       trial=trial, printed_rhs=printed,
                       printed_margin=printed - lhs)


def lemma4_record(A, P):
    """Lemma 4 quantities for a given pair, e.g. the ``A = P = I`` case."""
    return _lemma4_record(A, P)


def _lemma5_records(M, mu, seed, trial):
    P = solve_lyapunov(M, mu)
    p = float(np.linalg.eigvalsh(P).max())
    a = p * sbar(M)
    b = p * float(np.linalg.eigvalsh(M + M.T).max())
    dim = M.shape[0]
    return [TrialRecord(seed=seed, dim=dim, lhs=a, rhs=-mu, margin=-mu - a,
                        kind='lemma5-abscissa', trial=trial),
            TrialRecord(seed=seed, dim=dim, lhs=b, rhs=-2.0 * mu,
                        margin=b + 2.0 * mu, kind='lemma5-symmetric-part',
                        trial=trial)]


def _lemma5_trial(args):
    k, seed, dim, mu = args
    return _lemma5_records(random_hurwitz(dim, seed), mu, seed, k)


def _equality_trial(args):
    k, seed, dim, mu = args
    M = random_hurwitz(dim, seed, symmetric=True)
    P = solve_lyapunov(M, mu)
    lhs = float(np.linalg.eigvalsh(P).max()) * sbar(M)
    return [TrialRecord(seed=seed, dim=dim, lhs=lhs, rhs=-mu,
                        margin=-abs(lhs + mu), kind='lemma5-equality',
                        trial=k, tol=EQUALITY_TOL)]


def _run(fn, tasks, jobs):
    if jobs is None or jobs <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=int(jobs)) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def verify_lemma4(trials, dim, seed, jobs=1):
    """Random ``A`` and ``P = G^T G + 0.1 I``; one record per trial."""
    if int(trials) < 1:
        raise PreconditionError("trials must be at least 1")
    tasks = [(k, s, int(dim)) for k, s in enumerate(trial_seeds(seed, trials))]
    return _run(_lemma4_trial, tasks, jobs)


def verify_lemma5(trials, dim, mu, seed, symmetric_trials=None, jobs=1):
    """Both Lemma 5 inequalities on random Hurwitz matrices, plus the
    equality case on random symmetric ones.

    Returns two records per trial followed by ``symmetric_trials`` equality
    records (default ``min(trials, 100)``).
    """
    if int(trials) < 1:
        raise PreconditionError("trials must be at least 1")
    if not mu > 0:
        raise PreconditionError(f"mu must be positive, got {mu}")
    nsym = min(int(trials), 100) if symmetric_trials is None else int(symmetric_trials)
    seeds = trial_seeds(seed, int(trials) + nsym)
    main = [(k, s, int(dim), float(mu)) for k, s in enumerate(seeds[:trials])]
    sym = [(k, s, int(dim), float(mu)) for k, s in enumerate(seeds[trials:])]
    out = []
    for recs in _run(_lemma5_trial, main, jobs) + _run(_equality_trial, sym, jobs):
        out.extend(recs)
    return out


def summarize(records):
    """Violation counts keyed by record kind."""
    out = {}
    for r in records:
        d = out.setdefault(r.kind, {'count': 0, 'violations': 0,
                                    'min_margin': np.inf})
        d['count'] += 1
        d['violations'] += int(not r.satisfied)
        d['min_margin'] = min(d['min_margin'], r.margin)
        if not np.isnan(r.printed_margin):
            d['printed_violations'] = (d.get('printed_violations', 0)
                                       + int(not r.printed_satisfied))
    return out


def export_scatter(records, path):
    """Write ``trial, kind, seed, lhs, rhs, margin`` rows.

    Lemma 4 records add the as-stated bound as two trailing columns.
    """
    records = list(records)
    printed = any(not np.isnan(r.printed_rhs) for r in records)
    header = ['trial', 'kind', 'seed', 'lhs', 'rhs', 'margin']
    if printed:
        header += ['printed_rhs', 'printed_margin']
    with open(path, 'w', newline='') as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in records:
            row = [r.trial, r.kind, r.seed, repr(r.lhs), repr(r.rhs),
                   repr(r.margin)]
            if printed:
                row += [repr(r.printed_rhs), repr(r.printed_margin)]
            wr.writerow(row)
    return path
