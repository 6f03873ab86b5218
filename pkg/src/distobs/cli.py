"""Command-line entry point.

Subcommands
-----------
simulate        run a scenario JSON, write trajectory.csv, metrics.txt, plot.gp
lemmas          Monte-Carlo spectral-inequality checks, scatter CSVs
check-geometry  sample-based check of the canonical-form conditions
gain            observer gain, coupling bound and convergence certificate

Exit codes: 0 success, 1 geometric check failed, 2 invalid input,
3 numerical failure, 4 divergence.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import lemma_lab
from .exceptions import (DistObsError, DivergenceError, DomainError,
                         PreconditionError)
from .geometry import VectorField, check_ocf_conditions
from .graph import parse_arcs, pinned_matrix, ring
from .linalg import spectral_bounds
from .models import LEADERS, make_leader
from .observer import assemble_M, convergence_certificate, design_gain
from .scenario import load_scenario
from .sim import (build_system, csv_header, fit_decay_rate, simulate,
                  tracking_metrics, write_csv)

__all__ = ['RunManifest', 'cmd_simulate', 'cmd_lemmas', 'cmd_check_geometry',
           'cmd_gain', 'main', 'bundled_scenarios', 'EXIT_OK', 'EXIT_CHECK',
           'EXIT_VALIDATION', 'EXIT_NUMERICAL', 'EXIT_DIVERGENCE']

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_DIVERGENCE = 4


@dataclass
class RunManifest:
    scenario_path: str = None
    config: dict = None
    out_dir: str = None
    files: list = field(default_factory=list)
    duration: float = 0.0
    diverged: bool = False
    passed: bool = True

    def to_dict(self):
        return {'scenario_path': self.scenario_path, 'config': self.config,
                'out_dir': self.out_dir, 'files': list(self.files),
                'duration_s': self.duration, 'diverged': self.diverged,
                'passed': self.passed}

    def write(self, path):
        self.files.append(os.path.basename(path))
        with open(path, 'w') as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write('\n')


def bundled_scenarios():
    """Name -> path of the JSON scenarios shipped with the package."""
    root = resources.files('distobs') / 'scenarios'
    return {p.name[:-5]: str(p) for p in sorted(root.iterdir(),
                                                 key=lambda p: p.name)
            if p.name.endswith('.json')}


def _resolve_config(path):
    if os.path.exists(path):
        return path
    bundled = bundled_scenarios()
    name = os.path.basename(path)
    name = name[:-5] if name.endswith('.json') else name
    if name in bundled:
        return bundled[name]
    raise FileNotFoundError(f"no such scenario file: {path!r} (bundled: "
                            f"{', '.join(sorted(bundled))})")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return 'true' if v else 'false'
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    if isinstance(v, np.ndarray):
        return ' '.join(_fmt(x) for x in v.ravel())
    return str(v)


def _write_kv(path, items):
    with open(path, 'w') as fh:
        for k, v in items:
            fh.write(f"{k}={_fmt(v)}\n")


def _metrics(traj, system):
    m = [('mode', traj.mode), ('samples', len(traj.t)),
         ('T', traj.t[-1]), ('c', system.gain.c),
         ('c_bound', system.gain.c_bound), ('diverged', traj.diverged)]
    en = traj.e_norm
    e0 = np.where(en[0] > 0, en[0], 1.0)
    m += [('observer_error_final_max', en[-1].max()),
          ('observer_error_ratio_max', (en[-1] / e0).max())]
    try:
        fit = fit_decay_rate(traj.t, traj.e_total)
        m += [('decay_rate', fit.rate), ('decay_fit_residual', fit.residual),
              ('decay_fit_samples', fit.samples)]
    except PreconditionError:
        # too few usable samples, e.g. a trajectory cut short by divergence
        m += [('decay_rate', np.nan), ('decay_fit_samples', 0)]
    if traj.what is not None:
        gap = np.abs(traj.what[-1] - traj.w[-1][None, :]).max(axis=0)
        m += [('estimate_error_final_per_state', gap)]
    if traj.x:
        tm = tracking_metrics(traj)
        m += [('tracking_error_final', tm['final']),
              ('tracking_error_final_max', tm['final'].max()),
              ('tracking_error_tail_sup', tm['sup_tail']),
              ('internal_state_max', tm['theta_max'])]
    return m


def _plot_script(traj, csv_name='trajectory.csv'):
    cols = csv_header(traj)
    e_cols = [k + 1 for k, c in enumerate(cols) if c.startswith('e_norm')]
    lines = ["# gnuplot script; run with: gnuplot -p plot.gp",
             "set datafile separator ','",
             "set key autotitle columnhead",
             "set xlabel 't'",
             "set logscale y",
             "set ylabel 'observer error norm'",
             "plot " + ', '.join(f"'{csv_name}' using 1:{k} with lines"
                                 for k in e_cols)]
    eps = [k + 1 for k, c in enumerate(cols) if c.startswith('eps')]
    if eps:
        lines += ["pause -1",
                  "unset logscale y",
                  "set ylabel 'tracking error'",
                  "plot " + ', '.join(f"'{csv_name}' using 1:{k} with lines"
                                      for k in eps)]
    else:
        s = traj.w.shape[1]
        for k in range(s):
            est = [j + 1 for j, c in enumerate(cols)
                   if c.startswith('what[') and c.endswith(f"[{k + 1}]")]
            lines += ["pause -1",
                      "unset logscale y",
                      f"set ylabel 'w[{k + 1}]'",
                      "plot " + ', '.join([f"'{csv_name}' using 1:{k + 2} "
                                           "with lines lw 2"]
                                          + [f"'{csv_name}' using 1:{j} with "
                                             "lines dt 2" for j in est])]
    return '\n'.join(lines) + '\n'


def cmd_simulate(config_path, out_dir):
    """Run a scenario and write its dataset, metrics and plot script."""
    t0 = time.perf_counter()
    path = _resolve_config(config_path)
    sc = load_scenario(path)
    os.makedirs(out_dir, exist_ok=True)
    man = RunManifest(scenario_path=path, config=sc.to_dict(), out_dir=out_dir)
    system = build_system(sc)
    try:
        traj = simulate(sc, system)
        err = None
    except DivergenceError as exc:
        traj, err = exc.trajectory, exc
    write_csv(traj, os.path.join(out_dir, 'trajectory.csv'))
    man.files.append('trajectory.csv')
    with np.errstate(all='ignore'):
        metrics = _metrics(traj, system)
    if err is not None:
        metrics.append(('divergence', str(err)))
    _write_kv(os.path.join(out_dir, 'metrics.txt'), metrics)
    man.files.append('metrics.txt')
    with open(os.path.join(out_dir, 'plot.gp'), 'w') as fh:
        fh.write(_plot_script(traj))
    man.files.append('plot.gp')
    man.diverged = err is not None
    man.passed = err is None
    man.duration = time.perf_counter() - t0
    man.write(os.path.join(out_dir, 'manifest.json'))
    return man


def cmd_lemmas(trials, dim, mu, seed, out_dir, jobs=1):
    """Run both spectral-inequality experiments and write their scatter data."""
    t0 = time.perf_counter()
    os.makedirs(out_dir, exist_ok=True)
    man = RunManifest(out_dir=out_dir,
                      config={'trials': trials, 'dim': dim, 'mu': mu,
                              'seed': seed})
    r4 = lemma_lab.verify_lemma4(trials, dim, seed, jobs=jobs)
    r5 = lemma_lab.verify_lemma5(trials, dim, mu, seed, jobs=jobs)
    lemma_lab.export_scatter(r4, os.path.join(out_dir, 'lemma4.csv'))
    lemma_lab.export_scatter(r5, os.path.join(out_dir, 'lemma5.csv'))
    man.files += ['lemma4.csv', 'lemma5.csv']
    items = [('trials', trials), ('dim', dim), ('mu', mu), ('seed', seed)]
    for kind, d in {**lemma_lab.summarize(r4),
                    **lemma_lab.summarize(r5)}.items():
        key = kind.replace('-', '_')
        items += [(f"{key}_count", d['count']),
                  (f"{key}_violations", d['violations']),
                  (f"{key}_min_margin", d['min_margin'])]
        if 'printed_violations' in d:
            items.append((f"{key}_printed_bound_violations",
                          d['printed_violations']))
    _write_kv(os.path.join(out_dir, 'summary.txt'), items)
    man.files.append('summary.txt')
    with open(os.path.join(out_dir, 'lemmas.gp'), 'w') as fh:
        fh.write(LEMMA_PLOT)
    man.files.append('lemmas.gp')
    man.passed = all(r.satisfied for r in r4 + r5)
    man.duration = time.perf_counter() - t0
    man.write(os.path.join(out_dir, 'manifest.json'))
    return man


LEMMA_PLOT = """\
# gnuplot script; run with: gnuplot -p lemmas.gp
set datafile separator ','
set xlabel 'rhs'
set ylabel 'lhs'
set title 'sbar(T) against the factor-2 bound (line lhs = rhs)'
plot 'lemma4.csv' every ::1 using 5:4 with points pt 7 ps 0.4 title 'trials', x with lines title 'bound'
pause -1
set title 'sbar(P) sbar(M) (blue) and sbar(P) sbar(M + M^T) (red)'
set xlabel 'trial'
set ylabel 'product'
plot 'lemma5.csv' every ::1 using (strcol(2) eq 'lemma5-abscissa' ? $1 : 1/0):4 with points pt 7 ps 0.4 lc rgb 'blue' title 'abscissa', \\
     '' every ::1 using (strcol(2) eq 'lemma5-symmetric-part' ? $1 : 1/0):4 with points pt 7 ps 0.4 lc rgb 'red' title 'symmetric part'
"""


def _scaled_tau(t, scale):
    return lambda w: scale * t(w)


def cmd_check_geometry(model_name, samples=50, tol=1e-5, seed=0,
                       tau_scale=1.0, out_dir=None):
    """Evaluate the canonical-form conditions at random points of the
    model's domain box.

    Returns
    -------
    (RunManifest, ConditionReport, str)
        The string is the text report.
    """
    t0 = time.perf_counter()
    model = make_leader(model_name)
    rng = np.random.default_rng(seed)
    lo, hi = model.domain_box
    X = rng.uniform(lo, hi, size=(int(samples), model.s))
    taus = model.tau_fields()
    if tau_scale != 1.0:
        taus = [VectorField(t.dim, _scaled_tau(t.fn, tau_scale), name=t.name)
                for t in taus]
    rep = check_ocf_conditions(model.p_field(), model.output_fields(),
                               model.degrees, taus, X, tol)
    man = RunManifest(out_dir=out_dir,
                      config={'model': model_name, 'samples': int(samples),
                              'tol': tol, 'seed': seed,
                              'tau_scale': tau_scale},
                      passed=rep.passed)
    text = (f"model={model_name}\nsamples={int(samples)}\ntol={tol:g}\n"
            + rep.summary() + '\n'
            + ''.join(f"failure={f}\n" for f in dict.fromkeys(rep.failures)))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, 'geometry.txt'), 'w') as fh:
            fh.write(text)
        man.files.append('geometry.txt')
    man.duration = time.perf_counter() - t0
    if out_dir is not None:
        man.write(os.path.join(out_dir, 'manifest.json'))
    return man, rep, text


def cmd_gain(model_name, graph, Q_scale=1.0, R_scale=1.0, c_multiplier=None,
             c=None, mu=1.0, output_box=(-2.0, 2.0), out_dir=None):
    """Design the observer gain and report the convergence certificate.

    Returns
    -------
    (RunManifest, list of (key, value))
    """
    t0 = time.perf_counter()
    model = make_leader(model_name)
    s = model.s
    gain = design_gain(model, graph, Q=Q_scale * np.eye(s),
                       R=R_scale * np.eye(s), c_multiplier=c_multiplier, c=c)
    M = assemble_M(model.A0, gain.F, gain.c, pinned_matrix(graph))
    cert = convergence_certificate(model, gain, graph, mu, output_box)
    items = [('model', model_name), ('nodes', graph.n),
             ('F', gain.F), ('c', gain.c), ('c_bound', gain.c_bound),
             ('M_spectral_abscissa', spectral_bounds(M)[0]),
             ('M_hurwitz', spectral_bounds(M)[0] < 0),
             ('mu', cert.mu), ('alpha', cert.alpha),
             ('P2_max_eig', cert.P2_max), ('kappa_bound', cert.kappa_bound),
             ('certified_rate', cert.decay_rate_bound),
             ('certificate_sufficient', cert.sufficient),
             ('kappa_bound_corrected', cert.kappa_bound_corrected),
             ('certified_rate_corrected', cert.decay_rate_bound_corrected),
             ('certificate_sufficient_corrected', cert.sufficient_corrected)]
    man = RunManifest(out_dir=out_dir,
                      config={'model': model_name, 'Q_scale': Q_scale,
                              'R_scale': R_scale, 'c': c,
                              'c_multiplier': c_multiplier, 'mu': mu})
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_kv(os.path.join(out_dir, 'gain.txt'), items)
        man.files.append('gain.txt')
    man.duration = time.perf_counter() - t0
    if out_dir is not None:
        man.write(os.path.join(out_dir, 'manifest.json'))
    return man, items


def _graph_from_args(args):
    if args.config:
        doc = load_scenario(_resolve_config(args.config))
        return doc.graph(), doc
    if args.arcs is not None or args.pins is not None:
        arcs = [a for a in (args.arcs or '').split(',') if a.strip()]
        pins = [int(p) for p in (args.pins or '').split(',') if p.strip()]
        return parse_arcs(args.nodes, arcs, pins), None
    return ring(args.nodes), None


def _parser():
    ap = argparse.ArgumentParser(prog='distobs', description=__doc__.split(
        '\n')[0], formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', help='run a scenario JSON')
    p.add_argument('--config', required=True,
                   help='scenario file, or the name of a bundled scenario')
    p.add_argument('--out', default='out')

    p = sub.add_parser('lemmas', help='Monte-Carlo spectral inequality checks')
    p.add_argument('--trials', type=int, default=1000)
    p.add_argument('--dim', type=int, default=5)
    p.add_argument('--mu', type=float, default=2.0)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', default='out')
    p.add_argument('--jobs', type=int, default=1)

    p = sub.add_parser('check-geometry', help='canonical-form conditions')
    p.add_argument('--model', required=True, choices=sorted(LEADERS))
    p.add_argument('--samples', type=int, default=50)
    p.add_argument('--tol', type=float, default=1e-5)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--tau-scale', type=float, default=1.0,
                   help='multiply the registered tau fields (mutation test)')
    p.add_argument('--out', default=None)

    p = sub.add_parser('gain', help='observer gain and certificate')
    p.add_argument('--model', required=True, choices=sorted(LEADERS))
    p.add_argument('--config', default=None,
                   help='take graph and gain settings from a scenario')
    p.add_argument('--nodes', type=int, default=5)
    p.add_argument('--arcs', default=None,
                   help="comma separated 'j -> i' arcs, one-based")
    p.add_argument('--pins', default=None, help='comma separated node numbers')
    p.add_argument('--q-scale', type=float, default=None)
    p.add_argument('--r-scale', type=float, default=None)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument('--c', type=float, default=None)
    grp.add_argument('--c-multiplier', type=float, default=None)
    p.add_argument('--mu', type=float, default=None)
    p.add_argument('--out', default=None)
    return ap


def _run(args):
    if args.command == 'simulate':
        man = cmd_simulate(args.config, args.out)
        print(f"wrote {', '.join(man.files)} to {man.out_dir} "
              f"in {man.duration:.2f} s")
        if man.diverged:
            print("error: trajectory diverged", file=sys.stderr)
            return EXIT_DIVERGENCE
        return EXIT_OK
    if args.command == 'lemmas':
        if args.trials < 1:
            raise ValueError("--trials must be at least 1")
        man = cmd_lemmas(args.trials, args.dim, args.mu, args.seed, args.out,
                         jobs=args.jobs)
        with open(os.path.join(args.out, 'summary.txt')) as fh:
            sys.stdout.write(fh.read())
        return EXIT_OK
    if args.command == 'check-geometry':
        man, rep, text = cmd_check_geometry(args.model, args.samples, args.tol,
                                            args.seed, args.tau_scale, args.out)
        sys.stdout.write(text)
        return EXIT_OK if rep.passed else EXIT_CHECK
    if args.command == 'gain':
        graph, sc = _graph_from_args(args)
        kw = {}
        if sc is not None:
            kw = dict(Q_scale=sc.Q_scale, R_scale=sc.R_scale, c=sc.c,
                      c_multiplier=sc.c_multiplier, mu=sc.mu,
                      output_box=sc.output_box)
        for key, val in (('Q_scale', args.q_scale), ('R_scale', args.r_scale),
                         ('mu', args.mu)):
            if val is not None:
                kw[key] = val
        if args.c is not None or args.c_multiplier is not None:
            kw['c'], kw['c_multiplier'] = args.c, args.c_multiplier
        man, items = cmd_gain(args.model, graph, out_dir=args.out, **kw)
        for k, v in items:
            print(f"{k}={_fmt(v)}")
        return EXIT_OK
    raise AssertionError(args.command)


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return _run(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (DomainError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, OSError) as exc:
        # PreconditionError, DimensionError and ScenarioError land here
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DistObsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

if __name__ == '__main__':
    sys.exit(main())
