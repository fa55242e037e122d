import hashlib
import logging
import os
import os.path as osp
from dataclasses import replace

import pandas as pd

import bsbu
from bsbu import analyse
from bsbu.errors import BsbuError, ValidationError
from bsbu.oracle import GridSpec, compare_estimates, grid_dp_solve
from bsbu.simulate import CrRule, RandomStream, UniformPostActionSampler, \
    forward_simulate
from bsbu.solver import Engine, repeat_experiment
from bsbu.truncation import truncation_error_bound
from bsbu.vamodel import VariableAnnuityModel, va_truncation_bound

logger = logging.getLogger(__name__)

# The experiment module runs the batch commands: many repeats of a solver
# under one or more settings, stored as CSV files next to a manifest.

COMMANDS = ('price', 'compare-regression', 'compare-simulation',
            'convergence-sweep', 'oracle-check')

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_FAILURE = 2


class _Outputs(object):
    """Files written by a command, removed again when the command fails"""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.written = []

    def path(self, name):
        return osp.join(self.out_dir, name)

    def write_csv(self, df, name):
        path = self.path(name)
        df.to_csv(path, index=False, float_format='%.17g',
                  lineterminator='\n')
        self.written.append(path)
        logger.info('wrote %s (%d rows)', path, len(df))

    def write_text(self, text, name):
        path = self.path(name)
        with open(path, 'w') as f:
            f.write(text)
        self.written.append(path)

    def remove(self):
        for path in self.written:
            if osp.exists(path):
                os.remove(path)
                logger.info('removed partial output %s', path)
        self.written = []


def _manifest(cmd, cfg, files):
    digest = hashlib.sha256(cfg.source.encode('utf-8')).hexdigest()
    lines = ['command=%s' % cmd,
             'config_sha256=%s' % digest,
             'seed=%d' % cfg.solver.seed,
             'repeats=%d' % cfg.solver.repeats,
             'version=%s' % bsbu.__version__,
             'files=%s' % ','.join(files)]
    return '\n'.join(lines) + '\n'


def _price(cfg, model, dom, out):
    solver = cfg.solver_for()
    stats = repeat_experiment(model, dom, solver, cfg.engine)
    labels = {'engine': cfg.engine.value, 'regression': cfg.regression,
              'M': solver.M, 'J': solver.J}
    row = dict(labels, R=solver.R, **analyse.summary_row(stats))
    bound = va_truncation_bound(cfg.contract, solver.R)
    row['truncation_bound'] = truncation_error_bound(bound)
    out.write_csv(pd.DataFrame([row]), 'summary.csv')
    out.write_csv(analyse.repeats_frame(stats, **labels), 'repeats.csv')
    out.write_csv(analyse.diagnostics_frame(stats, **labels),
                  'diagnostics.csv')
    return EXIT_OK


def _compare_regression(cfg, model, dom, out):
    repeats, diagnostics = [], []
    for setting, (M, J) in enumerate(cfg.settings):
        for regression in ('spse', 'rse'):
            solver = replace(cfg.solver_for(regression), M=M, J=J)
            stats = repeat_experiment(model, dom, solver, Engine.BSBU)
            labels = {'setting': setting, 'M': M, 'J': J,
                      'regression': regression}
            repeats.append(analyse.repeats_frame(stats, **labels))
            diagnostics.append(analyse.diagnostics_frame(stats, **labels))
    repeats = pd.concat(repeats, ignore_index=True)
    out.write_csv(analyse.regression_comparison_frame(repeats), 'summary.csv')
    out.write_csv(repeats, 'repeats.csv')
    out.write_csv(pd.concat(diagnostics, ignore_index=True),
                  'diagnostics.csv')
    return EXIT_OK


def _compare_simulation(cfg, model, dom, out):
    t = cfg.simulation_t if cfg.simulation_t is not None else model.horizon - 1
    M = cfg.simulation_M or cfg.solver.M
    root = RandomStream(cfg.solver.seed)
    samples = []
    for i, rule in enumerate(CrRule):
        paths = forward_simulate(model, dom, rule, t, M, root.spawn(t, i))
        samples.append(('fsbu-%s' % rule.name.lower(), paths.post))
    rng = root.spawn(t, len(CrRule)).generator()
    samples.append(('bsbu', UniformPostActionSampler().sample(model, dom, t,
                                                              M, rng)))
    summary = pd.DataFrame([dict(analyse.post_action_summary(name, post),
                                 step=t) for name, post in samples])
    hist = pd.concat([analyse.histogram_frame(name, post.continuous[:, 0],
                                              cfg.simulation_bins, cfg.solver.R)
                      for name, post in samples], ignore_index=True)
    labels = pd.concat([pd.DataFrame({'source': name,
                                      'label': post.discrete[:, 0]})
                        for name, post in samples], ignore_index=True)
    label_counts = labels.groupby(['source', 'label']).size() \
        .reset_index(name='n')
    out.write_csv(summary, 'summary.csv')
    out.write_csv(hist, 'histograms.csv')
    out.write_csv(label_counts, 'diagnostics.csv')
    return EXIT_OK


def _convergence_sweep(cfg, model, dom, out):
    repeats, diagnostics = [], []
    for M in cfg.sweep_M:
        solver = replace(cfg.solver_for(), M=M)
        stats = repeat_experiment(model, dom, solver, cfg.engine)
        labels = {'M': M, 'J': solver.J}
        repeats.append(analyse.repeats_frame(stats, **labels))
        diagnostics.append(analyse.diagnostics_frame(stats, **labels))
    repeats = pd.concat(repeats, ignore_index=True)
    out.write_csv(analyse.convergence_frame(repeats), 'summary.csv')
    out.write_csv(repeats, 'repeats.csv')
    out.write_csv(pd.concat(diagnostics, ignore_index=True),
                  'diagnostics.csv')
    return EXIT_OK


def _oracle_check(cfg, model, dom, out):
    desk = VariableAnnuityModel(cfg.contract.with_horizon(cfg.oracle_T))
    grid = GridSpec.uniform(cfg.solver.R, cfg.oracle_points, cfg.oracle_order)
    reference = grid_dp_solve(desk, dom, grid)
    solver = cfg.solver_for()
    stats = repeat_experiment(desk, dom, solver, cfg.engine)
    abs_err, rel_err = compare_estimates(stats.mean, reference.initial_value)
    passed = rel_err <= cfg.oracle_tolerance
    row = {'T': desk.horizon, 'engine': cfg.engine.value,
           'regression': cfg.regression, 'M': solver.M, 'J': solver.J,
           'oracle_value': reference.initial_value,
           'estimate_mean': stats.mean, 'estimate_sd': stats.sd,
           'abs_error': abs_err, 'rel_error': rel_err,
           'tolerance': cfg.oracle_tolerance, 'passed': passed}
    labels = {'engine': cfg.engine.value, 'M': solver.M, 'J': solver.J}
    out.write_csv(pd.DataFrame([row]), 'summary.csv')
    out.write_csv(analyse.repeats_frame(stats, **labels), 'repeats.csv')
    out.write_csv(analyse.diagnostics_frame(stats, **labels),
                  'diagnostics.csv')
    out.write_csv(reference.to_frame(), 'oracle_values.csv')
    if not passed:
        logger.warning('relative error %.3g exceeds tolerance %.3g', rel_err,
                       cfg.oracle_tolerance)
        return EXIT_TOLERANCE
    logger.info('oracle check passed: relative error %.3g', rel_err)
    return EXIT_OK


_RUNNERS = {
    'price': _price,
    'compare-regression': _compare_regression,
    'compare-simulation': _compare_simulation,
    'convergence-sweep': _convergence_sweep,
    'oracle-check': _oracle_check,
}


def run_command(cmd, cfg):
    """Runs an experiment command and writes its CSV files and manifest.

    Args:
      cmd one of COMMANDS
      cfg an ExperimentConfig; files go to cfg.output_dir

    Returns:
      0 on success, 1 when oracle-check misses its tolerance, 2 when the
      command failed (its partial outputs are removed)
    """
    if cmd not in _RUNNERS:
        raise ValidationError('unknown command %r, expected one of %s' %
                              (cmd, COMMANDS))
    os.makedirs(cfg.output_dir, exist_ok=True)
    out = _Outputs(cfg.output_dir)
    model = VariableAnnuityModel(cfg.contract)
    dom = cfg.solver.domain()
    logger.info('running %s into %s', cmd, cfg.output_dir)
    try:
        status = _RUNNERS[cmd](cfg, model, dom, out)
        names = [osp.basename(p) for p in out.written]
        out.write_text(_manifest(cmd, cfg, names), 'manifest.txt')
    except (BsbuError, OSError) as e:
        logger.error('%s failed: %s', cmd, e)
        out.remove()
        return EXIT_FAILURE
    return status


def load_repeats(path):
    """Reads back the repeats.csv of a run directory (or the file itself)"""
    if osp.isdir(path):
        path = osp.join(path, 'repeats.csv')
    return pd.read_csv(path)
