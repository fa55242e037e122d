import logging

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn

logger = logging.getLogger(__name__)

# The analyse module turns repeat results, as stored by experiment or
# returned by solver.repeat_experiment, into report tables and plots


def summary_row(stats):
    """Aggregates of a SummaryStats as a flat dict"""
    return {'repeats': len(stats.values),
            'mean': stats.mean,
            'sd': stats.sd,
            'min': stats.min,
            'max': stats.max}


def repeats_frame(stats, **labels):
    """One row per repeat: the labels, the repeat index and V0"""
    df = pd.DataFrame({'repeat': np.arange(len(stats.values)),
                       'value': stats.values})
    for i, (name, value) in enumerate(labels.items()):
        df.insert(i, name, value)
    return df


def diagnostics_frame(stats, **labels):
    """Per-step fit diagnostics of every repeat, tagged with the labels"""
    frames = []
    for i, result in enumerate(stats.results):
        df = result.diagnostics.copy()
        df.insert(0, 'repeat', i)
        for j, (name, value) in enumerate(labels.items()):
            df.insert(j, name, value)
        frames.append(df)
    if not frames:
        return pd.DataFrame()
    return pd.concat(frames, ignore_index=True)


def _aggregate(df, by):
    grouped = df.groupby(by, sort=True)['value']
    return grouped.agg(mean='mean', sd=lambda v: v.std(ddof=1),
                       repeats='size').reset_index()


def regression_comparison_frame(repeats):
    """Mean and sd of V0 per setting, one column pair per regression kind.

    Args:
      repeats DataFrame with columns setting, M, J, regression and value

    Returns:
      DataFrame with columns setting, M, J, spse_mean, spse_sd, rse_mean,
        rse_sd
    """
    agg = _aggregate(repeats, ['setting', 'M', 'J', 'regression'])
    wide = agg.pivot_table(index=['setting', 'M', 'J'], columns='regression',
                           values=['mean', 'sd'])
    wide.columns = ['%s_%s' % (reg, stat) for stat, reg in wide.columns]
    cols = [c for c in ('spse_mean', 'spse_sd', 'rse_mean', 'rse_sd')
            if c in wide.columns]
    return wide[cols].reset_index()


def convergence_frame(repeats):
    """Mean and sd of V0 for every sample size M"""
    agg = _aggregate(repeats, ['M', 'J'])
    agg['sd_ratio'] = agg['sd'] / agg['sd'].shift(1)
    return agg


def histogram_frame(source, values, bins, upper):
    """Counts of values over `bins` equal bins of [0, upper]"""
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins,
                                 range=(0.0, upper))
    return pd.DataFrame({'source': source,
                         'bin_lo': edges[:-1],
                         'bin_hi': edges[1:],
                         'count': counts})


def post_action_summary(source, post):
    """Share of absorbed and not-yet-initiated post-action values"""
    k1 = post.continuous[:, 0]
    k2 = post.discrete[:, 0]
    return {'source': source,
            'n': len(post),
            'frac_w0': float(np.mean(k1 == 0.0)),
            'frac_i0': float(np.mean(k2 == 0)),
            'labels': int(np.unique(k2).size)}


class Plotter():
    def __init__(self):
        self.colors = seaborn.color_palette()

    def plot_repeat_densities(self, repeats, hue='regression', ax=None):
        """Kernel density of V0 over repeats, one curve per hue value"""
        ax = ax or plt.gca()
        seaborn.kdeplot(data=repeats, x='value', hue=hue, fill=True,
                        common_norm=False, ax=ax)
        ax.set_xlabel('V0')
        ax.set_title('density of V0 over repeats')
        return ax

    def plot_repeat_boxes(self, repeats, x='setting', hue='regression',
                          ax=None):
        ax = ax or plt.gca()
        seaborn.boxplot(data=repeats, x=x, y='value', hue=hue, ax=ax)
        ax.set_ylabel('V0')
        return ax

    def plot_continuation_estimates(self, estimate, t, R, labels=None,
                                    points=200, ax=None):
        """Fitted continuation functions of step t over (0, R)"""
        ax = ax or plt.gca()
        labels = labels if labels is not None else estimate.labels(t)
        grid = np.linspace(0.0, R, points + 2)[1:-1]
        for i, label in enumerate(labels):
            fit = estimate.fit(t, label)
            ax.plot(grid, fit.predict(grid), '-',
                    color=self.colors[i % len(self.colors)],
                    label='k2=%s' % (label[0] if len(label) == 1 else label))
        ax.set_xlabel('k1')
        ax.set_ylabel('continuation estimate')
        ax.set_title('continuation estimates at t=%d' % t)
        ax.legend()
        return ax
