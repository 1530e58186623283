# static figures for a run, written as standalone html files with plotly
import logging

import numpy as np
import plotly.graph_objects as go

logger = logging.getLogger(__name__)

MARGIN = dict(l=40, r=20, t=50, b=40)


def _write(fig, path):
    fig.write_html(path, include_plotlyjs="cdn")
    logger.debug("Figure written to %s", path)


def _heatmap_axes(points):
    """Unique x and y coordinates of a row-major tensor grid."""
    return np.unique(points[:, 0]), np.unique(points[:, 1])


def wavefunction_figure(points, values, path, title, labels=("psi",)):
    """
    Line plot for one-dimensional states, heatmap of the z = 0 plane otherwise.

    Args:
        points (ndarray): (P, d) sample points
        values (ndarray | list of ndarray): One curve per label
        path (str): Destination html file
        title (str): Figure title
        labels (tuple of str): Curve names
    """
    points = np.atleast_2d(points)
    series = values if isinstance(values, (list, tuple)) else [values]
    if points.shape[1] == 1:
        fig = go.Figure([go.Scatter(x=points[:, 0], y=v, mode="lines", name=name)
                         for v, name in zip(series, labels)])
        fig.update_layout(xaxis_title="r", yaxis_title="amplitude")
    else:
        values = np.asarray(series[0])
        if points.shape[1] > 2:
            # the slice closest to z = 0
            plane = np.isclose(points[:, 2], points[np.argmin(np.abs(points[:, 2])), 2])
            points, values = points[plane], values[plane]
        x, y = _heatmap_axes(points)
        fig = go.Figure(data=go.Heatmap(z=values.reshape(len(x), len(y)).T, x=x, y=y, colorscale="RdBu"))
        fig.update_layout(xaxis_title="x", yaxis_title="y")
    fig.update_layout(title=title, margin=MARGIN)
    _write(fig, path)


def residual_figure(points, residuals, path, title):
    """Per-point normalized collocation residual: line in 1D, heatmap in 2D, skipped otherwise."""
    points = np.atleast_2d(points)
    if points.shape[1] == 1:
        fig = go.Figure(go.Scatter(x=points[:, 0], y=residuals, mode="lines+markers"))
        fig.update_layout(xaxis_title="r", yaxis_title="residual", yaxis_type="log")
    elif points.shape[1] == 2:
        x, y = _heatmap_axes(points)
        fig = go.Figure(data=go.Heatmap(z=np.asarray(residuals).reshape(len(x), len(y)).T,
                                        x=x, y=y, colorscale="Viridis"))
        fig.update_layout(xaxis_title="x", yaxis_title="y")
    else:
        logger.info("No residual map for %d-dimensional grids", points.shape[1])
        return
    fig.update_layout(title=title, margin=MARGIN)
    _write(fig, path)


def convergence_figure(table, path, levels=(1, 2)):
    """Eigenvalues against elements per axis for the requested levels of a FEM table."""
    sizes = [int(column.split("x")[0]) for column in table.columns]
    fig = go.Figure([go.Scatter(x=sizes, y=table.loc[level].to_numpy(), mode="lines+markers",
                                name=f"eps_{level}") for level in levels if level in table.index])
    fig.update_layout(title="FEM eigenvalue convergence", xaxis_title="elements per axis",
                      yaxis_title="eigenvalue", margin=MARGIN)
    _write(fig, path)
