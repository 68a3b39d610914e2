from pathlib import Path

import click
import matplotlib
import numpy as np
import pandas as pd
from matplotlib.figure import Figure
from matplotlib.patches import Rectangle

from roa_forge import EXIT_OK, EXIT_USAGE
from roa_forge.commands import report_error
from roa_forge.config import Config
from roa_forge.errors import RoaForgeError
from roa_forge.results import load_results
from roa_forge.services.levelset import boundary_polyline

VIEWPORT_PX = 800
COLORS = ('tab:blue', 'tab:red', 'tab:green', 'tab:purple', 'tab:orange', 'tab:brown')
LINESTYLES = ('-', '--', '-.', ':')


def member_polylines(bundle, rays=None):
    return [boundary_polyline(m.estimate, rays or Config.RENDER_RAYS) for m in bundle.members]


def polyline_frame(bundle, polylines):
    rows = []
    for member, points in zip(bundle.members, polylines):
        for i, (x1, x2) in enumerate(points):
            rows.append((member.index, i, float(x1), float(x2)))
    return pd.DataFrame(rows, columns=['case_index', 'point_index', 'x1', 'x2'])


def draw(bundle, polylines, out_path):
    box = bundle.original_box
    points = np.vstack([box.corners()] + list(polylines))
    lo, hi = points.min(axis=0), points.max(axis=0)
    center, half = 0.5 * (lo + hi), 0.5 * (hi - lo).max() * 1.1

    fig = Figure(figsize=(VIEWPORT_PX / 72, VIEWPORT_PX / 72), dpi=72)
    ax = fig.subplots()
    ax.add_patch(Rectangle(box.lower, *(box.upper_array - box.lower_array), fill=False,
                           edgecolor='black', linewidth=1.5, label='original box'))
    for k, (member, line) in enumerate(zip(bundle.members, polylines)):
        closed = np.vstack([line, line[:1]])
        est = member.estimate
        name = est.label or f'case {member.index}'
        ax.plot(closed[:, 0], closed[:, 1], color=COLORS[k % len(COLORS)],
                linestyle=LINESTYLES[k % len(LINESTYLES)], linewidth=1.5, label=f'{name} (k={est.k:.4g})')
    ax.set_xlim(center[0] - half, center[0] + half)
    ax.set_ylim(center[1] - half, center[1] + half)
    ax.set_aspect('equal')
    ax.set_xlabel('$x_1$')
    ax.set_ylabel('$x_2$')
    ax.grid(True, alpha=0.3)
    ax.legend(loc='upper right')
    with matplotlib.rc_context({'svg.hashsalt': 'roa-forge'}):
        fig.savefig(out_path, format='svg', metadata={'Date': None})


@click.command('render')
@click.argument('results_path', type=click.Path(dir_okay=False))
@click.argument('out_svg', required=False, type=click.Path(dir_okay=False))
@click.option('--csv', 'csv_path', type=click.Path(dir_okay=False),
              help='Polyline CSV (default: the recorded csv output, else next to the SVG).')
@click.option('--rays', type=int, default=None, help='Rays per boundary polyline.')
@click.pass_context
def render_cmd(ctx, results_path, out_svg, csv_path, rays):
    """Draw the original box and every member boundary of RESULTS_PATH into OUT_SVG.

    Without OUT_SVG the svg and csv targets recorded by estimate are used.
    """
    try:
        bundle = load_results(results_path)
    except RoaForgeError as exc:
        report_error(exc)
        ctx.exit(EXIT_USAGE)
    if bundle.dim != 2:
        click.echo(f'error: only planar results can be rendered, got dimension {bundle.dim}', err=True)
        ctx.exit(EXIT_USAGE)
    if not bundle.members:
        click.echo('error: results contain no certified member to draw', err=True)
        ctx.exit(EXIT_USAGE)

    if out_svg is None:
        out_svg = bundle.output_path('svg')
        if out_svg is None:
            click.echo('error: no OUT_SVG given and the results record no svg output', err=True)
            ctx.exit(EXIT_USAGE)
        csv_path = csv_path or bundle.output_path('csv')
    out_svg = Path(out_svg)
    csv_path = Path(csv_path) if csv_path else out_svg.with_suffix('.csv')
    polylines = member_polylines(bundle, rays)
    out_svg.parent.mkdir(parents=True, exist_ok=True)
    draw(bundle, polylines, out_svg)
    polyline_frame(bundle, polylines).to_csv(csv_path, index=False)
    click.echo(f'svg: {out_svg}\ncsv: {csv_path}')
    ctx.exit(EXIT_OK)
