"""
Plotly charts for training curves, distillation traces and benchmark summaries
"""
from pathlib import Path
from typing import Dict, List, Union

import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots


def create_training_loss_chart(losses: List[float], label: str = "Scorer") -> go.Figure:
    """
    Create a loss curve for scorer or adapter training

    Args:
        losses: Mean loss per epoch / per pass over the data
        label: Name of the trained model

    Returns:
        Plotly figure
    """
    if not losses:
        return go.Figure()

    fig = go.Figure(data=[
        go.Scatter(
            x=list(range(1, len(losses) + 1)),
            y=losses,
            mode='lines+markers',
            name=f'{label} loss',
            line=dict(color='steelblue', width=2),
            hovertemplate='<b>Pass %{x}</b>: %{y:.5f}<extra></extra>'
        )
    ])

    fig.update_layout(
        title=f"{label} Training Loss",
        xaxis_title="Pass",
        yaxis_title="Weighted denoising loss",
        template='plotly_white',
        height=400
    )

    return fig


def create_trace_chart(trace: pd.DataFrame, title: str = "Distillation Trace") -> go.Figure:
    """
    Create one panel per trace column over the distillation iterations

    Args:
        trace: DataFrame with an `iter` column (trace.csv)
        title: Figure title

    Returns:
        Plotly figure
    """
    if trace.empty:
        return go.Figure()

    columns = [c for c in trace.columns if c != 'iter']
    fig = make_subplots(rows=len(columns), cols=1, shared_xaxes=True, subplot_titles=columns)
    colors = ['steelblue', 'darkorange', 'seagreen', 'firebrick']
    for i, column in enumerate(columns):
        fig.add_trace(go.Scatter(
            x=trace['iter'],
            y=trace[column],
            name=column,
            line=dict(color=colors[i % len(colors)], width=1.5),
            hovertemplate=f'<b>{column}</b>: %{{y:.4g}}<br>iter %{{x}}<extra></extra>'
        ), row=i + 1, col=1)

    fig.update_layout(
        title=title,
        template='plotly_white',
        height=220 * len(columns),
        showlegend=False
    )
    fig.update_xaxes(title_text="Iteration", row=len(columns), col=1)

    return fig


def create_direction_accuracy_chart(per_direction: Dict[str, Dict[str, float]]) -> go.Figure:
    """
    Create the per-direction benchmark summary: top-1 accuracy bars and mean oracle rank

    Args:
        per_direction: EvalReport.per_direction

    Returns:
        Plotly figure
    """
    if not per_direction:
        return go.Figure()

    df = pd.DataFrame.from_dict(per_direction, orient='index')
    df.index = df.index.astype(int)
    df = df.sort_index()

    fig = make_subplots(specs=[[{"secondary_y": True}]])
    fig.add_trace(go.Bar(
        x=df.index,
        y=df['top1_accuracy'],
        name='Top-1 accuracy',
        marker_color='steelblue',
        hovertemplate='<b>Direction %{x}</b><br>Accuracy: %{y:.2f}<extra></extra>'
    ), secondary_y=False)
    fig.add_trace(go.Scatter(
        x=df.index,
        y=df['mean_rank'],
        name='Mean rank',
        mode='lines+markers',
        line=dict(color='firebrick', width=2),
        hovertemplate='<b>Direction %{x}</b><br>Mean rank: %{y:.2f}<extra></extra>'
    ), secondary_y=True)

    # Chance level of a uniform guess over 12 directions
    fig.add_hline(y=1 / 12, line_dash="dot", line_color="gray", annotation_text="chance")

    fig.update_layout(
        title="Direction Oracle per Requested Direction",
        xaxis_title="Direction index",
        template='plotly_white',
        height=450,
        legend=dict(
            orientation="h",
            yanchor="bottom",
            y=1.02,
            xanchor="right",
            x=1
        )
    )
    fig.update_yaxes(title_text="Top-1 accuracy", range=[0, 1], secondary_y=False)
    fig.update_yaxes(title_text="Mean rank", range=[1, 12], secondary_y=True)

    return fig


def create_method_comparison_chart(per_method: Dict[str, Dict[str, Dict[str, float]]]) -> go.Figure:
    """
    Create the side-by-side comparison of benchmark methods

    Args:
        per_method: EvalReport.per_method

    Returns:
        Plotly figure with top-1 accuracy, MSE and preservation panels
    """
    if not per_method:
        return go.Figure()

    panels = [
        ('direction_top1', 'Top-1 accuracy'),
        ('mse', 'MSE vs ground truth'),
        ('preservation_violation', 'Preservation violation'),
    ]
    methods = list(per_method)
    fig = make_subplots(rows=1, cols=len(panels), subplot_titles=[title for _, title in panels])
    for col, (metric, title) in enumerate(panels, start=1):
        fig.add_trace(go.Bar(
            x=methods,
            y=[per_method[m][metric]['mean'] for m in methods],
            error_y=dict(type='data', array=[per_method[m][metric]['stderr'] for m in methods]),
            name=title,
            marker_color='steelblue',
            showlegend=False,
            hovertemplate='<b>%{x}</b><br>' + title + ': %{y:.4g}<extra></extra>'
        ), row=1, col=col)

    fig.update_layout(
        title="Relighting Methods Compared",
        template='plotly_white',
        height=400,
    )

    return fig


def write_chart(fig: go.Figure, path: Union[str, Path]) -> None:
    """Write a figure as a standalone HTML page"""
    fig.write_html(str(path), include_plotlyjs='cdn', full_html=True)
