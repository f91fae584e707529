"""Static SVG plots for reports: tail-index histogram and prediction
series overlay.  Matplotlib is imported lazily so the rest of the package
stays import-light."""

from __future__ import annotations

from .errors import InvalidInputError


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def evi_histogram_svg(summary, path) -> None:
    """Histogram of per-point tail indices from an EviSummary."""
    plt = _pyplot()
    edges = [i * summary.bin_width for i in range(len(summary.bin_counts) + 1)]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(
        edges[:-1],
        summary.bin_counts,
        width=summary.bin_width,
        align="edge",
        color="#4878a8",
        edgecolor="white",
    )
    if summary.overflow:
        ax.bar(edges[-1], summary.overflow, width=summary.bin_width,
               align="edge", color="#a84848", edgecolor="white")
        ax.text(edges[-1], summary.overflow, " >1", va="bottom", fontsize=8)
    ax.axvline(summary.median, color="black", linestyle=":", linewidth=2,
               label=f"median = {summary.median:.2f}")
    ax.set_xlabel("extreme value index")
    ax.set_ylabel("count")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def prediction_series_svg(observed, table, path) -> None:
    """Observed series with each (method, level) prediction overlaid."""
    if len(observed) != len(table):
        raise InvalidInputError("observed length does not match the table")
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(9, 4.5))
    xs = range(len(table))
    ax.plot(xs, observed, color="0.3", linewidth=0.7, label="observed")
    styles = {"conventional": "--", "extremal": "-"}
    for method in table.methods:
        for level in table.levels:
            ax.plot(
                xs,
                table.series(method, level),
                styles.get(method, "-"),
                linewidth=0.9,
                label=f"{method} {level}",
            )
    ax.set_xlabel("time step")
    ax.set_ylabel("value")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
