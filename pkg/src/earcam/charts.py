"""Static SVG charts for the report path. Output is byte-reproducible."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

from .geometry import DesignSpaceRow
from .power import LifeRow


def _figure():
    # Import here so chart-free commands skip the matplotlib startup cost.
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # Hashed ids inside the SVG are salted; a fixed salt plus no Date field
    # makes repeated renders byte-identical.
    plt.rcParams["svg.hashsalt"] = "earcam"
    return plt


def _save(fig, path: str | Path) -> None:
    fig.savefig(Path(path), format="svg", metadata={"Date": None})


def save_blind_spot_chart(
    rows: Sequence[DesignSpaceRow], path: str | Path, harmon_cm: float = 36.8
) -> None:
    """Blind-spot length against camera yaw, with the working distance marked."""
    plt = _figure()
    finite = [r for r in rows if math.isfinite(r.blind_spot)]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(
        [r.theta for r in finite],
        [r.blind_spot for r in finite],
        marker="o",
        color="#1f6f8b",
    )
    ax.axhline(
        harmon_cm, linestyle="--", color="#99583a", linewidth=1.0,
        label=f"typical working distance ({harmon_cm:g} cm)",
    )
    ax.set_xlabel("camera yaw (degrees)")
    ax.set_ylabel("blind-spot length (cm)")
    ax.set_title("Near-field blind spot vs camera yaw")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def save_battery_chart(rows: Sequence[LifeRow], path: str | Path) -> None:
    """Battery life against query rate."""
    plt = _figure()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(
        [r.queries_per_hour for r in rows],
        [r.life_h for r in rows],
        marker="s",
        color="#1f6f8b",
    )
    ax.set_xlabel("queries per hour")
    ax.set_ylabel("battery life (h)")
    ax.set_title("Battery life vs query rate")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)
