"""Report figures written straight to files (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .ephe import LearningResult  # noqa: E402
from .region import RegionModel  # noqa: E402
from .sweep import SweepRecord, success_table  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}
CMAP = "viridis"


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def success_polar(records: Sequence[SweepRecord], design: str, path: str | Path) -> Path:
    """Mean four-leg success over (V, phi), drawn as a quarter polar map."""
    table = {(v, a): s for (n, v, a), s in success_table(records).items() if n == design}
    if not table:
        raise ValueError(f"no records for design {design!r}")
    with plt.rc_context(STYLE):
        fig = plt.figure(figsize=(4.2, 4.0))
        ax = fig.add_subplot(projection="polar")
        V = np.array([k[0] for k in table])
        phi = np.radians([k[1] for k in table])
        sc = ax.scatter(phi, V, c=list(table.values()), cmap=CMAP, vmin=0, vmax=1, s=60)
        ax.set_thetamin(0)
        ax.set_thetamax(90)
        ax.set_title(f"{design}: four-leg success")
        ax.set_xlabel("V [m/s]")
        fig.colorbar(sc, ax=ax, shrink=0.7, label="success rate")
    return _save(fig, path)


def _points(model: RegionModel):
    X = model.raw_coords
    s = np.array([p.success for p in model.points])
    return X, s


def state_space(model: RegionModel, path: str | Path) -> Path:
    """Trigger-time (V_x, V_z, d_ceiling) coloured by success."""
    X, s = _points(model)
    vx = -X[:, 1] * X[:, 2]
    vz = X[:, 0] * X[:, 2]
    with plt.rc_context(STYLE):
        fig = plt.figure(figsize=(5, 4))
        ax = fig.add_subplot(projection="3d")
        sc = ax.scatter(vx, vz, X[:, 2], c=s, cmap=CMAP, vmin=0, vmax=1)
        ax.set_xlabel("V_x [m/s]")
        ax.set_ylabel("V_z [m/s]")
        ax.set_zlabel("d_ceiling [m]")
        fig.colorbar(sc, ax=ax, shrink=0.6, label="success rate")
    return _save(fig, path)


def optical_flow_space(model: RegionModel, path: str | Path, with_distance: bool = False) -> Path:
    """Trigger cues in (OF_y, RREV), optionally lifted by d_ceiling."""
    X, s = _points(model)
    with plt.rc_context(STYLE):
        fig = plt.figure(figsize=(5, 4))
        if with_distance:
            ax = fig.add_subplot(projection="3d")
            sc = ax.scatter(X[:, 1], X[:, 0], X[:, 2], c=s, cmap=CMAP, vmin=0, vmax=1)
            ax.set_zlabel("d_ceiling [m]")
        else:
            ax = fig.add_subplot()
            sc = ax.scatter(X[:, 1], X[:, 0], c=s, cmap=CMAP, vmin=0, vmax=1)
        ax.set_xlabel("OF_y [1/s]")
        ax.set_ylabel("RREV [1/s]")
        fig.colorbar(sc, ax=ax, shrink=0.7, label="success rate")
    return _save(fig, path)


def moment_map(model: RegionModel, path: str | Path) -> Path:
    """Flip moment of the in-region points over (OF_y, RREV, d_ceiling)."""
    pts = model.region_points
    with plt.rc_context(STYLE):
        fig = plt.figure(figsize=(5, 4))
        ax = fig.add_subplot(projection="3d")
        if pts:
            X = np.array([p.coords for p in pts])
            m = np.array([p.flip_moment * 1e3 for p in pts])
            sc = ax.scatter(X[:, 1], X[:, 0], X[:, 2], c=m, cmap="plasma")
            fig.colorbar(sc, ax=ax, shrink=0.6, label="M_yd [N*mm]")
        ax.set_xlabel("OF_y [1/s]")
        ax.set_ylabel("RREV [1/s]")
        ax.set_zlabel("d_ceiling [m]")
        ax.set_title(f"policy region (tau={model.tau:g})")
    return _save(fig, path)


def learning_curve(result: LearningResult, path: str | Path) -> Path:
    """Distribution mean +- sigma per episode and every rollout reward."""
    mu = np.array([d.mean for d in result.distributions])
    sd = np.array([d.sigma for d in result.distributions])
    ep = np.arange(len(mu))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(5, 6), sharex=True)
        for ax, i, label in ((axes[0], 0, "RREV_c [1/s]"), (axes[1], 1, "M_yd [N*mm]")):
            ax.plot(ep, mu[:, i], color="k")
            ax.fill_between(ep, mu[:, i] - sd[:, i], mu[:, i] + sd[:, i], alpha=0.3)
            ax.set_ylabel(label)
        for k, episode in enumerate(result.history):
            r = [rec.reward.total for rec in episode]
            ok = [rec.success for rec in episode]
            axes[2].scatter(np.full(len(r), k + 0.5), r, c=["tab:green" if s else "tab:red"
                                                             for s in ok], s=12)
        axes[2].set_ylabel("reward")
        axes[2].set_xlabel("episode")
    return _save(fig, path)


def trajectory(rows: Sequence[dict], path: str | Path) -> Path:
    """Height, inversion angle and latched-leg count over one rollout."""
    t = np.array([r["t"] for r in rows])
    d = np.array([r["d_ceiling"] for r in rows])
    # inversion from the quaternion: cos(theta) = 1 - 2(qx^2 + qy^2)
    inv = np.degrees(np.arccos(np.clip(
        [1 - 2 * (r["qx"] ** 2 + r["qy"] ** 2) for r in rows], -1, 1)))
    legs = np.array([r["n_latched"] for r in rows])
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(5, 5), sharex=True)
        axes[0].plot(t, d)
        axes[0].set_ylabel("d_ceiling [m]")
        axes[1].plot(t, inv)
        axes[1].set_ylabel("inversion [deg]")
        axes[2].step(t, legs, where="post")
        axes[2].set_ylabel("legs latched")
        axes[2].set_xlabel("t [s]")
        flip = [r["t"] for r in rows if r["flip"]]
        if flip:
            for ax in axes:
                ax.axvline(flip[0], color="k", lw=0.6, ls="--")
    return _save(fig, path)


def design_comparison(records: Sequence[SweepRecord], path: str | Path) -> Path:
    """Mean success against approach speed, one line per design."""
    table = success_table(records)
    designs = sorted({k[0] for k in table})
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for name in designs:
            speeds = sorted({k[1] for k in table if k[0] == name})
            means = [np.mean([s for (n, v, a), s in table.items() if n == name and v == sp])
                     for sp in speeds]
            ax.plot(speeds, means, marker="o", label=name)
        ax.set_xlabel("V [m/s]")
        ax.set_ylabel("mean success")
        ax.set_ylim(-0.02, 1.02)
        ax.legend()
    return _save(fig, path)


__all__ = ["success_polar", "state_space", "optical_flow_space", "moment_map",
           "learning_curve", "trajectory", "design_comparison"]
