"""PNG figures rendered next to an experiment's CSV."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import ExperimentResult  # noqa: E402

_YLABEL = {
    "feasibility": "Proportion of feasible tasks",
    "admission": "Proportion of admitted tasks",
    "eta": r"Maximum relative delay $\eta$",
}
_XLABEL = {
    "tau_max": r"Maximum delay $\tau^{max}$ [s]",
    "target_pfa": "Target false-alarm probability",
    "p_i": "Device transmit power [dBm]",
}


def plot_result(result: ExperimentResult, path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    if result.name == "auth-roc":
        _plot_roc(result, ax)
    else:
        _plot_summary(result, ax)
    ax.grid(True, alpha=0.3, linestyle=":")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _plot_summary(result: ExperimentResult, ax) -> None:
    x_name = result.rows[0][1]
    for series in result.series():
        x = result.column("sweep_value", series)
        if result.name == "admission":
            ax.semilogx(x, result.column("legit_admission_mean", series), "o-",
                        label=f"legitimate, {series}")
            ax.semilogx(x, result.column("malicious_admission_mean", series), "s--",
                        label=f"malicious, {series}")
        elif result.name == "eta":
            ax.plot(x, result.column("eta_mean", series), "o-", label=series)
        else:
            y = result.column("feasible_mean", series)
            ci = result.column("feasible_ci", series)
            ax.errorbar(x, y, yerr=ci, marker="o", capsize=2, label=series)
    ax.set_xlabel(_XLABEL.get(x_name, x_name))
    ax.set_ylabel(_YLABEL.get(result.name, ""))


def _plot_roc(result: ExperimentResult, ax) -> None:
    theta = result.column("theta")
    order = np.argsort(theta)
    for name, marker in (("pfa", "o"), ("pd", "s")):
        ax.plot(theta[order], result.column(f"{name}_analytic")[order], "-",
                label=f"{name.upper()} closed form")
        ax.plot(theta[order], result.column(f"{name}_empirical")[order], marker,
                linestyle="none", label=f"{name.upper()} Monte Carlo")
    ax.set_xlabel(r"Threshold $\theta$")
    ax.set_ylabel("Probability")
