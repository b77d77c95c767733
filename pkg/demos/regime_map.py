"""
Where the closed form holds: an accuracy map over rate and conductivity
=======================================================================

Scans C-rate and electronic conductivity at the baseline salt
concentration.  Each point compares the corrected closed-form discharge
with the full finite-volume solver and reports the voltage RMSE next to
the validity ratio of the scaling analysis (ratio < 1 means the lean
reduction should hold).  Well-wired fast kinetics keep the error below
a few tens of millivolts; the slow-wiring, high-rate corner drifts off.
"""

from pathlib import Path

import dataclasses

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from leanpet.cli import default_config_path, load_config
from leanpet import Protocol, rmse, simulate_discharge, solve_nonlinear

rc = load_config(default_config_path())
kin, ocp = rc.kin, rc.ocp

rates = (0.5, 1.0, 2.0)
sigmas = (0.01, 0.1, 1.0)

rmse_map = np.zeros((len(sigmas), len(rates)))
ratio_map = np.zeros_like(rmse_map)
print("sigma_s S/m   rate    RMSE        validity ratio")
for i, sigma in enumerate(sigmas):
    cell = dataclasses.replace(rc.cell, sigma_s_spm=sigma)
    for j, c_rate in enumerate(rates):
        curve = simulate_discharge(cell, kin, ocp, c_rate=c_rate, corrected=True)
        protocol = Protocol(
            "current", curve.current_apm2, 1.15 * curve.t_s[-1], cutoff_v=3.0
        )
        reference = solve_nonlinear(cell, kin, ocp, protocol, grid=40)
        gap = rmse(curve.t_s, curve.voltage_v, reference.t_s, reference.voltage_v)
        ratio = curve.validity_ratio_max
        rmse_map[i, j] = gap
        ratio_map[i, j] = ratio
        flag = "" if ratio < 1.0 else "   <- outside"
        print(f"{sigma:>9.2f}   {c_rate:>4.1f}C   {1e3 * gap:>7.1f} mV   {ratio:>8.3f}{flag}")

out = Path("demo_output")
out.mkdir(exist_ok=True)

fig, ax = plt.subplots(figsize=(6, 4.5))
im = ax.imshow(1e3 * rmse_map, origin="lower", cmap="viridis", aspect="auto")
for i in range(len(sigmas)):
    for j in range(len(rates)):
        marker = "x" if ratio_map[i, j] >= 1.0 else ""
        ax.text(
            j,
            i,
            f"{1e3 * rmse_map[i, j]:.0f}{marker}",
            ha="center",
            va="center",
            color="white",
            fontsize=9,
        )
ax.set_xticks(range(len(rates)), [f"{r:g}C" for r in rates])
ax.set_yticks(range(len(sigmas)), [f"{s:g}" for s in sigmas])
ax.set_xlabel("C-rate")
ax.set_ylabel(r"$\sigma_s$ / S m$^{-1}$")
ax.set_title("Closed-form error / mV ('x' marks validity ratio >= 1)")
fig.colorbar(im, ax=ax, label="RMSE / mV")
fig.tight_layout()
fig.savefig(out / "regime_map.png", dpi=150)
print(f"figure written to {out / 'regime_map.png'}")
