"""
Error against market penetration
================================

Sweep a small (lambda, p) grid over a few seeds and chart how the estimation
error falls as more vehicles are connected.
"""

from pathlib import Path

from cvqueue import grid_sweep
from cvqueue.plots import plot_error_vs_p

out = Path("tutorial_output")
reports = grid_sweep([0.190, 0.267], [0.05, 0.1, 0.2, 0.4, 0.8], seeds=[0, 1, 2], cycles=100)

print(f"{'cell':18s} {'KNOWN':>6s} {'QLE2':>6s} {'KF':>6s} {'PF':>6s}")
cells = {}
for r in reports:
    cells.setdefault(r.config_id, {})[r.estimator_id] = r.sqrt_vd
for cell, row in cells.items():
    print(f"{cell:18s} " + " ".join(f"{row[k]:6.2f}" for k in ("KNOWN", "QLE2", "KF", "PF")))

path = plot_error_vs_p(reports, out / "error_vs_p.svg")
print("chart written to", path)
