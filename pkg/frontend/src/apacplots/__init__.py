"""Plotting companion for solver CSV exports.

Consumes the trajectory and history CSV files written by the solver CLI and
renders the standard figures: time-colored trajectory scatters (blue at the
start, red at the end) and log-scale training curves.  Everything runs
headlessly and never recomputes solver quantities, with one documented
exception: obstacle regions are re-evaluated from the documented cost
formulas so the CSV schema stays minimal.
"""

__version__ = "0.1.0"
