"""Diagram census and the first-order kinetic limit.

Order one has 72 admissible diagrams, order two 57600.  The highlighted
second-order diagram is subleading.  At first order the diagram sum approaches
the first Taylor term of the Boltzmann solution as eps shrinks.  The ordering
needs the shell width eps/t to reach the resolution floor of the grid, which
takes L=12 (about a minute); on smaller grids the gaps grow instead.
"""

from phononkin.diagrams import census, census_summary, example_diagram
from phononkin.experiments import DiagramPlan, run_diagram_vs_series

for n in (1, 2):
    recs = census(n)
    print(census_summary(recs))
    if n == 2:
        ex = example_diagram()
        print("example:", next(r.line() for r in recs if r.diagram == ex))

rep = run_diagram_vs_series(DiagramPlan(L=12, eps=(0.2, 0.1, 0.05), t=0.02, census=False))
for e, g in zip(rep.eps, rep.gaps):
    print(f"eps={e:<5} sup|W1_eps - W1| = {g:.3e}")
print("monotone:", rep.monotone)
