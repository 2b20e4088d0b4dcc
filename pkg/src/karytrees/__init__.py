"""k-ary growing trees: simulation, exact metric/measure computations, and
statistical verification of their scaling laws.

Subpackages by concern:

  treegrow     growing k-ary trees, edge labels, pruning, split statistics
  marginals    finite marginal trees, stick-breaking embeddings, projections
  metricspace  path/Hausdorff/Prokhorov distances, GHP upper bounds
  crp          two-parameter Chinese restaurant processes and the two
               tree-to-restaurant correspondences
  analytics    closed forms: split pmf, dislocation densities, Mittag-Leffler
               moments, simplex quadrature, marking kernel
  harness      exact enumeration oracles and Monte Carlo experiments
  cli          command-line entry point
"""

__version__ = "0.1.0"
