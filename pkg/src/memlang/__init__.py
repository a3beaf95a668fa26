"""memlang: a minimal probabilistic language with fresh names and memoized
random boolean functions.

The package provides three interchangeable semantics plus checkers that
compare them:

* ``memlang.opsem``  -- small-step reduction over configurations, a seeded
  sampler, and an exhaustive exact big-step enumerator;
* ``memlang.denot``  -- a compositional evaluator over totally populated
  memo-table worlds (finite bipartite graphs), with exact rational weights;
* ``memlang.progen`` -- a stratified generator of well-typed programs and the
  law suites (memoization, dataflow, monad laws) built on it.
"""

__version__ = "0.1.0"
