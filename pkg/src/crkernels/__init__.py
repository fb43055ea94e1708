"""Integral kernels for the tangential Cauchy-Riemann operator on quadric CR models.

The package splits into an exact layer and a numeric layer.  The exact layer
(`simplicial`, `polyform`, `barrier`, `kernels`) builds barrier functions and
Koppelman-type kernels with rational coefficients and verifies the defining
identities with zero tolerance.  The numeric layer (`quadrature`) integrates
the same kernels on a model manifold to probe singularity scaling, Hoelder
continuity, and the solution homotopy.  `cli` is the batch front end.
"""

__version__ = "0.1.0"
