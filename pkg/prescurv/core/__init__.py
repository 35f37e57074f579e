"""Pipeline stages: curves and quadrature, nonflat repair, density, loops, solver, pipeline, verification."""
