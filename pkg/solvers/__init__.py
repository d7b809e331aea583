# solvers package