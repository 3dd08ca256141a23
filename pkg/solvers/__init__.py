# Solvers module
