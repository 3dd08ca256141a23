# Calculators: G-function, lattice, mollifier, convergence orders
