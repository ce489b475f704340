# Numerical and I/O utilities
