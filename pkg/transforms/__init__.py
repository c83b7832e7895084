"""Bernstein and generating-function transforms, and Hamilton-Jacobi solvers on them."""
