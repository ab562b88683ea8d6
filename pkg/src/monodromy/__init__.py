"""Numerical Birkhoff theory for abelian additive difference equations.

The package computes canonical fundamental solutions and connection
matrices of systems phi(u+1) = A(u) phi(u) with rational A, solves the
abelian inverse monodromy problem, and uses both directions to move
module data between the Yangian-type (rational, additive) and quantum
loop-type (trigonometric, multiplicative) presentations, q-characters
included.
"""

__version__ = "0.1.0"
