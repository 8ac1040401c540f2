"""Thermodynamically consistent simulation and learning of open N-level systems.

The package has two lanes that share the same Bloch-vector conventions:

* ``basis`` / ``dynamics`` -- exact reference dynamics of the nonlinear
  thermodynamic master equation (and its Lindblad counterpart) in NumPy.
* ``model`` / ``training`` -- a learnable, structure-preserving surrogate of the
  same vector field in JAX, trained by backpropagation through a fixed-step
  integrator.

``datasets``, ``metrics``, ``experiments`` and ``cli`` provide trajectory I/O,
evaluation metrics, the canonical experiment presets, and the command-line
front end.
"""

__version__ = "0.1.0"

from . import basis, errors  # noqa: F401
