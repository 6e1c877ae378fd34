"""Numerical engine for metric geometries on tangent bundles.

From a generating function or metric ansatz the package computes nonlinear
connections, adapted linear connections, torsion, curvature and
field-equation residuals; constructs exact solutions by quadrature; builds
trapping-profile metrics; and checks the dispersion-relation correspondence.
"""

__version__ = "0.1.0"

from .taylor import (DomainBox, DomainError, DegenerateMetricError, ShapeError,
                     TSeries, UnsupportedOrderError)
from .fields import (ConstField, DerivField, Field, FuncField, Jet, MapField,
                     RestrictedField, directional_derivative, fabsg, fcos,
                     fexp, flog, fsin, fsqrt, jet)
from .expr import ExprField, ExprError, validate_tree
from .quadrature import CumulativeIntegral, QuadratureError, QuadratureField, integrate
