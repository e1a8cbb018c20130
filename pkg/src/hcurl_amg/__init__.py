"""AMG for 2D H(curl): sparse approximate ideal interpolation with
refinement-based and fully algebraic coarsening, matching smoothers, and a
benchmark/verification driver."""

__version__ = "0.1.0"
