"""cartanheis: moving-frame invariants of pseudohermitian submanifolds of H_n.

The package computes, over chart lattices and with exact forward-mode
derivatives, the complete invariant set of an immersed pseudohermitian
submanifold of the Heisenberg group (induced structure, second fundamental
form, normal connection, fundamental vector field), verifies the structure
and restriction identities tying ambient and intrinsic data together,
reintegrates surfaces from intrinsic data, and runs the flat/sphere rigidity
detectors.  See the README for the command-line entry points.
"""

__version__ = "0.1.0"

__all__ = ["heis", "psh", "jets", "dsl", "darboux", "invariants",
           "reconstruct", "rigidity", "report", "errors"]
