"""Boundary-coupling gain design and simulation for networks of hyperbolic PDEs."""
from .graph import LaplacianSpectrum, WeightedDigraph, laplacian, spectrum, sync_projector
from .lmi import AnalysisCertificate, ConeBound, DesignCertificate, HyperbolicPlant
from .sdp import design_gain, solve_feasibility, verify_analysis, verify_design
from .sim import Grid, simulate

__version__ = "0.1.0"
