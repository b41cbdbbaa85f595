"""The four-agent 2x2 example network, shipped as the ``paper-example`` preset."""
import numpy as np

from .lmi import ConeBound, DesignCertificate, HyperbolicPlant

PLANT = {
    "S": [[2.0, 0.0], [0.0, float(np.sqrt(2.0))]],
    "E": [[-0.1], [0.0]],
    "B": [[2.0], [0.0]],
    "H": [[0.0, 1.0], [-1.0, 0.0]],
    "Q": [[1.0, 0.0]],
    "G12": [[1.0]],
    "G22": [[-2.0]],
    "nonlinearity": "tanh",
}

LAPLACIAN = [
    [0.0, 0.0, 0.0, 0.0],
    [-1.0, 2.0, -1.0, 0.0],
    [0.0, -1.0, 1.0, 0.0],
    [-1.0, 0.0, 0.0, 1.0],
]

# reported certificate, rounded as published
MU = 0.1474
W_DIAG = (11.799, 16.273)
K = [[0.0, -0.309]]
SIGMA = 79.6164

SNAPSHOT_TIMES = (0.0, 2.0, 5.0, 20.0)
T_FINAL = 20.0


def example_plant() -> HyperbolicPlant:
    return HyperbolicPlant(
        S=PLANT["S"],
        E=PLANT["E"],
        B=PLANT["B"],
        H=PLANT["H"],
        Q=PLANT["Q"],
        cone=ConeBound(PLANT["G12"], PLANT["G22"]),
        nonlinearity=PLANT["nonlinearity"],
    )


def example_laplacian() -> np.ndarray:
    return np.array(LAPLACIAN)


def reported_certificate() -> DesignCertificate:
    return DesignCertificate.from_gain(K, W_DIAG, SIGMA, MU)
