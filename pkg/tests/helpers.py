"""Shared test helpers."""
import numpy as np

from barrierflow.kernels import svec


def random_interior(kernel_id: str, rng, n: int = 4) -> np.ndarray:
    """Interior point of the kernel's domain, kept away from the boundary."""
    if kernel_id == "ball":
        g = rng.standard_normal(n)
        return g / np.linalg.norm(g) * rng.uniform(0.0, 0.9)
    if kernel_id == "logdet":
        B = rng.standard_normal((3, 3))
        return svec(B @ B.T + 0.5 * np.eye(3))
    return rng.uniform(0.2, 2.0, n)
