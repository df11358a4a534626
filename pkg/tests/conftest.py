import pytest

from phlim.kspace import CartesianKGrid, SphericalKGrid
from phlim.states import GaussianPacketSpec, make_gaussian_packet

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)


# Reference values from an independent 30-digit radial quadrature (mpmath)
# of the isotropic Gaussian with sigma = 1: ratio -> (energy, mass, beta).
GAUSSIAN_ORACLE = {
    2: (2.2498085889696896788, 1.0303585235255668418, 0.88896451449494612983),
    3: (3.16666633995214452, 1.0137927345300472831, 0.94736851879549039422),
    5: (5.0999999999999943883, 1.0049875621120605495, 0.98039215686274617679),
    10: (10.05, 1.0012492197250392864, 0.99502487562189054726),
    20: (20.025, 1.0003124511871278312, 0.9987515605493133583),
}


def gaussian(ratio, sigma=1.0, r0=(0.0, 0.0, 0.0), axis=(0.0, 0.0, 1.0), **grid_kw):
    import numpy as np
    k0 = tuple(ratio * sigma * np.asarray(axis, dtype=float) / np.linalg.norm(axis))
    spec = GaussianPacketSpec(k0, sigma, r0)
    return make_gaussian_packet(spec, SphericalKGrid.for_gaussian(k0, sigma, **grid_kw))


@pytest.fixture(scope="session")
def gaussian10():
    return gaussian(10)


@pytest.fixture(scope="session")
def small_cartesian_packet():
    # 64^3 box, cheap enough for unit tests of the detection pipeline
    spec = GaussianPacketSpec((0.0, 0.0, 5.0), 1.0)
    return make_gaussian_packet(spec, CartesianKGrid.for_gaussian(spec.k0, 1.0, n=64))

