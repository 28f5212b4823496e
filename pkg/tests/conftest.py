import numpy as np
import pytest

from annealed_langevin.targets import GaussianMixture, paper_mixture_1d, paper_mixture_2d


@pytest.fixture
def mix1d():
    return paper_mixture_1d()


@pytest.fixture
def mix2d():
    return paper_mixture_2d()


@pytest.fixture
def std_normal():
    return GaussianMixture([1.0], [[0.0]], [[1.0]])


def norm_pdf(x, m, s):
    return np.exp(-0.5 * ((x - m) / s) ** 2) / (s * np.sqrt(2 * np.pi))
