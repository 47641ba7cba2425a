import pytest

from fmhca import tensor


@pytest.fixture
def f64():
    """Run a test in 64-bit mode (needed for tight gradient tolerances)."""
    prev = tensor.get_precision()
    tensor.set_precision("f64")
    yield
    tensor.set_precision(prev)


@pytest.fixture
def f32():
    prev = tensor.get_precision()
    tensor.set_precision("f32")
    yield
    tensor.set_precision(prev)
