import numpy as np
import pytest
from hypothesis import strategies as st

from voyager_sim.params import LayeredParams


def params_strategy(max_layers: int = 3, max_len: int = 6, nonzero: bool = False):
    """Random small models; matrices and vectors mixed."""
    elements = st.floats(
        min_value=-100.0, max_value=100.0, allow_nan=False, allow_infinity=False, width=32
    )

    def build(shapes_and_values):
        blocks = []
        for shape, values in shapes_and_values:
            arr = np.asarray(values, dtype=np.float64).reshape(shape)
            if nonzero and np.linalg.norm(arr) == 0.0:
                arr = arr + 1.0
            blocks.append(arr)
        return LayeredParams(tuple(blocks))

    def shapes_to_block(shape):
        size = int(np.prod(shape))
        return st.tuples(st.just(shape), st.lists(elements, min_size=size, max_size=size))

    shape = st.one_of(
        st.tuples(st.integers(1, max_len)),
        st.tuples(st.integers(1, max_len), st.integers(1, max_len)),
    )
    return st.lists(shape, min_size=1, max_size=max_layers).flatmap(
        lambda shapes: st.tuples(*[shapes_to_block(s) for s in shapes]).map(build)
    )


def pair_strategy(max_layers: int = 3, max_len: int = 6, nonzero: bool = False):
    """Two shape-compatible random models."""
    elements = st.floats(
        min_value=-100.0, max_value=100.0, allow_nan=False, allow_infinity=False, width=32
    )

    def build(args):
        shapes, values_a, values_b = args
        total = sum(int(np.prod(s)) for s in shapes)
        assert len(values_a) == len(values_b) == total

        def assemble(values):
            blocks, offset = [], 0
            for shape in shapes:
                size = int(np.prod(shape))
                arr = np.asarray(values[offset:offset + size], dtype=np.float64).reshape(shape)
                if nonzero and np.linalg.norm(arr) == 0.0:
                    arr = arr + 1.0
                blocks.append(arr)
                offset += size
            return LayeredParams(tuple(blocks))

        return assemble(values_a), assemble(values_b)

    shape = st.one_of(
        st.tuples(st.integers(1, max_len)),
        st.tuples(st.integers(1, max_len), st.integers(1, max_len)),
    )

    def with_values(shapes):
        total = sum(int(np.prod(s)) for s in shapes)
        values = st.lists(elements, min_size=total, max_size=total)
        return st.tuples(st.just(shapes), values, values).map(build)

    return st.lists(shape, min_size=1, max_size=max_layers).flatmap(with_values)


@pytest.fixture
def tiny_scenario():
    """Small fast scenario config for engine tests."""
    from voyager_sim.config import ScenarioConfig
    from voyager_sim.learning import SyntheticTask

    return ScenarioConfig(
        task=SyntheticTask(samples_per_class=60),
        rounds=3,
        master_seed=11,
    )
