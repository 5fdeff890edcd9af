import pytest

import tinyckpt


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    """A tiny randomly initialized encoder plus tokenizer saved to disk."""
    return tinyckpt.build_checkpoint(tmp_path_factory.mktemp("ckpt"))
