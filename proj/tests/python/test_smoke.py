import buckrl
def test_import():
    assert buckrl.__version__
