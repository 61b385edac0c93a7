"""
This file is required by pytest, otherwise import errors will pop up:

project/core/tests/test_mapping.py:18: in <module>
    from .conftest import port, scripted_subtest
E   ImportError: attempted relative import with no known parent package
"""
