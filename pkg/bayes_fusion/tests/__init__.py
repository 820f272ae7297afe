"""
Test configuration for pytest.
"""
