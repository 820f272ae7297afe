"""
Exporters package initialization.
"""
