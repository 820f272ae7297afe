"""
Services package for the fusion engine.
"""
