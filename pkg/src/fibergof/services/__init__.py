"""Service layer package for fibergof.

Contains the fitting, sampling, testing and enumeration pipeline plus file
naming and storage.
"""
