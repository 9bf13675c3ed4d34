"""Rheology of semidilute swimmer suspensions: dipole hydrodynamics, orientation kinetics and viscosity asymptotics."""

__version__ = "0.1.0"
