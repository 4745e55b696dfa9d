"""Value-driven hindsight modelling (HiMo) at desk scale."""
__version__ = "0.1.0"
