"""Heat transport and temperature-dependent flow in a thin rough layer.

The package solves the resolved layer model on eps-scale meshes, the cell
problems giving effective coefficients, and the homogenized interface
model, and compares them through corrector reconstruction.
"""
__version__ = "0.1.0"
