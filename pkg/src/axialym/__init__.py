"""Smoothed white-noise Yang-Mills fields on the plane in axial gauge.

Modules: ``liealg`` (su(n) basis, exp), ``spectral`` (torus grid, noise,
Littlewood-Paley), ``curves`` (polylines, lassos), ``ecal`` (the sweep
operator E_c), ``roughpath`` (step-2 lifts), ``transport`` (holonomies and
the Brownian oracle), ``lab`` (experiments) and ``cli``.
"""
__version__ = "0.1.0"
