"""Light trapping in coupled channel waveguides over a shared slab continuum.

Layers: :mod:`geometry` (structure, grid, config), :mod:`modes` (guided
modes, continuum, golden-rule decay), :mod:`bpm` (full-wave propagation),
:mod:`cmt` (coupled-mode S-matrix and pulses), :mod:`photons` (photon
counting), :mod:`hom` (two-photon coincidences), :mod:`cli` (runs and
validation).
"""

__version__ = "0.1.0"
