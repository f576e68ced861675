"""Lab-frame simulation of pulsed NV-center quantum sensing.

nvpulse simulates the full time evolution of an NV electron spin coupled to
its intrinsic nitrogen and an optional target nuclear spin, driven by
microwave pulse sequences (Rabi, Hahn echo, XY8 and randomized variants)
without the rotating-wave approximation.  On top of the propagation engine it
provides spectral analysis of the resulting sweeps, hyperfine-matrix
inversion by grid search, a content-addressed simulation dataset, and a
CLI + HTTP service for interactive disambiguation of ambiguous resonances.

Subpackages
-----------
spincore     spin operators, tensor embedding, density-matrix primitives
hamiltonian  system description and every static / time-dependent term
evolution    exact and stepwise propagators, observables
sequences    pulse-protocol compilation and pi-pulse calibration
analysis     sweeps, FFT spectra, envelope / ESEEM fits, trace comparison
fitting      hyperfine-matrix grid search from measured ESEEM frequencies
dataset      batch generation, storage, indexing and matching of records
cli          command-line entry points
service      HTTP JSON API used by the browser UI
"""

__version__ = "0.1.0"

ENGINE_VERSION = __version__
