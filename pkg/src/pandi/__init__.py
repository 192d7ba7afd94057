"""Passivity-and-immersion controller synthesis.

Submodules:
    expr      symbolic expression engine
    sysmodel  control-affine systems, target dynamics, control laws
    manifold  implicit manifolds, metric, tangent splitting, integrability
    synth     passive output, storage, the synthesis formula, feedforward
    psf       strict-feedback and nontriangular synthesis
    sim       fixed and adaptive integrators, decay fitting, orbit detection
    catalog   worked systems with reference laws and expected behaviour
    cli       command line front end
"""

__version__ = "0.1.0"
