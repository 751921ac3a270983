"""Model-driven engineering toolchain for hybrid assembly systems.

Product structure, platform and assembly-process models are checked against
their meta-models, lowered from a platform-independent process model to a
scheduled platform-specific one, and evaluated by discrete-event simulation.
"""

__version__ = "0.1.0"
