"""Coupled dynamics and dual-camera visual servoing for an aerial continuum arm.

The package simulates a tendon-driven flexible rod rigidly mounted under an
underactuated quadrotor.  Everything is deterministic: the world is analytic
(no physics engine, no rendered pixels), camera measurements are synthesized
by projection, and all integrators are fixed-step.
"""

__version__ = "0.1.0"
