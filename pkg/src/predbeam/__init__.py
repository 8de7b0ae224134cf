"""Radar-assisted predictive beamforming for vehicle tracking.

An extended Kalman filter tracks each vehicle from the echoes of its own
downlink beam, and a power allocator trades the predicted tracking bound
against a sum-rate floor.
"""

__version__ = "0.1.0"
