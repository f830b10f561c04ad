"""Deterministic software twin of a tendon-driven five-finger soft hand.

Subsystems:

* ``hand``     -- tendon mechanism, finger kinematics, fingertip camera poses
* ``control``  -- quadrature encoder, DC motor plant, cascaded PID, buttons
* ``framing``  -- camera-interface packet framing with CRC and resync
* ``mux``      -- bounded-buffer multiplexer with bandwidth accounting, faults
* ``segnet``   -- encoder-decoder segmentation CNN, training, quantization
* ``grasp``    -- synthetic grasp dataset generator and evaluation harness
* ``cli``      -- command-line entry point, including the live serve mode
"""

__version__ = "0.1.0"
