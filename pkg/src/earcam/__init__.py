"""earcam: desk-scale models of camera-equipped wireless earbuds.

Subpackages cover the binocular camera geometry, synthetic imaging, the
device-to-host wire protocol with link timing, the power/battery model,
opportunistic image stitching, and the end-to-end query latency pipeline.
Everything is deterministic: fixed inputs and seeds give bit-identical
outputs, which the test suite relies on.
"""

__version__ = "0.1.0"
