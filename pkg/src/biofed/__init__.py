"""biofed: desk-scale federated training of a small CNN classifier.

Site clients train on private image shards, a server synchronizes rounds and
aggregates updates into a global model, evaluation produces confusion-matrix
reports, and classified samples feed a digital-twin record registry.
"""

__version__ = "0.1.0"
