"""Byzantine-robust federated gradient aggregation toolkit.

Submodules:
    gradients    vector statistics shared by attacks, defenses, and verifiers
    attacks      gradient-crafting strategies for the malicious cohort
    aggregators  baseline robust aggregation rules
    clustering   mean-shift / 2-means clustering over small feature rows
    signguard    sign-statistics filtering pipeline
    datasets     synthetic blob generator and IDX image reader
    simulation   synchronous federated training loop
    analysis     numeric verifiers for the attack/aggregation theory
    cli          byzsim command line entry point
"""

__version__ = "0.1.0"
