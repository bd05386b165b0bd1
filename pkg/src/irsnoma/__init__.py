"""Link-level simulator for an IRS-aided MISO-NOMA downlink.

Modules
-------
numerics    complex linear algebra, seeded sub-stream RNG
channel     geometry, path loss, Rician fading, cascaded effective channels
mobility    initial-position sampling, random-walk truth, LSTM prediction
clustering  K-means-seeded isotropic GMM and capacity-limited assignment
noma        reflection, zero-forcing precoding, SIC rates, decoding orders
rl          DQN and tabular Q-learning over phase/power actions
sim         scenario config, per-seed pipeline, sweeps, CSV output
"""

__version__ = "0.1.0"
