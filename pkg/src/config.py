"""
Configuration settings for the message-passing lab
"""
import os

# Numeric tolerances
SYMMETRY_TOL = 1e-10         # Max |M - M^T| entry accepted as symmetric
ORTHONORMAL_TOL = 1e-10      # Max |U^T U - I| entry for a valid Fourier basis
RECONSTRUCTION_TOL = 1e-8    # Max |U diag(l) U^T - M| entry
RANK_TOL = 1e-9              # Relative singular-value cutoff for rank decisions
SCA_TOL = 1e-9               # Relative tolerance of the SCA ratio postcondition
ZERO_COMPONENT_TOL = 1e-12   # Fourier rows below this norm are degenerate
SCORE_TIE_TOL = 1e-12        # Score gap below which two nodes stay unordered

# Overflow guard for iterated operators
OVERFLOW_UPPER = 1e150
OVERFLOW_LOWER = 1e-150

# Dense operator cap (n*d of the vectorized Kronecker form)
MAX_DENSE = int(os.getenv("MPLAB_MAX_DENSE", "4096").split('#')[0].strip())

# Power iteration
POWER_TOL = 1e-10
POWER_MAX_ITER = 1000

# PageRank
PPR_TOL = 1e-12
PPR_MAX_ITER = 10000
PPR_ALPHA = 0.15

# PPRGNN
PPRGNN_EPSILON = 1.0         # Scale of the depth-dependent coefficient
PPRGNN_GAMMA = 1e-4          # Terminates the identity instance at depth 8
PPRGNN_MAX_DEPTH = 128
PPRGNN_TRUNCATION = 5        # Backward steps kept (m)
PPRGNN_LOOKAHEAD = 1         # Extra forward steps before the backward pass (j)
PPRGNN_ACTIVATION = "relu"
KINK_MARGIN = 1e-3           # Pre-activations closer than this to 0 count as ReLU kinks
FINITE_DIFF_STEP = 1e-6

# Adam
ADAM_LR = 0.001
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS_HAT = 1e-8

# LMGC
LEAKY_RELU_SLOPE = 0.2
PROBE_DISTINCT_TOL = 1e-9

# Experiments
DECAY_ITERATIONS = 96
DECAY_FEATURES = 16
DECAY_STEPS = ["gcn", "sage", "row_stochastic", "skp", "mrs"]
ROW_STOCHASTIC_MIN_ENTRY = 0.05
SYNTHETIC_ITERATIONS = 8
SYNTHETIC_STEPS = 5000
SYNTHETIC_LOG_EVERY = 50
FIT_TARGET_STEPS = 4000
FIT_TARGET_LRS = [0.03, 0.01, 0.003]
DEFAULT_SEED = 0
DEFAULT_OUT_DIR = "results"

# Display Configuration
DECIMAL_PLACES = 6  # Precision for metric display
