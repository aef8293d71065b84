"""Default objective weights and model dimensions shared across modules.

The weight set and the parameter-block dimensions are the contract the
rest of the package is built around; every module imports them from here
instead of restating magic numbers.
"""

# Stage-1 objective weights: contour generator (adversarial + feature
# matching) and face synthesis generator (adversarial + masked pixel +
# style).
LAMBDA_ADV_CONTOUR = 1.0      # lambda1
LAMBDA_FEATURE_MATCH = 11.5   # lambda2
LAMBDA_ADV_SYNTH = 0.1        # lambda3
LAMBDA_MASKED_PIXEL = 1.0     # lambda4
LAMBDA_STYLE = 250.0          # lambda5

# Stage-2 objective weights: per-pixel render loss and embedding cosine
# loss of the model-fitting objective.
LAMBDA_PER_PIXEL = 1.4        # lambda6
LAMBDA_FEATURE = 0.25         # lambda7

# Parameter-block dimensions of the unknown vector recovered by fitting.
DIM_ID = 80     # identity shape coefficients
DIM_EXP = 64    # expression shape coefficients
DIM_TEX = 80    # texture coefficients
DIM_SH = 9      # spherical-harmonics lighting coefficients
DIM_POSE = 6    # pitch, yaw, roll, log-scale, t_x, t_y
PARAM_DIM = DIM_ID + DIM_EXP + DIM_TEX + DIM_SH + DIM_POSE

assert PARAM_DIM == 239, "parameter blocks must total 239 free dimensions"

# Discriminator scores are clamped to [SCORE_EPS, 1 - SCORE_EPS] so the
# log terms of the adversarial objective stay finite.
SCORE_EPS = 1e-7

# Minimum camera-space depth accepted by the perspective projection.
DEPTH_EPS = 1e-6

# Grayscale conversion weights (ITU-R BT.601 luma).
LUMA_R = 0.299
LUMA_G = 0.587
LUMA_B = 0.114

# Default pinhole focal length in pixels at a 224x224 raster; scaled
# proportionally for other raster sizes (see camera.default_intrinsics).
FOCAL_AT_224 = 1015.0


def default_weights() -> dict[str, float]:
    """The full default weight set, keyed lambda1..lambda7."""
    return {
        "lambda1": LAMBDA_ADV_CONTOUR,
        "lambda2": LAMBDA_FEATURE_MATCH,
        "lambda3": LAMBDA_ADV_SYNTH,
        "lambda4": LAMBDA_MASKED_PIXEL,
        "lambda5": LAMBDA_STYLE,
        "lambda6": LAMBDA_PER_PIXEL,
        "lambda7": LAMBDA_FEATURE,
    }
