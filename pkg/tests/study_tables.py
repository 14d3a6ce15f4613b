"""Published per-expert event counts and derived values used by formula-consistency checks.

Rows: (expert, F1, F2, precision, recall, TP, FP, FN) as printed.
"""

CONSENSUS_GT_ROWS = [
    ("HU-1", 0.70, 0.76, 0.61, 0.82, 62, 40, 14),
    ("HU-2", 0.46, 0.50, 0.40, 0.53, 40, 59, 36),
    ("HU-3", 0.65, 0.76, 0.52, 0.86, 65, 59, 11),
    ("HU-4", 0.62, 0.62, 0.62, 0.62, 47, 29, 29),
    ("HU-5", 0.39, 0.54, 0.26, 0.74, 56, 156, 20),
    ("HU-6", 0.48, 0.51, 0.43, 0.54, 41, 54, 35),
    ("HU-7", 0.69, 0.75, 0.60, 0.80, 61, 41, 15),
    ("HU-8", 0.56, 0.50, 0.73, 0.46, 35, 13, 41),
    ("HU-9", 0.56, 0.71, 0.41, 0.87, 66, 94, 10),
]

CONSENSUS_GT_TEAM_ROWS = [
    ("HU-1&AI", 0.61, 0.73, 0.48, 0.84, 64, 69, 12),
    ("HU-2&AI", 0.45, 0.53, 0.37, 0.59, 45, 78, 31),
    ("HU-3&AI", 0.62, 0.75, 0.48, 0.88, 67, 73, 9),
    ("HU-4&AI", 0.63, 0.71, 0.53, 0.78, 59, 53, 17),
    ("HU-5&AI", 0.39, 0.61, 0.24, 0.99, 75, 236, 1),
    ("HU-6&AI", 0.56, 0.72, 0.41, 0.88, 67, 95, 9),
    ("HU-7&AI", 0.68, 0.78, 0.55, 0.87, 66, 53, 10),
    ("HU-8&AI", 0.62, 0.75, 0.49, 0.86, 65, 67, 11),
    ("AI", 0.51, 0.71, 0.35, 0.96, 73, 137, 3),
]

CPS_GT_HU_ROWS = [
    ("HU-1", 0.49, 0.43, 0.63, 0.40, 64, 38, 96),
    ("HU-2", 0.36, 0.32, 0.47, 0.29, 47, 52, 113),
    ("HU-3", 0.55, 0.51, 0.63, 0.49, 78, 46, 82),
    ("HU-4", 0.39, 0.32, 0.61, 0.29, 46, 30, 114),
    ("HU-5", 0.44, 0.48, 0.39, 0.51, 82, 130, 78),
    ("HU-6", 0.32, 0.28, 0.43, 0.26, 41, 54, 119),
    ("HU-7", 0.56, 0.49, 0.72, 0.46, 73, 29, 87),
    ("HU-8", 0.29, 0.22, 0.62, 0.19, 30, 18, 130),
]

CPS_GT_TEAM_ROWS = [
    ("HU-1&AI", 0.59, 0.56, 0.65, 0.54, 86, 47, 74),
    ("HU-2&AI", 0.44, 0.41, 0.50, 0.39, 62, 61, 98),
    ("HU-3&AI", 0.57, 0.55, 0.61, 0.54, 86, 54, 74),
    ("HU-4&AI", 0.54, 0.49, 0.65, 0.46, 73, 39, 87),
    ("HU-5&AI", 0.56, 0.70, 0.43, 0.83, 133, 178, 27),
    ("HU-6&AI", 0.53, 0.54, 0.53, 0.54, 86, 76, 74),
    ("HU-7&AI", 0.61, 0.56, 0.71, 0.53, 85, 34, 75),
    ("HU-8&AI", 0.61, 0.58, 0.67, 0.56, 89, 43, 71),
]

CPS_GT_AI_ROW = ("AI", 0.70, 0.76, 0.62, 0.81, 130, 80, 30)

CPS_GT_ALL_ROWS = CPS_GT_HU_ROWS + CPS_GT_TEAM_ROWS + [CPS_GT_AI_ROW]

# paired comparisons against the CPS ground truth: (label, mean diff, t)
CPS_PAIRED = [
    ("HU+AI vs HU", 0.13, 3.9),
    ("HU+AI vs AI", -0.15, -7.4),
    ("HU vs AI", -0.28, -7.8),
]

BENEFIT_MEDIAN, BENEFIT_MEAN, BENEFIT_MAX = 0.46, 0.43, 0.78

# regime: (F1 team avg, F1 AI, relative F1, atomic)
REGIME_ROWS = {
    "QC,WB": (0.59, 0.66, 0.90, True),
    "Start+QC,WB": (0.57, 0.65, 0.87, False),
    "Start,WB": (0.54, 0.64, 0.84, True),
    "Start,BB+WB": (0.56, 0.70, 0.80, False),
    "QC,BB+WB": (0.56, 0.70, 0.79, False),
    "Start,BB": (0.58, 0.74, 0.78, True),
    "Start+QC,BB": (0.55, 0.75, 0.73, False),
    "QC,BB": (0.52, 0.75, 0.69, True),
}

AI_MAIN_RATIO = 1.18
WB_VS_BB_AT_QC_RATIO = 1.30
INTERACTION_RATIO = 0.83
