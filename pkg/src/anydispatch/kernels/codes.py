"""Integer codes shared by both kernel backends."""

MAP_IDENTITY = 0
MAP_SATURATION = 1
MAP_LOGQ = 2
MAP_SGN = 3
MAP_TABLE = 4

PEN_NONE = 0
PEN_POWER = 1
PEN_SOFTPLUS = 2

ST_CONVERGED = 0
ST_BUDGET = 1
ST_UNSTABLE = 2

STATUS_NAMES = {
    ST_CONVERGED: "converged",
    ST_BUDGET: "budget_exhausted",
    ST_UNSTABLE: "unstable",
}
