# app/config.py
import os

from dotenv import load_dotenv

load_dotenv()

# Candidate count per layer; five matches the usual number of marked tail-free widths
DEFAULT_M = int(os.getenv("TAILTRIM_M", "5"))

# Targeted latency ratio: a latency plan must reach L_new <= delta * L_old
DEFAULT_DELTA = float(os.getenv("TAILTRIM_DELTA", "0.85"))

# Each retry doubles tau, so 8 retries widen the band 256x
DEFAULT_MAX_RETRIES = int(os.getenv("TAILTRIM_MAX_RETRIES", "8"))

# When no tau is given: this fraction of the model's total size in the active metric
DEFAULT_TAU_FRACTION = float(os.getenv("TAILTRIM_TAU_FRACTION", "0.05"))

# "params" (width delta x per-filter weights) or "width" (raw filter delta)
DEFAULT_METRIC = os.getenv("TAILTRIM_METRIC", "params")

# Largest width an analytical sweep may reach
WIDTH_CAP = int(os.getenv("TAILTRIM_WIDTH_CAP", "4096"))

# Largest number of assignments the exhaustive planner will enumerate
BRUTE_FORCE_CAP = int(os.getenv("TAILTRIM_BRUTE_FORCE_CAP", "1000000"))

# Allowed relative disagreement between a profile's throughput column and flops / latency
RECONCILE_REL_TOL = float(os.getenv("TAILTRIM_RECONCILE_REL_TOL", "1e-6"))

# Plans the HTTP server keeps for GET /plans; the oldest go first
MAX_STORED_PLANS = int(os.getenv("TAILTRIM_MAX_STORED_PLANS", "1000"))

LOG_LEVEL = os.getenv("TAILTRIM_LOG_LEVEL", "INFO")
