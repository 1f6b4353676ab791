"""Pin BLAS to one thread before numpy loads.

The training loop is single-threaded by contract; letting BLAS spawn a pool
per tiny matmul only adds oversubscription jitter, and acceptance timings
assume single-threaded runs.
"""

import os

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
