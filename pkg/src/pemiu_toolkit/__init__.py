"""Block-permutation (PE-MIU style) protection of biometric embeddings and
tools to measure how well it resists reversal and attribute inference."""

__version__ = "0.1.0"

from .core import (BlockPartition, as_embedding, cosine_similarity, normalize,  # noqa: E402
                   partition)
from .data import (REFERENCE_SPEC, Dataset, SynthSpec, generate, load_pairing,  # noqa: E402
                   read_dataset, write_dataset)
from .errors import *  # noqa: E402,F401,F403
from .metrics import (OperatingPoint, ScoreSet, det_curve, eer, fmr_at, fnmr_at,  # noqa: E402
                      score_protocol, threshold_at_fmr)
from .pemiu import (BlockPermutation, compose, count_with_displacement, invert,  # noqa: E402
                    protect, sample_uniform, sample_with_displacement, unprotect)
from .attack import (AttackReport, ReconstructionChannel, RsrGrid, brute_force_attack,  # noqa: E402
                     known_seed_attack, rsr, rsr_sweep)
from .probe import LinearProbe, ProbeReport, evaluate_probe, train_probe  # noqa: E402
