"""Room impulse response generation, description and challenge scoring."""
from .estimators import EnrollmentAugmenter, ImageSourceSimulator, RIRDescriptor
from .geometry import ShoeboxScene, distance, generate_receiver_grid
from .harness import (ScenarioManifest, build_test_set, load_challenge, load_manifest,
                      score_task1, score_task2, validate_submission)
from .metrics import (ALL_BANDS, BROADBAND, OCTAVE_BANDS, AcousticDescriptors, MetricReport,
                      OctaveBand, describe, drr_mse, edf_mse, estimate_drr, estimate_t20,
                      octave_filter, schroeder_edf, t20_mape)
from .signal import SampledSignal, convolve, read_wav, resample, write_wav
from .synthesis import (EnrollmentEntry, IsmConfig, augment_from_enrollment, image_source_rir,
                        polack_rir)

__version__ = "0.1.0"
