"""oxipipe: contactless SpO2 estimation pipeline on synthetic recordings.

Synthetic optophysiological signal generation, Otsu skin-ROI extraction,
AC/DC preprocessing, a from-scratch explainable 1-D CNN with layer-wise
relevance propagation, a ratio-of-ratios baseline, and a deterministic
experiment harness.
"""

__version__ = "0.1.0"

from .errors import (BadBand, BadMagic, ConfigInvalid, ConfoundedFactors,
                     DegenerateDC, DivergenceDetected, EmptyInput, EmptyMask,
                     EmptyPartition, GeometryTooSmall, GridTooLarge, IoFailure,
                     LengthMismatch, NoSeparation, NumericalBlowup,
                     NyquistViolation, OxipipeError, RangeOverflow,
                     RankDeficient, SchemaVersionMismatch, ShapeMismatch,
                     TooFewCycles, TooShort, TrailingBytes, TruncatedPayload,
                     UnknownColumns, WrongFirstLayer, ZeroGeometry)
from .frameio import (ColorSignal, FrameSequence, read_rvf, read_rvf_file,
                      read_signal_csv, read_signal_csv_file, write_rvf,
                      write_rvf_file, write_signal_csv, write_signal_csv_file)
from .synth import (DEFAULT_CALIBRATION, CalibrationModel, FrameRender,
                    PhysioTrace, SubjectProfile, SynthEnvelopes,
                    analytic_envelopes, generate_color_signal, generate_frames,
                    pulse_waveform)
from .roi import SkinMask, extract_color_signal, extract_mask, luma, otsu_threshold
from .dsp import (AC_BAND, DC_CUTOFF, STREAMS, StreamStack, WindowedDataset,
                  bandpass, bias, build_streams, concat_windows, load_windows,
                  make_windows, save_windows)
from .ror import (RatioFeatures, dataset_features, fit_calibration,
                  load_calibration, predict_ror, ratio_of_ratios,
                  save_calibration)
from .cnn import (CnnModel, EpochRecord, LayerSpec, TrainConfig, TrainResult,
                  backward, build_model, forward, load_model, mae,
                  make_cnn_specs, model_from_json, model_to_json, oversample,
                  predict, rmse, save_model, train)
from .explain import (ChannelRelevanceReport, RelevanceMap,
                      channel_relevance_report, channel_weight_profile, lrp)
from .harness import (ConditionReport, ConditionRow, ExperimentReport,
                      GridSearchResult, GridSpec, InstanceRecord,
                      InstanceRunResult, SplitPlan, compare_conditions,
                      grid_search, heldout_data_seed, run_instances,
                      split_by_cycles, to_jsonable, train_data_seed)
