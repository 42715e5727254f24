"""2D DOA estimation for transmit-beamspace MIMO radar with arbitrary planar
transmit arrays mapped onto a regular virtual structure."""
from .analysis import (BiasPrediction, CrbReport, LookUpTable, apply_lut, bias_predict, build_lut, crb,
                       empirical_bias, match_to_truth, resolution_probability, rmse)
from .config import Config, load_config
from .design import (InterpolationDesign, ScaledErrorModel, audit, beampattern, design_ls,
                     design_minimax_error, design_minimax_sidelobe, exact_design, interpolation_error_map,
                     sigma_app)
from .estimators import (DoaEstimate, MusicSearch, estimate, hosvd_esprit, matrix_esprit,
                         pair_eigensystems, spectral_music_2d, tev)
from .geometry import (ArrayGeometry, SectorGrid, VirtualStructure, build_sector_grid, cosines_to_angles,
                       direction_cosines, irregular_array, receive_subset)
from .sim import RadarScene, SnapshotSet, simulate, snr_db, steering_matrix_f
from .tensor import fold, hosvd, mode_product, truncated_signal_subspace, unfold

__version__ = "0.1.0"
