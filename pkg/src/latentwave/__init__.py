"""latentwave: paired-modality computational imaging on a shared latent
autoregression, with forward simulators, a small autodiff engine, numerical
analyzers, and a reproducible training harness."""

from .version import __version__

from .autodiff import Graph, Tensor, grad_check, tensor
from .finola import (CoefficientMatrices, FeatureMap, autoregress,
                     channel_normalize, closed_form_linear, multipath_autoregress)
from .wave_analysis import (WaveSolution, WaveSpectrum, diagonalize,
                            shared_speed_report, to_wave_coords, wave_residual)
from .acoustic import SeismicGather, VelocityMap, acoustic_simulate, cfl_limit, ricker
from .projector import (ScanGeometry, Sinogram, backproject, make_geometry,
                        radon_project, system_matrix)
from .baselines import SirtResult, sirt, sirt_system
from .synth import Dataset, FamilySpec, NormRecord, build_dataset, gen_phantoms, \
    gen_velocity_maps, load_dataset
from .metrics import MetricReport, mae, mse, ssim, ssim_value
from .models import (DecoderConfig, EncoderConfig, ModalityModel, ModelConfig,
                     correlation_probe, make_config, r2_score)
from .training import (TrainConfig, TrainResult, adamw_step, cosine_lr, evaluate,
                       load_checkpoint, save_checkpoint, train)
from .container import read_container, write_container

__all__ = [name for name in dir() if not name.startswith("_")]
