"""Overlapping social-circle discovery in ego-networks."""
from ._backend import NAME as BACKEND
from .data import (
    CircleAssignment,
    DataFormatError,
    EgoNetwork,
    ModelParams,
    ProfileStore,
    load_ego_network,
    read_circles,
    write_circles,
    write_ego_network,
)
from .evaluate import ber, choose_k_modularity, f1, match_circles, modularity
from .extensions import NewNode, SeedSet, fit_seeded, fit_supervised, predict_memberships
from .features import SCHEMES, EdgeFeatureCache
from .mcmc import AnnealSchedule, MCMCState, fit_mcmc, mcmc_sweep
from .model import LikelihoodContext, log_likelihood, objective, value_and_gradients
from .pbopt import PairwiseEnergy, energy_of, maximize
from .synth import PlantedSpec, generate
from .trainer import AUTO, FitConfig, FitResult, bic, coordinate_ascent, fit, select_k

__version__ = "0.1.0"

__all__ = [
    "AUTO", "AnnealSchedule", "BACKEND", "CircleAssignment", "DataFormatError", "EdgeFeatureCache",
    "EgoNetwork", "FitConfig", "FitResult", "LikelihoodContext", "MCMCState", "ModelParams", "NewNode",
    "PairwiseEnergy", "PlantedSpec", "ProfileStore", "SCHEMES", "SeedSet", "ber", "bic",
    "choose_k_modularity", "coordinate_ascent", "energy_of", "f1", "fit", "fit_mcmc", "fit_seeded",
    "fit_supervised", "generate", "load_ego_network", "log_likelihood", "match_circles", "maximize",
    "mcmc_sweep", "modularity", "objective", "predict_memberships", "read_circles", "select_k",
    "value_and_gradients", "write_circles", "write_ego_network",
]
