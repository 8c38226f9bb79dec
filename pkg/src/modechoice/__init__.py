"""Discrete mode choice for travelers with travel-limiting disabilities.

Sample preparation, station-weather fusion, Halton-draw simulated maximum
likelihood for multinomial and random-parameters logit, stepwise term
retention, marginal effects and reporting.
"""
from .choice_data import Alternative, ChoiceObservation, RawTripRecord, filter_tld_adults, recode
from .effects import MarginalEffectsTable, marginal_effects, share_below_zero
from .estimate import EstimationOptions, EstimationResult, maximize, stepwise_retain
from .halton import DrawMatrix, build_draws
from .likelihood import Kind, ModelSpecification, Term, simulated_loglik, simulated_loglik_gradient
from .weather import WeatherIndex, WeatherRecord, fuse, haversine_miles, match_weather

__version__ = "0.1.0"

__all__ = [
    "Alternative", "ChoiceObservation", "DrawMatrix", "EstimationOptions", "EstimationResult",
    "Kind", "MarginalEffectsTable", "ModelSpecification", "RawTripRecord", "Term", "WeatherIndex",
    "WeatherRecord", "build_draws", "filter_tld_adults", "fuse", "haversine_miles",
    "marginal_effects", "match_weather", "maximize", "recode", "share_below_zero",
    "simulated_loglik", "simulated_loglik_gradient", "stepwise_retain",
]
