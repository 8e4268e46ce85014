from .market import DemandFit, MarketWorld, fit_demand_model, load_price_volume_csv
from .pursuit import PursuitWorld

__all__ = ["DemandFit", "MarketWorld", "PursuitWorld", "fit_demand_model",
           "load_price_volume_csv"]
