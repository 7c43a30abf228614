"""Velocity-scheduled lateral MPC with PSO-tuned, learned parameter adaptation."""
from .mpc import MpcConstraints, MpcController, MpcParams
from .scenarios import builtin_scenario, compute_mse, run_closed_loop
from .vehicle import LateralState, NonlinearPlant, VehicleParams

__all__ = ["MpcConstraints", "MpcController", "MpcParams", "builtin_scenario", "compute_mse",
           "run_closed_loop", "LateralState", "NonlinearPlant", "VehicleParams"]
