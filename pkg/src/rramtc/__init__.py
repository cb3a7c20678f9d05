"""Stochastic vacancy-network model of RRAM thermal behavior.

Pipeline: random vacancy lattices -> Kirchhoff network solves over
temperature -> per-cell temperature coefficients and range statistics ->
pulse programming / disturb dynamics -> crossbar classifier inference with
drift and current compensation.
"""

from .crossbar import (
    CompensationConfig,
    CrossbarArray,
    MappedNetwork,
    accuracy_vs_temperature,
    assign_talpha,
    compensate,
    crossbar_matvec,
    drift_conductance,
    infer,
    map_network,
    map_to_conductance,
    parametric_thermal_stats,
)
from .datasets import Dataset, load_idx, synthetic_digits
from .dynamics import (
    PerturbParams,
    SetParams,
    SetTrace,
    ispp_set,
    perturb,
    perturb_ensemble,
    run_set_ensemble,
    set_pulse,
)
from .errors import RramtcError
from .lattice import (
    Bond,
    BondType,
    VacancyGrid,
    classify_bonds,
    generate_grid,
    grid_from_text,
    grid_to_text,
    load_grid,
    order_parameter,
    save_grid,
)
from .mlp import Mlp, QuantizedLayer, QuantizedMlp, quantize_weights, train_mlp
from .network import (
    ConductanceModel,
    NetworkAssembly,
    SolveResult,
    current_density_map,
    resistance_sweep,
    solve_network,
)
from .seeding import derive_seed, make_rng
from .tcoeff import (
    EnsembleRecord,
    EnsembleRun,
    TAlphaFit,
    ThermalStats,
    bin_talpha_stats,
    calibrate_model,
    fit_talpha,
    run_ensemble,
    simulate_cell,
)

__version__ = "0.1.0"
