# Field specifications of every YAML config section.
#
# Each entry maps a YAML key ("input_name") to the keyword the typed object is
# built with ("output_name"). Types: int, float, float_or_inf, bool, text,
# range, list_float, list_int, list_text, mapping. "minimum" / "maximum" are
# inclusive; "choices" restricts text values.

# Simulated radar.
radar_fields = {
    "N": {
        "type": "int",
        "input_name": "n_freq",
        "output_name": "n_freq",
        "mandatory": False,
        "default": 4,
        "minimum": 1
    },
    "N_d": {
        "type": "int",
        "input_name": "n_sweeps",
        "output_name": "n_sweeps",
        "mandatory": False,
        "default": 4,
        "minimum": 1
    },
    "N_T": {
        "type": "int",
        "input_name": "n_tx",
        "output_name": "n_tx",
        "mandatory": False,
        "default": 2,
        "minimum": 1
    },
    "N_R": {
        "type": "int",
        "input_name": "n_rx",
        "output_name": "n_rx",
        "mandatory": False,
        "default": 2,
        "minimum": 1
    },
    "F0": {
        "type": "float",
        "input_name": "f0",
        "output_name": "f0",
        "mandatory": False,
        "default": 2e9,
        "minimum": 0.0
    },
    "DELTA_F": {
        "type": "float",
        "input_name": "delta_f",
        "output_name": "delta_f",
        "mandatory": False,
        "default": 1e6,
        "minimum": 0.0
    },
    "T": {
        "type": "float",
        "input_name": "pulse_dur",
        "output_name": "pulse_dur",
        "mandatory": False,
        "default": 1e-6,
        "minimum": 0.0
    },
    "T_R": {
        "type": "float",
        "input_name": "pri",
        "output_name": "pri",
        "mandatory": False,
        "default": 66e-6,
        "minimum": 0.0
    },
    "D_TX": {
        "type": "float",
        "input_name": "d_tx",
        "output_name": "d_tx",
        "mandatory": False,
        "default": 1.0
    },
    "D_RX": {
        "type": "float",
        "input_name": "d_rx",
        "output_name": "d_rx",
        "mandatory": False,
        "default": 1.0
    },
}

grid_fields = {
    "M_TAU": {
        "type": "int",
        "input_name": "m_tau",
        "output_name": "m_tau",
        "mandatory": False,
        "default": 5,
        "minimum": 1
    },
    "M_V": {
        "type": "int",
        "input_name": "m_vel",
        "output_name": "m_vel",
        "mandatory": False,
        "default": 5,
        "minimum": 1
    },
    "M_THETA1": {
        "type": "int",
        "input_name": "m_theta1",
        "output_name": "m_theta1",
        "mandatory": False,
        "default": 3,
        "minimum": 1
    },
    "M_THETA2": {
        "type": "int",
        "input_name": "m_theta2",
        "output_name": "m_theta2",
        "mandatory": False,
        "default": 2,
        "minimum": 1
    },
}

scene_fields = {
    "W_NNZ": {
        "type": "int",
        "input_name": "w_nnz",
        "output_name": "w_nnz",
        "mandatory": False,
        "default": 2,
        "minimum": 0
    },
    "B_NNZ": {
        "type": "int",
        "input_name": "b_nnz",
        "output_name": "b_nnz",
        "mandatory": False,
        "default": 16,
        "minimum": 0
    },
    "SNR": {
        "type": "float_or_inf",
        "input_name": "snr_db",
        "output_name": "snr_db",
        "mandatory": False,
        "default": 15.0
    },
    "SIR": {
        "type": "float_or_inf",
        "input_name": "sir_db",
        "output_name": "sir_db",
        "mandatory": False,
        "default": 0.0
    },
    "SIGMA_X2": {
        "type": "float",
        "input_name": "sigma_x2",
        "output_name": "sigma_x2",
        "mandatory": False,
        "default": 1.0,
        "minimum": 0.0
    },
    "MODE": {
        "type": "text",
        "input_name": "interference_mode",
        "output_name": "interference_mode",
        "mandatory": False,
        "default": "count",
        "choices": ["count", "epsilon"]
    },
    "EPSILON": {
        "type": "float",
        "input_name": "epsilon",
        "output_name": "epsilon",
        "mandatory": False,
        "default": 0.25,
        "minimum": 0.0,
        "maximum": 1.0
    },
    # Eight SC-FDMA carriers of 0.5 MHz tile the 4 MHz radar band.
    "N_C": {
        "type": "int",
        "input_name": "n_carriers",
        "output_name": "n_carriers",
        "mandatory": False,
        "default": 8,
        "minimum": 1
    },
    "RANDOMIZE": {
        "type": "mapping",
        "input_name": "randomize",
        "output_name": "randomize",
        "mandatory": False,
        "default": None
    },
}

generation_fields = {
    "WORKERS": {
        "type": "int",
        "input_name": "workers",
        "output_name": "workers",
        "mandatory": False,
        "default": 1,
        "minimum": 1
    },
}

# Cross-validated two-penalty parameters.
solver_fields = {
    "RHO": {
        "type": "float",
        "input_name": "rho",
        "output_name": "rho",
        "mandatory": False,
        "default": 0.01,
        "minimum": 0.0
    },
    "ALPHA": {
        "type": "float",
        "input_name": "alpha",
        "output_name": "alpha",
        "mandatory": False,
        "default": 1.5,
        "minimum": 0.0,
        "maximum": 2.0
    },
    "ETA": {
        "type": "float",
        "input_name": "eta",
        "output_name": "eta",
        "mandatory": False,
        "default": 1.0,
        "minimum": 0.0
    },
    "LAMBDA1": {
        "type": "float",
        "input_name": "lambda1",
        "output_name": "lambda1",
        "mandatory": False,
        "default": 0.01,
        "minimum": 0.0
    },
    "LAMBDA2": {
        "type": "float",
        "input_name": "lambda2",
        "output_name": "lambda2",
        "mandatory": False,
        "default": 0.005,
        "minimum": 0.0
    },
}

single_penalty_fields = {
    "RHO": dict(solver_fields["RHO"], default=0.5),
    "ALPHA": dict(solver_fields["ALPHA"], default=1.5),
    "ETA": dict(solver_fields["ETA"], default=1.0),
    "LAMBDA1": dict(solver_fields["LAMBDA1"], default=0.5),
    "LAMBDA2": dict(solver_fields["LAMBDA2"], default=0.5),
}

stopping_fields = {
    "MODE": {
        "type": "text",
        "input_name": "mode",
        "output_name": "mode",
        "mandatory": False,
        "default": "oracle",
        "choices": ["oracle", "oracle_linear", "fixed_iters", "residual"]
    },
    "TOL": {
        "type": "float",
        "input_name": "tol",
        "output_name": "tol",
        "mandatory": False,
        "default": 1e-6,
        "minimum": 0.0
    },
    "MAX_ITERS": {
        "type": "int",
        "input_name": "max_iters",
        "output_name": "max_iters",
        "mandatory": False,
        "default": 2000,
        "minimum": 1
    },
}

network_fields = {
    "K": {
        "type": "int",
        "input_name": "n_stages",
        "output_name": "n_stages",
        "mandatory": False,
        "default": 5,
        "minimum": 1
    },
}

# Training recipe; n_train sizes the sets trained on the fly.
train_fields = {
    "EPOCHS": {
        "type": "int",
        "input_name": "epochs",
        "output_name": "epochs",
        "mandatory": False,
        "default": 45,
        "minimum": 1
    },
    "BATCH_SIZE": {
        "type": "int",
        "input_name": "batch_size",
        "output_name": "batch_size",
        "mandatory": False,
        "default": 500,
        "minimum": 1
    },
    "LR0": {
        "type": "float",
        "input_name": "lr0",
        "output_name": "lr0",
        "mandatory": False,
        "default": 1e-3,
        "minimum": 0.0
    },
    "LR_DECAY": {
        "type": "float",
        "input_name": "lr_decay",
        "output_name": "lr_decay",
        "mandatory": False,
        "default": 0.1,
        "minimum": 0.0
    },
    "LR_PERIOD": {
        "type": "int",
        "input_name": "lr_period",
        "output_name": "lr_period",
        "mandatory": False,
        "default": 15,
        "minimum": 1
    },
    "BETA1": {
        "type": "float",
        "input_name": "adam_beta1",
        "output_name": "adam_beta1",
        "mandatory": False,
        "default": 0.9,
        "minimum": 0.0,
        "maximum": 1.0
    },
    "BETA2": {
        "type": "float",
        "input_name": "adam_beta2",
        "output_name": "adam_beta2",
        "mandatory": False,
        "default": 0.999,
        "minimum": 0.0,
        "maximum": 1.0
    },
    "EPS": {
        "type": "float",
        "input_name": "adam_eps",
        "output_name": "adam_eps",
        "mandatory": False,
        "default": 1e-8,
        "minimum": 0.0
    },
    "SEED": {
        "type": "int",
        "input_name": "seed",
        "output_name": "seed",
        "mandatory": False,
        "default": 0,
        "minimum": 0
    },
    "VAL_FRACTION": {
        "type": "float",
        "input_name": "val_fraction",
        "output_name": "val_fraction",
        "mandatory": False,
        "default": 0.0,
        "minimum": 0.0,
        "maximum": 1.0
    },
    "N_TRAIN": {
        "type": "int",
        "input_name": "n_train",
        "output_name": "n_train",
        "mandatory": False,
        "default": 200000,
        "minimum": 1
    },
}

experiment_fields = {
    "KIND": {
        "type": "text",
        "input_name": "kind",
        "output_name": "kind",
        "mandatory": True,
        "choices": ["stages", "snr", "sir", "w_sparsity", "b_sparsity", "image_demo", "runtime"]
    },
    "SWEEP": {
        "type": "list_float",
        "input_name": "sweep",
        "output_name": "sweep",
        "mandatory": True
    },
    "METHODS": {
        "type": "list_text",
        "input_name": "methods",
        "output_name": "methods",
        "mandatory": False,
        "default": None,
        "choices": ["admm", "admm_fixed", "admm_net_matched", "admm_net_random", "admm_single_penalty", "cvx"]
    },
    "N_TEST": {
        "type": "int",
        "input_name": "n_test",
        "output_name": "n_test",
        "mandatory": False,
        "default": 1000,
        "minimum": 1
    },
    "SEED": {
        "type": "int",
        "input_name": "seed",
        "output_name": "seed",
        "mandatory": False,
        "default": 0,
        "minimum": 0
    },
    "NETWORKS": {
        "type": "mapping",
        "input_name": "networks",
        "output_name": "networks",
        "mandatory": False,
        "default": {}
    },
    "RANDOM_RANGES": {
        "type": "mapping",
        "input_name": "random_ranges",
        "output_name": "random_ranges",
        "mandatory": False,
        "default": None
    },
    "TRAIN_MISSING": {
        "type": "bool",
        "input_name": "train_missing",
        "output_name": "train_missing",
        "mandatory": False,
        "default": False
    },
    "IMAGE": {
        "type": "mapping",
        "input_name": "image",
        "output_name": "image",
        "mandatory": False,
        "default": {}
    },
    "WARMUP": {
        "type": "int",
        "input_name": "warmup",
        "output_name": "warmup",
        "mandatory": False,
        "default": 10,
        "minimum": 0
    },
}

# Acceptance bounds; every bound is optional and only configured bounds are checked.
acceptance_fields = {
    "MARGIN_DB": {
        "type": "float",
        "input_name": "margin_db",
        "output_name": "margin_db",
        "mandatory": False
    },
    "MONOTONE": {
        "type": "mapping",
        "input_name": "monotone",
        "output_name": "monotone",
        "mandatory": False
    },
    "NMSE_RANGE": {
        "type": "mapping",
        "input_name": "nmse_range",
        "output_name": "nmse_range",
        "mandatory": False
    },
    "ITERS_RANGE": {
        "type": "mapping",
        "input_name": "iters_range",
        "output_name": "iters_range",
        "mandatory": False
    },
    "STRICT_ORDER": {
        "type": "list_text",
        "input_name": "strict_order",
        "output_name": "strict_order",
        "mandatory": False
    },
    "SPEEDUP_MIN": {
        "type": "float",
        "input_name": "speedup_min",
        "output_name": "speedup_min",
        "mandatory": False,
        "minimum": 0.0
    },
    "FIXED_RATIO_MAX": {
        "type": "float",
        "input_name": "fixed_ratio_max",
        "output_name": "fixed_ratio_max",
        "mandatory": False,
        "minimum": 0.0
    },
    "RUNTIME_SPREAD_MAX": {
        "type": "float",
        "input_name": "runtime_spread_max",
        "output_name": "runtime_spread_max",
        "mandatory": False,
        "minimum": 0.0
    },
    "NET_METHOD": {
        "type": "text",
        "input_name": "net_method",
        "output_name": "net_method",
        "mandatory": False
    },
    "REFERENCE_METHOD": {
        "type": "text",
        "input_name": "reference_method",
        "output_name": "reference_method",
        "mandatory": False
    },
}

section_fields = {
    "radar": radar_fields,
    "grid": grid_fields,
    "scene": scene_fields,
    "generation": generation_fields,
    "solver": solver_fields,
    "single_penalty": single_penalty_fields,
    "stopping": stopping_fields,
    "network": network_fields,
    "train": train_fields,
    "experiment": experiment_fields,
    "acceptance": acceptance_fields,
}
