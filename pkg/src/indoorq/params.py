from dataclasses import dataclass


@dataclass(frozen=True)
class FilterParams:
    """Motion, sensing and discretisation constants shared by the filters."""

    speed_mu: float = 1.0
    speed_sigma: float = 0.1
    speed_min: float = 0.1
    u_max: float = 1.5
    horizon: int = 60  # seconds a belief may be extrapolated past the last reading
    # particle filter
    n_particles: int = 64
    p_hit: float = 0.9
    eps: float = 0.01
    room_entry_prob: float = 0.3
    room_stay_prob: float = 0.9
    null_update: bool = False  # also weight seconds without any reading
    # a reading seen by fewer than this share of particles re-seeds the shortfall
    # inside the reader's range (all of them when none is inside); 0 disables
    reset_fraction: float = 0.5
    # Kalman filter
    tau: float = 0.05
    room_time_mu: float = 10.0
    room_time_sigma: float = 2.0
    min_branch_mass: float = 1e-9
