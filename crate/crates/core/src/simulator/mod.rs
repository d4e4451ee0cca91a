//! Synthetic intelligent-tire rig: ground-truth forces from a brush tire
//! model and inner-liner accelerometer traces with an analytic contact
//! patch.

mod schedule;
mod signal;
mod tire;

pub use schedule::{
    triangle, ManeuverKind, NoiseLevel, OperatingCondition, ScheduleEntry, Sweep, TestSchedule,
    DRIVING_LOAD_N, LOADS_N, RIG_PRESSURE_KPA, SLIP_MAGNITUDES_DEG, SPEEDS_FREE_KPH,
    SPEEDS_LOADED_KPH, TORQUES_NM,
};
pub use signal::{
    generate_dataset, simulate_schedule, simulate_revolution, Channel, PatchReference, RevolutionTrace, SignalModel,
    TraceId, SAMPLE_RATE_HZ,
};
pub use tire::{brush_lateral_force, contact_half_angle, ground_truth_forces, ForceLabel, TireParams};
