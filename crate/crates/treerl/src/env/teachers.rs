//! Scripted reference policies. These generate imitation datasets and the
//! state-normalization corpora.

/// Cart-pole solver: push right exactly when 3*theta + theta_dot > 0.
pub fn heuristic_cartpole(state: &[f64]) -> usize {
    let theta = state[2];
    let theta_dot = state[3];
    if 3.0 * theta + theta_dot > 0.0 {
        1
    } else {
        0
    }
}

/// Mountain-car energy pumping: push in the direction of travel.
pub fn energy_pump_mountain_car(state: &[f64]) -> usize {
    if state[1] >= 0.0 {
        2
    } else {
        0
    }
}
