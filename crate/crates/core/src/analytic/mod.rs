//! Closed-form violation probabilities.

mod height1;
mod target;

pub use height1::{
    e_pmf, m_tail, p_w_given_l, race_tail_ratio, transition_matrix, violation_probability_height1, Height1Engine,
    RacePmf, TransitionMatrix, WindowTable,
};
pub use target::{
    age_density, first_epoch_matrices, lead_after_jumper_pmf, lead_joint_pmf, violation_probability_target, AgeDensity,
    LeadJointPmf, PostJumperLeadPmf, TargetEngine,
};
