//! Numerical checks of the asymptotic estimates: leading constants,
//! exponents and logarithmic factors, by sweeps and log–log regression.

mod fit;
mod lemmas;
mod registry;
mod remainder;
mod report;

pub use fit::{fit_exponent, fit_exponent_windowed, loglog_slope, ExponentFit, EXCLUSION_THRESHOLD};
pub use lemmas::{
    interaction_integral, interaction_pair, lq_bubble_norm, mixed_pq_interaction, projected_interaction_pair,
    projection_l2_error, single_bubble_energy, triple_interaction, InteractionPair, ProjectedInteraction,
    SingleBubbleEnergy,
};
pub use registry::{verify_lemma, Lemma, LemmaOverrides};
pub use remainder::{project_out, remainder_norm, RemainderNorm, MAX_GRAM_CONDITION};
pub use report::{AsymptoticReport, SweepParameter, SweepSpec};
