//! Session simulator: randomized parameters, agent, physics.

pub mod agent;
pub mod markov;
pub mod params;
pub mod physics;
pub mod scene;

pub use agent::{
    execute_primitive, for_each_session, generate_session, generate_session_traced, generate_sessions, session_id,
    session_seed, PrimitiveRun, TracedFrame, GRIP_OFFSET,
};
pub use markov::{legal_primitives, next_primitive, MarkovState};
pub use params::{sample_action_params, sample_session_params, ActionParams, Mesh, SessionParams};
pub use physics::{mechanical_energy, step_physics, Body, Contact, PhysicsState};
pub use scene::SceneConfig;
