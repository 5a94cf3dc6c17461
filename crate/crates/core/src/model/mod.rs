//! The model zoo: seven architectures mapping a `[k, 1]` window to an
//! `[h]` forecast, all reconstructable from a [`ModelSpec`].

pub mod checkpoint;
mod graph;
mod layout;
mod spec;
mod state;

pub use graph::{forward, DropoutCtx, ParamBinding};
pub use layout::{parameter_layout, Init, ParamDef};
pub use spec::{ModelKind, ModelSpec, TCN_KERNEL_SIZE};
pub use state::ModelState;
