//! The virtual test stand: resources, wiring, allocation and execution
//! against a simulated device under test.

pub mod allocate;
pub mod dut;
mod execute;
pub mod report;
mod stand;

pub use allocate::{
    allocate, check_allocation, Allocation, AllocationError, Binding, Rejection, Requirement,
    Resolved, Target,
};
pub use dut::{
    build_dut, reference_dut, DutError, DutModel, DutOptions, InteriorIllumination,
    ReferenceDutConfig, Stimulus,
};
pub use execute::{execute, ExecOptions};
pub use report::{RunReport, Verdict};
pub use stand::{
    ConnectionMatrix, Connector, ConnectorKind, ConnectorParseError, ResourceDef, ResourceTable,
    StandError, StandModel, DEFAULT_BUS_METHODS,
};
