pub mod duration;
pub mod ir;
pub mod kernel;
pub mod materialize;
pub mod metrics;
pub mod sched_dynamic;
pub mod sched_static;
pub mod sim;
pub mod symshape;
pub mod trace;
pub mod workload_file;
pub mod workloads;
