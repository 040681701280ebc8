pub mod bench;
pub mod online;
pub mod sdp;
pub mod selftest;

pub use bench::{bench_lanczos, BenchRow};
pub use online::{online_eig, OnlineResults, OnlineRun, TraceRow};
pub use sdp::{sdp_feas, SdpResults, SdpRun};
pub use selftest::{selftest, CheckResult};
