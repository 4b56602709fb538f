//! Wait-free snapshot objects with a verification harness.
//!
//! Two snapshot implementations, a single-scanner object ([`snap1`]) and a
//! lambda-scanner object ([`lsnap`]) that admits a fixed number of
//! concurrent scans, built over an abstract register layer ([`shmem`])
//! with LL/SC emulated on top of CAS. The harness around them provides:
//!
//! * [`oracle`]: the sequential reference semantics;
//! * [`histories`]: history recording, a line-oriented file format, and an
//!   exact linearizability checker;
//! * [`explore`]: bounded-exhaustive and seeded-random schedule
//!   exploration over the simulated backend, with per-step invariant
//!   monitors and replayable counterexamples;
//! * [`bench`]: native-thread load generation with access-count
//!   percentiles and a recorded, checked correctness sample.

pub mod bench;
pub mod complexity;
pub mod explore;
pub mod histories;
pub mod lsnap;
pub mod machine;
pub mod oracle;
pub mod shmem;
pub mod snap1;
