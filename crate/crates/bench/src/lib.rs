//! Benchmark-only crate; the targets live under `benches/`.
//!
//! Kept separate so heavy criterion dependencies never touch the
//! library or the CLI build.
