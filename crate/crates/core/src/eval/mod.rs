//! Benchmark harness and introspection artifacts.
