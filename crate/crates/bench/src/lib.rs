//! Benchmark harness for the realizer runtime; see `benches/`.
