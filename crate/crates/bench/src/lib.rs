//! Criterion benchmarks for the `tutor-moves` hot paths live in `benches/`.
