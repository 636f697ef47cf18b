//! Criterion benchmarks for the angle quadrature, the turbulence Monte Carlo,
//! frame generation and coincidence accumulation live in `benches/`.
