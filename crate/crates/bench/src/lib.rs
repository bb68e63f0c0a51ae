//! Criterion benchmarks for the engine step, kNN search and AUROC; see `benches/`.
