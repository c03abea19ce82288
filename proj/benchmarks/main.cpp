#include <benchmark/benchmark.h>

// the distro libbenchmark_main.a ships LTO-only objects from another gcc
BENCHMARK_MAIN();
