#pragma once

namespace stt {

/// Every data-parallel kernel has an OpenMP path and a plain serial
/// reference; tests run both and compare.
enum class Exec { kSerial, kParallel };

/// Worker count for OpenMP regions: STT_THREADS when set, otherwise the
/// OpenMP default.
int worker_count();

}  // namespace stt
