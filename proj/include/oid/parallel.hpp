#pragma once

namespace oid {

/// Execution policy for the data-parallel kernels. Every kernel has a serial
/// reference path that produces identical results; the parallel path is the
/// default and differs only in wall time.
enum class ExecMode { serial, parallel };

int max_threads();

} // namespace oid
