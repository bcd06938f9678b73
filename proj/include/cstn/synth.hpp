#pragma once

#include <cstdint>

#include "cstn/pipeline.hpp"

namespace cstn {

// Synthetic demand with controllable structure: per-pair base rates, a
// diurnal cycle, and a weather process that damps demand and drives the
// indicator columns.  Same params => same series, always.
struct SynthParams {
    int grid_rows = 4;
    int grid_cols = 3;
    int interval_minutes = 30;
    int intervals = 2000;
    double base_rate = 6.0;          // peak mean trips per OD pair before damping
    double diurnal_amplitude = 0.7;  // 0 = flat day, 1 = full swing
    double weather_strength = 0.6;   // demand multiplier drops to 1-strength in a storm
    bool poisson_noise = true;       // false: counts are round(lambda)
    bool flat_rates = false;         // all pair rates equal (diagnostic mode)
    double test_fraction = 0.2;
    std::uint64_t seed = 1;
    std::int64_t start_time = 0;     // 0 -> midnight Monday 2014-01-06

    void validate() const;
};

IntervalSeries synth_generate(const SynthParams& params);

}  // namespace cstn
