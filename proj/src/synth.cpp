#include "cstn/synth.hpp"

#include <algorithm>
#include <cmath>

#include "cstn/errors.hpp"
#include "cstn/rng.hpp"
#include "cstn/timeutil.hpp"

namespace cstn {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Knuth's product method; exact and portable for the small rates used here.
int poisson_draw(Rng& rng, double lambda) {
    if (lambda <= 0.0) return 0;
    const double limit = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= rng.uniform();
    } while (p > limit);
    return k - 1;
}

double clamp(double v, double lo, double hi) { return std::max(lo, std::min(hi, v)); }

}  // namespace

void SynthParams::validate() const {
    if (grid_rows <= 0 || grid_cols <= 0) throw ConfigError("synth: grid dims must be positive");
    if (interval_minutes <= 0 || 1440 % interval_minutes != 0)
        throw ConfigError("synth: interval_minutes must divide a day");
    if (intervals < 2) throw ConfigError("synth: need at least two intervals");
    if (base_rate <= 0.0) throw ConfigError("synth: base_rate must be positive");
    if (diurnal_amplitude < 0.0 || diurnal_amplitude > 1.0)
        throw ConfigError("synth: diurnal_amplitude must lie in [0, 1]");
    if (weather_strength < 0.0 || weather_strength > 1.0)
        throw ConfigError("synth: weather_strength must lie in [0, 1]");
    if (test_fraction < 0.0 || test_fraction >= 1.0) throw ConfigError("synth: test_fraction must lie in [0, 1)");
}

IntervalSeries synth_generate(const SynthParams& params) {
    params.validate();
    Rng rng(params.seed);

    IntervalSeries series;
    series.grid.lat_min = 0.0;
    series.grid.lat_max = params.grid_rows * 0.01;
    series.grid.lon_min = 0.0;
    series.grid.lon_max = params.grid_cols * 0.01;
    series.grid.rows = params.grid_rows;
    series.grid.cols = params.grid_cols;
    series.interval_minutes = params.interval_minutes;
    series.start_time = params.start_time != 0 ? params.start_time : make_time(2014, 1, 6);

    const int N = series.grid.region_count();

    // Draw order is part of the format: pair rates first, then per interval
    // the storm update, the counts (destination-major), then weather jitter.
    std::vector<double> origin_pop(N), dest_attr(N);
    for (int o = 0; o < N; ++o) origin_pop[o] = params.flat_rates ? 1.0 : rng.uniform(0.2, 1.0);
    for (int d = 0; d < N; ++d) dest_attr[d] = params.flat_rates ? 1.0 : rng.uniform(0.2, 1.0);

    double storm = 0.0, storm_target = 0.0;
    const double step_sec = params.interval_minutes * 60.0;

    series.od.reserve(params.intervals);
    series.meteo.resize(params.intervals);
    for (int t = 0; t < params.intervals; ++t) {
        const std::int64_t now = series.start_time + static_cast<std::int64_t>(t) * static_cast<std::int64_t>(step_sec);
        // Sticky weather: occasional new target, relaxation toward it.
        if (rng.uniform() < 0.03) {
            const double u = rng.uniform();
            storm_target = u * u;  // bias toward calm spells
        }
        storm += 0.3 * (storm_target - storm) + rng.uniform(-0.02, 0.02);
        storm = clamp(storm, 0.0, 1.0);

        const double tod = seconds_of_day(now) / 86400.0;
        // Single daily cycle peaking at 18:00, trough at 06:00.
        const double cycle = 0.5 - 0.5 * std::cos(2.0 * kPi * (tod - 0.25));
        const double diurnal = (1.0 - params.diurnal_amplitude) + params.diurnal_amplitude * cycle;
        const double damp = 1.0 - params.weather_strength * storm;

        Tensor od({N, params.grid_rows, params.grid_cols});
        for (int d = 0; d < N; ++d)
            for (int o = 0; o < N; ++o) {
                const double lambda = params.base_rate * origin_pop[o] * dest_attr[d] * diurnal * damp;
                const double count = params.poisson_noise ? poisson_draw(rng, lambda) : std::round(lambda);
                od[static_cast<std::size_t>(d) * N + o] = count;
            }
        series.od.push_back(std::move(od));

        MeteoRecord& m = series.meteo[t];
        m.time = now;
        const double day_warmth = std::sin(2.0 * kPi * (tod - 0.375));  // warmest mid-afternoon
        const double temp = 12.0 - 14.0 * storm + 6.0 * day_warmth + rng.uniform(-1.0, 1.0);
        m.indicators[0] = temp;
        m.indicators[1] = temp - 2.0 - 5.0 * storm;  // windchill
        m.indicators[2] = clamp(40.0 + 55.0 * storm + rng.uniform(-5.0, 5.0), 9.0, 100.0);
        m.indicators[3] = clamp(16.0 - 14.5 * storm + rng.uniform(-0.5, 0.5), 0.4, 16.1);
        m.indicators[4] = clamp(6.0 + 55.0 * storm + rng.uniform(-3.0, 3.0), 0.0, 137.0);
        m.indicators[5] = storm < 0.33 ? 0.0 : clamp((storm - 0.33) * 30.0 + rng.uniform(-1.0, 1.0), 0.0, 28.7);
        m.present.fill(true);
        if (storm < 0.15)
            m.condition = "Clear";
        else if (storm < 0.30)
            m.condition = "Partly Cloudy";
        else if (storm < 0.45)
            m.condition = "Mostly Cloudy";
        else if (storm < 0.60)
            m.condition = temp < -2.0 ? "Light Snow" : "Light Rain";
        else if (storm < 0.80)
            m.condition = temp < -2.0 ? "Snow" : "Rain";
        else
            m.condition = temp < -2.0 ? "Heavy Snow" : "Heavy Rain";
    }

    const int test = static_cast<int>(std::lround(params.intervals * params.test_fraction));
    series.train_intervals = std::max(1, params.intervals - test);
    series.stats = compute_norm_stats(series);
    series.validate();
    return series;
}

}  // namespace cstn
