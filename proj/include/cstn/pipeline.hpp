#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cstn/tensor.hpp"

namespace cstn {

// Uniform lat/lon grid.  Row index i follows latitude from lat_min upward,
// column index j follows longitude from lon_min eastward; region id = cols*i + j.
struct GridSpec {
    double lat_min = 0.0, lat_max = 1.0;
    double lon_min = 0.0, lon_max = 1.0;
    int rows = 1, cols = 1;

    int region_count() const { return rows * cols; }
    int region_index(int i, int j) const { return cols * i + j; }
    void validate() const;
};

struct TripRecord {
    std::int64_t pickup_time = 0;
    double pickup_lat = 0.0, pickup_lon = 0.0;
    double dropoff_lat = 0.0, dropoff_lon = 0.0;
};

enum class RegionStatus { Ok, OutOfBounds, Invalid };

struct RegionRef {
    RegionStatus status = RegionStatus::Invalid;
    int i = -1, j = -1;
};

// Cells are half-open [lo, hi) except the last row/column, which closes the
// interval so points on lat_max/lon_max still land in the grid.
RegionRef assign_region(const GridSpec& grid, double lat, double lon);

struct IngestStats {
    std::size_t used = 0;
    std::size_t invalid_coord = 0;  // non-finite coordinate on either endpoint
    std::size_t out_of_bounds = 0;  // finite but outside the bounding box
};

// Origin-destination tensor [N, rows, cols] for one interval's trips: channel
// d = cols*i_d + j_d holds, at cell (i_o, j_o), the trip count from that
// origin cell to destination region d.
Tensor build_od_tensor(const GridSpec& grid, const std::vector<TripRecord>& trips,
                       IngestStats* stats = nullptr);

// Swaps the origin/destination roles: reshape to N x N, transpose, reshape
// back.  Involution; preserves the multiset of values.
Tensor transpose_od(const Tensor& od);

// Per-cell totals over all destination channels -> [rows, cols] map.
Tensor origin_demand(const Tensor& od);

// --- normalization ---

struct NormStats {
    double od_min = 0.0, od_max = 1.0;
    std::array<double, 6> ind_min{};   // meteo indicator ranges over the train split
    std::array<double, 6> ind_max{};
    std::array<double, 6> ind_mean{};  // fill-in for missing readings
};

// 2*(x - min)/(max - min) - 1, endpoints map to -1/+1.
double normalize_value(double x, double lo, double hi);
double denormalize_value(double x, double lo, double hi);
Tensor normalize_od(const Tensor& od, const NormStats& stats);
Tensor denormalize_od(const Tensor& od_norm, const NormStats& stats);

// --- weather ---

inline constexpr int kIndicatorCount = 6;

struct MeteoRecord {
    std::int64_t time = 0;
    std::array<double, kIndicatorCount> indicators{};  // temp, windchill, humidity, visibility, wind, precip
    std::array<bool, kIndicatorCount> present{};
    std::string condition;  // label; empty or unrecognized maps to "Unknown"
};

// 23 condition labels; the last is "Unknown".
const std::vector<std::string>& default_weather_vocab();

// One-hot condition followed by the six indicators min-max scaled to [0,1]
// (missing readings take the training mean; degenerate ranges encode as 0.5).
Tensor encode_meteo(const MeteoRecord& rec, const NormStats& stats,
                    const std::vector<std::string>& vocab = default_weather_vocab());

// --- interval series (the cached dataset) ---

struct IntervalSeries {
    GridSpec grid;
    int interval_minutes = 30;
    std::int64_t start_time = 0;
    int train_intervals = 0;  // prefix of intervals that form the training split
    std::vector<Tensor> od;   // raw counts per interval, each [N, rows, cols]
    std::vector<MeteoRecord> meteo;  // aligned with od
    NormStats stats;

    int interval_count() const { return static_cast<int>(od.size()); }
    std::int64_t time_of(int idx) const {
        return start_time + static_cast<std::int64_t>(idx) * interval_minutes * 60;
    }
    int slots_per_day() const { return 1440 / interval_minutes; }
    int slot_of(int idx) const;
    void validate() const;
};

// Min/max/mean statistics from the training prefix (OD counts + indicators).
NormStats compute_norm_stats(const IntervalSeries& series);

// --- supervised windows ---

enum class Split { Train, Test };

struct SampleWindow {
    std::vector<Tensor> inputs;   // n normalized OD tensors, oldest first
    std::vector<Tensor> meteo;    // n encoded weather vectors, aligned with inputs
    std::vector<Tensor> targets;  // m normalized OD tensors for t+1 .. t+m
    std::vector<int> target_intervals;  // series indices of the targets
    int anchor = 0;                     // series index of the last input interval
};

// Sliding windows of n inputs and m targets that lie entirely inside the
// requested split; anchors advance one interval at a time.
std::vector<SampleWindow> make_windows(const IntervalSeries& series, int n, int m, Split split);

// --- CSV ingest ---

struct TripCsvStats {
    std::size_t rows = 0;
    std::size_t malformed = 0;  // unparseable timestamp or numeric field
};

// Expected header: pickup_datetime,pickup_longitude,pickup_latitude,
// dropoff_longitude,dropoff_latitude.  Malformed rows are skipped and counted.
std::vector<TripRecord> read_trip_csv(const std::string& path, TripCsvStats* stats = nullptr);

// Expected header: datetime,temp_c,windchill_c,humidity_pct,visibility_km,
// wind_kmh,precip_mm,condition.  Empty numeric fields are missing readings.
std::vector<MeteoRecord> read_meteo_csv(const std::string& path);

// Buckets trips into fixed intervals, aligns weather records by interval
// start time (absent intervals get an all-missing record), splits the tail
// off for testing and computes normalization statistics from the train part.
IntervalSeries build_series(const GridSpec& grid, const std::vector<TripRecord>& trips,
                            const std::vector<MeteoRecord>& meteo, int interval_minutes,
                            double test_fraction, IngestStats* stats = nullptr);

// --- cache file ---

void save_series(const std::string& path, const IntervalSeries& series);
IntervalSeries load_series(const std::string& path);

}  // namespace cstn
