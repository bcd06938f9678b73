#include "cstn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "cstn/binio.hpp"
#include "cstn/errors.hpp"
#include "cstn/timeutil.hpp"

namespace cstn {

namespace {
constexpr char kSeriesMagic[8] = {'C', 'S', 'T', 'N', 'D', 'S', '0', '1'};
constexpr std::uint32_t kSeriesVersion = 1;
}  // namespace

void GridSpec::validate() const {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("GridSpec: rows/cols must be positive");
    if (!(lat_min < lat_max) || !(lon_min < lon_max))
        throw std::invalid_argument("GridSpec: bounding box must have positive extent");
    if (!std::isfinite(lat_min) || !std::isfinite(lat_max) || !std::isfinite(lon_min) ||
        !std::isfinite(lon_max))
        throw std::invalid_argument("GridSpec: bounding box must be finite");
}

RegionRef assign_region(const GridSpec& grid, double lat, double lon) {
    RegionRef ref;
    if (!std::isfinite(lat) || !std::isfinite(lon)) {
        ref.status = RegionStatus::Invalid;
        return ref;
    }
    if (lat < grid.lat_min || lat > grid.lat_max || lon < grid.lon_min || lon > grid.lon_max) {
        ref.status = RegionStatus::OutOfBounds;
        return ref;
    }
    // Half-open cells; the top row / rightmost column close the interval so
    // the box maximum still belongs to the grid.
    const double cell_lat = (grid.lat_max - grid.lat_min) / grid.rows;
    const double cell_lon = (grid.lon_max - grid.lon_min) / grid.cols;
    int i = static_cast<int>((lat - grid.lat_min) / cell_lat);
    int j = static_cast<int>((lon - grid.lon_min) / cell_lon);
    if (i >= grid.rows) i = grid.rows - 1;
    if (j >= grid.cols) j = grid.cols - 1;
    ref.status = RegionStatus::Ok;
    ref.i = i;
    ref.j = j;
    return ref;
}

Tensor build_od_tensor(const GridSpec& grid, const std::vector<TripRecord>& trips, IngestStats* stats) {
    grid.validate();
    Tensor od({grid.region_count(), grid.rows, grid.cols});
    for (const TripRecord& trip : trips) {
        const RegionRef o = assign_region(grid, trip.pickup_lat, trip.pickup_lon);
        const RegionRef d = assign_region(grid, trip.dropoff_lat, trip.dropoff_lon);
        if (o.status == RegionStatus::Invalid || d.status == RegionStatus::Invalid) {
            if (stats) ++stats->invalid_coord;
            continue;
        }
        if (o.status == RegionStatus::OutOfBounds || d.status == RegionStatus::OutOfBounds) {
            if (stats) ++stats->out_of_bounds;
            continue;
        }
        od.at(grid.region_index(d.i, d.j), o.i, o.j) += 1.0;
        if (stats) ++stats->used;
    }
    return od;
}

Tensor transpose_od(const Tensor& od) {
    if (od.rank() != 3 || od.dim(0) != od.dim(1) * od.dim(2))
        throw std::invalid_argument("transpose_od: expected [N, H, W] with N = H*W, got " + od.shape_str());
    const int N = od.dim(0);
    Tensor out(od.shape());
    // Flattened, the tensor is an N x N matrix indexed [destination][origin];
    // swapping the roles is a plain matrix transpose.
    for (int d = 0; d < N; ++d)
        for (int o = 0; o < N; ++o)
            out[static_cast<std::size_t>(o) * N + d] = od[static_cast<std::size_t>(d) * N + o];
    return out;
}

Tensor origin_demand(const Tensor& od) {
    if (od.rank() != 3 || od.dim(0) != od.dim(1) * od.dim(2))
        throw std::invalid_argument("origin_demand: expected [N, H, W] with N = H*W, got " + od.shape_str());
    const int N = od.dim(0), H = od.dim(1), W = od.dim(2);
    Tensor out({H, W});
    for (int d = 0; d < N; ++d)
        for (int s = 0; s < N; ++s) out[s] += od[static_cast<std::size_t>(d) * N + s];
    return out;
}

double normalize_value(double x, double lo, double hi) {
    if (!(hi > lo)) throw std::invalid_argument("normalize: degenerate range (max must exceed min)");
    return 2.0 * (x - lo) / (hi - lo) - 1.0;
}

double denormalize_value(double x, double lo, double hi) {
    if (!(hi > lo)) throw std::invalid_argument("denormalize: degenerate range (max must exceed min)");
    return lo + (x + 1.0) * 0.5 * (hi - lo);
}

Tensor normalize_od(const Tensor& od, const NormStats& stats) {
    Tensor out(od.shape());
    for (std::size_t i = 0; i < od.numel(); ++i) out[i] = normalize_value(od[i], stats.od_min, stats.od_max);
    return out;
}

Tensor denormalize_od(const Tensor& od_norm, const NormStats& stats) {
    Tensor out(od_norm.shape());
    for (std::size_t i = 0; i < od_norm.numel(); ++i)
        out[i] = denormalize_value(od_norm[i], stats.od_min, stats.od_max);
    return out;
}

const std::vector<std::string>& default_weather_vocab() {
    static const std::vector<std::string> vocab = {
        "Clear",         "Sunny",        "Partly Cloudy", "Mostly Cloudy", "Overcast",
        "Scattered Clouds", "Haze",      "Fog",           "Mist",          "Drizzle",
        "Light Rain",    "Rain",         "Heavy Rain",    "Thunderstorm",  "Light Snow",
        "Snow",          "Heavy Snow",   "Sleet",         "Freezing Rain", "Hail",
        "Squalls",       "Smoke",        "Unknown"};
    return vocab;
}

Tensor encode_meteo(const MeteoRecord& rec, const NormStats& stats,
                    const std::vector<std::string>& vocab) {
    if (vocab.empty()) throw std::invalid_argument("encode_meteo: empty vocabulary");
    const int V = static_cast<int>(vocab.size());
    Tensor out({V + kIndicatorCount});
    int slot = V - 1;  // unrecognized labels take the final slot
    for (int i = 0; i < V; ++i)
        if (vocab[i] == rec.condition) {
            slot = i;
            break;
        }
    out[slot] = 1.0;
    for (int i = 0; i < kIndicatorCount; ++i) {
        const double lo = stats.ind_min[i], hi = stats.ind_max[i];
        double x = rec.present[i] ? rec.indicators[i] : stats.ind_mean[i];
        out[V + i] = hi > lo ? (x - lo) / (hi - lo) : 0.5;
    }
    return out;
}

int IntervalSeries::slot_of(int idx) const {
    return seconds_of_day(time_of(idx)) / (interval_minutes * 60);
}

void IntervalSeries::validate() const {
    grid.validate();
    if (interval_minutes <= 0 || 1440 % interval_minutes != 0)
        throw std::invalid_argument("IntervalSeries: interval_minutes must divide a day");
    if (od.size() != meteo.size())
        throw std::invalid_argument("IntervalSeries: weather records not aligned with intervals");
    if (train_intervals < 1 || train_intervals > interval_count())
        throw std::invalid_argument("IntervalSeries: train split out of range");
    const std::vector<int> want = {grid.region_count(), grid.rows, grid.cols};
    for (const Tensor& t : od)
        if (t.shape() != want)
            throw std::invalid_argument("IntervalSeries: interval tensor shape " + t.shape_str() +
                                        " does not match grid");
}

NormStats compute_norm_stats(const IntervalSeries& series) {
    NormStats st;
    bool first = true;
    for (int t = 0; t < series.train_intervals; ++t) {
        const Tensor& od = series.od[t];
        for (std::size_t i = 0; i < od.numel(); ++i) {
            if (first) {
                st.od_min = st.od_max = od[i];
                first = false;
            } else {
                st.od_min = std::min(st.od_min, od[i]);
                st.od_max = std::max(st.od_max, od[i]);
            }
        }
    }
    for (int k = 0; k < kIndicatorCount; ++k) {
        double lo = 0.0, hi = 0.0, sum = 0.0;
        std::size_t count = 0;
        for (int t = 0; t < series.train_intervals; ++t) {
            const MeteoRecord& m = series.meteo[t];
            if (!m.present[k]) continue;
            const double v = m.indicators[k];
            if (count == 0) {
                lo = hi = v;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            sum += v;
            ++count;
        }
        if (count == 0) {
            // no readings at all: neutral placeholders
            st.ind_min[k] = 0.0;
            st.ind_max[k] = 1.0;
            st.ind_mean[k] = 0.5;
        } else {
            st.ind_min[k] = lo;
            st.ind_max[k] = hi;
            st.ind_mean[k] = sum / static_cast<double>(count);
        }
    }
    return st;
}

std::vector<SampleWindow> make_windows(const IntervalSeries& series, int n, int m, Split split) {
    if (n < 1 || m < 1) throw std::invalid_argument("make_windows: n and m must be positive");
    series.validate();
    const int lo = split == Split::Train ? 0 : series.train_intervals;
    const int hi = split == Split::Train ? series.train_intervals : series.interval_count();
    std::vector<SampleWindow> windows;
    const auto& vocab = default_weather_vocab();
    for (int t = lo + n - 1; t + m <= hi - 1; ++t) {
        SampleWindow w;
        w.anchor = t;
        w.inputs.reserve(n);
        w.meteo.reserve(n);
        for (int s = t - n + 1; s <= t; ++s) {
            w.inputs.push_back(normalize_od(series.od[s], series.stats));
            w.meteo.push_back(encode_meteo(series.meteo[s], series.stats, vocab));
        }
        for (int s = t + 1; s <= t + m; ++s) {
            w.targets.push_back(normalize_od(series.od[s], series.stats));
            w.target_intervals.push_back(s);
        }
        windows.push_back(std::move(w));
    }
    return windows;
}

// --- CSV ingest ---

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

}  // namespace

std::vector<TripRecord> read_trip_csv(const std::string& path, TripCsvStats* stats) {
    std::ifstream in(path);
    if (!in) throw MissingInputError("cannot open trip csv '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("trip csv '" + path + "' is empty");
    const std::string expect =
        "pickup_datetime,pickup_longitude,pickup_latitude,dropoff_longitude,dropoff_latitude";
    {
        auto fields = split_csv_line(line);
        std::string got;
        for (std::size_t i = 0; i < fields.size(); ++i) got += (i ? "," : "") + fields[i];
        if (got != expect)
            throw ConfigError("trip csv '" + path + "' header mismatch; expected '" + expect + "'");
    }
    std::vector<TripRecord> trips;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (stats) ++stats->rows;
        auto f = split_csv_line(line);
        TripRecord rec;
        std::optional<std::int64_t> ts;
        if (f.size() == 5) ts = parse_datetime(f[0]);
        bool ok = f.size() == 5 && ts.has_value();
        // lon/lat pairs; "nan" parses as a value and is rejected later at binning
        ok = ok && parse_double(f[1], rec.pickup_lon) && parse_double(f[2], rec.pickup_lat) &&
             parse_double(f[3], rec.dropoff_lon) && parse_double(f[4], rec.dropoff_lat);
        if (!ok) {
            if (stats) ++stats->malformed;
            continue;
        }
        rec.pickup_time = *ts;
        trips.push_back(rec);
    }
    return trips;
}

std::vector<MeteoRecord> read_meteo_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingInputError("cannot open weather csv '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("weather csv '" + path + "' is empty");
    const std::string expect = "datetime,temp_c,windchill_c,humidity_pct,visibility_km,wind_kmh,precip_mm,condition";
    {
        auto fields = split_csv_line(line);
        std::string got;
        for (std::size_t i = 0; i < fields.size(); ++i) got += (i ? "," : "") + fields[i];
        if (got != expect)
            throw ConfigError("weather csv '" + path + "' header mismatch; expected '" + expect + "'");
    }
    std::vector<MeteoRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 8) continue;
        auto ts = parse_datetime(f[0]);
        if (!ts) continue;
        MeteoRecord rec;
        rec.time = *ts;
        for (int k = 0; k < kIndicatorCount; ++k) {
            double v;
            if (parse_double(f[1 + k], v) && std::isfinite(v)) {
                rec.indicators[k] = v;
                rec.present[k] = true;
            }
        }
        rec.condition = f[7];
        records.push_back(rec);
    }
    return records;
}

IntervalSeries build_series(const GridSpec& grid, const std::vector<TripRecord>& trips,
                            const std::vector<MeteoRecord>& meteo, int interval_minutes,
                            double test_fraction, IngestStats* stats) {
    grid.validate();
    if (interval_minutes <= 0 || 1440 % interval_minutes != 0)
        throw ConfigError("interval_minutes must divide a day, got " + std::to_string(interval_minutes));
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw ConfigError("test_fraction must lie in [0, 1)");
    if (trips.empty()) throw ConfigError("no usable trip rows");

    const std::int64_t step = static_cast<std::int64_t>(interval_minutes) * 60;
    std::int64_t tmin = trips.front().pickup_time, tmax = tmin;
    for (const TripRecord& t : trips) {
        tmin = std::min(tmin, t.pickup_time);
        tmax = std::max(tmax, t.pickup_time);
    }
    const std::int64_t first = floor_div(tmin, step);
    const std::int64_t last = floor_div(tmax, step);
    const std::int64_t count64 = last - first + 1;
    if (count64 > 500000) throw ConfigError("trip timestamps span too many intervals");
    const int count = static_cast<int>(count64);

    IntervalSeries series;
    series.grid = grid;
    series.interval_minutes = interval_minutes;
    series.start_time = first * step;

    std::vector<std::vector<TripRecord>> buckets(static_cast<std::size_t>(count));
    for (const TripRecord& t : trips)
        buckets[static_cast<std::size_t>(floor_div(t.pickup_time, step) - first)].push_back(t);
    series.od.reserve(count);
    for (int i = 0; i < count; ++i) series.od.push_back(build_od_tensor(grid, buckets[i], stats));

    // Weather rows attach to the interval containing their timestamp; when
    // several fall into one interval the last row wins.
    std::unordered_map<std::int64_t, const MeteoRecord*> by_interval;
    for (const MeteoRecord& m : meteo) {
        const std::int64_t idx = floor_div(m.time, step) - first;
        if (idx >= 0 && idx < count) by_interval[idx] = &m;
    }
    series.meteo.resize(count);
    for (int i = 0; i < count; ++i) {
        auto it = by_interval.find(i);
        if (it != by_interval.end()) {
            series.meteo[i] = *it->second;
        } else {
            series.meteo[i].time = series.time_of(i);
            series.meteo[i].condition = "Unknown";
        }
    }

    const int test = static_cast<int>(std::lround(count * test_fraction));
    series.train_intervals = std::max(1, count - test);
    series.stats = compute_norm_stats(series);
    series.validate();
    return series;
}

void save_series(const std::string& path, const IntervalSeries& series) {
    series.validate();
    ByteWriter w;
    w.raw(kSeriesMagic, sizeof(kSeriesMagic));
    w.u32(kSeriesVersion);
    w.f64(series.grid.lat_min);
    w.f64(series.grid.lat_max);
    w.f64(series.grid.lon_min);
    w.f64(series.grid.lon_max);
    w.i32(series.grid.rows);
    w.i32(series.grid.cols);
    w.i32(series.interval_minutes);
    w.i64(series.start_time);
    w.i32(series.train_intervals);
    w.i32(series.interval_count());
    w.f64(series.stats.od_min);
    w.f64(series.stats.od_max);
    for (int k = 0; k < kIndicatorCount; ++k) {
        w.f64(series.stats.ind_min[k]);
        w.f64(series.stats.ind_max[k]);
        w.f64(series.stats.ind_mean[k]);
    }
    for (int t = 0; t < series.interval_count(); ++t) {
        const Tensor& od = series.od[t];
        for (std::size_t i = 0; i < od.numel(); ++i)
            w.u32(static_cast<std::uint32_t>(std::llround(od[i])));
        const MeteoRecord& m = series.meteo[t];
        w.i64(m.time);
        for (int k = 0; k < kIndicatorCount; ++k) w.f64(m.indicators[k]);
        for (int k = 0; k < kIndicatorCount; ++k) w.u8(m.present[k] ? 1 : 0);
        w.str(m.condition);
    }
    w.to_file(path);
}

IntervalSeries load_series(const std::string& path) {
    ByteReader r = ByteReader::from_file(path, "dataset cache");
    char magic[8];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (std::memcmp(magic, kSeriesMagic, sizeof(kSeriesMagic)) != 0) r.fail("bad magic");
    const std::uint32_t version = r.u32();
    if (version != kSeriesVersion)
        r.fail("unsupported version " + std::to_string(version));
    IntervalSeries series;
    series.grid.lat_min = r.f64();
    series.grid.lat_max = r.f64();
    series.grid.lon_min = r.f64();
    series.grid.lon_max = r.f64();
    series.grid.rows = r.i32();
    series.grid.cols = r.i32();
    series.interval_minutes = r.i32();
    series.start_time = r.i64();
    series.train_intervals = r.i32();
    const int count = r.i32();
    if (count < 1 || count > 500000) r.fail("interval count out of range");
    series.stats.od_min = r.f64();
    series.stats.od_max = r.f64();
    for (int k = 0; k < kIndicatorCount; ++k) {
        series.stats.ind_min[k] = r.f64();
        series.stats.ind_max[k] = r.f64();
        series.stats.ind_mean[k] = r.f64();
    }
    const int N = series.grid.region_count();
    series.od.reserve(count);
    series.meteo.resize(count);
    for (int t = 0; t < count; ++t) {
        Tensor od({N, series.grid.rows, series.grid.cols});
        for (std::size_t i = 0; i < od.numel(); ++i) od[i] = static_cast<double>(r.u32());
        series.od.push_back(std::move(od));
        MeteoRecord& m = series.meteo[t];
        m.time = r.i64();
        for (int k = 0; k < kIndicatorCount; ++k) m.indicators[k] = r.f64();
        for (int k = 0; k < kIndicatorCount; ++k) m.present[k] = r.u8() != 0;
        m.condition = r.str();
    }
    if (!r.at_end()) r.fail("unexpected trailing bytes");
    try {
        series.validate();
    } catch (const std::invalid_argument& e) {
        r.fail(e.what());
    }
    return series;
}

}  // namespace cstn
