#include "cstn/runconfig.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "cstn/errors.hpp"
#include "cstn/rng.hpp"

namespace cstn {

const std::vector<KeySpec>& RunConfig::key_table() {
    static const std::vector<KeySpec> table = {
        // shared
        {"out_dir", "out", "directory for run artifacts and manifests"},
        {"seed", "1", "master seed for init, shuffling and synthesis"},
        {"cache", "", "dataset cache path (output of ingest/synth, input elsewhere)"},
        {"checkpoint", "", "checkpoint path (output of train, input of evaluate/predict)"},

        // ingest
        {"trips_csv", "", "trip records csv"},
        {"meteo_csv", "", "weather records csv (optional)"},
        {"lat_min", "0", "grid bounding box, south edge"},
        {"lat_max", "1", "grid bounding box, north edge"},
        {"lon_min", "0", "grid bounding box, west edge"},
        {"lon_max", "1", "grid bounding box, east edge"},
        {"grid_rows", "15", "latitude bins"},
        {"grid_cols", "5", "longitude bins"},
        {"interval_minutes", "30", "aggregation interval; must divide a day"},
        {"test_fraction", "0.2", "tail fraction of intervals held out for testing"},

        // synth
        {"synth_intervals", "2000", "number of synthetic intervals"},
        {"synth_base_rate", "6.0", "peak mean trips per region pair"},
        {"synth_diurnal", "0.7", "daily cycle amplitude in [0,1]"},
        {"synth_weather", "0.6", "weather damping strength in [0,1]"},
        {"synth_poisson", "true", "draw counts from a Poisson (false: deterministic rates)"},
        {"synth_flat", "false", "equal rates for all region pairs"},

        // model
        {"input_steps", "5", "input intervals per sample (n)"},
        {"horizon", "1", "prediction steps per sample (m)"},
        {"local_depth", "3", "conv layers per local view"},
        {"local_channels", "16", "filters per local view layer"},
        {"fuse_channels", "32", "fused local feature width"},
        {"lstm_channels", "32", "recurrent state width"},
        {"seq_channels", "75", "sequence feature width"},
        {"sim_channels", "64", "similarity embedding width"},
        {"meteo_hidden1", "64", "weather net first hidden width"},
        {"meteo_hidden2", "16", "weather net second hidden width"},
        {"meteo_embed", "8", "weather embedding channels"},
        {"destination_view", "true", "enable the transposed-view conv stack"},
        {"meteo_enabled", "true", "condition the sequence on weather"},
        {"temporal_enabled", "true", "enable the recurrent stage"},
        {"correlation_enabled", "true", "enable the region-affinity stage"},

        // training
        {"batch_size", "64", "minibatch size"},
        {"base_lr", "0.0001", "initial Adam learning rate"},
        {"lr_decay", "0.1", "learning-rate multiplier per decay period"},
        {"lr_decay_every", "200", "epochs per decay period"},
        {"epochs", "700", "training epochs"},
        {"shuffle", "true", "reshuffle samples every epoch"},
        {"threads", "0", "worker threads (0 = hardware)"},
        {"stop_loss_ratio", "0", "early stop once loss < ratio * first epoch (0 = off)"},
        {"resume_from", "", "checkpoint to continue training from"},
        {"loss_csv", "", "per-epoch loss trace (default <out_dir>/loss.csv)"},

        // evaluation / baselines
        {"report_csv", "", "metrics report (default <out_dir>/report.csv)"},
        {"min_demand", "5", "ground-truth threshold for metric entries"},
        {"high_demand_k", "20", "regions in the high-demand subset (clamped to N)"},
        {"baseline", "ha_rec", "baseline name: ha_all | ha_rec | olsr | mlp"},
        {"olsr_ridge", "1e-8", "ridge jitter for the least-squares baseline"},
        {"mlp_epochs", "200", "training epochs for the mlp baseline"},
        {"mlp_lr", "0.001", "learning rate for the mlp baseline"},

        // predict
        {"predictions_csv", "", "prediction dump (default <out_dir>/predictions.csv)"},
        {"predict_limit", "0", "max windows to predict (0 = all)"},
    };
    return table;
}

const char* RunConfig::default_of(const std::string& key) const {
    for (const KeySpec& spec : key_table())
        if (key == spec.name) return spec.def;
    return nullptr;
}

bool RunConfig::is_known(const std::string& key) const { return default_of(key) != nullptr; }
bool RunConfig::is_set(const std::string& key) const { return values_.count(key) != 0; }

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!is_known(key)) throw ConfigError("unknown configuration key '" + key + "'");
    values_[key] = value;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    std::size_t e = s.find_last_not_of(" \t");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingInputError("cannot open config file '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config file '" + path + "' line " + std::to_string(lineno) +
                              ": expected key = value");
        set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
}

void RunConfig::set_override(const std::string& pair) {
    const std::size_t eq = pair.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + pair + "' is not of the form key=value");
    set(trim(pair.substr(0, eq)), trim(pair.substr(eq + 1)));
}

std::string RunConfig::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it != values_.end()) return it->second;
    const char* def = default_of(key);
    if (def == nullptr) throw ConfigError("unknown configuration key '" + key + "'");
    return def;
}

int RunConfig::get_int(const std::string& key) const {
    const std::string v = get_string(key);
    char* end = nullptr;
    const long parsed = std::strtol(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size())
        throw ConfigError("key '" + key + "': '" + v + "' is not an integer");
    return static_cast<int>(parsed);
}

double RunConfig::get_double(const std::string& key) const {
    const std::string v = get_string(key);
    char* end = nullptr;
    const double parsed = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size())
        throw ConfigError("key '" + key + "': '" + v + "' is not a number");
    return parsed;
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string v = get_string(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("key '" + key + "': '" + v + "' is not a boolean (true/false)");
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const std::string v = get_string(key);
    char* end = nullptr;
    const unsigned long long parsed = std::strtoull(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size())
        throw ConfigError("key '" + key + "': '" + v + "' is not an unsigned integer");
    return parsed;
}

std::map<std::string, std::string> RunConfig::resolved() const {
    std::map<std::string, std::string> out;
    for (const KeySpec& spec : key_table()) out[spec.name] = spec.def;
    for (const auto& [k, v] : values_) out[k] = v;
    return out;
}

std::uint64_t RunConfig::digest() const {
    std::string joined;
    for (const auto& [k, v] : resolved()) {
        joined += k;
        joined += '=';
        joined += v;
        joined += '\n';
    }
    return fnv1a64(joined.data(), joined.size());
}

void RunConfig::write_manifest(const std::string& path, const std::string& command) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw MissingInputError("cannot open manifest '" + path + "' for writing");
    char digest_hex[32];
    std::snprintf(digest_hex, sizeof(digest_hex), "%016llx",
                  static_cast<unsigned long long>(digest()));
    out << "command = " << command << "\n";
    out << "config_digest = " << digest_hex << "\n";
    for (const auto& [k, v] : resolved()) out << k << " = " << v << "\n";
    if (!out) throw MissingInputError("short write to manifest '" + path + "'");
}

}  // namespace cstn
