#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cstn {

// Flat key=value run configuration: one fixed key table with defaults, values
// from an optional config file overridden by command-line pairs.  Unknown
// keys are rejected up front so typos cannot silently fall back to defaults.
struct KeySpec {
    const char* name;
    const char* def;
    const char* help;
};

class RunConfig {
public:
    static const std::vector<KeySpec>& key_table();

    // Lines of `key = value`; '#' starts a comment, blank lines are skipped.
    void load_file(const std::string& path);
    // A single "key=value" override (command-line form).
    void set_override(const std::string& pair);
    void set(const std::string& key, const std::string& value);

    bool is_known(const std::string& key) const;
    bool is_set(const std::string& key) const;  // explicitly, not via default

    std::string get_string(const std::string& key) const;
    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;

    // Every key with its effective value, sorted by key.
    std::map<std::string, std::string> resolved() const;
    std::uint64_t digest() const;

    // Sorted resolved config plus command name and digest.
    void write_manifest(const std::string& path, const std::string& command) const;

private:
    const char* default_of(const std::string& key) const;

    std::map<std::string, std::string> values_;
};

}  // namespace cstn
