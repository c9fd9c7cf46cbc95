#pragma once

#include "artgan/trainer.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace artgan {

enum class ValueType { integer, real, boolean, text };

struct ConfigKey {
    std::string_view name;
    ValueType type;
    std::string_view help;
};

/// Every key accepted in a config file or as a `--key-name` flag.
const std::vector<ConfigKey>& config_schema();

/// Resolved settings for one command-line run: training, dataset, metrics,
/// sampling and survey parameters in one flat namespace.
struct RunConfig {
    TrainConfig train;
    std::string data_dir;
    std::string out;
    std::string checkpoint;
    std::size_t count = 64;
    std::string real;
    std::string gen;
    /// 0 selects min(n, 100).
    std::size_t kid_block = 0;
    std::size_t kid_blocks = 10;
    std::string responses;
    bool allow_partial = false;

    /// Keys assigned so far, by file or flag.
    std::set<std::string> assigned;

    /// Type-checks `value` against the schema. Throws ConfigError for unknown
    /// keys and malformed values.
    void set(std::string_view key, std::string_view value);
    std::string get(std::string_view key) const;
    bool was_set(std::string_view key) const { return assigned.count(std::string(key)) > 0; }

    /// UTF-8 lines `key = value`; `#` starts a comment. Repeated keys and
    /// unknown keys are errors naming the line.
    void merge_text(std::string_view text);
    void merge_file(const std::filesystem::path& path);

    /// Every schema key with its resolved value, in schema order; readable by
    /// merge_text.
    std::string echo() const;
};

} // namespace artgan
