#include "artgan/run_config.hpp"

#include "artgan/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace artgan {

const std::vector<ConfigKey>& config_schema()
{
    using T = ValueType;
    static const std::vector<ConfigKey> schema{
        {"resolution", T::integer, "image side length (power of two, 8..1024)"},
        {"dim_z", T::integer, "latent dimension"},
        {"dim_w", T::integer, "intermediate latent dimension"},
        {"mapping_layers", T::integer, "mapping network depth"},
        {"channel_base", T::integer, "feature maps at resolution r: min(channel_base / r, channel_max)"},
        {"channel_max", T::integer, "upper bound on feature maps per layer"},
        {"batch_size", T::integer, "images per training iteration"},
        {"learning_rate_g", T::real, "generator Adam learning rate"},
        {"learning_rate_d", T::real, "discriminator Adam learning rate"},
        {"adam_beta1", T::real, "Adam first-moment decay"},
        {"adam_beta2", T::real, "Adam second-moment decay"},
        {"adam_eps", T::real, "Adam epsilon"},
        {"total_iterations", T::integer, "training iterations"},
        {"checkpoint_interval", T::integer, "iterations between rolling checkpoints"},
        {"fid_monitor_interval", T::integer, "iterations between FID monitor points"},
        {"fid_monitor_samples", T::integer, "generated images per FID monitor point"},
        {"extractor", T::text, "feature extractor: pool, randproj-<k>, or file (evaluate only)"},
        {"seed", T::integer, "master seed (sampling seed for generate and evaluate)"},
        {"augment_flip", T::boolean, "random horizontal flips of real images"},
        {"r1_gamma", T::real, "R1 penalty weight (0 disables)"},
        {"r1_interval", T::integer, "iterations between lazy R1 steps"},
        {"ema_kimg", T::real, "generator weight-average half-life in thousands of images"},
        {"ema_rampup", T::real, "caps the half-life at this fraction of images seen (0 disables)"},
        {"stop_patience", T::integer, "FID points without improvement before stopping (0 disables)"},
        {"stop_min_delta", T::real, "minimum FID improvement that resets patience"},
        {"data_dir", T::text, "directory of PNG/JPEG training images"},
        {"out", T::text, "output directory or file"},
        {"checkpoint", T::text, "checkpoint file"},
        {"count", T::integer, "number of images to generate"},
        {"real", T::text, "real image directory or feature file"},
        {"gen", T::text, "generated image directory or feature file"},
        {"kid_block", T::integer, "KID block size (0 = min(n, 100))"},
        {"kid_blocks", T::integer, "number of KID blocks"},
        {"responses", T::text, "survey response CSV"},
        {"allow_partial", T::boolean, "aggregate surveys with missing judgments"},
    };
    return schema;
}

namespace {

const ConfigKey* find_key(std::string_view name)
{
    for (const auto& k : config_schema()) {
        if (k.name == name) {
            return &k;
        }
    }
    return nullptr;
}

std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

std::uint64_t parse_uint(std::string_view key, std::string_view v)
{
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError(std::string(key) + " expects a non-negative integer, got '" + std::string(v) + "'");
    }
    return out;
}

double parse_real(std::string_view key, std::string_view v)
{
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError(std::string(key) + " expects a number, got '" + std::string(v) + "'");
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    throw ConfigError(std::string(key) + " expects true or false, got '" + std::string(v) + "'");
}

std::string format_real(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void RunConfig::set(std::string_view key, std::string_view raw)
{
    const ConfigKey* k = find_key(key);
    if (!k) {
        throw ConfigError("unknown configuration key '" + std::string(key) + "'");
    }
    std::string_view v = trim(raw);
    if (k->type == ValueType::text && v.size() >= 2 && v.front() == '"' && v.back() == '"') {
        v = v.substr(1, v.size() - 2);
    }
    auto& m = train.model;
    const auto u = [&] { return static_cast<std::size_t>(parse_uint(key, v)); };
    const auto r = [&] { return parse_real(key, v); };
    if (key == "resolution") m.resolution = u();
    else if (key == "dim_z") m.dim_z = u();
    else if (key == "dim_w") m.dim_w = u();
    else if (key == "mapping_layers") m.mapping_layers = u();
    else if (key == "channel_base") m.channel_base = u();
    else if (key == "channel_max") m.channel_max = u();
    else if (key == "batch_size") train.batch_size = u();
    else if (key == "learning_rate_g") train.learning_rate_g = r();
    else if (key == "learning_rate_d") train.learning_rate_d = r();
    else if (key == "adam_beta1") train.beta1 = r();
    else if (key == "adam_beta2") train.beta2 = r();
    else if (key == "adam_eps") train.adam_eps = r();
    else if (key == "total_iterations") train.total_iterations = u();
    else if (key == "checkpoint_interval") train.checkpoint_interval = u();
    else if (key == "fid_monitor_interval") train.fid_monitor_interval = u();
    else if (key == "fid_monitor_samples") train.fid_monitor_samples = u();
    else if (key == "extractor") train.extractor = std::string(v);
    else if (key == "seed") train.seed = parse_uint(key, v);
    else if (key == "augment_flip") train.augment_flip = parse_bool(key, v);
    else if (key == "r1_gamma") train.r1_gamma = r();
    else if (key == "r1_interval") train.r1_interval = u();
    else if (key == "ema_kimg") train.ema_kimg = r();
    else if (key == "ema_rampup") train.ema_rampup = r();
    else if (key == "stop_patience") train.stop_patience = u();
    else if (key == "stop_min_delta") train.stop_min_delta = r();
    else if (key == "data_dir") data_dir = std::string(v);
    else if (key == "out") out = std::string(v);
    else if (key == "checkpoint") checkpoint = std::string(v);
    else if (key == "count") count = u();
    else if (key == "real") real = std::string(v);
    else if (key == "gen") gen = std::string(v);
    else if (key == "kid_block") kid_block = u();
    else if (key == "kid_blocks") kid_blocks = u();
    else if (key == "responses") responses = std::string(v);
    else if (key == "allow_partial") allow_partial = parse_bool(key, v);
    assigned.insert(std::string(key));
}

std::string RunConfig::get(std::string_view key) const
{
    const auto& m = train.model;
    const auto s = [](auto v) { return std::to_string(v); };
    if (key == "resolution") return s(m.resolution);
    if (key == "dim_z") return s(m.dim_z);
    if (key == "dim_w") return s(m.dim_w);
    if (key == "mapping_layers") return s(m.mapping_layers);
    if (key == "channel_base") return s(m.channel_base);
    if (key == "channel_max") return s(m.channel_max);
    if (key == "batch_size") return s(train.batch_size);
    if (key == "learning_rate_g") return format_real(train.learning_rate_g);
    if (key == "learning_rate_d") return format_real(train.learning_rate_d);
    if (key == "adam_beta1") return format_real(train.beta1);
    if (key == "adam_beta2") return format_real(train.beta2);
    if (key == "adam_eps") return format_real(train.adam_eps);
    if (key == "total_iterations") return s(train.total_iterations);
    if (key == "checkpoint_interval") return s(train.checkpoint_interval);
    if (key == "fid_monitor_interval") return s(train.fid_monitor_interval);
    if (key == "fid_monitor_samples") return s(train.fid_monitor_samples);
    if (key == "extractor") return train.extractor;
    if (key == "seed") return s(train.seed);
    if (key == "augment_flip") return train.augment_flip ? "true" : "false";
    if (key == "r1_gamma") return format_real(train.r1_gamma);
    if (key == "r1_interval") return s(train.r1_interval);
    if (key == "ema_kimg") return format_real(train.ema_kimg);
    if (key == "ema_rampup") return format_real(train.ema_rampup);
    if (key == "stop_patience") return s(train.stop_patience);
    if (key == "stop_min_delta") return format_real(train.stop_min_delta);
    if (key == "data_dir") return data_dir;
    if (key == "out") return out;
    if (key == "checkpoint") return checkpoint;
    if (key == "count") return s(count);
    if (key == "real") return real;
    if (key == "gen") return gen;
    if (key == "kid_block") return s(kid_block);
    if (key == "kid_blocks") return s(kid_blocks);
    if (key == "responses") return responses;
    if (key == "allow_partial") return allow_partial ? "true" : "false";
    throw ConfigError("unknown configuration key '" + std::string(key) + "'");
}

void RunConfig::merge_text(std::string_view text)
{
    std::set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        std::string_view line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        const std::string where = "config line " + std::to_string(line_no) + ": ";
        if (eq == std::string_view::npos) {
            throw ConfigError(where + "expected 'key = value'");
        }
        const std::string key(trim(line.substr(0, eq)));
        if (!seen.insert(key).second) {
            throw ConfigError(where + "key '" + key + "' appears twice");
        }
        try {
            set(key, line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
}

void RunConfig::merge_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    merge_text(text.str());
}

std::string RunConfig::echo() const
{
    std::string out = "# resolved artgan configuration\n";
    for (const auto& k : config_schema()) {
        out += std::string(k.name) + " = " + get(k.name) + "\n";
    }
    return out;
}

} // namespace artgan
