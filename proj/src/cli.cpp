#include "artgan/cli.hpp"

#include "artgan/binary_io.hpp"
#include "artgan/dataset.hpp"
#include "artgan/errors.hpp"
#include "artgan/metrics.hpp"
#include "artgan/rng.hpp"
#include "artgan/run_config.hpp"
#include "artgan/survey.hpp"
#include "artgan/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>

#ifndef ARTGAN_VERSION
#define ARTGAN_VERSION "unknown"
#endif

namespace artgan::cli {

namespace fs = std::filesystem;

Image sample_grid(const Tensor& images, std::size_t per_row)
{
    if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != images.dim(3)) {
        throw ShapeError("sample_grid expects N x 3 x R x R images");
    }
    if (per_row == 0) {
        throw ConfigError("sample_grid needs at least one image per row");
    }
    const std::size_t n = images.dim(0), r = images.dim(2);
    const std::size_t cols = std::min(per_row, std::max<std::size_t>(n, 1));
    const std::size_t rows = std::max<std::size_t>((n + per_row - 1) / per_row, 1);
    Image grid;
    grid.width = cols * r;
    grid.height = rows * r;
    grid.channels = 3;
    grid.pixels.assign(grid.width * grid.height * 3, 0);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor one({3, r, r});
        std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(i * 3 * r * r), 3 * r * r, one.data().begin());
        const Image tile = planar_to_image(one);
        const std::size_t x0 = (i % per_row) * r, y0 = (i / per_row) * r;
        for (std::size_t y = 0; y < r; ++y) {
            std::copy_n(tile.pixels.begin() + static_cast<std::ptrdiff_t>(y * r * 3), r * 3,
                        grid.pixels.begin() + static_cast<std::ptrdiff_t>(((y0 + y) * grid.width + x0) * 3));
        }
    }
    return grid;
}

namespace {

void require(const RunConfig& rc, std::string_view key)
{
    if (rc.get(key).empty()) {
        std::string flag(key);
        std::replace(flag.begin(), flag.end(), '_', '-');
        throw ConfigError("--" + flag + " is required");
    }
}

void make_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    }
}

fs::path sibling(const fs::path& file, const std::string& suffix)
{
    fs::path p = file;
    p.replace_extension(suffix);
    return p;
}

struct LoadedData {
    DatasetManifest manifest;
    ImageDataset dataset;
};

LoadedData load_dataset(const RunConfig& rc, std::ostream& err)
{
    require(rc, "data_dir");
    DatasetManifest manifest = filter_rgb(scan_directory(rc.data_dir, &err));
    manifest.target_resolution = rc.train.model.resolution;
    ImageDataset data = ImageDataset::load(manifest, rc.train.model.resolution);
    return {std::move(manifest), std::move(data)};
}

void write_histories(const TrainState& state, const fs::path& dir)
{
    std::string loss = "iteration,loss_d,loss_g,r1\n";
    char buf[128];
    for (const auto& l : state.loss_history) {
        std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,", static_cast<unsigned long long>(l.iteration), l.loss_d,
                      l.loss_g);
        loss += buf;
        if (l.r1) {
            std::snprintf(buf, sizeof buf, "%.17g", *l.r1);
            loss += buf;
        }
        loss += "\n";
    }
    write_file_atomic(dir / "loss_log.csv", loss);
    std::string fid = "iteration,fid\n";
    for (const auto& f : state.fid_history) {
        std::snprintf(buf, sizeof buf, "%llu,%.17g\n", static_cast<unsigned long long>(f.iteration), f.fid);
        fid += buf;
    }
    write_file_atomic(dir / "fid_log.csv", fid);
}

TrainResult train_into(const RunConfig& rc, const ImageDataset& data, TrainState state, const fs::path& dir,
                       std::ostream& out)
{
    const FeatureSet real = extract_features(data.all_normalized(), rc.train.extractor);
    TrainOptions options;
    options.checkpoint_path = dir / "checkpoint.agfk";
    options.real_features = &real;
    options.log = &out;
    TrainResult result = run_training(rc.train, data, std::move(state), options);
    save_checkpoint(result.state, rc.train, dir / "checkpoint.agfk");
    write_histories(result.state, dir);
    out << "trained to iteration " << result.state.iteration << (result.stopped_early ? " (early stop)" : "") << "\n";
    return result;
}

Tensor generate(const ParamSet& generator, const ModelConfig& model, std::size_t count, std::uint64_t seed)
{
    Rng rng(derive_seed(seed, "generate", 0));
    const Tensor z = sample_latents(rng, count, model.dim_z);
    return sample_images(generator, model, z, derive_seed(seed, "generate-noise", 0));
}

void write_samples(const Tensor& images, const fs::path& dir)
{
    make_dir(dir);
    const std::size_t n = images.dim(0), per = 3 * images.dim(2) * images.dim(3);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor one({3, images.dim(2), images.dim(3)});
        std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(i * per), per, one.data().begin());
        char name[32];
        std::snprintf(name, sizeof name, "sample_%04zu.png", i);
        write_png(dir / name, planar_to_image(one));
    }
}

FeatureSet load_feature_input(const RunConfig& rc, const std::string& path, std::ostream& err)
{
    if (fs::is_directory(path)) {
        if (!is_builtin_extractor(rc.train.extractor)) {
            throw ConfigError("image directory " + path + " needs a built-in extractor, not '" + rc.train.extractor +
                              "'");
        }
        RunConfig local = rc;
        local.data_dir = path;
        return extract_features(load_dataset(local, err).dataset.all_normalized(), rc.train.extractor);
    }
    FeatureSet f = load_features(path);
    if (rc.was_set("extractor") && rc.train.extractor != "file" && rc.train.extractor != f.extractor_id) {
        throw ContractError("feature file " + path + " was made by '" + f.extractor_id + "', not '" +
                            rc.train.extractor + "'");
    }
    return f;
}

KidConfig kid_config(const RunConfig& rc)
{
    KidConfig k;
    k.block_size = rc.kid_block;
    k.num_blocks = rc.kid_blocks;
    return k;
}

void cmd_preprocess(RunConfig& rc, std::ostream& out, std::ostream& err)
{
    require(rc, "out");
    rc.train.model.validate();
    const LoadedData d = load_dataset(rc, err);
    const fs::path dir = rc.out;
    make_dir(dir);
    write_file_atomic(dir / "manifest.json", d.manifest.to_json().dump(2) + "\n");
    save_features(extract_features(d.dataset.all_normalized(), rc.train.extractor), dir / "real.feat");
    write_file_atomic(dir / "config.txt", rc.echo());
    const auto& c = d.manifest.counts;
    out << "scanned " << c.scanned << ", kept " << c.kept << ", dropped non-RGB " << c.dropped_non_rgb
        << ", unreadable " << c.dropped_unreadable << "\n";
}

void cmd_train(RunConfig& rc, std::ostream& out, std::ostream& err)
{
    require(rc, "out");
    rc.train.validate();
    const LoadedData d = load_dataset(rc, err);
    const fs::path dir = rc.out;
    make_dir(dir);
    write_file_atomic(dir / "config.txt", rc.echo());
    train_into(rc, d.dataset, init_state(rc.train), dir, out);
}

void cmd_resume(RunConfig& rc, std::ostream& out, std::ostream& err)
{
    require(rc, "checkpoint");
    Checkpoint ck = load_checkpoint(rc.checkpoint);
    RunConfig resolved = rc;
    resolved.train = ck.config;
    if (rc.was_set("total_iterations")) {
        resolved.train.total_iterations = rc.train.total_iterations;
    }
    if (resolved.out.empty()) {
        resolved.out = fs::path(rc.checkpoint).parent_path().string();
    }
    resolved.train.validate();
    const LoadedData d = load_dataset(resolved, err);
    const fs::path dir = resolved.out.empty() ? fs::path(".") : fs::path(resolved.out);
    make_dir(dir);
    write_file_atomic(dir / "config.txt", resolved.echo());
    out << "resuming at iteration " << ck.state.iteration << "\n";
    train_into(resolved, d.dataset, std::move(ck.state), dir, out);
}

void cmd_generate(RunConfig& rc, std::ostream& out, std::ostream&)
{
    require(rc, "checkpoint");
    require(rc, "out");
    if (rc.count == 0) {
        throw ConfigError("--count must be >= 1");
    }
    const Checkpoint ck = load_checkpoint(rc.checkpoint);
    RunConfig resolved = rc;
    resolved.train = ck.config;
    resolved.train.seed = rc.was_set("seed") ? rc.train.seed : ck.config.seed;
    const Tensor images = generate(ck.state.generator_ema, ck.config.model, rc.count, resolved.train.seed);
    const fs::path dir = rc.out;
    write_samples(images, dir);
    write_file_atomic(dir / "config.txt", resolved.echo());
    out << "wrote " << rc.count << " images to " << dir.string() << "\n";
}

void cmd_evaluate(RunConfig& rc, std::ostream& out, std::ostream& err)
{
    require(rc, "real");
    require(rc, "gen");
    const FeatureSet real = load_feature_input(rc, rc.real, err);
    const FeatureSet gen = load_feature_input(rc, rc.gen, err);
    const MetricReport report = evaluate(real, gen, kid_config(rc), rc.train.seed);
    if (!rc.out.empty()) {
        const fs::path path = rc.out;
        if (path.has_parent_path()) {
            make_dir(path.parent_path());
        }
        write_file_atomic(path, report.to_json().dump(2) + "\n");
        write_file_atomic(sibling(path, ".csv"), report.to_csv());
        write_file_atomic(sibling(path, ".config.txt"), rc.echo());
    }
    out << report.to_csv();
}

void cmd_survey(RunConfig& rc, std::ostream& out, std::ostream&)
{
    require(rc, "responses");
    const CaseStudyReport report = aggregate(parse_responses(rc.responses), rc.allow_partial);
    if (!rc.out.empty()) {
        const fs::path path = rc.out;
        if (path.has_parent_path()) {
            make_dir(path.parent_path());
        }
        emit_report_json(report, path);
        emit_report_csv(report, sibling(path, ".csv"));
        write_file_atomic(sibling(path, ".config.txt"), rc.echo());
    }
    out << report.to_csv();
}

void cmd_pipeline(RunConfig& rc, std::ostream& out, std::ostream& err)
{
    require(rc, "out");
    rc.train.validate();
    if (rc.count < 2) {
        throw ConfigError("pipeline needs --count >= 2 generated images for evaluation");
    }
    const fs::path dir = rc.out;

    out << "[1/4] preprocess\n";
    const LoadedData d = load_dataset(rc, err);
    make_dir(dir);
    write_file_atomic(dir / "config.txt", rc.echo());
    write_file_atomic(dir / "manifest.json", d.manifest.to_json().dump(2) + "\n");
    const FeatureSet real = extract_features(d.dataset.all_normalized(), rc.train.extractor);
    save_features(real, dir / "real.feat");

    out << "[2/4] train\n";
    const TrainResult trained = train_into(rc, d.dataset, init_state(rc.train), dir, out);

    out << "[3/4] generate\n";
    const Tensor images = generate(trained.state.generator_ema, rc.train.model, rc.count, rc.train.seed);
    write_samples(images, dir / "samples");
    write_png(dir / "grid.png", sample_grid(images));

    out << "[4/4] evaluate\n";
    const FeatureSet gen = extract_features(images, rc.train.extractor);
    save_features(gen, dir / "generated.feat");
    const MetricReport report = evaluate(real, gen, kid_config(rc), rc.train.seed);
    write_file_atomic(dir / "report.json", report.to_json().dump(2) + "\n");
    write_file_atomic(dir / "report.csv", report.to_csv());
    out << report.to_csv();
}

struct FlagValues {
    std::map<std::string, std::string> text;
    std::map<std::string, bool> flags;
};

void add_keys(CLI::App* sub, FlagValues& values, const std::vector<std::string_view>& keys)
{
    for (std::string_view key : keys) {
        const auto& schema = config_schema();
        const auto it = std::find_if(schema.begin(), schema.end(), [&](const ConfigKey& k) { return k.name == key; });
        std::string flag = "--" + std::string(key);
        std::replace(flag.begin(), flag.end(), '_', '-');
        if (it->type == ValueType::boolean) {
            sub->add_flag(flag, values.flags[std::string(key)], std::string(it->help));
        } else {
            sub->add_option(flag, values.text[std::string(key)], std::string(it->help));
        }
    }
}

std::vector<std::string_view> all_keys()
{
    std::vector<std::string_view> out;
    for (const auto& k : config_schema()) {
        out.push_back(k.name);
    }
    return out;
}

} // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"artgan: style-based GAN training, sampling and evaluation toolkit", "artgan"};
    app.require_subcommand(1, 1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    struct Sub {
        CLI::App* app;
        void (*run)(RunConfig&, std::ostream&, std::ostream&);
        std::vector<std::string_view> keys;
    };
    std::string config_path;
    FlagValues values;
    const std::vector<std::string_view> train_keys = [] {
        auto k = all_keys();
        k.erase(std::remove_if(k.begin(), k.end(),
                               [](std::string_view s) {
                                   return s == "checkpoint" || s == "count" || s == "real" || s == "gen" ||
                                          s == "kid_block" || s == "kid_blocks" || s == "responses" ||
                                          s == "allow_partial";
                               }),
                k.end());
        return k;
    }();
    std::vector<Sub> subs{
        {app.add_subcommand("preprocess", "Scan, filter and resize a dataset; write manifest and real features"),
         cmd_preprocess,
         {"data_dir", "resolution", "extractor", "out"}},
        {app.add_subcommand("train", "Train from scratch, writing rolling checkpoints"), cmd_train, train_keys},
        {app.add_subcommand("resume", "Continue training from a checkpoint"),
         cmd_resume,
         {"checkpoint", "data_dir", "total_iterations", "out"}},
        {app.add_subcommand("generate", "Write PNG samples from a checkpoint"),
         cmd_generate,
         {"checkpoint", "count", "seed", "out"}},
        {app.add_subcommand("evaluate", "FID and KID between two image directories or feature files"),
         cmd_evaluate,
         {"real", "gen", "extractor", "resolution", "kid_block", "kid_blocks", "seed", "out"}},
        {app.add_subcommand("survey", "Aggregate case-study responses"),
         cmd_survey,
         {"responses", "out", "allow_partial"}},
        {app.add_subcommand("pipeline", "preprocess, train, generate and evaluate from one config"),
         cmd_pipeline,
         all_keys()},
    };
    CLI::App* version = app.add_subcommand("version", "Print the version");
    for (auto& s : subs) {
        s.app->add_option("--config", config_path, "key = value configuration file");
        add_keys(s.app, values, s.keys);
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        const auto parsed = app.get_subcommands();
        err << (parsed.empty() ? app.help() : parsed.front()->help());
        return 1;
    }

    if (app.got_subcommand(version)) {
        out << "artgan " << ARTGAN_VERSION << "\n";
        return 0;
    }
    try {
        for (auto& s : subs) {
            if (!app.got_subcommand(s.app)) {
                continue;
            }
            RunConfig rc;
            if (s.run == cmd_pipeline && config_path.empty()) {
                throw ConfigError("pipeline needs --config");
            }
            if (!config_path.empty()) {
                rc.merge_file(config_path);
            }
            for (std::string_view key : s.keys) {
                const std::string k(key);
                std::string flag = "--" + k;
                std::replace(flag.begin(), flag.end(), '_', '-');
                if (s.app->count(flag) == 0) {
                    continue;
                }
                const auto it = values.text.find(k);
                rc.set(k, it != values.text.end() ? it->second : (values.flags[k] ? "true" : "false"));
            }
            s.run(rc, out, err);
            return 0;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return dispatch(args, out, err);
}

} // namespace artgan::cli
