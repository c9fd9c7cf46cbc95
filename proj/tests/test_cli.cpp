#include "artgan/binary_io.hpp"
#include "artgan/cli.hpp"
#include "artgan/errors.hpp"
#include "artgan/run_config.hpp"
#include "artgan/synthetic.hpp"
#include "artgan/trainer.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace artgan;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args)
{
    std::ostringstream out, err;
    const int code = cli::dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("artgan_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    const auto bytes = read_file(p);
    return std::string(bytes.begin(), bytes.end());
}

std::size_t count_png(const fs::path& dir)
{
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        n += e.path().extension() == ".png";
    }
    return n;
}

void write_text(const fs::path& p, const std::string& text)
{
    std::ofstream(p) << text;
}

const char* tiny_config = "# tiny run\n"
                          "resolution = 16\n"
                          "channel_base = 64\n"
                          "channel_max = 8\n"
                          "dim_z = 8\n"
                          "dim_w = 8\n"
                          "mapping_layers = 2\n"
                          "batch_size = 4\n"
                          "total_iterations = 6\n"
                          "checkpoint_interval = 3\n"
                          "fid_monitor_interval = 3\n"
                          "fid_monitor_samples = 8\n"
                          "r1_interval = 4\n"
                          "count = 10\n"
                          "seed = 5\n";

} // namespace

TEST_CASE("config parsing is typed and rejects unknown keys")
{
    RunConfig rc;
    rc.merge_text("resolution = 32   # comment\n\n  batch_size=8\nlearning_rate_g = 1e-3\naugment_flip = true\n"
                  "extractor = randproj-16\n");
    CHECK(rc.train.model.resolution == 32);
    CHECK(rc.train.batch_size == 8);
    CHECK(rc.train.learning_rate_g == 1e-3);
    CHECK(rc.train.augment_flip);
    CHECK(rc.train.extractor == "randproj-16");

    CHECK_THROWS_AS(RunConfig().merge_text("banana = 1\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig().merge_text("resolution = big\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig().merge_text("resolution = -4\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig().merge_text("batch_size = 2.5\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig().merge_text("augment_flip = maybe\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig().merge_text("resolution 32\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig().merge_text("seed = 1\nseed = 2\n"), ConfigError);
    try {
        RunConfig().merge_text("seed = 1\n\nbanana = 2\n");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("config echo reparses to the same configuration")
{
    RunConfig rc;
    rc.merge_text(tiny_config);
    rc.set("learning_rate_d", "0.1");
    rc.set("stop_min_delta", "0.3");
    RunConfig again;
    again.merge_text(rc.echo());
    CHECK(again.echo() == rc.echo());
    CHECK(again.train.learning_rate_d == 0.1);
    CHECK(again.train.stop_min_delta == 0.3);
    CHECK(again.count == 10);
}

TEST_CASE("usage errors exit 1")
{
    auto r = run({"--banana"});
    CHECK(r.code == 1);
    CHECK(r.err.find("Usage") != std::string::npos);

    r = run({"generate", "--banana"});
    CHECK(r.code == 1);
    CHECK(r.err.find("--banana") != std::string::npos);
    CHECK(r.err.find("Usage") != std::string::npos);

    r = run({"frobnicate"});
    CHECK(r.code == 1);
    CHECK(r.err.find("Usage") != std::string::npos);

    CHECK(run({}).code == 1);
    CHECK(run({"generate"}).code == 1);
    CHECK(run({"pipeline", "--out", "x"}).code == 1);

    r = run({"version"});
    CHECK(r.code == 0);
    CHECK(r.out.rfind("artgan ", 0) == 0);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("generate writes count PNGs")
{
    const fs::path dir = fresh_dir("generate");
    RunConfig rc;
    rc.merge_text(tiny_config);
    save_checkpoint(init_state(rc.train), rc.train, dir / "ckpt.bin");

    auto r = run({"generate", "--checkpoint", (dir / "ckpt.bin").string(), "--count", "6", "--seed", "7", "--out",
                  (dir / "samples").string()});
    REQUIRE(r.code == 0);
    CHECK(count_png(dir / "samples") == 6);
    CHECK(fs::exists(dir / "samples" / "config.txt"));
    const Image first = read_image(dir / "samples" / "sample_0000.png");
    CHECK(first.width == 16);
    CHECK(first.channels == 3);

    // Same seed, same bytes; different seed, different images.
    REQUIRE(run({"generate", "--checkpoint", (dir / "ckpt.bin").string(), "--count", "6", "--seed", "7", "--out",
                 (dir / "again").string()})
                .code == 0);
    REQUIRE(run({"generate", "--checkpoint", (dir / "ckpt.bin").string(), "--count", "6", "--seed", "8", "--out",
                 (dir / "other").string()})
                .code == 0);
    CHECK(slurp(dir / "samples" / "sample_0003.png") == slurp(dir / "again" / "sample_0003.png"));
    CHECK(slurp(dir / "samples" / "sample_0003.png") != slurp(dir / "other" / "sample_0003.png"));

    CHECK(run({"generate", "--checkpoint", (dir / "missing.bin").string(), "--out", (dir / "x").string()}).code == 2);
    write_text(dir / "bad.bin", "not a checkpoint");
    CHECK(run({"generate", "--checkpoint", (dir / "bad.bin").string(), "--out", (dir / "x").string()}).code == 1);
    // Output path occupied by a file: runtime failure.
    write_text(dir / "occupied", "");
    CHECK(run({"generate", "--checkpoint", (dir / "ckpt.bin").string(), "--out", (dir / "occupied").string()}).code ==
          2);
    fs::remove_all(dir);
}

TEST_CASE("evaluate on identical feature files gives FID ~ 0")
{
    const fs::path dir = fresh_dir("evaluate");
    const auto images = ImageDataset::from_images(synthetic_shapes(30, 16, 3)).all_normalized();
    save_features(extract_features(images, "pool"), dir / "a.feat");
    auto r = run({"evaluate", "--real", (dir / "a.feat").string(), "--gen", (dir / "a.feat").string(), "--out",
                  (dir / "report.json").string()});
    REQUIRE(r.code == 0);
    const auto report = MetricReport::from_json(nlohmann::json::parse(slurp(dir / "report.json")));
    CHECK(report.fid < 1e-10);
    CHECK(report.n_real == 30);
    CHECK(fs::exists(dir / "report.csv"));
    CHECK(fs::exists(dir / "report.config.txt"));

    // Image directories are featurized with the configured extractor.
    write_synthetic_corpus(dir / "imgs", 12, 16, 4);
    r = run({"evaluate", "--real", (dir / "imgs").string(), "--gen", (dir / "imgs").string(), "--resolution", "16",
             "--extractor", "randproj-8"});
    CHECK(r.code == 0);
    CHECK(r.out.rfind("Metric,FID,KID\n", 0) == 0);

    save_features(extract_features(images, "randproj-8"), dir / "b.feat");
    CHECK(run({"evaluate", "--real", (dir / "a.feat").string(), "--gen", (dir / "b.feat").string()}).code == 1);
    CHECK(run({"evaluate", "--real", (dir / "a.feat").string(), "--gen", (dir / "a.feat").string(), "--kid-block",
               "31"})
              .code == 1);
    fs::remove_all(dir);
}

TEST_CASE("survey subcommand aggregates a response file")
{
    const fs::path dir = fresh_dir("survey");
    write_text(dir / "responses.csv", "respondent_id,image_id,group,interesting,inspiring,innovative,overall,attribution\n"
                                      "a,x,real,3,3,3,3,artist\n"
                                      "a,y,generated,4,4,4,4,computer\n"
                                      "b,x,real,5,5,5,5,artist\n");
    auto r = run({"survey", "--responses", (dir / "responses.csv").string(), "--out", (dir / "report.json").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("allow-partial") != std::string::npos);
    r = run({"survey", "--responses", (dir / "responses.csv").string(), "--out", (dir / "report.json").string(),
             "--allow-partial"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("Interesting,4.00 ± 0.00,4.00 ± 0.00") != std::string::npos);
    CHECK(fs::exists(dir / "report.csv"));
    fs::remove_all(dir);
}

TEST_CASE("empty data directory fails before training")
{
    const fs::path dir = fresh_dir("empty");
    fs::create_directories(dir / "data");
    write_text(dir / "run.cfg", tiny_config);
    auto r = run({"pipeline", "--config", (dir / "run.cfg").string(), "--data-dir", (dir / "data").string(), "--out",
                  (dir / "run").string()});
    CHECK(r.code == 1);
    CHECK(!fs::exists(dir / "run" / "checkpoint.agfk"));
    CHECK(run({"train", "--config", (dir / "run.cfg").string(), "--data-dir", (dir / "data").string(), "--out",
               (dir / "run").string()})
              .code == 1);
    fs::remove_all(dir);
}

TEST_CASE("flags override config values")
{
    const fs::path dir = fresh_dir("override");
    write_synthetic_corpus(dir / "data", 8, 16, 1);
    write_text(dir / "run.cfg", tiny_config);
    auto r = run({"train", "--config", (dir / "run.cfg").string(), "--data-dir", (dir / "data").string(),
                  "--total-iterations", "2", "--out", (dir / "run").string()});
    REQUIRE(r.code == 0);
    RunConfig echoed;
    echoed.merge_file(dir / "run" / "config.txt");
    CHECK(echoed.train.total_iterations == 2);
    CHECK(echoed.train.seed == 5);
    CHECK(load_checkpoint(dir / "run" / "checkpoint.agfk").state.iteration == 2);
    fs::remove_all(dir);
}

TEST_CASE("train then resume matches an uninterrupted run")
{
    // Pause on a FID monitor point so both runs record the same FID history.
    const fs::path dir = fresh_dir("resume");
    write_synthetic_corpus(dir / "data", 8, 16, 2);
    write_text(dir / "run.cfg", tiny_config);
    const std::string data = (dir / "data").string();
    REQUIRE(run({"train", "--config", (dir / "run.cfg").string(), "--data-dir", data, "--out", (dir / "full").string()})
                .code == 0);
    REQUIRE(run({"train", "--config", (dir / "run.cfg").string(), "--data-dir", data, "--total-iterations", "3",
                 "--out", (dir / "part").string()})
                .code == 0);
    auto r = run({"resume", "--checkpoint", (dir / "part" / "checkpoint.agfk").string(), "--data-dir", data,
                  "--total-iterations", "6"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("resuming at iteration 3") != std::string::npos);
    CHECK(slurp(dir / "part" / "checkpoint.agfk") == slurp(dir / "full" / "checkpoint.agfk"));
    CHECK(slurp(dir / "part" / "loss_log.csv") == slurp(dir / "full" / "loss_log.csv"));
    fs::remove_all(dir);
}

TEST_CASE("pipeline reruns are byte-identical")
{
    const fs::path dir = fresh_dir("pipeline");
    write_synthetic_corpus(dir / "data", 12, 16, 9);
    write_text(dir / "run.cfg", tiny_config);
    for (const char* name : {"a", "b"}) {
        auto r = run({"pipeline", "--config", (dir / "run.cfg").string(), "--data-dir", (dir / "data").string(),
                      "--out", (dir / name).string()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
    }
    for (const char* f : {"report.json", "report.csv", "grid.png", "checkpoint.agfk", "samples/sample_0009.png"}) {
        CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
    }
    CHECK(count_png(dir / "a" / "samples") == 10);
    const Image grid = read_image(dir / "a" / "grid.png");
    CHECK(grid.width == 8 * 16);
    CHECK(grid.height == 2 * 16);
    RunConfig echoed;
    echoed.merge_file(dir / "a" / "config.txt");
    CHECK(echoed.train.total_iterations == 6);
    const auto report = MetricReport::from_json(nlohmann::json::parse(slurp(dir / "a" / "report.json")));
    CHECK(report.n_gen == 10);
    CHECK(report.n_real == 12);
    fs::remove_all(dir);
}

TEST_CASE("sample grid layout")
{
    Tensor images({10, 3, 2, 2});
    for (std::size_t i = 0; i < 10; ++i) {
        for (std::size_t k = 0; k < 12; ++k) {
            images.data()[i * 12 + k] = 1.0; // white tiles
        }
    }
    const Image g = cli::sample_grid(images);
    CHECK(g.width == 16);
    CHECK(g.height == 4);
    // Tile 9 sits at row 1, column 1; tile slot 10 (row 1, column 2) is empty.
    CHECK(g.pixels[((2 + 0) * 16 + 2) * 3] == 255);
    CHECK(g.pixels[((2 + 0) * 16 + 4) * 3] == 0);
    CHECK(g.pixels[(1 * 16 + 15) * 3] == 255);

    const Image small = cli::sample_grid(Tensor({3, 3, 2, 2}));
    CHECK(small.width == 6);
    CHECK(small.height == 2);
    CHECK(small.pixels[0] == 128);
}
