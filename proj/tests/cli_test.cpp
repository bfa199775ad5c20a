// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

// Drives the installed command-line binary end to end. The binary path
// arrives as argv[1]; every scenario works inside its own scratch directory.

#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "process_support.hpp"
#include "test_support.hpp"

#include <cstdio>
#include <filesystem>
#include <string>

namespace {

std::string g_cli;

RunResult cli(const TempDir& dir, const std::string& args) {
    return run_command(dir, g_cli + " " + args);
}

// One config file serves every subcommand; unused keys are ignored.
std::string base_config() {
    return "k_classes = 3\n"
           "videos_per_class = 6\n"
           "frames_per_video = 12\n"
           "feature_dim = 6\n"
           "class_sep = 2.5\n"
           "video_sep = 0.5\n"
           "frame_noise = 0.1\n"
           "train_fraction = 0.6666667\n"
           "seed = 5\n"
           "embed_dim = 10\n"
           "repr_dim = 8\n"
           "code_length = 12\n"
           "n_frames = 4\n"
           "alpha = 1.0\n"
           "beta = 1.0\n"
           "margin = 2.0\n"
           "learning_rate = 0.01\n"
           "batch_size = 4\n"
           "iterations = 40\n"
           "optimizer = adam(0.9,0.999,1e-8)\n"
           "ratio = 0.5\n"
           "top_n = 5\n"
           "max_n = 10\n"
           "ratios = 0.5,1.0\n";
}

std::string write_config(const TempDir& dir, const std::string& text) {
    const auto path = dir.file("run.cfg");
    write_text(path, text);
    return path;
}

bool exists(const TempDir& dir, const std::string& name) {
    return std::filesystem::exists(dir.file(name));
}

// gen .. sweep against one config, everything in `dir`.
void run_pipeline(const TempDir& dir, const std::string& cfg) {
    const std::string tail = " --config " + cfg + " --out " + dir.path.string();
    REQUIRE(cli(dir, "gen" + tail).code == 0);
    REQUIRE(cli(dir, "train" + tail).code == 0);
    REQUIRE(cli(dir, "mask" + tail).code == 0);
    REQUIRE(cli(dir, "index" + tail).code == 0);
    REQUIRE(cli(dir, "query --video-id 0" + tail).code == 0);
    REQUIRE(cli(dir, "eval" + tail).code == 0);
    REQUIRE(cli(dir, "sweep" + tail).code == 0);
}

} // namespace

TEST_CASE("the full pipeline produces every artifact") {
    TempDir dir;
    const auto cfg = write_config(dir, base_config());
    const std::string tail = " --config " + cfg + " --out " + dir.path.string();

    const auto gen = cli(dir, "gen" + tail);
    REQUIRE(gen.code == 0);
    CHECK(exists(dir, "features.bin"));
    CHECK(exists(dir, "labels.txt"));
    CHECK(exists(dir, "query_features.bin"));
    CHECK(exists(dir, "query_labels.txt"));
    CHECK(gen.output.find("12 videos") != std::string::npos); // 3 classes x 4 train

    const auto train = cli(dir, "train" + tail);
    REQUIRE(train.code == 0);
    CHECK(exists(dir, "checkpoint.bin"));
    CHECK(exists(dir, "loss.csv"));
    CHECK(train.output.find("final loss") != std::string::npos);
    const auto loss_lines = split_lines(read_text(dir.file("loss.csv")));
    CHECK(loss_lines.size() == 41);
    CHECK(loss_lines[0] == "iteration,total,inter,intra");

    const auto mask = cli(dir, "mask" + tail);
    REQUIRE(mask.code == 0);
    CHECK(exists(dir, "mask.bin"));
    CHECK(exists(dir, "mask_bit_map.csv"));
    CHECK(exists(dir, "mask_bit_contribution.csv"));
    CHECK(mask.output.find("6 bits/row") != std::string::npos); // 0.5 * 12

    const auto index = cli(dir, "index" + tail);
    REQUIRE(index.code == 0);
    CHECK(exists(dir, "index.bin"));
    CHECK(index.output.find("(12 entries)") != std::string::npos);

    const auto query = cli(dir, "query --video-id 0" + tail);
    REQUIRE(query.code == 0);
    const auto ranking_lines = split_lines(read_text(dir.file("ranking.csv")));
    REQUIRE(ranking_lines.size() == 6); // header + top_n
    CHECK(ranking_lines[0] == "rank,video_id,label,distance");
    CHECK(split_csv_row(ranking_lines[1])[0] == "1");
    uint32_t prev = 0;
    for (size_t i = 1; i < ranking_lines.size(); ++i) {
        const auto fields = split_csv_row(ranking_lines[i]);
        REQUIRE(fields.size() == 4);
        const auto distance = static_cast<uint32_t>(std::stoul(fields[3]));
        CHECK(distance >= prev);
        prev = distance;
    }

    const auto eval = cli(dir, "eval" + tail);
    REQUIRE(eval.code == 0);
    CHECK(exists(dir, "map_report.csv"));
    CHECK(exists(dir, "precision_at_n.csv"));
    CHECK(exists(dir, "pr_curve.csv"));
    CHECK(eval.output.find("map ") != std::string::npos);
    const auto map_lines = split_lines(read_text(dir.file("map_report.csv")));
    REQUIRE(map_lines.size() == 6);
    CHECK(map_lines[0] == "metric,value");
    const auto map_value = std::stod(split_csv_row(map_lines[1])[1]);
    CHECK(map_value >= 0.0);
    CHECK(map_value <= 1.0);

    const auto sweep = cli(dir, "sweep" + tail);
    REQUIRE(sweep.code == 0);
    CHECK(sweep.output.find("best ratio") != std::string::npos);
    const auto sweep_lines = split_lines(read_text(dir.file("ratio_sweep.csv")));
    REQUIRE(sweep_lines.size() == 3);
    CHECK(sweep_lines[0] == "ratio,map,is_best,beats_unmasked");
    CHECK(split_csv_row(sweep_lines[1])[0] == "0.5");
    CHECK(split_csv_row(sweep_lines[2])[0] == "1");
}

TEST_CASE("two pipeline runs with one configuration are byte-identical") {
    TempDir a;
    TempDir b;
    run_pipeline(a, write_config(a, base_config()));
    run_pipeline(b, write_config(b, base_config()));

    for (const char* name :
         {"features.bin", "labels.txt", "query_features.bin", "query_labels.txt",
          "checkpoint.bin", "loss.csv", "mask.bin", "mask_bit_map.csv",
          "mask_bit_contribution.csv", "index.bin", "ranking.csv", "map_report.csv",
          "precision_at_n.csv", "pr_curve.csv", "ratio_sweep.csv"}) {
        INFO("artifact: " << name);
        CHECK(read_bytes(a.file(name)) == read_bytes(b.file(name)));
    }
}

TEST_CASE("the seed flag overrides the config seed") {
    TempDir dir;
    const auto cfg = write_config(dir, base_config());

    std::filesystem::create_directory(dir.path / "s5");
    std::filesystem::create_directory(dir.path / "s6");
    std::filesystem::create_directory(dir.path / "s5b");
    REQUIRE(cli(dir, "gen --config " + cfg + " --out " + (dir.path / "s5").string() +
                         " --seed 5").code == 0);
    REQUIRE(cli(dir, "gen --config " + cfg + " --out " + (dir.path / "s6").string() +
                         " --seed 6").code == 0);
    REQUIRE(cli(dir, "gen --config " + cfg + " --out " + (dir.path / "s5b").string() +
                         " --seed 5").code == 0);

    const auto s5 = read_bytes((dir.path / "s5" / "features.bin").string());
    const auto s6 = read_bytes((dir.path / "s6" / "features.bin").string());
    const auto s5b = read_bytes((dir.path / "s5b" / "features.bin").string());
    CHECK(s5 == s5b);
    CHECK(s5 != s6);
}

TEST_CASE("a missing required config key names the key and exits with the config code") {
    TempDir dir;
    std::string text = base_config();
    const auto pos = text.find("iterations = 40\n");
    REQUIRE(pos != std::string::npos);
    text.erase(pos, std::string("iterations = 40\n").length());
    const auto cfg = write_config(dir, text);
    const std::string tail = " --config " + cfg + " --out " + dir.path.string();

    REQUIRE(cli(dir, "gen" + tail).code == 0);
    const auto train = cli(dir, "train" + tail);
    CHECK(train.code == 2);
    CHECK(train.output.find("error[config]:") != std::string::npos);
    CHECK(train.output.find("iterations") != std::string::npos);
}

TEST_CASE("a missing config file exits with the config code") {
    TempDir dir;
    const auto result = cli(dir, "train --config " + dir.file("absent.cfg") + " --out " +
                                     dir.path.string());
    CHECK(result.code == 2);
    CHECK(result.output.find("error[config]:") != std::string::npos);
}

TEST_CASE("a corrupted data file exits with the data code") {
    TempDir dir;
    const auto cfg = write_config(dir, base_config());
    const std::string tail = " --config " + cfg + " --out " + dir.path.string();
    REQUIRE(cli(dir, "gen" + tail).code == 0);

    auto bytes = read_bytes(dir.file("features.bin"));
    bytes[0] = 'X';
    write_bytes(dir.file("features.bin"), bytes);

    const auto train = cli(dir, "train" + tail);
    CHECK(train.code == 3);
    CHECK(train.output.find("error[data]:") != std::string::npos);
}

TEST_CASE("an out-of-range ratio exits with the config code") {
    TempDir dir;
    const auto cfg = write_config(dir, base_config());
    const std::string tail = " --config " + cfg + " --out " + dir.path.string();
    REQUIRE(cli(dir, "gen" + tail).code == 0);
    REQUIRE(cli(dir, "train" + tail).code == 0);

    const auto zero = cli(dir, "mask --ratio 0" + tail);
    CHECK(zero.code == 2);
    CHECK(zero.output.find("error[config]:") != std::string::npos);

    const auto above = cli(dir, "mask --ratio 1.5" + tail);
    CHECK(above.code == 2);
}

TEST_CASE("querying an unknown video id exits with the data code") {
    TempDir dir;
    const auto cfg = write_config(dir, base_config());
    const std::string tail = " --config " + cfg + " --out " + dir.path.string();
    REQUIRE(cli(dir, "gen" + tail).code == 0);
    REQUIRE(cli(dir, "train" + tail).code == 0);
    REQUIRE(cli(dir, "mask" + tail).code == 0);
    REQUIRE(cli(dir, "index" + tail).code == 0);

    const auto result = cli(dir, "query --video-id 999" + tail);
    CHECK(result.code == 3);
    CHECK(result.output.find("error[data]:") != std::string::npos);
    CHECK(result.output.find("999") != std::string::npos);

    const auto missing = cli(dir, "query" + tail);
    CHECK(missing.code == 2);
    CHECK(missing.output.find("--video-id") != std::string::npos);
}

TEST_CASE("a ratio grid without the unmasked baseline is completed with a warning") {
    TempDir dir;
    std::string text = base_config();
    const auto pos = text.find("ratios = 0.5,1.0\n");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, std::string("ratios = 0.5,1.0\n").length(), "ratios = 0.4,0.8\n");
    const auto cfg = write_config(dir, text);
    const std::string tail = " --config " + cfg + " --out " + dir.path.string();

    REQUIRE(cli(dir, "gen" + tail).code == 0);
    REQUIRE(cli(dir, "train" + tail).code == 0);
    const auto sweep = cli(dir, "sweep" + tail);
    REQUIRE(sweep.code == 0);
    CHECK(sweep.output.find("warning") != std::string::npos);

    const auto lines = split_lines(read_text(dir.file("ratio_sweep.csv")));
    REQUIRE(lines.size() == 4); // header + 0.4, 0.8, appended 1.0
    CHECK(split_csv_row(lines[3])[0] == "1");
}

TEST_CASE("gradcheck runs without a config and reports its worst error") {
    TempDir dir;
    const auto result = cli(dir, "gradcheck --seed 1");
    CHECK(result.code == 0);
    CHECK(result.output.find("max relative error") != std::string::npos);
}

TEST_CASE("usage errors exit with the config code and help exits cleanly") {
    TempDir dir;
    const auto none = cli(dir, "");
    CHECK(none.code == 2);
    CHECK(none.output.find("error[config]:") != std::string::npos);

    const auto unknown = cli(dir, "frobnicate");
    CHECK(unknown.code == 2);

    const auto help = cli(dir, "--help");
    CHECK(help.code == 0);
    CHECK(help.output.find("train") != std::string::npos);

    const auto missing_cfg = cli(dir, "train");
    CHECK(missing_cfg.code == 2);
    CHECK(missing_cfg.output.find("--config") != std::string::npos);
}

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: cli_tests <path-to-cli-binary>\n");
        return 1;
    }
    g_cli = argv[1];

    doctest::Context context;
    context.applyCommandLine(1, argv); // keep argv[1] away from the test filter
    return context.run();
}
