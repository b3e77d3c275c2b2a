#include <doctest.h>

#include <fstream>

#include "support.hpp"
#include "tcbc/checkpoint.hpp"
#include "tcbc/io.hpp"

using namespace tcbc;
namespace fs = std::filesystem;

namespace {

SyntheticSSLDataset small_data() { return generate({3, 60, 150, 10.0, 0.1, 9}, {2, 3.0, 20}); }

TrainConfig small_config() {
    TrainConfig c;
    c.iterations = 60;
    c.labeled_batch = 16;
    c.unlabeled_batch = 16;
    c.tau_c = 0.8;
    c.hidden = 4;
    return c;
}

} // namespace

TEST_CASE("number formatting") {
    CHECK(io::format_number(0.1) == "0.1");
    CHECK(io::format_number(1.0 / 3) == "0.333333333");
    CHECK(io::format_number(1e-20) == "1e-20");
    CHECK(io::round9(1.0 / 3) == 0.333333333);
}

TEST_CASE("sha256 of known strings") {
    CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("dataset round-trips and regenerates byte-identically") {
    const auto data = small_data();
    const auto a = test::scratch_dir("io_dataset_a");
    const auto b = test::scratch_dir("io_dataset_b");
    io::write_dataset(a, data);
    io::write_dataset(b, small_data());
    CHECK(io::read_file(a / io::kDatasetCsv) == io::read_file(b / io::kDatasetCsv));
    CHECK(io::read_file(a / io::kDatasetSidecar) == io::read_file(b / io::kDatasetSidecar));

    const auto back = io::read_dataset(a);
    CHECK(back.labeled_y == data.labeled_y);
    CHECK(back.unlabeled_hidden_y == data.unlabeled_hidden_y);
    CHECK(back.test_y == data.test_y);
    REQUIRE(back.labeled_x.rows() == data.labeled_x.rows());
    for (std::size_t i = 0; i < data.labeled_x.data().size(); ++i) {
        CHECK(back.labeled_x.data()[i] == io::round9(data.labeled_x.data()[i]));
    }
    CHECK(back.spec.gamma_u == data.spec.gamma_u);
    CHECK(back.classes() == 3);

    // Training on the file copy and on the in-memory copy written again gives the same bytes.
    const auto c = test::scratch_dir("io_dataset_c");
    io::write_dataset(c, back);
    CHECK(io::read_file(a / io::kDatasetCsv) == io::read_file(c / io::kDatasetCsv));
}

TEST_CASE("missing or malformed dataset") {
    CHECK_THROWS_AS(io::read_dataset(test::scratch_dir("io_empty")), io::FormatError);
    const auto dir = test::scratch_dir("io_bad");
    io::write_dataset(dir, small_data());
    io::write_file(dir / io::kDatasetCsv, "schema_version,split\n1,labeled\n");
    CHECK_THROWS(io::read_dataset(dir));
}

TEST_CASE("trace csv and tidy melt") {
    const auto data = small_data();
    auto config = small_config();
    config.iterations = 25;
    const auto r = run(config, data);
    const auto dir = test::scratch_dir("io_trace");
    io::write_file(dir / "trace.csv", io::trace_csv(r.trace, 3));
    const auto table = io::read_csv(dir / "trace.csv");
    CHECK(table.header == io::trace_header(3));
    CHECK(table.rows.size() == 25);
    CHECK(table.header.front() == "schema_version");

    const auto tidy = io::tidy_traces({{"runA", table}, {"runB", table}});
    io::write_file(dir / "tidy.csv", tidy);
    const auto melted = io::read_csv(dir / "tidy.csv");
    CHECK(melted.header == std::vector<std::string>{"schema_version", "run_id", "iteration", "metric", "value"});
    CHECK(melted.rows.size() == 2 * 25 * (table.header.size() - 2));

    auto broken = table;
    broken.header[1] = "step";
    CHECK_THROWS_AS(io::tidy_traces({{"x", broken}}), io::FormatError);
    auto wrong_version = table;
    wrong_version.rows[0][0] = "99";
    CHECK_THROWS_AS(io::tidy_traces({{"x", wrong_version}}), io::FormatError);
}

TEST_CASE("result json is deterministic") {
    const auto data = small_data();
    const auto config = small_config();
    const auto a = io::dump_json(io::result_to_json(run(config, data), data));
    const auto b = io::dump_json(io::result_to_json(run(config, data), data));
    CHECK(a == b);
    CHECK(a.back() == '\n');
    const auto parsed = nlohmann::json::parse(a);
    CHECK(parsed["final"].contains("balanced_accuracy"));
}

TEST_CASE("config hash tracks trajectory settings") {
    TrainConfig a;
    TrainConfig b;
    CHECK(io::config_hash(a) == io::config_hash(b));
    b.tau_c = 0.9;
    CHECK(io::config_hash(a) != io::config_hash(b));
}

TEST_CASE("named arrays round-trip exactly") {
    std::mt19937_64 rng(3);
    const auto dir = test::scratch_dir("io_arrays");
    const auto m = test::random_matrix(5, 7, rng, 1e3);
    std::vector<io::NamedArray> arrays{{"w", {5, 7}, m.data()}, {"v", {3}, {1.0 / 3, -0.0, 1e-300}}};
    io::write_named_arrays(dir / "blob", arrays, {{"note", "x"}});
    const auto back = io::read_named_arrays(dir / "blob");
    CHECK(back.get("w").values == m.data());
    CHECK(back.get("v").values == arrays[1].values);
    CHECK(back.get("w").shape == std::vector<std::size_t>{5, 7});
    CHECK(back.meta["note"] == "x");
    CHECK_THROWS(back.get("missing"));

    const auto params = ModelParams::initialize({2, 6, 3}, 11);
    io::save_params(dir / "params", params);
    CHECK(io::load_params(dir / "params") == params);
}

TEST_CASE("resume from a checkpoint reproduces the uninterrupted run") {
    const auto data = small_data();
    auto config = small_config();
    config.iterations = 60;
    config.eval_every = 10;
    const auto full = run(config, data);

    const auto dir = test::scratch_dir("io_resume");
    auto half = config;
    half.iterations = 30;
    RunHooks hooks;
    hooks.on_checkpoint = [&](const TrainerState& s) { io::save_checkpoint(dir / "ckpt", s, config); };
    run(half, data, hooks);

    RunHooks resume;
    resume.resume_from = io::load_checkpoint(dir / "ckpt", config);
    CHECK(resume.resume_from->iteration == 30);
    const auto resumed = run(config, data, resume);
    CHECK(resumed.trace == full.trace);
    CHECK(resumed.final_params == full.final_params);
    CHECK(resumed.final_ema == full.final_ema);
    CHECK(resumed.evals == full.evals);
    CHECK(io::dump_json(io::result_to_json(resumed, data)) == io::dump_json(io::result_to_json(full, data)));

    auto other = config;
    other.lambda = 0.5;
    CHECK_THROWS_AS(io::load_checkpoint(dir / "ckpt", other), io::FormatError);
}

TEST_CASE("manifest verification detects tampering") {
    const auto dir = test::scratch_dir("io_manifest");
    io::write_file(dir / "a.txt", "alpha");
    io::write_file(dir / "b.txt", "beta");
    const auto files = io::hash_files(dir, {"a.txt", "b.txt"});
    nlohmann::json manifest;
    manifest["files"] = nlohmann::json::array();
    for (const auto& f : files) manifest["files"].push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    io::write_file(dir / "manifest.json", io::dump_json(manifest));
    CHECK(io::verify_manifest(dir).ok());

    io::write_file(dir / "a.txt", "alphA");
    fs::remove(dir / "b.txt");
    const auto report = io::verify_manifest(dir);
    CHECK_FALSE(report.ok());
    CHECK(report.modified == std::vector<std::string>{"a.txt"});
    CHECK(report.missing == std::vector<std::string>{"b.txt"});
}
