#include "dml/app.hpp"
#include "dml/error.hpp"
#include "dml/io.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <sstream>

using namespace dml;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dml_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const json& j) {
  io::write_atomic(dir / "config.json", io::dump_canonical(j));
  return dir / "config.json";
}

json synthetic_config(long iterations) {
  return {{"iterations", iterations},
          {"seed", 3},
          {"lr", 1e-2},
          {"batch_size", 32},
          {"head", {{"out_dim", 16}}},
          {"eval_ks", {1, 2}},
          {"synthetic", {{"num_classes", 16}, {"per_class", 8}, {"dim", 12}, {"sigma", 0.3}}}};
}

void write_identity_model(const fs::path& path, Eigen::Index dim) {
  app::Model m;
  m.head = EncoderHead::identity(dim);
  io::write_atomic(path, io::dump_canonical(app::model_to_json(m)));
}

}  // namespace

TEST_CASE("train exit codes") {
  const fs::path dir = scratch("exit");
  std::ostringstream log;
  CHECK(app::cli_train({dir / "missing.json", {}, dir}, log) == 2);
  CHECK(log.str().find("error") != std::string::npos);

  json bad = synthetic_config(1);
  bad["unknown_knob"] = 1;
  CHECK(app::cli_train({write_config(dir, bad), {}, dir}, log) == 2);
  CHECK(!fs::exists(dir / "model.json"));

  // A degenerate dataset (every class collapsed onto one point) aborts.
  json degenerate = synthetic_config(2);
  degenerate["synthetic"]["sigma"] = 1e-300;
  std::ostringstream abort_log;
  CHECK(app::cli_train({write_config(dir, degenerate), {}, dir}, abort_log) == 3);
  CHECK(abort_log.str().find("step 0") != std::string::npos);
}

TEST_CASE("zero iterations writes the initial head and an empty trace") {
  const fs::path dir = scratch("zero");
  std::ostringstream log;
  const fs::path cfg = write_config(dir, synthetic_config(0));
  REQUIRE(app::cli_train({cfg, {}, dir}, log) == 0);
  CHECK(io::read_file(dir / "trace.csv") == "step,loss,positive,negative,koleo\n");

  const io::RunConfig config = io::read_run_config(cfg);
  const auto data = app::load_data(config);
  const auto expected = train_run(config.train, data.train).initial_head;
  CHECK(app::read_model(dir / "model.json").head == expected);

  const json meta = json::parse(io::read_file(dir / "run.json"));
  CHECK(meta.at("toolkit_version") == io::kToolkitVersion);
  for (const char* key : {"pca_sign_rule", "ap_formula", "tie_breaking", "gamma_convention"})
    CHECK(meta.at("conventions").contains(key));
  CHECK(meta.at("config").at("iterations") == 0);
}

TEST_CASE("same config and seed give byte-identical artifacts") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  json cfg = synthetic_config(40);
  cfg["gamma_every"] = 5;
  cfg["snapshot_every"] = 20;
  std::ostringstream log;
  REQUIRE(app::cli_train({write_config(a, cfg), {}, a}, log) == 0);
  REQUIRE(app::cli_train({write_config(b, cfg), {}, b}, log) == 0);
  for (const char* f : {"model.json", "trace.csv", "run.json"})
    CHECK(io::read_file(a / f) == io::read_file(b / f));

  std::ostringstream out_a, out_b;
  REQUIRE(app::cli_eval({a / "config.json", a / "model.json", {}, {}, a}, out_a, log) == 0);
  REQUIRE(app::cli_eval({b / "config.json", b / "model.json", {}, {}, b}, out_b, log) == 0);
  CHECK(out_a.str() == out_b.str());
  CHECK(io::read_file(a / "metrics.json") == out_a.str());

  // A different seed changes the run.
  const fs::path c = scratch("det_c");
  REQUIRE(app::cli_train({write_config(c, cfg), 99, c}, log) == 0);
  CHECK(io::read_file(a / "trace.csv") != io::read_file(c / "trace.csv"));
}

TEST_CASE("eval on perfectly separated data") {
  const fs::path dir = scratch("perfect");
  json cfg = synthetic_config(0);
  cfg["synthetic"]["sigma"] = 1e-3;
  cfg["head"]["out_dim"] = 12;
  write_identity_model(dir / "model.json", 12);
  std::ostringstream out, log;
  REQUIRE(app::cli_eval({write_config(dir, cfg), dir / "model.json", {}, {}, dir}, out, log) == 0);
  const json m = json::parse(out.str());
  CHECK(m.at("recall_at_k").at("1") == 1.0);
  CHECK(m.at("descriptor_dim") == 12);
  CHECK(m.at("pca").at("used") == false);
}

namespace {

// Eight points on an arc; see the expected values below.
void write_arc_dataset(const fs::path& dir) {
  const double deg[] = {0, 10, 25, 45, 50, 70, 95, 105};
  Matrix x(8, 2);
  for (int i = 0; i < 8; ++i) {
    const double t = deg[i] * std::numbers::pi / 180.0;
    x(i, 0) = std::cos(t);
    x(i, 1) = std::sin(t);
  }
  io::write_features(dir / "x.emb", x);
  io::write_labels(dir / "y.txt", {0, 1, 1, 0, 0, 1, 0, 1});
  write_identity_model(dir / "model.json", 2);
}

json arc_config(const fs::path& dir, const std::string& mode) {
  return {{"mode", mode},
          {"eval_ks", {1, 2, 4}},
          {"head", {{"out_dim", 2}}},
          {"dataset",
           {{"train_features", (dir / "x.emb").string()},
            {"train_labels", (dir / "y.txt").string()},
            {"test_features", (dir / "x.emb").string()},
            {"test_labels", (dir / "y.txt").string()}}}};
}

}  // namespace

TEST_CASE("eval on an enumerated eight-item dataset") {
  const fs::path dir = scratch("arc");
  write_arc_dataset(dir);
  std::ostringstream log;

  SUBCASE("recall") {
    // Rank of the first same-label neighbour per item: 3 2 1 1 1 4 3 2.
    std::ostringstream out;
    REQUIRE(app::cli_eval({write_config(dir, arc_config(dir, "category")), dir / "model.json", {}, {}, dir},
                          out, log) == 0);
    const json r = json::parse(out.str()).at("recall_at_k");
    CHECK(r.at("1") == 0.375);
    CHECK(r.at("2") == 0.625);
    CHECK(r.at("4") == 1.0);
  }
  SUBCASE("mAP") {
    // Query 0 ranks 1 2 3 4 5 6 7; query 5 ranks 4 {3,6} 7 2 1 0.
    io::write_ground_truth(dir / "gt.json", {{0, {{1}, {3}, {2}}}, {5, {{7}, {2}, {6}}}});
    std::ostringstream out;
    REQUIRE(app::cli_eval({write_config(dir, arc_config(dir, "particular")), dir / "model.json",
                           dir / "gt.json", {}, dir},
                          out, log) == 0);
    const json m = json::parse(out.str());
    CHECK(m.at("map_medium").get<double>() == doctest::Approx((1.0 + 5.0 / 12.0) / 2).epsilon(1e-12));
    CHECK(m.at("map_hard").get<double>() == doctest::Approx((1.0 + 1.0 / 3.0) / 2).epsilon(1e-12));
    CHECK(m.at("map_easy").get<double>() == doctest::Approx((1.0 + 1.0 / 3.0) / 2).epsilon(1e-12));
  }
  SUBCASE("empty ground truth") {
    io::write_ground_truth(dir / "gt.json", {});
    std::ostringstream out;
    CHECK(app::cli_eval({write_config(dir, arc_config(dir, "particular")), dir / "model.json",
                         dir / "gt.json", {}, dir},
                        out, log) == 2);
  }
  SUBCASE("dimension mismatch") {
    write_identity_model(dir / "wide.json", 3);
    std::ostringstream out;
    CHECK(app::cli_eval({write_config(dir, arc_config(dir, "category")), dir / "wide.json", {}, {}, dir},
                        out, log) == 2);
  }
}

TEST_CASE("diagnose outputs") {
  const fs::path dir = scratch("diag");
  std::ostringstream log;
  write_identity_model(dir / "model.json", 3);

  SUBCASE("rank-one features") {
    Matrix x(6, 3);
    for (int i = 0; i < 6; ++i) x.row(i) = (i % 2 ? -1.0 : 1.0) * (i + 1) * Eigen::RowVector3d(1, 2, 2);
    io::write_features(dir / "x.emb", x);
    io::write_labels(dir / "y.txt", {0, 0, 1, 1, 2, 2});
    REQUIRE(app::cli_diagnose({dir / "model.json", dir / "x.emb", dir / "y.txt", {}, {}, 10, dir}, log) == 0);
    const auto energy = io::parse_csv(io::read_file(dir / "energy.csv"));
    CHECK(energy.header == std::vector<std::string>{"component_index", "cumulative_energy"});
    CHECK(energy.rows.at(0).at(0) == 1.0);
    CHECK(energy.rows.at(0).at(1) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("two samples give one pair") {
    Matrix x(2, 3);
    x << 1, 0, 0, 0, 1, 0;
    io::write_features(dir / "x.emb", x);
    io::write_labels(dir / "y.txt", {0, 1});
    REQUIRE(app::cli_diagnose({dir / "model.json", dir / "x.emb", dir / "y.txt", {}, {}, 10, dir}, log) == 0);
    const auto hist = io::parse_csv(io::read_file(dir / "hist.csv"));
    CHECK(hist.header == std::vector<std::string>{"bin_left", "bin_right", "pos_count", "neg_count"});
    double total = 0.0;
    for (const auto& r : hist.rows) total += r[2] + r[3];
    CHECK(total == 1.0);
    CHECK(hist.rows.size() == 10);
  }
  SUBCASE("outputs re-parse to the computed values") {
    std::mt19937_64 rng(5);
    const Labels y = testing::random_labels(40, 4, rng);
    const Matrix x = testing::clustered_unit_rows(y, 3, 0.5, rng).cast<float>().cast<double>();
    io::write_features(dir / "x.emb", x);
    io::write_labels(dir / "y.txt", y);
    REQUIRE(app::cli_diagnose({dir / "model.json", dir / "x.emb", dir / "y.txt", {}, {}, 12, dir}, log) == 0);

    const Matrix z = app::describe(app::read_model(dir / "model.json"), io::read_features(dir / "x.emb"));
    const auto energy = pca_energy_report(z);
    const auto hist = similarity_histograms(z, y, 12);
    const auto e = io::parse_csv(io::read_file(dir / "energy.csv"));
    REQUIRE(static_cast<Eigen::Index>(e.rows.size()) == energy.cumulative.size());
    for (std::size_t k = 0; k < e.rows.size(); ++k)
      CHECK(e.rows[k][1] == energy.cumulative(static_cast<Eigen::Index>(k)));
    const auto h = io::parse_csv(io::read_file(dir / "hist.csv"));
    for (std::size_t b = 0; b < 12; ++b) {
      CHECK(h.rows[b][0] == hist.edges[b]);
      CHECK(h.rows[b][1] == hist.edges[b + 1]);
      CHECK(h.rows[b][2] == static_cast<double>(hist.positive[b]));
      CHECK(h.rows[b][3] == static_cast<double>(hist.negative[b]));
    }
    const json s = json::parse(io::read_file(dir / "summary.json"));
    CHECK(s.at("components_90") == energy.components_90);
    CHECK(s.at("histogram_overlap").get<double>() == histogram_overlap(hist));
    CHECK(s.at("gamma").is_null());
  }
  SUBCASE("gamma via a training config") {
    std::mt19937_64 rng(6);
    const Labels y = testing::random_labels(30, 3, rng);
    io::write_features(dir / "x.emb", testing::clustered_unit_rows(y, 3, 0.5, rng));
    io::write_labels(dir / "y.txt", y);
    json cfg = {{"iterations", 4},
                {"batch_size", 16},
                {"synthetic", {{"num_classes", 8}, {"per_class", 8}, {"dim", 3}, {"train_classes", 6}}}};
    REQUIRE(app::cli_diagnose({dir / "model.json", dir / "x.emb", dir / "y.txt", write_config(dir, cfg), {}, 10, dir},
                              log) == 0);
    const json s = json::parse(io::read_file(dir / "summary.json"));
    CHECK(s.at("gamma").at("num_steps") == 4);
    CHECK(s.at("gamma").at("gamma").get<double>() >= 0.0);
  }
  SUBCASE("label count mismatch") {
    io::write_features(dir / "x.emb", Matrix::Identity(3, 3));
    io::write_labels(dir / "y.txt", {0, 1});
    CHECK(app::cli_diagnose({dir / "model.json", dir / "x.emb", dir / "y.txt", {}, {}, 10, dir}, log) == 2);
  }
}

TEST_CASE("dmlctl binary exit codes") {
  const fs::path dir = scratch("binary");
  const std::string exe = DMLCTL_PATH;
  const auto run = [](const std::string& cmd) {
    const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  CHECK(run(exe + " train --config " + (dir / "missing.json").string()) == 2);
  CHECK(run(exe + " train --bogus") == 2);
  CHECK(run(exe) == 2);
  write_config(dir, synthetic_config(2));
  CHECK(run(exe + " train --config " + (dir / "config.json").string() + " --out-dir " + dir.string()) == 0);
  CHECK(fs::exists(dir / "trace.csv"));
}
