#pragma once

#include "dml/eval.hpp"
#include "dml/geometry.hpp"
#include "dml/head.hpp"
#include "dml/trainer.hpp"
#include "dml/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dml::io {

inline constexpr char kFeatureMagic[4] = {'E', 'M', 'B', '1'};
inline constexpr const char* kToolkitVersion = "1.0.0";

// "EMB1", rows (u32 LE), cols (u32 LE), rows*cols float32 LE row-major.
// Doubles are narrowed to float on write.
std::string encode_features(const Matrix& m);
Matrix decode_features(const std::string& bytes);
Matrix read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const Matrix& m);

// One nonnegative integer per line.
Labels parse_labels(const std::string& text);
std::string format_labels(const Labels& labels);
Labels read_labels(const std::filesystem::path& path, std::optional<Eigen::Index> expected_rows = {});
void write_labels(const std::filesystem::path& path, const Labels& labels);

struct GroundTruthRecord {
  std::int64_t query_index = 0;
  QueryGroundTruth gt;
};
std::vector<GroundTruthRecord> parse_ground_truth(const std::string& text);
std::string format_ground_truth(const std::vector<GroundTruthRecord>& records);
std::vector<GroundTruthRecord> read_ground_truth(const std::filesystem::path& path);
void write_ground_truth(const std::filesystem::path& path,
                        const std::vector<GroundTruthRecord>& records);

struct DatasetPaths {
  std::string train_features, train_labels;
  std::string test_features, test_labels;
  std::string query_features, query_labels;  // optional separate query set
  std::string ground_truth;                  // optional, particular mode
};

struct SyntheticSection {
  SyntheticSpec spec;
  int train_classes = 0;  // 0 means half of num_classes
};

enum class EvalProtocol { leave_one_out, query_gallery };

struct RunConfig {
  TrainConfig train;
  PoolingMode pooling = PoolingMode::gem;
  double pooling_p = 3.0;
  Eigen::Index tokens_per_item = 0;  // >0: feature rows are [cls, tokens...] per item
  Eigen::Index pca_out_dim = 0;      // 0 disables PCA
  std::vector<int> eval_ks{1, 2, 4, 8};
  EvalProtocol eval_protocol = EvalProtocol::leave_one_out;
  int histogram_bins = 40;
  std::optional<DatasetPaths> dataset;
  std::optional<SyntheticSection> synthetic;
  nlohmann::json echo;  // the parsed input, for run metadata
};

// Validates against the schema (unknown keys rejected) and fills mode
// defaults. Throws ConfigError listing every problem found.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig read_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfig& c);

// Writes to a sibling temp file and renames over the destination.
void write_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

// Canonical JSON text: sorted keys, two-space indent, trailing "\n".
std::string dump_canonical(const nlohmann::json& j);

// Shortest round-trip decimal form.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
std::string format_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);

nlohmann::json head_to_json(const EncoderHead& head);
EncoderHead head_from_json(const nlohmann::json& j);
nlohmann::json pca_to_json(const PcaModel& pca);
PcaModel pca_from_json(const nlohmann::json& j);

}  // namespace dml::io
