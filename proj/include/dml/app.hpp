#pragma once

// Command implementations behind dmlctl. Each returns a process exit code:
// 0 ok, 2 input or contract error, 3 numerical or training failure.

#include "dml/io.hpp"

#include <filesystem>
#include <optional>
#include <ostream>

namespace dml::app {

// Everything needed to turn raw feature rows into descriptors.
struct Model {
  EncoderHead head;
  std::optional<PcaModel> pca;
  PoolingMode pooling = PoolingMode::gem;
  double pooling_p = 3.0;
  Eigen::Index tokens_per_item = 0;
};

nlohmann::json model_to_json(const Model& m);
Model model_from_json(const nlohmann::json& j);
Model read_model(const std::filesystem::path& path);

// Unit-norm descriptors: head embedding, then PCA projection when present,
// then L2 normalization.
Matrix describe(const Model& model, const Matrix& features);

// Groups rows as [cls, token_1 .. token_T] per item and pools each group.
Matrix pool_feature_rows(const Matrix& rows, Eigen::Index tokens_per_item, PoolingMode mode,
                         double p);

struct DataBundle {
  LabeledFeatureDataset train;
  LabeledFeatureDataset test;
  std::optional<LabeledFeatureDataset> queries;
  std::vector<io::GroundTruthRecord> ground_truth;
};

DataBundle load_data(const io::RunConfig& config);

// For each test class, its first item becomes a query; the other members
// are split by raw-feature similarity into easy (closer half) and hard, with
// the least similar one marked junk when a class has three or more others.
std::vector<io::GroundTruthRecord> synthetic_ground_truth(const LabeledFeatureDataset& gallery);

Model fit_model(const io::RunConfig& config, const EncoderHead& head,
                const LabeledFeatureDataset& train);

nlohmann::json conventions();

nlohmann::json evaluate(const io::RunConfig& config, const Model& model, const DataBundle& data);

struct TrainOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir = ".";
};
int cli_train(const TrainOptions& options, std::ostream& log);

struct EvalOptions {
  std::filesystem::path config;
  std::filesystem::path model;
  std::optional<std::filesystem::path> ground_truth;
  std::optional<std::string> mode;
  std::filesystem::path out_dir = ".";
};
int cli_eval(const EvalOptions& options, std::ostream& out, std::ostream& log);

struct DiagnoseOptions {
  std::filesystem::path model;
  std::filesystem::path features;
  std::filesystem::path labels;
  std::optional<std::filesystem::path> gamma_config;
  std::optional<std::uint64_t> seed;
  int bins = 40;
  std::filesystem::path out_dir = ".";
};
int cli_diagnose(const DiagnoseOptions& options, std::ostream& log);

}  // namespace dml::app
