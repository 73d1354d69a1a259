#include "dml/app.hpp"

#include "dml/diagnostics.hpp"
#include "dml/error.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>

namespace dml::app {

using nlohmann::json;

json model_to_json(const Model& m) {
  json j = {{"format", "dml-model-1"},
            {"head", io::head_to_json(m.head)},
            {"pooling", {{"mode", std::string(to_string(m.pooling))}, {"p", m.pooling_p}}},
            {"tokens_per_item", m.tokens_per_item}};
  j["pca"] = m.pca ? io::pca_to_json(*m.pca) : json(nullptr);
  return j;
}

Model model_from_json(const json& j) {
  try {
    if (j.at("format") != "dml-model-1") throw LoadError("model: unknown format tag", 0);
    Model m;
    m.head = io::head_from_json(j.at("head"));
    m.pooling = parse_pooling_mode(j.at("pooling").at("mode").get<std::string>());
    m.pooling_p = j.at("pooling").at("p").get<double>();
    m.tokens_per_item = j.at("tokens_per_item").get<Eigen::Index>();
    if (!j.at("pca").is_null()) {
      m.pca = io::pca_from_json(j.at("pca"));
      if (m.pca->in_dim() != m.head.spec().out_dim)
        throw LoadError("model: PCA input dimension does not match head output", 0);
    }
    return m;
  } catch (const json::exception& e) {
    throw LoadError(std::string("model: malformed file: ") + e.what(), 0);
  }
}

Model read_model(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw LoadError(path.string() + ": invalid JSON: " + e.what(), e.byte);
  }
  return model_from_json(j);
}

Matrix describe(const Model& model, const Matrix& features) {
  const EncoderHead::Cache cache = model.head.forward(features);
  if (!model.pca) return cache.normalized;
  Matrix out(features.rows(), model.pca->out_dim());
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    out.row(i) = pca_transform(*model.pca, cache.embeddings.row(i).transpose()).values.transpose();
  return out;
}

Matrix pool_feature_rows(const Matrix& rows, Eigen::Index tokens_per_item, PoolingMode mode,
                         double p) {
  if (tokens_per_item <= 0) return rows;
  const Eigen::Index group = tokens_per_item + 1;
  if (rows.rows() % group != 0)
    throw ShapeError("feature rows (" + std::to_string(rows.rows()) +
                     ") are not a multiple of 1 + tokens_per_item (" + std::to_string(group) + ")");
  const Eigen::Index items = rows.rows() / group;
  Matrix out(items, rows.cols());
  for (Eigen::Index i = 0; i < items; ++i) {
    TokenGrid grid{rows.row(i * group).transpose(), rows.middleRows(i * group + 1, tokens_per_item)};
    out.row(i) = pool(grid, mode, p).transpose();
  }
  return out;
}

namespace {

LabeledFeatureDataset load_split(const io::RunConfig& c, const std::string& features,
                                 const std::string& labels) {
  const Matrix raw = io::read_features(features);
  if (c.tokens_per_item > 0 && raw.rows() % (c.tokens_per_item + 1) != 0)
    throw LoadError(features + ": row count is not a multiple of 1 + tokens_per_item", 4);
  LabeledFeatureDataset d;
  d.features = pool_feature_rows(raw, c.tokens_per_item, c.pooling, c.pooling_p);
  d.labels = io::read_labels(labels, d.features.rows());
  return d;
}

// Alternating members of each class: even positions query, odd positions
// gallery.
std::pair<LabeledFeatureDataset, LabeledFeatureDataset> split_queries(
    const LabeledFeatureDataset& d) {
  std::map<int, int> seen;
  std::vector<std::size_t> q, g;
  for (std::size_t i = 0; i < d.labels.size(); ++i)
    (seen[d.labels[i]]++ % 2 == 0 ? q : g).push_back(i);
  auto take = [&](const std::vector<std::size_t>& idx) {
    LabeledFeatureDataset out;
    out.features = d.rows(idx);
    for (auto i : idx) out.labels.push_back(d.labels[i]);
    return out;
  };
  return {take(q), take(g)};
}

}  // namespace

std::vector<io::GroundTruthRecord> synthetic_ground_truth(const LabeledFeatureDataset& gallery) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < gallery.labels.size(); ++i) by_class[gallery.labels[i]].push_back(i);
  std::vector<io::GroundTruthRecord> out;
  for (const auto& [label, members] : by_class) {
    (void)label;
    const std::size_t q = members.front();
    const Vector qv = gallery.features.row(static_cast<Eigen::Index>(q)).normalized().transpose();
    std::vector<std::pair<double, std::size_t>> others;
    for (std::size_t k = 1; k < members.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(members[k]);
      others.emplace_back(gallery.features.row(r).normalized().dot(qv.transpose()), members[k]);
    }
    std::stable_sort(others.begin(), others.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    io::GroundTruthRecord rec;
    rec.query_index = static_cast<std::int64_t>(q);
    const std::size_t easy = (others.size() + 1) / 2;
    for (std::size_t k = 0; k < others.size(); ++k) {
      const auto idx = static_cast<std::int64_t>(others[k].second);
      if (k < easy) rec.gt.easy.push_back(idx);
      else if (others.size() >= 3 && k + 1 == others.size()) rec.gt.junk.push_back(idx);
      else rec.gt.hard.push_back(idx);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

DataBundle load_data(const io::RunConfig& c) {
  DataBundle b;
  if (c.synthetic) {
    const auto& syn = *c.synthetic;
    LabeledFeatureDataset all;
    if (c.tokens_per_item > 0) {
      const auto grids = make_synthetic_grids(syn.spec, c.tokens_per_item);
      all = pool_grids(grids.grids, grids.labels, c.pooling, c.pooling_p);
    } else {
      all = make_synthetic(syn.spec);
    }
    const int train_classes = syn.train_classes > 0 ? syn.train_classes : syn.spec.num_classes / 2;
    auto split = split_by_class(all, train_classes);
    b.train = std::move(split.train);
    b.test = std::move(split.test);
    if (c.train.mode == TrainMode::category && c.eval_protocol == io::EvalProtocol::query_gallery) {
      auto [q, g] = split_queries(b.test);
      b.queries = std::move(q);
      b.test = std::move(g);
    }
    if (c.train.mode == TrainMode::particular) b.ground_truth = synthetic_ground_truth(b.test);
    return b;
  }
  const auto& p = *c.dataset;
  b.train = load_split(c, p.train_features, p.train_labels);
  b.test = p.test_features.empty() ? b.train : load_split(c, p.test_features, p.test_labels);
  if (!p.query_features.empty()) b.queries = load_split(c, p.query_features, p.query_labels);
  if (!p.ground_truth.empty()) b.ground_truth = io::read_ground_truth(p.ground_truth);
  return b;
}

Model fit_model(const io::RunConfig& c, const EncoderHead& head,
                const LabeledFeatureDataset& train) {
  Model m{head, std::nullopt, c.pooling, c.pooling_p, c.tokens_per_item};
  if (c.pca_out_dim > 0) {
    // Fit on unnormalized head outputs; descriptors are normalized after
    // projection.
    const Matrix e = head.forward(train.features).embeddings;
    m.pca = pca_fit(e, c.pca_out_dim);
  }
  return m;
}

json conventions() {
  return {
      {"pca_sign_rule", "largest-magnitude entry of each component is positive"},
      {"pca_fit_input", "unnormalized head outputs of the training split; L2 after projection"},
      {"pca_covariance", "sample covariance, n-1 denominator, no whitening"},
      {"ap_formula", "non-interpolated: mean over positives of k / rank_k after junk removal"},
      {"tie_breaking", "equal similarities ranked by ascending gallery index"},
      {"recall_protocol", "leave-one-out over the test split unless eval_protocol=query_gallery"},
      {"gamma_convention",
       "per-sample gradients w.r.t. z, unit-normalized, within-batch covariance with 1/n "
       "denominator, nuclear norm averaged over measured steps; contrastive-term gradient "
       "unless gamma_objective=combined"},
      {"memory_refresh", "entries replaced only on re-enqueue; never refreshed in place"},
      {"memory_entries", "post-normalization descriptors; no gradient"},
      {"koleo_scope", "nearest neighbour within the batch, ties to lowest index"},
      {"hinge_subgradient", "zero at similarity == beta"},
      {"pair_counting", "ordered pairs, each anchor counts its partners once; self-pairs excluded"},
      {"entropy_proxy_constant", "literal 1/N sum; proportionality constant taken as 1"},
  };
}

json evaluate(const io::RunConfig& c, const Model& model, const DataBundle& data) {
  json report;
  report["mode"] = std::string(to_string(c.train.mode));
  report["pca"] = {{"used", model.pca.has_value()},
                   {"out_dim", model.pca ? model.pca->out_dim() : 0}};
  const Matrix gallery = describe(model, data.test.features);
  report["descriptor_dim"] = gallery.cols();
  report["gallery_size"] = gallery.rows();
  const RetrievalIndex index(gallery);

  if (c.train.mode == TrainMode::category) {
    std::map<int, double> recall;
    if (data.queries) {
      const Matrix q = describe(model, data.queries->features);
      const auto rankings = retrieve(index, q, false);
      recall = recall_at_k(rankings, data.queries->labels, data.test.labels, c.eval_ks);
      report["protocol"] = "query_gallery";
      report["num_queries"] = q.rows();
    } else {
      const auto rankings = retrieve(index, gallery, true);
      recall = recall_at_k(rankings, data.test.labels, data.test.labels, c.eval_ks);
      report["protocol"] = "leave_one_out";
      report["num_queries"] = gallery.rows();
    }
    json r = json::object();
    for (const auto& [k, v] : recall) r[std::to_string(k)] = v;
    report["recall_at_k"] = r;
    return report;
  }

  if (data.ground_truth.empty()) throw ProtocolError("eval: ground truth is empty");
  const Matrix* query_src = &gallery;
  Matrix described_queries;
  if (data.queries) {
    described_queries = describe(model, data.queries->features);
    query_src = &described_queries;
  }
  Matrix q(static_cast<Eigen::Index>(data.ground_truth.size()), gallery.cols());
  std::vector<QueryGroundTruth> gts;
  for (std::size_t i = 0; i < data.ground_truth.size(); ++i) {
    const auto qi = data.ground_truth[i].query_index;
    if (qi < 0 || qi >= query_src->rows())
      throw ProtocolError("eval: query_index " + std::to_string(qi) + " out of range");
    q.row(static_cast<Eigen::Index>(i)) = query_src->row(qi);
    gts.push_back(data.ground_truth[i].gt);
  }
  auto rankings = retrieve(index, q, false);
  if (!data.queries) {
    // Queries drawn from the gallery never retrieve themselves.
    for (std::size_t i = 0; i < rankings.size(); ++i) {
      auto& r = rankings[i];
      const auto self = data.ground_truth[i].query_index;
      const auto it = std::find(r.order.begin(), r.order.end(), self);
      if (it != r.order.end()) {
        r.scores.erase(r.scores.begin() + (it - r.order.begin()));
        r.order.erase(it);
      }
    }
  }
  const auto gsize = static_cast<std::size_t>(gallery.rows());
  report["protocol"] = data.queries ? "separate_queries" : "gallery_queries";
  report["num_queries"] = q.rows();
  for (Split s : {Split::easy, Split::medium, Split::hard}) {
    try {
      const MapResult m = mean_average_precision(rankings, gts, s, gsize);
      report["map_" + std::string(to_string(s))] = m.map;
      report["skipped_" + std::string(to_string(s))] = m.skipped;
    } catch (const ProtocolError&) {
      // Easy is informational; medium and hard must be defined.
      if (s != Split::easy) throw;
      report["map_easy"] = nullptr;
    }
  }
  return report;
}

namespace {

int guarded(std::ostream& log, const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const TrainingAborted& e) {
    log << "error: training aborted at step " << e.step() << ": " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    log << "error: " << e.what() << "\n";
    return 3;
  } catch (const NormalizationError& e) {
    log << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    log << "error: " << e.what() << "\n";
    return 2;
  }
}

io::CsvTable trace_table(const std::vector<TraceRow>& trace) {
  io::CsvTable t{{"step", "loss", "positive", "negative", "koleo"}, {}};
  for (const auto& r : trace)
    t.rows.push_back({static_cast<double>(r.step), r.loss, r.positive, r.negative, r.koleo});
  return t;
}

json gamma_json(const std::optional<GradientNoiseReport>& g) {
  if (!g) return nullptr;
  return {{"gamma", g->gamma}, {"num_steps", g->num_steps}, {"skipped_steps", g->skipped_steps},
          {"beta", g->beta}, {"lambda", g->lambda}};
}

}  // namespace

int cli_train(const TrainOptions& o, std::ostream& log) {
  return guarded(log, [&] {
    io::RunConfig config = io::read_run_config(o.config);
    if (o.seed) config.train.seed = *o.seed;
    const DataBundle data = load_data(config);
    const TrainResult result = train_run(config.train, data.train);
    const Model model = fit_model(config, result.head, data.train);

    json meta;
    meta["toolkit_version"] = io::kToolkitVersion;
    meta["config"] = run_config_to_json(config);
    meta["conventions"] = conventions();
    meta["memory_capacity"] = result.memory_capacity;
    meta["train_size"] = data.train.size();
    meta["test_size"] = data.test.size();
    meta["feature_dim"] = data.train.dim();
    meta["gamma"] = gamma_json(result.gamma);
    json snaps = json::array();
    for (const auto& s : result.snapshots)
      snaps.push_back({{"step", s.step}, {"components_50", s.components_50},
                       {"components_90", s.components_90}, {"components_95", s.components_95}});
    meta["energy_snapshots"] = snaps;
    meta["final_loss"] = result.trace.empty() ? json(nullptr) : json(result.trace.back().loss);

    io::write_atomic(o.out_dir / "model.json", io::dump_canonical(model_to_json(model)));
    io::write_atomic(o.out_dir / "trace.csv", io::format_csv(trace_table(result.trace)));
    io::write_atomic(o.out_dir / "run.json", io::dump_canonical(meta));
    log << "trained " << result.trace.size() << " steps; wrote model.json, trace.csv, run.json to "
        << o.out_dir.string() << "\n";
  });
}

int cli_eval(const EvalOptions& o, std::ostream& out, std::ostream& log) {
  return guarded(log, [&] {
    io::RunConfig config = io::read_run_config(o.config);
    if (o.mode) config.train.mode = parse_train_mode(*o.mode);
    const Model model = read_model(o.model);
    DataBundle data = load_data(config);
    if (o.ground_truth) data.ground_truth = io::read_ground_truth(*o.ground_truth);
    if (model.head.spec().in_dim != data.test.dim())
      throw ShapeError("model expects " + std::to_string(model.head.spec().in_dim) +
                       "-dim features, data has " + std::to_string(data.test.dim()));
    json report = evaluate(config, model, data);
    report["toolkit_version"] = io::kToolkitVersion;
    report["conventions"] = conventions();
    const std::string text = io::dump_canonical(report);
    io::write_atomic(o.out_dir / "metrics.json", text);
    out << text;
  });
}

int cli_diagnose(const DiagnoseOptions& o, std::ostream& log) {
  return guarded(log, [&] {
    if (o.bins < 2) throw ConfigError("--bins must be >= 2");
    const Model model = read_model(o.model);
    const Matrix raw = io::read_features(o.features);
    const Matrix features =
        pool_feature_rows(raw, model.tokens_per_item, model.pooling, model.pooling_p);
    const Labels labels = io::read_labels(o.labels, features.rows());
    if (model.head.spec().in_dim != features.cols())
      throw ShapeError("model expects " + std::to_string(model.head.spec().in_dim) +
                       "-dim features, file has " + std::to_string(features.cols()));
    const Matrix z = describe(model, features);

    const PcaEnergyReport energy = pca_energy_report(z);
    io::CsvTable energy_csv{{"component_index", "cumulative_energy"}, {}};
    for (Eigen::Index k = 0; k < energy.cumulative.size(); ++k)
      energy_csv.rows.push_back({static_cast<double>(k + 1), energy.cumulative[k]});

    const SimilarityHistogram hist = similarity_histograms(z, labels, o.bins);
    io::CsvTable hist_csv{{"bin_left", "bin_right", "pos_count", "neg_count"}, {}};
    for (std::size_t b = 0; b < hist.num_bins(); ++b)
      hist_csv.rows.push_back({hist.edges[b], hist.edges[b + 1],
                               static_cast<double>(hist.positive[b]),
                               static_cast<double>(hist.negative[b])});

    json summary;
    summary["toolkit_version"] = io::kToolkitVersion;
    summary["conventions"] = conventions();
    summary["num_samples"] = z.rows();
    summary["descriptor_dim"] = z.cols();
    summary["components_50"] = energy.components_50;
    summary["components_90"] = energy.components_90;
    summary["components_95"] = energy.components_95;
    summary["positive_pairs"] = hist.positive_total();
    summary["negative_pairs"] = hist.negative_total();
    summary["histogram_overlap"] =
        hist.positive_total() > 0 && hist.negative_total() > 0 ? json(histogram_overlap(hist))
                                                               : json(nullptr);
    summary["gamma"] = nullptr;
    if (o.gamma_config) {
      io::RunConfig config = io::read_run_config(*o.gamma_config);
      if (o.seed) config.train.seed = *o.seed;
      if (config.train.gamma_every == 0) config.train.gamma_every = 1;
      const DataBundle data = load_data(config);
      const TrainResult run = train_run(config.train, data.train, model.head);
      summary["gamma"] = gamma_json(run.gamma);
    }

    io::write_atomic(o.out_dir / "energy.csv", io::format_csv(energy_csv));
    io::write_atomic(o.out_dir / "hist.csv", io::format_csv(hist_csv));
    io::write_atomic(o.out_dir / "summary.json", io::dump_canonical(summary));
    log << "wrote energy.csv, hist.csv, summary.json to " << o.out_dir.string() << "\n";
  });
}

}  // namespace dml::app
