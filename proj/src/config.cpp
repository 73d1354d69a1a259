#include "dml/error.hpp"
#include "dml/io.hpp"

#include <set>

namespace dml::io {

using nlohmann::json;

namespace {

// Walks one JSON object, recording type errors and unknown keys instead of
// stopping at the first problem.
class Section {
 public:
  Section(const json& obj, std::string path, std::vector<std::string>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {
    if (!obj_.is_object()) errors_.push_back(path_ + ": must be an object");
  }

  bool has(const char* key) {
    known_.insert(key);
    return obj_.is_object() && obj_.contains(key) && !obj_.at(key).is_null();
  }

  double number(const char* key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = obj_.at(key);
    if (!v.is_number()) {
      errors_.push_back(where(key) + ": expected a number");
      return fallback;
    }
    return v.get<double>();
  }

  long long integer(const char* key, long long fallback) {
    if (!has(key)) return fallback;
    const json& v = obj_.at(key);
    if (!v.is_number_integer()) {
      errors_.push_back(where(key) + ": expected an integer");
      return fallback;
    }
    return v.get<long long>();
  }

  std::string text(const char* key, std::string fallback) {
    if (!has(key)) return fallback;
    const json& v = obj_.at(key);
    if (!v.is_string()) {
      errors_.push_back(where(key) + ": expected a string");
      return fallback;
    }
    return v.get<std::string>();
  }

  const json* child(const char* key) {
    if (!has(key)) return nullptr;
    return &obj_.at(key);
  }

  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() {
    if (!obj_.is_object()) return;
    for (const auto& [key, value] : obj_.items()) {
      (void)value;
      if (!known_.count(key)) errors_.push_back(where(key.c_str()) + ": unknown key");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> known_;
};

template <class F>
void guarded(std::vector<std::string>& errors, const std::string& where, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    errors.push_back(where + ": " + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  std::vector<std::string> errors;
  RunConfig c;
  c.echo = j;
  Section top(j, "", errors);
  TrainConfig& t = c.train;

  guarded(errors, "mode", [&] { t.mode = parse_train_mode(top.text("mode", "category")); });
  const bool particular = t.mode == TrainMode::particular;
  t.loss.beta = top.number("beta", particular ? 0.85 : 0.5);
  t.loss.lambda = top.number("lambda", 0.7);
  t.optimizer.lr = top.number("lr", 3e-5);
  t.optimizer.weight_decay = top.number("weight_decay", 5e-4);
  t.batch_size = top.integer("batch_size", 64);
  t.instances_per_class = top.integer("instances_per_class", 4);
  t.memory_capacity_ratio = top.number("memory_capacity_ratio", particular ? 0.0 : 1.0);
  if (top.has("momentum_m")) t.momentum = top.number("momentum_m", 0.999);
  t.iterations = top.integer("iterations", 0);
  const long long seed = top.integer("seed", 0);
  if (seed < 0) errors.push_back("seed: must be nonnegative");
  t.seed = static_cast<std::uint64_t>(seed);
  t.gamma_every = top.integer("gamma_every", 0);
  t.snapshot_every = top.integer("snapshot_every", 0);
  {
    const std::string g = top.text("gamma_objective", "contrastive");
    if (g == "contrastive") t.gamma_objective = GammaObjective::contrastive;
    else if (g == "combined") t.gamma_objective = GammaObjective::combined;
    else errors.push_back("gamma_objective: expected 'contrastive' or 'combined'");
  }

  if (const json* p = top.child("pooling")) {
    Section s(*p, "pooling", errors);
    guarded(errors, "pooling.mode", [&] { c.pooling = parse_pooling_mode(s.text("mode", "gem")); });
    c.pooling_p = s.number("p", 3.0);
    s.finish();
  }
  c.tokens_per_item = top.integer("tokens_per_item", 0);
  c.pca_out_dim = top.integer("pca_out_dim", 0);
  c.histogram_bins = static_cast<int>(top.integer("histogram_bins", 40));
  if (const json* ks = top.child("eval_ks")) {
    if (!ks->is_array() || ks->empty()) {
      errors.push_back("eval_ks: expected a nonempty list of integers");
    } else {
      c.eval_ks.clear();
      for (const auto& k : *ks) {
        if (!k.is_number_integer() || k.get<long long>() < 1)
          errors.push_back("eval_ks: entries must be positive integers");
        else
          c.eval_ks.push_back(k.get<int>());
      }
    }
  }
  {
    const std::string proto = top.text("eval_protocol", "leave_one_out");
    if (proto == "leave_one_out") c.eval_protocol = EvalProtocol::leave_one_out;
    else if (proto == "query_gallery") c.eval_protocol = EvalProtocol::query_gallery;
    else errors.push_back("eval_protocol: expected 'leave_one_out' or 'query_gallery'");
  }

  if (const json* h = top.child("head")) {
    Section s(*h, "head", errors);
    t.hidden = s.integer("hidden", 0);
    t.out_dim = s.integer("out_dim", 64);
    s.finish();
  }

  if (const json* tp = top.child("tuples")) {
    Section s(*tp, "tuples", errors);
    auto count = [&](const char* key, std::size_t fallback) {
      const long long v = s.integer(key, static_cast<long long>(fallback));
      if (v < 1) {
        errors.push_back(s.where(key) + ": must be positive");
        return fallback;
      }
      return static_cast<std::size_t>(v);
    };
    t.tuples.tuples_per_batch = count("tuples_per_batch", 5);
    t.tuples.negatives_per_tuple = count("negatives_per_tuple", 5);
    t.tuples.pairs_per_epoch = count("pairs_per_epoch", 2000);
    t.tuples.negative_pool = count("negative_pool", 22000);
    t.tuples.scale = s.number("scale", 1.0);
    s.finish();
  }

  if (const json* d = top.child("dataset")) {
    Section s(*d, "dataset", errors);
    DatasetPaths p;
    p.train_features = s.text("train_features", "");
    p.train_labels = s.text("train_labels", "");
    p.test_features = s.text("test_features", "");
    p.test_labels = s.text("test_labels", "");
    p.query_features = s.text("query_features", "");
    p.query_labels = s.text("query_labels", "");
    p.ground_truth = s.text("ground_truth", "");
    s.finish();
    if (p.train_features.empty() || p.train_labels.empty())
      errors.push_back("dataset: train_features and train_labels are required");
    if (p.test_features.empty() != p.test_labels.empty())
      errors.push_back("dataset: test_features and test_labels go together");
    if (p.query_features.empty() != p.query_labels.empty())
      errors.push_back("dataset: query_features and query_labels go together");
    c.dataset = std::move(p);
  }

  if (const json* sj = top.child("synthetic")) {
    Section s(*sj, "synthetic", errors);
    SyntheticSection syn;
    syn.spec.num_classes = static_cast<int>(s.integer("num_classes", 16));
    syn.spec.per_class = static_cast<int>(s.integer("per_class", 16));
    syn.spec.dim = s.integer("dim", 32);
    syn.spec.sigma = s.number("sigma", 0.1);
    const long long sseed = s.integer("seed", static_cast<long long>(t.seed));
    syn.spec.seed = static_cast<std::uint64_t>(sseed < 0 ? 0 : sseed);
    syn.spec.signal_dim = s.integer("signal_dim", 0);
    syn.spec.nuisance_sigma = s.number("nuisance_sigma", 0.0);
    syn.train_classes = static_cast<int>(s.integer("train_classes", 0));
    s.finish();
    guarded(errors, "synthetic", [&] { validate_synthetic_spec(syn.spec); });
    if (syn.train_classes < 0 || syn.train_classes >= syn.spec.num_classes)
      errors.push_back("synthetic.train_classes: must lie in [0, num_classes)");
    c.synthetic = syn;
  }
  top.finish();

  if (c.dataset.has_value() == c.synthetic.has_value())
    errors.push_back("exactly one of 'dataset' and 'synthetic' must be given");
  if (c.pca_out_dim < 0) errors.push_back("pca_out_dim: must be >= 0");
  if (c.tokens_per_item < 0) errors.push_back("tokens_per_item: must be >= 0");
  if (c.histogram_bins < 2) errors.push_back("histogram_bins: must be >= 2");
  if (!(c.pooling_p >= 1.0)) errors.push_back("pooling.p: must be >= 1");
  guarded(errors, "config", [&] { validate_train_config(t); });

  if (!errors.empty()) {
    std::string msg = "invalid run config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

RunConfig read_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": invalid JSON: " + e.what());
  }
  return parse_run_config(j);
}

json run_config_to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  json j = {
      {"mode", std::string(to_string(t.mode))},
      {"beta", t.loss.beta},
      {"lambda", t.loss.lambda},
      {"lr", t.optimizer.lr},
      {"weight_decay", t.optimizer.weight_decay},
      {"batch_size", t.batch_size},
      {"instances_per_class", t.instances_per_class},
      {"memory_capacity_ratio", t.memory_capacity_ratio},
      {"iterations", t.iterations},
      {"seed", t.seed},
      {"gamma_every", t.gamma_every},
      {"gamma_objective", t.gamma_objective == GammaObjective::contrastive ? "contrastive" : "combined"},
      {"snapshot_every", t.snapshot_every},
      {"pooling", {{"mode", std::string(to_string(c.pooling))}, {"p", c.pooling_p}}},
      {"tokens_per_item", c.tokens_per_item},
      {"pca_out_dim", c.pca_out_dim},
      {"histogram_bins", c.histogram_bins},
      {"eval_ks", c.eval_ks},
      {"eval_protocol", c.eval_protocol == EvalProtocol::leave_one_out ? "leave_one_out" : "query_gallery"},
      {"head", {{"hidden", t.hidden}, {"out_dim", t.out_dim}}},
      {"tuples",
       {{"tuples_per_batch", t.tuples.tuples_per_batch},
        {"negatives_per_tuple", t.tuples.negatives_per_tuple},
        {"pairs_per_epoch", t.tuples.pairs_per_epoch},
        {"negative_pool", t.tuples.negative_pool},
        {"scale", t.tuples.scale}}},
  };
  j["momentum_m"] = t.momentum ? json(*t.momentum) : json(nullptr);
  if (c.dataset) {
    const auto& p = *c.dataset;
    json d = {{"train_features", p.train_features}, {"train_labels", p.train_labels}};
    if (!p.test_features.empty()) {
      d["test_features"] = p.test_features;
      d["test_labels"] = p.test_labels;
    }
    if (!p.query_features.empty()) {
      d["query_features"] = p.query_features;
      d["query_labels"] = p.query_labels;
    }
    if (!p.ground_truth.empty()) d["ground_truth"] = p.ground_truth;
    j["dataset"] = d;
  }
  if (c.synthetic) {
    const auto& s = *c.synthetic;
    j["synthetic"] = {{"num_classes", s.spec.num_classes}, {"per_class", s.spec.per_class},
                      {"dim", s.spec.dim}, {"sigma", s.spec.sigma}, {"seed", s.spec.seed},
                      {"signal_dim", s.spec.signal_dim}, {"nuisance_sigma", s.spec.nuisance_sigma},
                      {"train_classes", s.train_classes}};
  }
  return j;
}

}  // namespace dml::io
