#include "dml/eval.hpp"

#include "dml/error.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <string>
#include <unordered_set>

namespace dml {

RetrievalIndex::RetrievalIndex(Matrix g, std::vector<std::int64_t> id_list)
    : gallery(std::move(g)), ids(std::move(id_list)) {
  if (ids.empty()) {
    ids.resize(static_cast<std::size_t>(gallery.rows()));
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(i);
  }
  if (static_cast<Eigen::Index>(ids.size()) != gallery.rows())
    throw ShapeError("retrieval index: id count does not match gallery rows");
  std::unordered_set<std::int64_t> seen;
  for (auto id : ids)
    if (!seen.insert(id).second)
      throw ShapeError("retrieval index: duplicate id " + std::to_string(id));
}

std::vector<RankedList> retrieve(const RetrievalIndex& index, const Matrix& queries,
                                 bool exclude_self, kernels::Exec exec) {
  return kernels::rank_all(index.gallery, queries, exclude_self, exec);
}

std::map<int, double> recall_at_k(const std::vector<RankedList>& rankings,
                                  const Labels& query_labels, const Labels& gallery_labels,
                                  const std::vector<int>& ks) {
  if (rankings.size() != query_labels.size())
    throw ProtocolError("recall_at_k: one ranking per query label required");
  if (rankings.empty()) throw ProtocolError("recall_at_k: no queries");
  for (int k : ks) {
    if (k < 1) throw ProtocolError("recall_at_k: K must be positive");
    for (const auto& r : rankings)
      if (static_cast<std::size_t>(k) > r.order.size())
        throw ProtocolError("recall_at_k: K=" + std::to_string(k) + " exceeds gallery size " +
                            std::to_string(r.order.size()));
  }

  // Rank (0-based) of the first correct item per query, or none.
  std::vector<std::size_t> first_hit(rankings.size(), std::numeric_limits<std::size_t>::max());
  bool any_positive = false;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto& order = rankings[q].order;
    for (std::size_t r = 0; r < order.size(); ++r) {
      const auto g = static_cast<std::size_t>(order[r]);
      if (g >= gallery_labels.size()) throw ProtocolError("recall_at_k: gallery index out of range");
      if (gallery_labels[g] == query_labels[q]) {
        first_hit[q] = r;
        any_positive = true;
        break;
      }
    }
  }
  if (!any_positive) throw ProtocolError("recall_at_k: no query has a positive in the gallery");

  std::map<int, double> out;
  for (int k : ks) {
    std::size_t hits = 0;
    for (auto r : first_hit)
      if (r < static_cast<std::size_t>(k)) ++hits;
    out[k] = static_cast<double>(hits) / static_cast<double>(rankings.size());
  }
  return out;
}

Split parse_split(std::string_view name) {
  if (name == "easy") return Split::easy;
  if (name == "medium") return Split::medium;
  if (name == "hard") return Split::hard;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::easy: return "easy";
    case Split::medium: return "medium";
    case Split::hard: return "hard";
  }
  return "?";
}

void validate_ground_truth(const QueryGroundTruth& gt, std::size_t gallery_size) {
  std::set<std::int64_t> seen;
  for (const auto* list : {&gt.easy, &gt.hard, &gt.junk}) {
    std::set<std::int64_t> mine;
    for (auto i : *list) {
      if (i < 0 || static_cast<std::size_t>(i) >= gallery_size)
        throw ProtocolError("ground truth index " + std::to_string(i) + " outside gallery of " +
                            std::to_string(gallery_size));
      if (seen.count(i) && !mine.count(i))
        throw ProtocolError("ground truth lists overlap at index " + std::to_string(i));
      mine.insert(i);
    }
    seen.insert(mine.begin(), mine.end());
  }
}

EffectiveSets effective_sets(const QueryGroundTruth& gt, Split split) {
  EffectiveSets s;
  auto append = [](std::vector<std::int64_t>& dst, const std::vector<std::int64_t>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
  };
  switch (split) {
    case Split::easy:
      append(s.positives, gt.easy);
      append(s.junk, gt.junk);
      append(s.junk, gt.hard);
      break;
    case Split::medium:
      append(s.positives, gt.easy);
      append(s.positives, gt.hard);
      append(s.junk, gt.junk);
      break;
    case Split::hard:
      append(s.positives, gt.hard);
      append(s.junk, gt.junk);
      append(s.junk, gt.easy);
      break;
  }
  return s;
}

std::optional<double> average_precision(const RankedList& ranking, const QueryGroundTruth& gt,
                                        Split split, std::size_t gallery_size) {
  validate_ground_truth(gt, gallery_size);
  const EffectiveSets sets = effective_sets(gt, split);
  const std::unordered_set<std::int64_t> pos(sets.positives.begin(), sets.positives.end());
  const std::unordered_set<std::int64_t> junk(sets.junk.begin(), sets.junk.end());
  if (pos.empty()) return std::nullopt;

  double sum = 0.0;
  std::size_t rank = 0, found = 0;
  for (auto g : ranking.order) {
    if (junk.count(g)) continue;
    ++rank;
    if (pos.count(g)) {
      ++found;
      sum += static_cast<double>(found) / static_cast<double>(rank);
    }
  }
  return sum / static_cast<double>(pos.size());
}

MapResult mean_average_precision(const std::vector<RankedList>& rankings,
                                 const std::vector<QueryGroundTruth>& gts, Split split,
                                 std::size_t gallery_size) {
  if (rankings.size() != gts.size())
    throw ProtocolError("mAP: " + std::to_string(rankings.size()) + " rankings but " +
                        std::to_string(gts.size()) + " ground-truth records");
  MapResult out;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto ap = average_precision(rankings[q], gts[q], split, gallery_size);
    if (!ap) {
      out.per_query.push_back(std::numeric_limits<double>::quiet_NaN());
      out.skipped.push_back(q);
      continue;
    }
    out.per_query.push_back(*ap);
    sum += *ap;
    ++used;
  }
  if (used == 0) throw ProtocolError("mAP: every query has an empty positive set");
  out.map = sum / static_cast<double>(used);
  return out;
}

}  // namespace dml
