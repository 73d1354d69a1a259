#pragma once

#include "dml/kernels.hpp"
#include "dml/types.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

namespace dml {

struct RetrievalIndex {
  Matrix gallery;  // n x d, unit rows
  std::vector<std::int64_t> ids;

  RetrievalIndex() = default;
  // ids default to 0..n-1. Throws ShapeError on duplicate ids.
  explicit RetrievalIndex(Matrix gallery, std::vector<std::int64_t> ids = {});
};

// Gallery indices by descending similarity, ties by ascending index.
using RankedList = kernels::Ranking;

std::vector<RankedList> retrieve(const RetrievalIndex& index, const Matrix& queries,
                                 bool exclude_self,
                                 kernels::Exec exec = kernels::default_exec());

// Fraction of queries with at least one same-label item in the top K.
// gallery_labels is indexed by gallery position.
std::map<int, double> recall_at_k(const std::vector<RankedList>& rankings,
                                  const Labels& query_labels, const Labels& gallery_labels,
                                  const std::vector<int>& ks);

struct QueryGroundTruth {
  std::vector<std::int64_t> easy;
  std::vector<std::int64_t> hard;
  std::vector<std::int64_t> junk;
};

enum class Split { easy, medium, hard };
Split parse_split(std::string_view name);
std::string_view to_string(Split split);

struct EffectiveSets {
  std::vector<std::int64_t> positives;
  std::vector<std::int64_t> junk;
};

// Throws ProtocolError if the lists overlap or leave [0, gallery_size).
void validate_ground_truth(const QueryGroundTruth& gt, std::size_t gallery_size);
EffectiveSets effective_sets(const QueryGroundTruth& gt, Split split);

// Non-interpolated AP after deleting junk from the ranking. Returns nullopt
// when the split leaves no positives for this query.
std::optional<double> average_precision(const RankedList& ranking, const QueryGroundTruth& gt,
                                        Split split, std::size_t gallery_size);

struct MapResult {
  double map = 0.0;
  std::vector<double> per_query;        // NaN for skipped queries
  std::vector<std::size_t> skipped;
};

MapResult mean_average_precision(const std::vector<RankedList>& rankings,
                                 const std::vector<QueryGroundTruth>& gts, Split split,
                                 std::size_t gallery_size);

}  // namespace dml
