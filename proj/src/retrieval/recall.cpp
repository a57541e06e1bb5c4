#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "vdnapr/error.hpp"
#include "vdnapr/retrieval.hpp"

namespace vdnapr::retrieval {

std::vector<Neighbor> knn(const DescriptorDb& db, std::span<const float> query, std::size_t k) {
  if (db.size() == 0) fail(ErrorKind::EmptyDatabase, "k-nearest-neighbor query against an empty database");
  if (query.size() != db.dim)
    fail(ErrorKind::ShapeError, fmt::format("query of length {} against a database of dim {}", query.size(), db.dim));
  std::vector<Neighbor> all(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    const float* row = db.matrix.data() + i * db.dim;
    double s = 0.0;
    for (std::size_t j = 0; j < db.dim; ++j) {
      const double diff = static_cast<double>(row[j]) - static_cast<double>(query[j]);
      s += diff * diff;
    }
    all[i] = Neighbor{i, s};
  }
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
                    });
  all.resize(k);
  return all;
}

double EvalReport::at(std::size_t n) const {
  for (std::size_t i = 0; i < ns.size(); ++i)
    if (ns[i] == n) return recall[i];
  fail(ErrorKind::ConfigError, fmt::format("report has no R@{}", n));
}

std::string EvalReport::to_text() const {
  std::string s = "# vdnapr eval report v1\n";
  s += fmt::format("threshold {}\n", threshold.to_string());
  s += fmt::format("db_size {}\n", db_size);
  s += fmt::format("evaluated {}\n", evaluated);
  s += fmt::format("excluded {}\n", excluded);
  for (std::size_t i = 0; i < ns.size(); ++i) s += fmt::format("R@{} {:.6f}\n", ns[i], recall[i]);
  return s;
}

EvalReport recall_at_n(const DescriptorDb& db, const DescriptorDb& queries, std::span<const std::size_t> ns,
                       const world::Threshold& threshold) {
  if (db.size() == 0) fail(ErrorKind::EmptyDatabase, "recall against an empty database");
  if (ns.empty()) fail(ErrorKind::ConfigError, "no N values given");
  for (auto n : ns)
    if (n == 0) fail(ErrorKind::ConfigError, "N must be >= 1");
  if (queries.size() && queries.dim != db.dim)
    fail(ErrorKind::ShapeError, fmt::format("query dim {} differs from database dim {}", queries.dim, db.dim));
  if (queries.size() && queries.kind != db.kind)
    fail(ErrorKind::ConfigError, "query and database descriptors are of different kinds");

  EvalReport report;
  report.ns.assign(ns.begin(), ns.end());
  report.threshold = threshold;
  report.db_size = db.size();
  std::vector<std::size_t> hits(ns.size(), 0);
  const std::size_t kmax = *std::max_element(ns.begin(), ns.end());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto& rec = queries.records[q];
    const bool has_positive = std::any_of(db.records.begin(), db.records.end(), [&](const world::SequenceRecord& r) {
      return world::within_threshold(rec, r, threshold);
    });
    if (!has_positive) {
      ++report.excluded;
      continue;
    }
    ++report.evaluated;
    const auto nn = knn(db, queries.row(q), kmax);
    std::size_t first_hit = nn.size();
    for (std::size_t i = 0; i < nn.size(); ++i)
      if (world::within_threshold(rec, db.records[nn[i].index], threshold)) {
        first_hit = i;
        break;
      }
    for (std::size_t j = 0; j < ns.size(); ++j)
      if (first_hit < ns[j]) ++hits[j];
  }
  report.recall.resize(ns.size(), 0.0);
  if (report.evaluated)
    for (std::size_t j = 0; j < ns.size(); ++j)
      report.recall[j] = 100.0 * static_cast<double>(hits[j]) / static_cast<double>(report.evaluated);
  return report;
}

}  // namespace vdnapr::retrieval
