#include "prime/verify.hpp"

#include <cmath>

#include "prime/errors.hpp"

namespace prime::verify {

std::vector<std::vector<std::size_t>> enumerate_boundary_subsets(std::size_t n) {
  if (n > kMaxBruteForceBoundaries) throw TooLarge("enumeration is limited to 18 boundaries");
  if (n < 2) return {};
  const std::size_t interior = n - 2;
  std::vector<std::vector<std::size_t>> out;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << interior); ++mask) {
    std::vector<std::size_t> ends;
    for (std::size_t j = 0; j < interior; ++j)
      if (mask & (std::uint64_t{1} << j)) ends.push_back(j + 1);
    ends.push_back(n - 1);
    out.push_back(std::move(ends));
  }
  return out;
}

void enumerate_segmentations(std::size_t n, int num_classes,
                             const std::function<void(std::span<const std::size_t>, std::span<const int>)>& visit) {
  for (const auto& ends : enumerate_boundary_subsets(n)) {
    std::vector<int> classes(ends.size(), 0);
    for (;;) {
      visit(ends, classes);
      std::size_t i = 0;
      while (i < classes.size() && ++classes[i] == num_classes) classes[i++] = 0;
      if (i == classes.size()) break;
    }
  }
}

ParsedSequence parse_enumerate(const PairScoreTable& table, double alpha) {
  const double la = std::log(alpha);
  const std::int64_t T = table.boundaries.back();
  bool found = false;
  ParseKey best;
  std::vector<std::size_t> best_ends;
  enumerate_segmentations(table.size(), kNumClasses, [&](std::span<const std::size_t> ends, std::span<const int> classes) {
    ParseKey key;
    std::size_t prev = 0;
    for (std::size_t s = 0; s < ends.size(); ++s) {
      if (!segment_allowed(table.boundaries[prev], table.boundaries[ends[s]], T)) return;
      const double term = segment_term(table.at(prev, ends[s], classes[s]), class_from_index(classes[s]), la);
      if (!std::isfinite(term)) return;
      key.score.add(term);
      key.ends.push_back(table.boundaries[ends[s]]);
      key.classes.push_back(classes[s]);
      prev = ends[s];
    }
    if (!found || compare_parse_keys(key, best) > 0) {
      found = true;
      best = std::move(key);
      best_ends.assign(ends.begin(), ends.end());
    }
  });
  if (!found) throw PreconditionError("no feasible segmentation");
  return assemble_parse(table, best_ends, best.classes, alpha);
}

PairScoreTable random_score_table(Rng& rng, const OracleOptions& opt) {
  const std::size_t n = 2 + rng.index(opt.max_boundaries - 1);
  std::vector<std::int64_t> b{0};
  while (b.size() < n) b.push_back(b.back() + 1 + static_cast<std::int64_t>(rng.index(3)));
  PairScoreTable table(std::move(b));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t c = a + 1; c < n; ++c)
      for (int k = 0; k < kNumClasses; ++k) {
        double v = rng.uniform(opt.lo, opt.hi);
        if (opt.quantum > 0) v = std::round(v / opt.quantum) * opt.quantum;
        table.at(a, c, k) = v;
      }
  return table;
}

nn::Vector finite_difference_grad(const std::function<double(const nn::Vector&)>& loss, const nn::Vector& params,
                                  double h) {
  if (!(h > 0)) throw PreconditionError("finite-difference step must be positive");
  nn::Vector g(params.size());
  nn::Vector p = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    p[i] = params[i] + h;
    const double up = loss(p);
    p[i] = params[i] - h;
    const double down = loss(p);
    p[i] = params[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(const nn::Vector& a, const nn::Vector& b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / denom;
}

double gradient_check(const std::function<double(const nn::Vector&, nn::Vector*)>& objective,
                      const nn::Vector& params, double h) {
  nn::Vector analytic = nn::Vector::Zero(params.size());
  objective(params, &analytic);
  const nn::Vector numeric =
      finite_difference_grad([&](const nn::Vector& p) { return objective(p, nullptr); }, params, h);
  return relative_error(analytic, numeric);
}

AuditReport audit_dataset(const IdmDataset& data, const PrimitiveConfig& cfg) {
  AuditReport r;
  for (const auto& s : data.samples) {
    if (s.p == PrimitiveType::kOther) {
      if (!(s.start_index < s.end_index)) ++r.bad_negatives;
      continue;
    }
    if (s.audit < 0 || static_cast<std::size_t>(s.audit) >= data.audit.size())
      throw PreconditionError("dataset was loaded without its audit sidecar");
    const AuditRecord& a = data.audit[static_cast<std::size_t>(s.audit)];
    const Segment seg = execute_primitive(a.start, s.p, s.x, cfg);
    ++r.checked;
    if (!primitive_success(seg, s.p, s.x, cfg)) ++r.failed_success;
    if (!(seg.final_state == a.end)) ++r.failed_replay;
  }
  return r;
}

}  // namespace prime::verify
