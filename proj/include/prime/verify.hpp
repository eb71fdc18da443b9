#pragma once

// Independent correctness instruments used by tests and acceptance runs:
// exhaustive segmentation enumeration, finite-difference gradients, random
// oracle score tables, and collector replay audits.

#include <functional>
#include <span>
#include <vector>

#include "prime/collector.hpp"
#include "prime/nn.hpp"
#include "prime/parser.hpp"

namespace prime::verify {

// All boundary subsets over n candidates that keep the first and last; each
// subset is listed by its segment end positions (last always n-1).
// Throws TooLarge for n > 18.
std::vector<std::vector<std::size_t>> enumerate_boundary_subsets(std::size_t n);

// Every (subset, per-segment class) combination. Throws TooLarge for n > 18.
void enumerate_segmentations(std::size_t n, int num_classes,
                             const std::function<void(std::span<const std::size_t> ends,
                                                      std::span<const int> classes)>& visit);

// Fully expanded exhaustive parse (no per-segment shortcut); exponential in
// both boundaries and classes, so only for small tables.
ParsedSequence parse_enumerate(const PairScoreTable& table, double alpha);

struct OracleOptions {
  std::size_t max_boundaries = 10;
  double lo = -10.0;
  double hi = 0.0;
  // When > 0, entries are rounded to multiples of this step to force ties.
  double quantum = 0.0;
};

// An OracleScoreTable: random increasing boundaries from 0 (some gaps of one
// frame, so the minimum-length rule is exercised) and random finite scores.
PairScoreTable random_score_table(Rng& rng, const OracleOptions& opt = {});

// Central differences; throws PreconditionError unless h > 0.
nn::Vector finite_difference_grad(const std::function<double(const nn::Vector&)>& loss, const nn::Vector& params,
                                  double h);

// ||a - b|| / max(||a||, ||b||, 1e-12).
double relative_error(const nn::Vector& a, const nn::Vector& b);

// Analytic vs numeric gradient of an objective(params, grad*) at params.
double gradient_check(const std::function<double(const nn::Vector&, nn::Vector*)>& objective,
                      const nn::Vector& params, double h = 1e-5);

struct AuditReport {
  std::size_t checked = 0;
  std::size_t failed_success = 0;   // positives whose re-execution is not a success
  std::size_t failed_replay = 0;    // re-execution does not reach the stored state
  std::size_t bad_negatives = 0;    // negatives with j >= l
};

// Re-executes every positive from its audited start state.
AuditReport audit_dataset(const IdmDataset& data, const PrimitiveConfig& cfg = {});

}  // namespace prime::verify
