#pragma once

// Demonstration parsing: maximum-score segmentation into primitive
// segments by dynamic programming over candidate boundaries, plus the greedy
// and exhaustive variants and parse replay.

#include <array>
#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prime/demos.hpp"
#include "prime/idm.hpp"

namespace prime {

// Exact sum of doubles in a wide two's-complement fixed-point accumulator.
// Addition is associative, so a prefix that is strictly better stays
// strictly better after any common suffix is added.
class ExactScore {
 public:
  void add(double v);  // v finite
  friend int compare(const ExactScore& a, const ExactScore& b);
  friend bool operator==(const ExactScore&, const ExactScore&) = default;

 private:
  static constexpr int kLimbs = 36;  // LSB weight 2^-1152
  std::array<std::uint64_t, kLimbs> limbs_{};
};

// Log-scores for every ordered pair of candidate boundaries and every class.
struct PairScoreTable {
  std::vector<std::int64_t> boundaries;  // strictly increasing, boundaries[0] == 0
  std::vector<double> scores;            // [a][b][k], row-major, a < b
  std::uint64_t scoring_calls = 0;       // class scores actually evaluated

  PairScoreTable() = default;
  explicit PairScoreTable(std::vector<std::int64_t> b);
  std::size_t size() const { return boundaries.size(); }
  double& at(std::size_t a, std::size_t b, int k) { return scores[(a * size() + b) * kNumClasses + static_cast<std::size_t>(k)]; }
  double at(std::size_t a, std::size_t b, int k) const {
    return scores[(a * size() + b) * kNumClasses + static_cast<std::size_t>(k)];
  }
};

// {0, stride, 2*stride, ..., T} with T always present.
std::vector<std::int64_t> candidate_boundaries(std::int64_t length, int stride);

// Segments span at least two frames; the whole-demo segment is always allowed
// so that one-frame demonstrations still parse.
bool segment_allowed(std::int64_t t, std::int64_t i, std::int64_t length);

// log alpha(p) + score, rounded once; the single term every parser sums.
double segment_term(double score, PrimitiveType p, double log_alpha);

struct ParsedSegment {
  std::int64_t t_start = 0;
  std::int64_t t_end = 0;
  PrimitiveType p = PrimitiveType::kOther;
  PrimitiveParams x;  // empty iff p == Other
  double log_score = 0.0;  // includes the Other penalty
  friend bool operator==(const ParsedSegment&, const ParsedSegment&) = default;
};

struct ParsedSequence {
  std::string demo_id;
  std::vector<ParsedSegment> segments;
  double total_log_score = 0.0;  // left-to-right sum of segment log_scores
  friend bool operator==(const ParsedSequence&, const ParsedSequence&) = default;

  std::size_t other_count() const;
};

// Ordering of complete candidate parses: higher exact score, then fewer
// segments, then lexicographically earlier boundary list, then
// lexicographically earlier class list. Returns > 0 when a is preferred.
struct ParseKey {
  ExactScore score;
  std::vector<std::int64_t> ends;  // t_end of each segment
  std::vector<int> classes;
};
int compare_parse_keys(const ParseKey& a, const ParseKey& b);

// Builds the sequence (x left empty) from an ordered list of (end, class).
ParsedSequence assemble_parse(const PairScoreTable& table, std::span<const std::size_t> ends,
                              std::span<const int> classes, double alpha);

ParsedSequence parse_dp(const PairScoreTable& table, double alpha);
// Throws TooLarge beyond 18 candidate boundaries.
ParsedSequence parse_bruteforce(const PairScoreTable& table, double alpha);
// From the current boundary picks the best (class, later boundary); ties go
// to the later boundary, then the lower class index.
ParsedSequence parse_greedy(const PairScoreTable& table, double alpha);

inline constexpr std::size_t kMaxBruteForceBoundaries = 18;

struct ParseConfig {
  double alpha = 1e-4;
  int stride = 1;
  int workers = 1;

  void validate() const;  // ConfigError
  Json to_json() const;
  static ParseConfig from_json(const Json& j);
};

enum class ParseMethod { kDp, kGreedy, kBruteForce };

// Scores every allowed pair with the IDM (parallel over start boundaries).
PairScoreTable score_demo(const Demonstration& demo, const IdmModels& models, std::size_t roster_size,
                          const ParseConfig& cfg);

// Full parse: score table, segmentation, then parameter modes for the chosen
// segments. Throws EmptyDemo when the demo has no frames.
ParsedSequence parse_demo(const Demonstration& demo, const IdmModels& models, std::size_t roster_size,
                          const ParseConfig& cfg, ParseMethod method = ParseMethod::kDp);

struct ReplayResult {
  bool success = false;
  int executed = 0;
  bool aborted_on_other = false;
  bool timed_out = false;  // some executed segment hit the step cap
  WorldState final_state;
};

// Executes the parsed primitives from the demo's initial state.
ReplayResult replay(const ParsedSequence& parsed, const Demonstration& demo, const TaskSpec& task,
                    const PrimitiveConfig& cfg = {});

Json parsed_to_json(const ParsedSequence& p);
ParsedSequence parsed_from_json(const Json& j);
void save_parsed(const std::vector<ParsedSequence>& parsed, const std::string& path);
std::vector<ParsedSequence> load_parsed(const std::string& path);

}  // namespace prime
