#include "prime/parser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prime/errors.hpp"
#include "prime/parallel.hpp"
#include "prime/serialize.hpp"

namespace prime {

// ExactScore -------------------------------------------------------------------

void ExactScore::add(double v) {
  if (v == 0.0) return;
  if (!std::isfinite(v)) throw PreconditionError("exact score accepts finite terms only");
  int exp = 0;
  const double f = std::frexp(std::abs(v), &exp);
  const auto m = static_cast<std::uint64_t>(std::ldexp(f, 53));
  const int pos = exp - 53 + 1152;
  const int limb = pos / 64;
  const int sh = pos % 64;
  const std::uint64_t lo = m << sh;
  const std::uint64_t hi = sh == 0 ? 0 : m >> (64 - sh);
  if (v > 0) {
    std::uint64_t carry = 0;
    for (int i = limb; i < kLimbs; ++i) {
      const std::uint64_t add = i == limb ? lo : i == limb + 1 ? hi : 0;
      if (add == 0 && carry == 0 && i > limb + 1) break;
      const std::uint64_t s1 = limbs_[i] + add;
      const std::uint64_t c1 = s1 < add;
      const std::uint64_t s2 = s1 + carry;
      const std::uint64_t c2 = s2 < carry;
      limbs_[i] = s2;
      carry = c1 | c2;
    }
  } else {
    std::uint64_t borrow = 0;
    for (int i = limb; i < kLimbs; ++i) {
      const std::uint64_t sub = i == limb ? lo : i == limb + 1 ? hi : 0;
      if (sub == 0 && borrow == 0 && i > limb + 1) break;
      const std::uint64_t d1 = limbs_[i] - sub;
      const std::uint64_t b1 = limbs_[i] < sub;
      const std::uint64_t d2 = d1 - borrow;
      const std::uint64_t b2 = d1 < borrow;
      limbs_[i] = d2;
      borrow = b1 | b2;
    }
  }
}

int compare(const ExactScore& a, const ExactScore& b) {
  const auto ta = static_cast<std::int64_t>(a.limbs_[ExactScore::kLimbs - 1]);
  const auto tb = static_cast<std::int64_t>(b.limbs_[ExactScore::kLimbs - 1]);
  if (ta != tb) return ta < tb ? -1 : 1;
  for (int i = ExactScore::kLimbs - 2; i >= 0; --i)
    if (a.limbs_[i] != b.limbs_[i]) return a.limbs_[i] < b.limbs_[i] ? -1 : 1;
  return 0;
}

// Tables and shared rules ------------------------------------------------------

PairScoreTable::PairScoreTable(std::vector<std::int64_t> b)
    : boundaries(std::move(b)),
      scores(boundaries.size() * boundaries.size() * kNumClasses, -std::numeric_limits<double>::infinity()) {}

std::vector<std::int64_t> candidate_boundaries(std::int64_t length, int stride) {
  if (length < 1) throw EmptyDemo("demonstration has no frames");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  std::vector<std::int64_t> b;
  for (std::int64_t t = 0; t < length; t += stride) b.push_back(t);
  b.push_back(length);
  return b;
}

bool segment_allowed(std::int64_t t, std::int64_t i, std::int64_t length) {
  return i - t >= 2 || (t == 0 && i == length);
}

double segment_term(double score, PrimitiveType p, double log_alpha) {
  return p == PrimitiveType::kOther ? score + log_alpha : score;
}

std::size_t ParsedSequence::other_count() const {
  return static_cast<std::size_t>(
      std::count_if(segments.begin(), segments.end(), [](const auto& s) { return s.p == PrimitiveType::kOther; }));
}

int compare_parse_keys(const ParseKey& a, const ParseKey& b) {
  if (const int c = compare(a.score, b.score); c != 0) return c;
  if (a.ends.size() != b.ends.size()) return a.ends.size() < b.ends.size() ? 1 : -1;
  if (a.ends != b.ends) return a.ends < b.ends ? 1 : -1;
  if (a.classes != b.classes) return a.classes < b.classes ? 1 : -1;
  return 0;
}

namespace {

double log_alpha_of(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
  return std::log(alpha);
}

void check_table(const PairScoreTable& table) {
  if (table.size() < 2 || table.boundaries.front() != 0) throw EmptyDemo("score table has no segments");
  if (table.scores.size() != table.size() * table.size() * kNumClasses)
    throw DimensionMismatch("score table size does not match its boundaries");
}

// A usable term: finite. -inf marks a masked class; +inf or NaN is an error.
bool usable(double term) {
  if (std::isnan(term) || term == std::numeric_limits<double>::infinity())
    throw PreconditionError("score table holds a NaN or +inf entry");
  return std::isfinite(term);
}

}  // namespace

ParsedSequence assemble_parse(const PairScoreTable& table, std::span<const std::size_t> ends,
                              std::span<const int> classes, double alpha) {
  const double la = log_alpha_of(alpha);
  ParsedSequence out;
  std::size_t prev = 0;
  for (std::size_t s = 0; s < ends.size(); ++s) {
    ParsedSegment seg;
    seg.t_start = table.boundaries[prev];
    seg.t_end = table.boundaries[ends[s]];
    seg.p = class_from_index(classes[s]);
    seg.log_score = segment_term(table.at(prev, ends[s], classes[s]), seg.p, la);
    out.total_log_score += seg.log_score;
    out.segments.push_back(std::move(seg));
    prev = ends[s];
  }
  return out;
}

// Parsers ------------------------------------------------------------------------

ParsedSequence parse_dp(const PairScoreTable& table, double alpha) {
  check_table(table);
  const double la = log_alpha_of(alpha);
  const std::size_t n = table.size();
  const std::int64_t T = table.boundaries.back();

  struct Node {
    bool reached = false;
    ParseKey key;
    std::vector<std::size_t> ends;
  };
  std::vector<Node> nodes(n);
  nodes[0].reached = true;

  for (std::size_t b = 1; b < n; ++b) {
    Node& best = nodes[b];
    for (std::size_t a = 0; a < b; ++a) {
      const Node& from = nodes[a];
      if (!from.reached || !segment_allowed(table.boundaries[a], table.boundaries[b], T)) continue;
      for (int k = 0; k < kNumClasses; ++k) {
        const double term = segment_term(table.at(a, b, k), class_from_index(k), la);
        if (!usable(term)) continue;
        ExactScore score = from.key.score;
        score.add(term);
        if (best.reached) {
          const int c = compare(score, best.key.score);
          if (c < 0) continue;
          if (c == 0) {
            if (from.key.ends.size() + 1 > best.key.ends.size()) continue;
            if (from.key.ends.size() + 1 == best.key.ends.size()) {
              ParseKey cand{score, from.key.ends, from.key.classes};
              cand.ends.push_back(table.boundaries[b]);
              cand.classes.push_back(k);
              if (compare_parse_keys(cand, best.key) <= 0) continue;
            }
          }
        }
        best.reached = true;
        best.key.score = score;
        best.key.ends = from.key.ends;
        best.key.ends.push_back(table.boundaries[b]);
        best.key.classes = from.key.classes;
        best.key.classes.push_back(k);
        best.ends = from.ends;
        best.ends.push_back(b);
      }
    }
  }
  if (!nodes[n - 1].reached) throw PreconditionError("no segmentation with finite score exists");
  return assemble_parse(table, nodes[n - 1].ends, nodes[n - 1].key.classes, alpha);
}

ParsedSequence parse_bruteforce(const PairScoreTable& table, double alpha) {
  check_table(table);
  const std::size_t n = table.size();
  if (n > kMaxBruteForceBoundaries)
    throw TooLarge("exhaustive parsing is limited to " + std::to_string(kMaxBruteForceBoundaries) +
                   " candidate boundaries, got " + std::to_string(n));
  const double la = log_alpha_of(alpha);
  const std::int64_t T = table.boundaries.back();
  const std::size_t interior = n - 2;

  bool found = false;
  ParseKey best;
  std::vector<std::size_t> best_ends;
  std::vector<std::size_t> ends;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << interior); ++mask) {
    ends.clear();
    for (std::size_t j = 0; j < interior; ++j)
      if (mask & (std::uint64_t{1} << j)) ends.push_back(j + 1);
    ends.push_back(n - 1);

    ParseKey key;
    bool feasible = true;
    std::size_t prev = 0;
    for (std::size_t e : ends) {
      if (!segment_allowed(table.boundaries[prev], table.boundaries[e], T)) {
        feasible = false;
        break;
      }
      // Scores add independently per segment, so the best class of each
      // segment (lowest index on ties) gives the best class sequence.
      int best_k = -1;
      double best_term = 0.0;
      for (int k = 0; k < kNumClasses; ++k) {
        const double term = segment_term(table.at(prev, e, k), class_from_index(k), la);
        if (!usable(term)) continue;
        if (best_k < 0 || term > best_term) {
          best_k = k;
          best_term = term;
        }
      }
      if (best_k < 0) {
        feasible = false;
        break;
      }
      key.score.add(best_term);
      key.ends.push_back(table.boundaries[e]);
      key.classes.push_back(best_k);
      prev = e;
    }
    if (!feasible) continue;
    if (!found || compare_parse_keys(key, best) > 0) {
      found = true;
      best = std::move(key);
      best_ends = ends;
    }
  }
  if (!found) throw PreconditionError("no segmentation with finite score exists");
  return assemble_parse(table, best_ends, best.classes, alpha);
}

ParsedSequence parse_greedy(const PairScoreTable& table, double alpha) {
  check_table(table);
  const double la = log_alpha_of(alpha);
  const std::size_t n = table.size();
  const std::int64_t T = table.boundaries.back();
  std::vector<std::size_t> ends;
  std::vector<int> classes;
  std::size_t cur = 0;
  while (cur != n - 1) {
    std::size_t best_b = 0;
    int best_k = -1;
    double best_term = 0.0;
    for (std::size_t b = cur + 1; b < n; ++b) {
      if (!segment_allowed(table.boundaries[cur], table.boundaries[b], T)) continue;
      // The remainder must still be coverable by an allowed segment.
      if (b != n - 1 && !segment_allowed(table.boundaries[b], T, T)) continue;
      for (int k = 0; k < kNumClasses; ++k) {
        const double term = segment_term(table.at(cur, b, k), class_from_index(k), la);
        if (!usable(term)) continue;
        if (best_k < 0 || term > best_term || (term == best_term && b > best_b)) {
          best_b = b;
          best_k = k;
          best_term = term;
        }
      }
    }
    if (best_k < 0) throw PreconditionError("greedy parse found no finite continuation");
    ends.push_back(best_b);
    classes.push_back(best_k);
    cur = best_b;
  }
  return assemble_parse(table, ends, classes, alpha);
}

// IDM-backed parsing -------------------------------------------------------------

void ParseConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

Json ParseConfig::to_json() const { return {{"alpha", alpha}, {"stride", stride}}; }

ParseConfig ParseConfig::from_json(const Json& j) {
  ParseConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.stride = j.value("stride", c.stride);
  c.workers = j.value("workers", c.workers);
  c.validate();
  return c;
}

PairScoreTable score_demo(const Demonstration& demo, const IdmModels& models, std::size_t roster_size,
                          const ParseConfig& cfg) {
  cfg.validate();
  const auto T = static_cast<std::int64_t>(demo.length());
  PairScoreTable table(candidate_boundaries(T, cfg.stride));
  const std::size_t n = table.size();
  std::vector<std::vector<double>> feats(n);
  for (std::size_t a = 0; a < n; ++a) feats[a] = featurize(demo.state(static_cast<std::size_t>(table.boundaries[a])), roster_size);
  if (static_cast<int>(feats[0].size()) != models.feature_dim)
    throw DimensionMismatch("demo features have dimension " + std::to_string(feats[0].size()) + ", model expects " +
                            std::to_string(models.feature_dim));

  std::vector<std::uint64_t> calls(n, 0);
  parallel_for(n, cfg.workers, [&](std::size_t a) {
    std::vector<std::size_t> targets;
    for (std::size_t b = a + 1; b < n; ++b)
      if (segment_allowed(table.boundaries[a], table.boundaries[b], T)) targets.push_back(b);
    if (targets.empty()) return;
    const auto d = static_cast<Eigen::Index>(models.feature_dim);
    nn::Matrix x(2 * d, static_cast<Eigen::Index>(targets.size()));
    for (std::size_t j = 0; j < targets.size(); ++j) {
      for (Eigen::Index k = 0; k < d; ++k) {
        x(k, static_cast<Eigen::Index>(j)) = feats[a][static_cast<std::size_t>(k)];
        x(d + k, static_cast<Eigen::Index>(j)) = feats[targets[j]][static_cast<std::size_t>(k)];
      }
    }
    const auto scores = idm_score_batch(models, x, false);
    for (std::size_t j = 0; j < targets.size(); ++j)
      for (int k = 0; k < kNumClasses; ++k) table.at(a, targets[j], k) = scores[j].log_score[k];
    calls[a] = targets.size() * kNumClasses;
  });
  for (auto c : calls) table.scoring_calls += c;
  return table;
}

ParsedSequence parse_demo(const Demonstration& demo, const IdmModels& models, std::size_t roster_size,
                          const ParseConfig& cfg, ParseMethod method) {
  if (demo.length() == 0) throw EmptyDemo("demonstration has no frames");
  const PairScoreTable table = score_demo(demo, models, roster_size, cfg);
  ParsedSequence parsed;
  switch (method) {
    case ParseMethod::kDp: parsed = parse_dp(table, cfg.alpha); break;
    case ParseMethod::kGreedy: parsed = parse_greedy(table, cfg.alpha); break;
    case ParseMethod::kBruteForce: parsed = parse_bruteforce(table, cfg.alpha); break;
  }
  parsed.demo_id = demo.task + "/" + std::to_string(demo.seed);
  for (auto& seg : parsed.segments) {
    if (seg.p == PrimitiveType::kOther) continue;
    const auto s = featurize(demo.state(static_cast<std::size_t>(seg.t_start)), roster_size);
    const auto sp = featurize(demo.state(static_cast<std::size_t>(seg.t_end)), roster_size);
    seg.x = idm_score(models, s, sp).x[class_index(seg.p)];
    if (seg.x.empty()) throw PreconditionError(std::string("no parameter model for ") + to_string(seg.p));
  }
  return parsed;
}

ReplayResult replay(const ParsedSequence& parsed, const Demonstration& demo, const TaskSpec& task,
                    const PrimitiveConfig& cfg) {
  ReplayResult r;
  WorldState s = demo.state(0);
  for (const auto& seg : parsed.segments) {
    if (seg.p == PrimitiveType::kOther) {
      r.aborted_on_other = true;
      break;
    }
    const Segment out = execute_primitive(s, seg.p, seg.x, cfg);
    r.timed_out = r.timed_out || out.timed_out;
    s = out.final_state;
    ++r.executed;
  }
  r.success = task_success(s, task);
  r.final_state = std::move(s);
  return r;
}

// Persistence -------------------------------------------------------------------

namespace {
constexpr const char* kParsedFormat = "prime.parsed";
constexpr int kParsedVersion = 1;
}  // namespace

Json parsed_to_json(const ParsedSequence& p) {
  Json segs = Json::array();
  for (const auto& s : p.segments)
    segs.push_back({{"t0", s.t_start}, {"t1", s.t_end}, {"p", to_string(s.p)}, {"x", params_to_json(s.x)},
                    {"score", s.log_score}});
  return {{"demo", p.demo_id}, {"segments", segs}, {"total", p.total_log_score}};
}

ParsedSequence parsed_from_json(const Json& j) {
  ParsedSequence p;
  p.demo_id = j.at("demo").get<std::string>();
  p.total_log_score = j.at("total").get<double>();
  for (const auto& s : j.at("segments")) {
    ParsedSegment seg;
    seg.t_start = s.at("t0").get<std::int64_t>();
    seg.t_end = s.at("t1").get<std::int64_t>();
    seg.p = primitive_from_string(s.at("p").get<std::string>());
    seg.x = params_from_json(s.at("x"));
    seg.log_score = s.at("score").get<double>();
    p.segments.push_back(std::move(seg));
  }
  return p;
}

void save_parsed(const std::vector<ParsedSequence>& parsed, const std::string& path) {
  std::vector<Json> records;
  for (const auto& p : parsed) records.push_back(parsed_to_json(p));
  write_records(path, {{"format", kParsedFormat}, {"version", kParsedVersion}, {"count", parsed.size()}}, records);
}

std::vector<ParsedSequence> load_parsed(const std::string& path) {
  const RecordFile f = read_records(path, kParsedFormat, kParsedVersion);
  std::vector<ParsedSequence> out;
  try {
    for (const auto& r : f.records) out.push_back(parsed_from_json(r));
  } catch (const Json::exception& e) {
    throw CorruptFile(path + ": " + e.what());
  }
  return out;
}

}  // namespace prime
