#include "prime/collector.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "prime/container.hpp"
#include "prime/errors.hpp"
#include "prime/parallel.hpp"
#include "prime/rng.hpp"
#include "prime/serialize.hpp"

namespace prime {

namespace wl = world_limits;

namespace {
constexpr char kDatasetFormat[] = "prime.dataset";
constexpr char kAuditFormat[] = "prime.dataset.audit";
constexpr int kDatasetVersion = 1;
}  // namespace

int feature_dim(std::size_t object_count) {
  return kGripperFeatures + kObjectFeatures * static_cast<int>(object_count);
}

std::vector<double> featurize(const WorldState& s, std::size_t roster_size) {
  if (s.objects.size() != roster_size)
    throw RosterMismatch("state has " + std::to_string(s.objects.size()) + " objects, domain expects " +
                         std::to_string(roster_size));
  std::vector<double> f;
  f.reserve(static_cast<std::size_t>(feature_dim(roster_size)));
  f.push_back(s.gripper_pos.x);
  f.push_back(s.gripper_pos.y);
  f.push_back(s.gripper_pos.z);
  f.push_back(std::sin(s.gripper_yaw));
  f.push_back(std::cos(s.gripper_yaw));
  f.push_back(s.aperture);
  f.push_back(s.held ? 1.0 : 0.0);
  for (const auto& o : s.objects) {
    f.push_back(o.pose.x);
    f.push_back(o.pose.y);
    f.push_back(std::sin(o.pose.theta));
    f.push_back(std::cos(o.pose.theta));
    f.push_back(o.kind == ObjectKind::kLarge ? 1.0 : 0.0);
    f.push_back(s.held == o.id ? 1.0 : 0.0);
  }
  return f;
}

void CollectorConfig::validate() const {
  if (episodes < 1 || horizon < 1 || negatives < 1)
    throw ConfigError("collector episodes, horizon and negatives must be >= 1");
  if (!(primitive_prob >= 0.0 && primitive_prob <= 1.0))
    throw ConfigError("collector primitive_prob must lie in [0, 1]");
}

EpisodeOutput collect_episode(const TaskSpec& task, const CollectorConfig& cfg, std::int64_t episode_index) {
  cfg.validate();
  const auto ep = static_cast<std::uint64_t>(episode_index);
  Rng rng(cfg.seed, Stream::kCollectEpisode, ep);
  const std::size_t roster = task.objects.size();

  EpisodeOutput out;
  WorldState s = reset(task, derive_key({cfg.seed, static_cast<std::uint64_t>(Stream::kReset), ep}));
  out.states.push_back(s);
  out.boundaries.push_back(0);

  for (int i = 0; i < cfg.horizon; ++i) {
    if (rng.bernoulli(cfg.primitive_prob)) {
      std::vector<PrimitiveType> options;
      for (auto p : kLibraryPrimitives)
        if (executable(p, s)) options.push_back(p);
      const PrimitiveType p = options[rng.index(options.size())];
      const PrimitiveParams x = sample_params(p, s, cfg.prior, rng, cfg.primitive);
      Segment seg = execute_primitive(s, p, x, cfg.primitive);
      ++out.attempted_primitives;
      const auto start_index = static_cast<std::int64_t>(out.states.size()) - 1;
      for (std::size_t k = 0; k < seg.transitions.size(); ++k) {
        out.actions.push_back(seg.transitions[k].action);
        out.states.push_back(k + 1 < seg.transitions.size() ? seg.transitions[k + 1].state : seg.final_state);
      }
      const auto end_index = static_cast<std::int64_t>(out.states.size()) - 1;
      if (primitive_success(seg, p, x, cfg.primitive)) {
        IdmSample sample;
        sample.s = featurize(s, roster);
        sample.s_prime = featurize(seg.final_state, roster);
        sample.p = p;
        sample.x = x;
        sample.episode = episode_index;
        sample.start_index = start_index;
        sample.end_index = end_index;
        out.positives.push_back(std::move(sample));
        out.positive_audit.push_back({s, seg.final_state});
      }
      s = seg.final_state;
      out.rollout_types.push_back(p);
    } else {
      MotorAction a{{rng.uniform(-wl::kMaxDeltaPos, wl::kMaxDeltaPos),
                     rng.uniform(-wl::kMaxDeltaPos, wl::kMaxDeltaPos),
                     rng.uniform(-wl::kMaxDeltaPos, wl::kMaxDeltaPos)},
                    rng.uniform(-wl::kMaxDeltaYaw, wl::kMaxDeltaYaw),
                    rng.bernoulli(0.5) ? Grip::kClose : Grip::kOpen};
      s = step(s, a);
      out.actions.push_back(a);
      out.states.push_back(s);
      out.rollout_types.push_back(PrimitiveType::kAtomic);
    }
    out.boundaries.push_back(static_cast<std::int64_t>(out.states.size()) - 1);
  }

  // Negatives: each endpoint is a sub-rollout boundary or any trajectory
  // index with equal probability.
  const auto last = static_cast<std::int64_t>(out.states.size()) - 1;
  auto draw = [&]() -> std::int64_t {
    if (rng.bernoulli(0.5)) return out.boundaries[rng.index(out.boundaries.size())];
    return static_cast<std::int64_t>(rng.index(static_cast<std::size_t>(last + 1)));
  };
  for (int k = 0; k < cfg.negatives; ++k) {
    std::int64_t j = draw(), l = draw();
    while (j == l) l = draw();
    if (j > l) std::swap(j, l);
    IdmSample sample;
    sample.s = featurize(out.states[static_cast<std::size_t>(j)], roster);
    sample.s_prime = featurize(out.states[static_cast<std::size_t>(l)], roster);
    sample.p = PrimitiveType::kOther;
    sample.episode = episode_index;
    sample.start_index = j;
    sample.end_index = l;
    out.negatives.push_back(std::move(sample));
  }
  return out;
}

IdmDataset build_dataset(std::vector<EpisodeOutput> outputs, const std::string& task_name,
                         std::size_t roster_size, std::uint64_t shuffle_seed) {
  IdmDataset data;
  data.task = task_name;
  data.roster_size = roster_size;
  data.feature_dim = feature_dim(roster_size);
  data.seed = shuffle_seed;
  for (auto& out : outputs) {
    for (std::size_t k = 0; k < out.positives.size(); ++k) {
      out.positives[k].audit = static_cast<std::int64_t>(data.audit.size());
      data.audit.push_back(std::move(out.positive_audit[k]));
      data.samples.push_back(std::move(out.positives[k]));
    }
    for (auto& n : out.negatives) data.samples.push_back(std::move(n));
  }
  for (const auto& smp : data.samples) ++data.counts[class_index(smp.p)];
  for (auto& smp : data.samples) smp.weight = 1.0 / static_cast<double>(data.counts[class_index(smp.p)]);
  for (int c = 0; c < kNumClasses; ++c)
    if (data.counts[c] == 0)
      data.warnings.push_back(std::string("MissingType(") + to_string(class_from_index(c)) + ")");
  Rng rng(shuffle_seed, Stream::kShuffle);
  rng.shuffle(data.samples);
  return data;
}

IdmDataset collect_dataset(const TaskSpec& task, const CollectorConfig& cfg) {
  cfg.validate();
  std::vector<EpisodeOutput> outputs(static_cast<std::size_t>(cfg.episodes));
  parallel_for(outputs.size(), cfg.workers, [&](std::size_t e) {
    EpisodeOutput out = collect_episode(task, cfg, static_cast<std::int64_t>(e));
    out.states.clear();
    out.states.shrink_to_fit();
    out.actions.clear();
    out.actions.shrink_to_fit();
    outputs[e] = std::move(out);
  });
  return build_dataset(std::move(outputs), task.name, task.objects.size(), cfg.seed);
}

std::string dataset_summary(const IdmDataset& data) {
  std::ostringstream os;
  os << "dataset " << data.task << ": " << data.samples.size() << " samples";
  for (int c = 0; c < kNumClasses; ++c) os << ", " << to_string(class_from_index(c)) << "=" << data.counts[c];
  for (const auto& w : data.warnings) os << "\nwarning: " << w;
  return os.str();
}

void save_dataset(const IdmDataset& data, const std::string& path) {
  Json header = {{"format", kDatasetFormat}, {"version", kDatasetVersion},
                 {"task", data.task},        {"seed", data.seed},
                 {"feature_dim", data.feature_dim}, {"roster_size", data.roster_size}};
  std::vector<Json> records;
  records.reserve(data.samples.size());
  for (const auto& s : data.samples) {
    records.push_back({{"s", s.s}, {"sp", s.s_prime}, {"p", to_string(s.p)}, {"x", params_to_json(s.x)},
                       {"w", s.weight}, {"e", s.episode}, {"j", s.start_index}, {"l", s.end_index},
                       {"a", s.audit}});
  }
  write_records(path, header, records);

  std::vector<Json> audit;
  audit.reserve(data.audit.size());
  for (const auto& a : data.audit) audit.push_back({{"start", state_to_json(a.start)}, {"end", state_to_json(a.end)}});
  write_records(path + ".audit",
                {{"format", kAuditFormat}, {"version", kDatasetVersion}, {"task", data.task}, {"seed", data.seed}},
                audit);
}

IdmDataset load_dataset(const std::string& path, bool with_audit) {
  const RecordFile file = read_records(path, kDatasetFormat, kDatasetVersion);
  IdmDataset data;
  try {
    data.task = file.header.at("task").get<std::string>();
    data.seed = file.header.at("seed").get<std::uint64_t>();
    data.feature_dim = file.header.at("feature_dim").get<int>();
    data.roster_size = file.header.at("roster_size").get<std::size_t>();
    data.samples.reserve(file.records.size());
    for (const auto& r : file.records) {
      IdmSample s;
      s.s = r.at("s").get<std::vector<double>>();
      s.s_prime = r.at("sp").get<std::vector<double>>();
      s.p = primitive_from_string(r.at("p").get<std::string>());
      s.x = params_from_json(r.at("x"));
      s.weight = r.at("w").get<double>();
      s.episode = r.at("e").get<std::int64_t>();
      s.start_index = r.at("j").get<std::int64_t>();
      s.end_index = r.at("l").get<std::int64_t>();
      s.audit = r.at("a").get<std::int64_t>();
      if (static_cast<int>(s.s.size()) != data.feature_dim || s.s_prime.size() != s.s.size())
        throw CorruptFile("dataset sample has wrong feature dimension");
      data.samples.push_back(std::move(s));
    }
  } catch (const Json::exception& e) {
    throw CorruptFile(std::string("malformed dataset record: ") + e.what());
  }
  for (const auto& smp : data.samples) ++data.counts[class_index(smp.p)];
  for (int c = 0; c < kNumClasses; ++c)
    if (data.counts[c] == 0)
      data.warnings.push_back(std::string("MissingType(") + to_string(class_from_index(c)) + ")");
  if (with_audit) {
    const RecordFile audit = read_records(path + ".audit", kAuditFormat, kDatasetVersion);
    for (const auto& r : audit.records)
      data.audit.push_back({state_from_json(r.at("start")), state_from_json(r.at("end"))});
  }
  return data;
}

std::pair<IdmDataset, IdmDataset> split_holdout(const IdmDataset& data, double holdout_fraction,
                                                std::uint64_t seed) {
  IdmDataset train = data, test = data;
  train.samples.clear();
  test.samples.clear();
  train.counts = {};
  test.counts = {};
  Rng rng(seed, Stream::kSplit);
  for (const auto& s : data.samples) {
    auto& dst = rng.bernoulli(holdout_fraction) ? test : train;
    dst.samples.push_back(s);
    ++dst.counts[class_index(s.p)];
  }
  return {std::move(train), std::move(test)};
}

}  // namespace prime
