#include "prime/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prime/errors.hpp"
#include "prime/parallel.hpp"
#include "prime/serialize.hpp"

namespace prime {

namespace {

constexpr const char* kPolicyFormat = "prime.policy";
constexpr const char* kBcFormat = "prime.bc";
constexpr int kPolicyVersion = 1;

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

nn::Matrix columns(const std::vector<const std::vector<double>*>& rows, int dim) {
  nn::Matrix m(dim, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t b = 0; b < rows.size(); ++b) {
    if (static_cast<int>(rows[b]->size()) != dim) throw DimensionMismatch("inconsistent feature sizes");
    for (int k = 0; k < dim; ++k) m(k, static_cast<Eigen::Index>(b)) = (*rows[b])[static_cast<std::size_t>(k)];
  }
  return m;
}

nn::Vector to_vector(std::span<const double> v) {
  return Eigen::Map<const nn::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

PrimitiveParams to_params(const nn::Vector& v) { return {std::vector<double>(v.data(), v.data() + v.size())}; }

Json curve_to_json(const nn::TrainingCurve& c) { return {{"loss", c.epoch_loss}, {"epochs", c.epochs_run}}; }

nn::TrainingCurve curve_from_json(const Json& j) {
  return {j.at("loss").get<std::vector<double>>(), j.at("epochs").get<int>()};
}

// One labelled training set for the type head or for one parameter head.
struct Examples {
  std::vector<const std::vector<double>*> s;
  std::vector<int> labels;
  std::vector<const PrimitiveParams*> x;
  std::vector<double> weights;
};

nn::TrainingCurve fit_type_head(nn::Mlp& net, const nn::Normalizer& norm, const Examples& ex, int dim,
                                std::span<const bool> mask, const nn::TrainConfig& cfg, const char* label) {
  const nn::Matrix x = norm.apply(columns(ex.s, dim));
  std::vector<int> lb;
  std::vector<double> wb;
  return nn::train(net.params(), ex.s.size(), cfg,
                   [&](std::span<const std::size_t> batch, nn::Vector& grad) {
                     lb.clear();
                     wb.clear();
                     for (auto i : batch) {
                       lb.push_back(ex.labels[i]);
                       wb.push_back(ex.weights[i]);
                     }
                     return nn::classification_objective(net, nn::gather_columns(x, batch), lb, wb, mask, &grad);
                   },
                   label);
}

// Trains (or continues) a parameter head; a fresh head fits its normalizer
// and output biases to the examples first.
nn::TrainingCurve fit_param_head(ParamModel& m, const Examples& ex, int dim, PrimitiveType p,
                                 const nn::TrainConfig& cfg, double sigma_min, const char* label) {
  const nn::Matrix raw = columns(ex.s, dim);
  nn::Matrix y(param_dim(p), static_cast<Eigen::Index>(ex.x.size()));
  for (std::size_t b = 0; b < ex.x.size(); ++b)
    for (int d = 0; d < y.rows(); ++d) y(d, static_cast<Eigen::Index>(b)) = (*ex.x[b])[static_cast<std::size_t>(d)];
  if (!m.trained) {
    m.type = p;
    m.spec = {param_dim(p), cfg.mixture_components, sigma_min};
    m.norm = nn::Normalizer::fit(raw);
    Rng init(cfg.seed, Stream::kInit, 1 + static_cast<std::uint64_t>(class_index(p)));
    m.net = nn::Mlp(layer_sizes(dim, cfg.hidden, m.spec.output_size()), init);
    nn::init_mixture_bias(m.net, y, m.spec, init);
  }
  const nn::Matrix x = m.norm.apply(raw);
  std::vector<double> wb;
  nn::TrainingCurve curve = nn::train(m.net.params(), ex.x.size(), cfg,
                                      [&](std::span<const std::size_t> batch, nn::Vector& grad) {
                                        wb.clear();
                                        for (auto i : batch) wb.push_back(ex.weights[i]);
                                        return nn::mixture_objective(m.net, nn::gather_columns(x, batch),
                                                                     nn::gather_columns(y, batch), wb, m.spec, &grad);
                                      },
                                      label);
  m.trained = true;
  return curve;
}

void restrict_to_trained_heads(PolicyBundle& b) {
  b.prim.allowed[class_index(PrimitiveType::kOther)] = false;
  for (int k = 0; k < kNumLibraryPrimitives; ++k) b.prim.allowed[k] = b.prim.allowed[k] && b.params[k].trained;
  if (std::none_of(b.prim.allowed.begin(), b.prim.allowed.end(), [](bool a) { return a; }))
    throw PreconditionError("policy has no primitive type with training data");
}

}  // namespace

const char* to_string(TupleSource s) {
  switch (s) {
    case TupleSource::kParsed: return "parsed";
    case TupleSource::kAugmented: return "augmented";
    case TupleSource::kPretrain: return "pretrain";
  }
  return "?";
}

// Tuples ------------------------------------------------------------------------

std::vector<PolicyTuple> parsed_tuples(const ParsedSequence& parsed, const Demonstration& demo,
                                       std::size_t roster_size) {
  std::vector<PolicyTuple> out;
  for (const auto& seg : parsed.segments) {
    if (!is_library(seg.p)) continue;
    PolicyTuple t;
    t.s = featurize(demo.state(static_cast<std::size_t>(seg.t_start)), roster_size);
    t.p = seg.p;
    t.x = seg.x;
    t.source = TupleSource::kParsed;
    t.state_index = seg.t_start;
    t.target_end = seg.t_end;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<PolicyTuple> augment_stepwise(const ParsedSequence& parsed, const Demonstration& demo,
                                          const IdmModels& models, std::size_t roster_size, AugmentStats* stats) {
  std::vector<PolicyTuple> out;
  for (const auto& seg : parsed.segments) {
    if (!is_library(seg.p) || seg.t_end - seg.t_start < 2) continue;
    const auto target = featurize(demo.state(static_cast<std::size_t>(seg.t_end)), roster_size);
    std::vector<std::vector<double>> s, sp;
    for (std::int64_t l = seg.t_start + 1; l < seg.t_end; ++l) {
      s.push_back(featurize(demo.state(static_cast<std::size_t>(l)), roster_size));
      sp.push_back(target);
    }
    const auto scores = idm_score_batch(models, pair_inputs(s, sp), true);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const PrimitiveType p = scores[i].best_library();
      if (!models.param(p).trained) continue;
      PolicyTuple t;
      t.s = std::move(s[i]);
      t.p = p;
      t.x = scores[i].x[class_index(p)];
      t.source = TupleSource::kAugmented;
      t.state_index = seg.t_start + 1 + static_cast<std::int64_t>(i);
      t.target_end = seg.t_end;
      if (stats) {
        ++stats->tuples;
        stats->disagreements += p != seg.p;
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

// Config ------------------------------------------------------------------------

PolicyConfig::PolicyConfig() {
  pretrain.epochs = 8;
  pretrain.batch_size = 256;
  pretrain.learning_rate = 1e-3;
  pretrain.lr_decay = 0.9;
  pretrain.min_updates = 3000;
  finetune.epochs = 40;
  finetune.batch_size = 64;
  finetune.learning_rate = 1e-3;
  finetune.lr_decay = 0.95;
  finetune.min_updates = 4000;
}

void PolicyConfig::validate() const {
  pretrain.validate();
  finetune.validate();
  if (!(sigma_min > 0)) throw ConfigError("sigma_min must be positive");
  if (!(augmented_weight >= 0) || !std::isfinite(augmented_weight))
    throw ConfigError("augmented_weight must be a nonnegative real");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

Json PolicyConfig::to_json() const {
  return {{"pretrain", pretrain.to_json()}, {"finetune", finetune.to_json()}, {"sigma_min", sigma_min},
          {"use_pretrain", use_pretrain},   {"augment", augment},             {"augmented_weight", augmented_weight}};
}

PolicyConfig PolicyConfig::from_json(const Json& j) {
  PolicyConfig c;
  if (j.contains("pretrain")) c.pretrain = nn::TrainConfig::from_json(j.at("pretrain"), c.pretrain);
  if (j.contains("finetune")) c.finetune = nn::TrainConfig::from_json(j.at("finetune"), c.finetune);
  c.sigma_min = j.value("sigma_min", c.sigma_min);
  c.use_pretrain = j.value("use_pretrain", c.use_pretrain);
  c.augment = j.value("augment", c.augment);
  c.augmented_weight = j.value("augmented_weight", c.augmented_weight);
  c.workers = j.value("workers", c.workers);
  c.validate();
  return c;
}

// Training ---------------------------------------------------------------------

nn::Matrix PrimitivePolicy::log_probs(const nn::Matrix& s) const {
  if (s.rows() != feature_dim)
    throw DimensionMismatch("policy expects " + std::to_string(feature_dim) + " features, got " +
                            std::to_string(s.rows()));
  return nn::masked_log_softmax(net.forward(norm.apply(s)), allowed);
}

PolicyBundle pretrain_policy(const IdmDataset& data, const PolicyConfig& cfg) {
  cfg.validate();
  PolicyBundle b;
  b.task = data.task;
  b.feature_dim = data.feature_dim;
  b.prim.feature_dim = data.feature_dim;

  Examples all;
  std::array<Examples, kNumLibraryPrimitives> per_type;
  for (const auto& smp : data.samples) {
    if (!is_library(smp.p)) continue;
    const int k = class_index(smp.p);
    all.s.push_back(&smp.s);
    all.labels.push_back(k);
    all.weights.push_back(smp.weight);
    per_type[k].s.push_back(&smp.s);
    per_type[k].x.push_back(&smp.x);
    per_type[k].weights.push_back(smp.weight);
    b.prim.allowed[k] = true;
  }
  if (all.s.empty()) throw PreconditionError("dataset has no primitive positives to pretrain on");

  b.prim.norm = nn::Normalizer::fit(columns(all.s, b.feature_dim));
  parallel_for(1 + kNumLibraryPrimitives, cfg.workers, [&](std::size_t job) {
    if (job == 0) {
      Rng init(cfg.pretrain.seed, Stream::kInit, 100);
      b.prim.net = nn::Mlp(layer_sizes(b.feature_dim, cfg.pretrain.hidden, kNumClasses), init);
      b.prim.pretrain_curve =
          fit_type_head(b.prim.net, b.prim.norm, all, b.feature_dim, b.prim.allowed, cfg.pretrain, "pretrain type");
      return;
    }
    const int k = static_cast<int>(job) - 1;
    b.params[k].type = class_from_index(k);
    if (per_type[k].s.empty()) return;
    nn::TrainConfig pc = cfg.pretrain;
    pc.seed = derive_key({cfg.pretrain.seed, 100 + job});
    const std::string label = std::string("pretrain ") + to_string(class_from_index(k));
    b.param_pretrain_curves[k] =
        fit_param_head(b.params[k], per_type[k], b.feature_dim, class_from_index(k), pc, cfg.sigma_min, label.c_str());
  });
  restrict_to_trained_heads(b);
  return b;
}

PolicyBundle finetune_policy(const PolicyBundle* init, const std::vector<PolicyTuple>& tuples,
                             const std::string& task, int feature_dim, const PolicyConfig& cfg) {
  cfg.validate();
  if (tuples.empty()) throw PreconditionError("no policy tuples to train on");
  PolicyBundle b;
  if (init) {
    if (init->feature_dim != feature_dim) throw DimensionMismatch("pretrained policy has a different feature size");
    b = *init;
  } else {
    b.feature_dim = feature_dim;
    b.prim.feature_dim = feature_dim;
    for (int k = 0; k < kNumLibraryPrimitives; ++k) b.params[k].type = class_from_index(k);
  }
  b.task = task;

  Examples all;
  std::array<Examples, kNumLibraryPrimitives> per_type;
  for (const auto& t : tuples) {
    if (!is_library(t.p)) throw PreconditionError("policy tuples must carry library primitives");
    const int k = class_index(t.p);
    const double w = t.source == TupleSource::kAugmented ? cfg.augmented_weight : 1.0;
    all.s.push_back(&t.s);
    all.labels.push_back(k);
    all.weights.push_back(w);
    per_type[k].s.push_back(&t.s);
    per_type[k].x.push_back(&t.x);
    per_type[k].weights.push_back(w);
    b.prim.allowed[k] = true;
  }
  if (!std::any_of(all.weights.begin(), all.weights.end(), [](double w) { return w > 0; }))
    throw PreconditionError("all policy tuples have zero weight");
  if (!init) {
    b.prim.norm = nn::Normalizer::fit(columns(all.s, feature_dim));
    Rng rng(cfg.finetune.seed, Stream::kInit, 100);
    b.prim.net = nn::Mlp(layer_sizes(feature_dim, cfg.finetune.hidden, kNumClasses), rng);
  }

  parallel_for(1 + kNumLibraryPrimitives, cfg.workers, [&](std::size_t job) {
    if (job == 0) {
      b.prim.finetune_curve =
          fit_type_head(b.prim.net, b.prim.norm, all, feature_dim, b.prim.allowed, cfg.finetune, "finetune type");
      return;
    }
    const int k = static_cast<int>(job) - 1;
    if (per_type[k].s.empty()) return;
    nn::TrainConfig pc = cfg.finetune;
    pc.seed = derive_key({cfg.finetune.seed, 100 + job});
    const std::string label = std::string("finetune ") + to_string(class_from_index(k));
    b.params[k].curve =
        fit_param_head(b.params[k], per_type[k], feature_dim, class_from_index(k), pc, cfg.sigma_min, label.c_str());
  });
  restrict_to_trained_heads(b);
  return b;
}

// Rollouts ------------------------------------------------------------------------

std::pair<PrimitiveType, PrimitiveParams> policy_act(const PolicyBundle& policy, const WorldState& s,
                                                     std::size_t roster_size, RolloutMode mode, Rng& rng) {
  const auto f = featurize(s, roster_size);
  const nn::Matrix in = to_vector(f);
  const nn::Vector lp = policy.prim.log_probs(in).col(0);
  int k = -1;
  if (mode == RolloutMode::kSample) {
    double u = rng.uniform();
    for (int c = 0; c < kNumLibraryPrimitives; ++c) {
      if (!policy.prim.allowed[c]) continue;
      k = c;
      u -= std::exp(lp[c]);
      if (u < 0) break;
    }
  } else {
    for (int c = 0; c < kNumLibraryPrimitives; ++c)
      if (policy.prim.allowed[c] && (k < 0 || lp[c] > lp[k])) k = c;
  }
  const PrimitiveType p = class_from_index(k);
  const nn::Mixture mix = policy.params[k].mixture(in, 0);
  const nn::Vector x = mode == RolloutMode::kSample ? mix.sample(rng) : mix.mode();
  return {p, clamp_params(p, to_params(x))};
}

EpisodeResult rollout_policy(const PolicyBundle& policy, const TaskSpec& task, std::uint64_t seed, int max_prims,
                             RolloutMode mode, const PrimitiveConfig& pcfg) {
  EpisodeResult r;
  WorldState s = reset(task, seed);
  const std::size_t roster = s.objects.size();
  Rng rng(seed, Stream::kSampling, 0);
  bool after_failed_grasp = false;
  PrimitiveParams failed_x;
  for (int i = 0; i < max_prims && !r.success; ++i) {
    auto [p, x] = policy_act(policy, s, roster, mode, rng);
    if (after_failed_grasp) {
      ++r.failed_grasps;
      if (p == PrimitiveType::kGrasp) {
        ++r.grasp_retries;
        r.grasp_retries_adjusted += !(x == failed_x);
      }
    }
    const Segment seg = execute_primitive(s, p, x, pcfg);
    after_failed_grasp = p == PrimitiveType::kGrasp && !primitive_success(seg, p, x, pcfg);
    if (after_failed_grasp) failed_x = x;
    s = seg.final_state;
    r.types.push_back(p);
    ++r.primitives_executed;
    r.success = task_success(s, task);
  }
  return r;
}

// Flat BC ---------------------------------------------------------------------

std::vector<double> encode_action(const MotorAction& a) {
  using namespace world_limits;
  const MotorAction c = a.clamped();
  return {c.delta_pos.x / kMaxDeltaPos, c.delta_pos.y / kMaxDeltaPos, c.delta_pos.z / kMaxDeltaPos,
          c.delta_yaw / kMaxDeltaYaw, c.grip == Grip::kClose ? 1.0 : -1.0};
}

MotorAction decode_action(std::span<const double> v) {
  using namespace world_limits;
  if (v.size() != 5) throw DimensionMismatch("motor actions have 5 components");
  MotorAction a;
  a.delta_pos = {v[0] * kMaxDeltaPos, v[1] * kMaxDeltaPos, v[2] * kMaxDeltaPos};
  a.delta_yaw = v[3] * kMaxDeltaYaw;
  a.grip = v[4] > 0 ? Grip::kClose : Grip::kOpen;
  return a.clamped();
}

BcConfig::BcConfig() {
  train.epochs = 60;
  train.batch_size = 128;
  train.learning_rate = 1e-3;
  train.lr_decay = 0.97;
  train.min_updates = 8000;
  train.hidden = {128, 128};
}

void BcConfig::validate() const {
  train.validate();
  if (!(sigma_min > 0)) throw ConfigError("sigma_min must be positive");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
}

Json BcConfig::to_json() const { return {{"train", train.to_json()}, {"sigma_min", sigma_min}, {"max_steps", max_steps}}; }

BcConfig BcConfig::from_json(const Json& j) {
  BcConfig c;
  if (j.contains("train")) c.train = nn::TrainConfig::from_json(j.at("train"), c.train);
  c.sigma_min = j.value("sigma_min", c.sigma_min);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.validate();
  return c;
}

MotorAction FlatBcPolicy::act(const WorldState& s, std::size_t roster_size) const {
  const auto f = featurize(s, roster_size);
  if (static_cast<int>(f.size()) != feature_dim) throw DimensionMismatch("BC policy feature size differs");
  const nn::Matrix out = net.forward(norm.apply(to_vector(f)));
  const nn::Vector a = nn::decode_mixture(out.col(0), spec).mode();
  return decode_action(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
}

FlatBcPolicy train_bc_baseline(const std::vector<Demonstration>& demos, std::size_t roster_size, const BcConfig& cfg) {
  cfg.validate();
  if (demos.empty()) throw PreconditionError("no demonstrations for behavioral cloning");
  std::vector<std::vector<double>> feats;
  std::vector<std::vector<double>> acts;
  for (const auto& d : demos)
    for (const auto& fr : d.frames) {
      feats.push_back(featurize(fr.state, roster_size));
      acts.push_back(encode_action(fr.action));
    }
  if (feats.empty()) throw EmptyDemo("demonstrations have no frames");

  FlatBcPolicy pol;
  pol.task = demos.front().task;
  pol.feature_dim = static_cast<int>(feats.front().size());
  pol.spec = {5, cfg.train.mixture_components, cfg.sigma_min};
  std::vector<const std::vector<double>*> fp, ap;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    fp.push_back(&feats[i]);
    ap.push_back(&acts[i]);
  }
  const nn::Matrix raw = columns(fp, pol.feature_dim);
  const nn::Matrix y = columns(ap, 5);
  pol.norm = nn::Normalizer::fit(raw);
  const nn::Matrix x = pol.norm.apply(raw);
  Rng init(cfg.train.seed, Stream::kInit, 200);
  pol.net = nn::Mlp(layer_sizes(pol.feature_dim, cfg.train.hidden, pol.spec.output_size()), init);
  nn::init_mixture_bias(pol.net, y, pol.spec, init);
  std::vector<double> wb;
  pol.curve = nn::train(pol.net.params(), feats.size(), cfg.train,
                        [&](std::span<const std::size_t> batch, nn::Vector& grad) {
                          wb.assign(batch.size(), 1.0);
                          return nn::mixture_objective(pol.net, nn::gather_columns(x, batch),
                                                       nn::gather_columns(y, batch), wb, pol.spec, &grad);
                        },
                        "train-bc");
  return pol;
}

EpisodeResult rollout_bc(const FlatBcPolicy& policy, const TaskSpec& task, std::uint64_t seed, int max_steps) {
  EpisodeResult r;
  WorldState s = reset(task, seed);
  const std::size_t roster = s.objects.size();
  for (int i = 0; i < max_steps && !r.success; ++i) {
    s = step(s, policy.act(s, roster));
    ++r.primitives_executed;
    r.success = task_success(s, task);
  }
  return r;
}

// Evaluation -----------------------------------------------------------------

std::uint64_t eval_seed(std::uint64_t base_seed, int episode) {
  return derive_key({base_seed, static_cast<std::uint64_t>(Stream::kEval), static_cast<std::uint64_t>(episode)});
}

namespace {

EvalSummary summarize(const std::vector<EpisodeResult>& rs) {
  EvalSummary e;
  e.episodes = static_cast<int>(rs.size());
  if (rs.empty()) return e;
  int succ = 0;
  double prims = 0;
  for (const auto& r : rs) {
    succ += r.success;
    prims += r.primitives_executed;
    e.failed_grasps += r.failed_grasps;
    e.grasp_retries += r.grasp_retries;
    e.grasp_retries_adjusted += r.grasp_retries_adjusted;
  }
  e.success_rate = static_cast<double>(succ) / static_cast<double>(rs.size());
  e.mean_primitives = prims / static_cast<double>(rs.size());
  return e;
}

}  // namespace

EvalSummary evaluate_policy(const PolicyBundle& policy, const TaskSpec& task, std::uint64_t base_seed, int episodes,
                            int max_prims, int workers, RolloutMode mode) {
  std::vector<EpisodeResult> rs(static_cast<std::size_t>(std::max(episodes, 0)));
  parallel_for(rs.size(), workers, [&](std::size_t i) {
    rs[i] = rollout_policy(policy, task, eval_seed(base_seed, static_cast<int>(i)), max_prims, mode);
  });
  return summarize(rs);
}

EvalSummary evaluate_bc(const FlatBcPolicy& policy, const TaskSpec& task, std::uint64_t base_seed, int episodes,
                        int max_steps, int workers) {
  std::vector<EpisodeResult> rs(static_cast<std::size_t>(std::max(episodes, 0)));
  parallel_for(rs.size(), workers, [&](std::size_t i) {
    rs[i] = rollout_bc(policy, task, eval_seed(base_seed, static_cast<int>(i)), max_steps);
  });
  return summarize(rs);
}

// Persistence ----------------------------------------------------------------

void save_policy(const PolicyBundle& policy, const std::string& path) {
  const Json header = {{"format", kPolicyFormat},
                       {"version", kPolicyVersion},
                       {"task", policy.task},
                       {"feature_dim", policy.feature_dim}};
  Json prim = {{"allowed", policy.prim.allowed},
               {"norm", policy.prim.norm.to_json()},
               {"net", policy.prim.net.to_json()},
               {"pretrain_curve", curve_to_json(policy.prim.pretrain_curve)},
               {"finetune_curve", curve_to_json(policy.prim.finetune_curve)}};
  std::vector<Json> records{prim};
  for (int k = 0; k < kNumLibraryPrimitives; ++k) {
    Json j = param_model_to_json(policy.params[k]);
    j["pretrain_curve"] = curve_to_json(policy.param_pretrain_curves[k]);
    records.push_back(std::move(j));
  }
  write_records(path, header, records);
}

PolicyBundle load_policy(const std::string& path) {
  const RecordFile f = read_records(path, kPolicyFormat, kPolicyVersion);
  if (f.records.size() != 1 + kNumLibraryPrimitives) throw CorruptFile(path + ": unexpected record count");
  PolicyBundle b;
  try {
    b.task = f.header.at("task").get<std::string>();
    b.feature_dim = f.header.at("feature_dim").get<int>();
    const Json& prim = f.records[0];
    b.prim.feature_dim = b.feature_dim;
    b.prim.allowed = prim.at("allowed").get<std::array<bool, kNumClasses>>();
    b.prim.norm = nn::Normalizer::from_json(prim.at("norm"));
    b.prim.net = nn::Mlp::from_json(prim.at("net"));
    b.prim.pretrain_curve = curve_from_json(prim.at("pretrain_curve"));
    b.prim.finetune_curve = curve_from_json(prim.at("finetune_curve"));
    for (int k = 0; k < kNumLibraryPrimitives; ++k) {
      b.params[k] = param_model_from_json(f.records[1 + k]);
      b.param_pretrain_curves[k] = curve_from_json(f.records[1 + k].at("pretrain_curve"));
    }
  } catch (const Json::exception& e) {
    throw CorruptFile(path + ": " + e.what());
  }
  if (b.prim.net.input_dim() != b.feature_dim) throw CorruptFile(path + ": feature dimension disagrees");
  return b;
}

void save_bc(const FlatBcPolicy& policy, const std::string& path) {
  const Json header = {{"format", kBcFormat},
                       {"version", kPolicyVersion},
                       {"task", policy.task},
                       {"feature_dim", policy.feature_dim}};
  const Json rec = {{"components", policy.spec.components}, {"sigma_min", policy.spec.sigma_min},
                    {"norm", policy.norm.to_json()},         {"net", policy.net.to_json()},
                    {"curve", curve_to_json(policy.curve)}};
  write_records(path, header, {rec});
}

FlatBcPolicy load_bc(const std::string& path) {
  const RecordFile f = read_records(path, kBcFormat, kPolicyVersion);
  if (f.records.size() != 1) throw CorruptFile(path + ": unexpected record count");
  FlatBcPolicy p;
  try {
    p.task = f.header.at("task").get<std::string>();
    p.feature_dim = f.header.at("feature_dim").get<int>();
    const Json& r = f.records[0];
    p.spec = {5, r.at("components").get<int>(), r.at("sigma_min").get<double>()};
    p.norm = nn::Normalizer::from_json(r.at("norm"));
    p.net = nn::Mlp::from_json(r.at("net"));
    p.curve = curve_from_json(r.at("curve"));
  } catch (const Json::exception& e) {
    throw CorruptFile(path + ": " + e.what());
  }
  if (p.net.output_dim() != p.spec.output_size() || p.net.input_dim() != p.feature_dim)
    throw CorruptFile(path + ": network does not match its schema");
  return p;
}

}  // namespace prime
