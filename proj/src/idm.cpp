#include "prime/idm.hpp"

#include <cmath>
#include <limits>

#include "prime/errors.hpp"
#include "prime/parallel.hpp"
#include "prime/serialize.hpp"

namespace prime {

namespace {

constexpr const char* kModelFormat = "prime.idm";
constexpr int kModelVersion = 1;

}  // namespace

nn::Matrix pair_inputs(std::span<const IdmSample> samples) {
  if (samples.empty()) return {};
  const auto d = static_cast<Eigen::Index>(samples.front().s.size());
  nn::Matrix x(2 * d, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const auto& smp = samples[b];
    if (static_cast<Eigen::Index>(smp.s.size()) != d || static_cast<Eigen::Index>(smp.s_prime.size()) != d)
      throw DimensionMismatch("inconsistent feature sizes in samples");
    const auto col = static_cast<Eigen::Index>(b);
    for (Eigen::Index k = 0; k < d; ++k) {
      x(k, col) = smp.s[k];
      x(d + k, col) = smp.s_prime[k];
    }
  }
  return x;
}

nn::Matrix pair_inputs(const std::vector<std::vector<double>>& s, const std::vector<std::vector<double>>& s_prime) {
  if (s.size() != s_prime.size()) throw DimensionMismatch("pair lists differ in length");
  if (s.empty()) return {};
  const auto d = static_cast<Eigen::Index>(s.front().size());
  nn::Matrix x(2 * d, static_cast<Eigen::Index>(s.size()));
  for (std::size_t b = 0; b < s.size(); ++b) {
    if (static_cast<Eigen::Index>(s[b].size()) != d || static_cast<Eigen::Index>(s_prime[b].size()) != d)
      throw DimensionMismatch("inconsistent feature sizes");
    for (Eigen::Index k = 0; k < d; ++k) {
      x(k, static_cast<Eigen::Index>(b)) = s[b][k];
      x(d + k, static_cast<Eigen::Index>(b)) = s_prime[b][k];
    }
  }
  return x;
}

// Classifier -------------------------------------------------------------------

nn::Matrix Classifier::log_probs(const nn::Matrix& x) const {
  if (x.rows() != 2 * feature_dim) throw DimensionMismatch("classifier expects " + std::to_string(2 * feature_dim) +
                                                          " inputs, got " + std::to_string(x.rows()));
  return nn::masked_log_softmax(net.forward(norm.apply(x)), present);
}

Classifier train_primitive_idm(const IdmDataset& data, const nn::TrainConfig& cfg) {
  cfg.validate();
  Classifier c;
  c.feature_dim = data.feature_dim;
  int classes = 0;
  for (int k = 0; k < kNumClasses; ++k) {
    c.present[k] = data.counts[k] > 0;
    classes += c.present[k];
  }
  if (classes < 2) throw PreconditionError("type classifier needs at least two classes with samples");

  const nn::Matrix raw = pair_inputs(data.samples);
  c.norm = nn::Normalizer::fit(raw);
  const nn::Matrix x = c.norm.apply(raw);
  std::vector<int> labels;
  std::vector<double> weights;
  for (const auto& s : data.samples) {
    labels.push_back(class_index(s.p));
    weights.push_back(s.weight);
  }

  std::vector<int> sizes{static_cast<int>(x.rows())};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(kNumClasses);
  Rng init(cfg.seed, Stream::kInit, 0);
  c.net = nn::Mlp(sizes, init);

  std::vector<int> lb;
  std::vector<double> wb;
  c.curve = nn::train(c.net.params(), data.samples.size(), cfg,
                      [&](std::span<const std::size_t> batch, nn::Vector& grad) {
                        lb.clear();
                        wb.clear();
                        for (auto i : batch) {
                          lb.push_back(labels[i]);
                          wb.push_back(weights[i]);
                        }
                        return nn::classification_objective(c.net, nn::gather_columns(x, batch), lb, wb,
                                                            c.present, &grad);
                      },
                      "train-idm classifier");
  return c;
}

ClassifierEval evaluate_classifier(const Classifier& c, const IdmDataset& data) {
  ClassifierEval ev;
  if (data.samples.empty()) return ev;
  const nn::Matrix lp = c.log_probs(pair_inputs(data.samples));
  std::size_t correct = 0;
  for (std::size_t b = 0; b < data.samples.size(); ++b) {
    Eigen::Index arg = 0;
    lp.col(static_cast<Eigen::Index>(b)).maxCoeff(&arg);
    const int truth = class_index(data.samples[b].p);
    ev.confusion[truth][arg] += 1;
    correct += arg == truth;
  }
  ev.total = data.samples.size();
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(ev.total);
  return ev;
}

// Parameter models ---------------------------------------------------------------

nn::Mixture ParamModel::mixture(const nn::Matrix& x, Eigen::Index col) const {
  const nn::Matrix out = net.forward(norm.apply(x.col(col)));
  return nn::decode_mixture(out.col(0), spec);
}

std::vector<nn::Mixture> ParamModel::mixtures(const nn::Matrix& x) const {
  const nn::Matrix out = net.forward(norm.apply(x));
  std::vector<nn::Mixture> m;
  m.reserve(static_cast<std::size_t>(out.cols()));
  for (Eigen::Index b = 0; b < out.cols(); ++b) m.push_back(nn::decode_mixture(out.col(b), spec));
  return m;
}

ParamModel train_param_idm(const IdmDataset& data, PrimitiveType p, const nn::TrainConfig& cfg, double sigma_min) {
  cfg.validate();
  if (!is_library(p)) throw PreconditionError(std::string("no parameter model for ") + to_string(p));
  std::vector<IdmSample> subset;
  for (const auto& s : data.samples)
    if (s.p == p) subset.push_back(s);
  if (subset.empty()) throw PreconditionError(std::string("no samples of type ") + to_string(p));

  ParamModel m;
  m.type = p;
  m.spec = {param_dim(p), cfg.mixture_components, sigma_min};
  const nn::Matrix raw = pair_inputs(subset);
  m.norm = nn::Normalizer::fit(raw);
  const nn::Matrix x = m.norm.apply(raw);
  nn::Matrix y(m.spec.dim, static_cast<Eigen::Index>(subset.size()));
  std::vector<double> weights;
  for (std::size_t b = 0; b < subset.size(); ++b) {
    for (int d = 0; d < m.spec.dim; ++d) y(d, static_cast<Eigen::Index>(b)) = subset[b].x[static_cast<std::size_t>(d)];
    weights.push_back(subset[b].weight);
  }

  std::vector<int> sizes{static_cast<int>(x.rows())};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(m.spec.output_size());
  Rng init(cfg.seed, Stream::kInit, 1 + static_cast<std::uint64_t>(class_index(p)));
  m.net = nn::Mlp(sizes, init);
  nn::init_mixture_bias(m.net, y, m.spec, init);

  std::vector<double> wb;
  const std::string label = std::string("train-idm ") + to_string(p);
  m.curve = nn::train(m.net.params(), subset.size(), cfg,
                      [&](std::span<const std::size_t> batch, nn::Vector& grad) {
                        wb.clear();
                        for (auto i : batch) wb.push_back(weights[i]);
                        return nn::mixture_objective(m.net, nn::gather_columns(x, batch), nn::gather_columns(y, batch),
                                                     wb, m.spec, &grad);
                      },
                      label.c_str());
  m.trained = true;
  return m;
}

IdmConfig::IdmConfig() {
  classifier.epochs = 40;
  classifier.batch_size = 256;
  classifier.learning_rate = 2e-3;
  classifier.lr_decay = 0.95;
  param.epochs = 60;
  param.batch_size = 128;
  param.learning_rate = 1e-3;
  param.lr_decay = 0.97;
  param.min_updates = 8000;
}

void IdmConfig::validate() const {
  classifier.validate();
  param.validate();
  if (!(sigma_min > 0)) throw ConfigError("sigma_min must be positive");
  if (!std::isfinite(beta) || beta < 0) throw ConfigError("beta must be a nonnegative real");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

Json IdmConfig::to_json() const {
  return {{"classifier", classifier.to_json()}, {"param", param.to_json()}, {"sigma_min", sigma_min},
          {"beta", beta}};
}

IdmConfig IdmConfig::from_json(const Json& j) {
  IdmConfig c;
  if (j.contains("classifier")) c.classifier = nn::TrainConfig::from_json(j.at("classifier"), c.classifier);
  if (j.contains("param")) c.param = nn::TrainConfig::from_json(j.at("param"), c.param);
  c.sigma_min = j.value("sigma_min", c.sigma_min);
  c.beta = j.value("beta", c.beta);
  c.workers = j.value("workers", c.workers);
  c.validate();
  return c;
}

IdmModels train_idm(const IdmDataset& data, const IdmConfig& cfg) {
  cfg.validate();
  IdmModels models;
  models.task = data.task;
  models.feature_dim = data.feature_dim;
  models.beta = cfg.beta;
  for (int k = 0; k < kNumLibraryPrimitives; ++k) models.params[k].type = class_from_index(k);
  // Job 0 is the classifier, jobs 1..4 the parameter models.
  parallel_for(1 + kNumLibraryPrimitives, cfg.workers, [&](std::size_t job) {
    if (job == 0) {
      models.classifier = train_primitive_idm(data, cfg.classifier);
      return;
    }
    const auto p = class_from_index(static_cast<int>(job) - 1);
    if (!data.has(p)) return;
    nn::TrainConfig pc = cfg.param;
    pc.seed = derive_key({cfg.param.seed, static_cast<std::uint64_t>(job)});
    models.params[job - 1] = train_param_idm(data, p, pc, cfg.sigma_min);
  });
  return models;
}

// Scoring -------------------------------------------------------------------

PrimitiveType ScoreTable::best_library() const {
  int best = 0;
  for (int k = 1; k < kNumLibraryPrimitives; ++k)
    if (log_score[k] > log_score[best]) best = k;
  return class_from_index(best);
}

std::vector<ScoreTable> idm_score_batch(const IdmModels& models, const nn::Matrix& inputs, bool with_params) {
  const nn::Matrix lp = models.classifier.log_probs(inputs);
  std::vector<ScoreTable> out(static_cast<std::size_t>(inputs.cols()));
  const bool decode = with_params || models.beta != 0.0;
  for (std::size_t b = 0; b < out.size(); ++b)
    for (int k = 0; k < kNumClasses; ++k) {
      out[b].log_prob[k] = lp(k, static_cast<Eigen::Index>(b));
      out[b].log_score[k] = out[b].log_prob[k];
    }
  if (!decode) return out;
  for (int k = 0; k < kNumLibraryPrimitives; ++k) {
    const ParamModel& pm = models.params[k];
    if (!pm.trained) {
      for (auto& t : out) t.log_q[k] = -std::numeric_limits<double>::infinity();
      continue;
    }
    const auto mix = pm.mixtures(inputs);
    for (std::size_t b = 0; b < out.size(); ++b) {
      const nn::Vector mode = mix[b].mode();
      PrimitiveParams x{std::vector<double>(mode.data(), mode.data() + mode.size())};
      x = clamp_params(pm.type, std::move(x));
      const nn::Vector xv = Eigen::Map<const nn::Vector>(x.values.data(), static_cast<Eigen::Index>(x.size()));
      out[b].log_q[k] = mix[b].log_density(xv);
      out[b].x[k] = std::move(x);
      if (models.beta != 0.0) out[b].log_score[k] += models.beta * out[b].log_q[k];
    }
  }
  return out;
}

ScoreTable idm_score(const IdmModels& models, std::span<const double> s, std::span<const double> s_prime) {
  if (static_cast<int>(s.size()) != models.feature_dim || static_cast<int>(s_prime.size()) != models.feature_dim)
    throw DimensionMismatch("feature dimension " + std::to_string(s.size()) + " does not match model dimension " +
                            std::to_string(models.feature_dim));
  nn::Matrix x(2 * models.feature_dim, 1);
  for (int k = 0; k < models.feature_dim; ++k) {
    x(k, 0) = s[static_cast<std::size_t>(k)];
    x(models.feature_dim + k, 0) = s_prime[static_cast<std::size_t>(k)];
  }
  return idm_score_batch(models, x, true).front();
}

// Persistence ----------------------------------------------------------------

namespace {

Json curve_to_json(const nn::TrainingCurve& c) { return {{"loss", c.epoch_loss}, {"epochs", c.epochs_run}}; }

nn::TrainingCurve curve_from_json(const Json& j) {
  return {j.at("loss").get<std::vector<double>>(), j.at("epochs").get<int>()};
}

}  // namespace

Json classifier_to_json(const Classifier& c) {
  return {{"feature_dim", c.feature_dim}, {"present", c.present}, {"norm", c.norm.to_json()},
          {"net", c.net.to_json()},       {"curve", curve_to_json(c.curve)}};
}

Classifier classifier_from_json(const Json& j) {
  Classifier c;
  c.feature_dim = j.at("feature_dim").get<int>();
  c.present = j.at("present").get<std::array<bool, kNumClasses>>();
  c.norm = nn::Normalizer::from_json(j.at("norm"));
  c.net = nn::Mlp::from_json(j.at("net"));
  c.curve = curve_from_json(j.at("curve"));
  if (c.net.input_dim() != c.norm.mean.size()) throw CorruptFile("classifier normalizer does not match network");
  return c;
}

Json param_model_to_json(const ParamModel& m) {
  Json j = {{"type", to_string(m.type)}, {"trained", m.trained}};
  if (!m.trained) return j;
  j["dim"] = m.spec.dim;
  j["components"] = m.spec.components;
  j["sigma_min"] = m.spec.sigma_min;
  j["norm"] = m.norm.to_json();
  j["net"] = m.net.to_json();
  j["curve"] = curve_to_json(m.curve);
  return j;
}

ParamModel param_model_from_json(const Json& j) {
  ParamModel m;
  m.type = primitive_from_string(j.at("type").get<std::string>());
  m.trained = j.at("trained").get<bool>();
  if (!m.trained) return m;
  m.spec = {j.at("dim").get<int>(), j.at("components").get<int>(), j.at("sigma_min").get<double>()};
  m.norm = nn::Normalizer::from_json(j.at("norm"));
  m.net = nn::Mlp::from_json(j.at("net"));
  m.curve = curve_from_json(j.at("curve"));
  if (m.net.output_dim() != m.spec.output_size()) throw CorruptFile("mixture head does not match its schema");
  return m;
}

void save_model(const IdmModels& models, const std::string& path) {
  Json header = {{"format", kModelFormat},
                 {"version", kModelVersion},
                 {"task", models.task},
                 {"feature_dim", models.feature_dim},
                 {"beta", models.beta},
                 {"classes", Json::array()}};
  for (int k = 0; k < kNumClasses; ++k) header["classes"].push_back(to_string(class_from_index(k)));
  std::vector<Json> records{classifier_to_json(models.classifier)};
  for (const auto& pm : models.params) records.push_back(param_model_to_json(pm));
  write_records(path, header, records);
}

IdmModels load_model(const std::string& path) {
  const RecordFile f = read_records(path, kModelFormat, kModelVersion);
  if (f.records.size() != 1 + kNumLibraryPrimitives) throw CorruptFile(path + ": unexpected record count");
  IdmModels m;
  try {
    m.task = f.header.at("task").get<std::string>();
    m.feature_dim = f.header.at("feature_dim").get<int>();
    m.beta = f.header.at("beta").get<double>();
    const auto classes = f.header.at("classes").get<std::vector<std::string>>();
    if (classes.size() != kNumClasses) throw CorruptFile(path + ": class set differs");
    for (int k = 0; k < kNumClasses; ++k)
      if (classes[k] != to_string(class_from_index(k))) throw CorruptFile(path + ": class set differs");
    m.classifier = classifier_from_json(f.records[0]);
    for (int k = 0; k < kNumLibraryPrimitives; ++k) m.params[k] = param_model_from_json(f.records[1 + k]);
  } catch (const Json::exception& e) {
    throw CorruptFile(path + ": " + e.what());
  }
  if (m.classifier.feature_dim != m.feature_dim) throw CorruptFile(path + ": feature dimension disagrees");
  return m;
}

}  // namespace prime
