#pragma once

// Factorized inverse dynamics model: a type classifier over
// {Reach, Grasp, Place, Push, Other} and one mixture-density parameter model
// per library primitive, both conditioned on the feature pair (s, s').

#include <array>
#include <span>
#include <string>
#include <vector>

#include "prime/collector.hpp"
#include "prime/nn.hpp"

namespace prime {

struct Classifier {
  int feature_dim = 0;
  std::array<bool, kNumClasses> present{};  // absent classes are masked
  nn::Normalizer norm;
  nn::Mlp net;
  nn::TrainingCurve curve;

  // Log class probabilities per column of x (2*feature_dim rows, raw).
  nn::Matrix log_probs(const nn::Matrix& x) const;
};

struct ParamModel {
  PrimitiveType type = PrimitiveType::kReach;
  bool trained = false;
  nn::MixtureSpec spec;
  nn::Normalizer norm;
  nn::Mlp net;
  nn::TrainingCurve curve;

  nn::Mixture mixture(const nn::Matrix& x, Eigen::Index col) const;
  std::vector<nn::Mixture> mixtures(const nn::Matrix& x) const;
};

struct IdmConfig {
  nn::TrainConfig classifier;
  nn::TrainConfig param;
  double sigma_min = 1e-3;
  double beta = 0.0;
  int workers = 1;

  IdmConfig();
  void validate() const;
  Json to_json() const;
  static IdmConfig from_json(const Json& j);
};

struct IdmModels {
  std::string task;
  int feature_dim = 0;
  double beta = 0.0;
  Classifier classifier;
  std::array<ParamModel, kNumLibraryPrimitives> params;

  const ParamModel& param(PrimitiveType p) const { return params[class_index(p)]; }
};

// (s, s') stacked column-wise: rows [s; s'].
nn::Matrix pair_inputs(std::span<const IdmSample> samples);
nn::Matrix pair_inputs(const std::vector<std::vector<double>>& s, const std::vector<std::vector<double>>& s_prime);

// Throws PreconditionError when fewer than two classes have samples.
Classifier train_primitive_idm(const IdmDataset& data, const nn::TrainConfig& cfg);
// Throws PreconditionError when the dataset has no samples of type p.
ParamModel train_param_idm(const IdmDataset& data, PrimitiveType p, const nn::TrainConfig& cfg,
                           double sigma_min = 1e-3);
// Classifier plus every represented parameter model (trained concurrently,
// each with its own seed stream).
IdmModels train_idm(const IdmDataset& data, const IdmConfig& cfg);

struct ScoreTable {
  std::array<double, kNumClasses> log_prob{};   // log IDM_prim(p | s, s')
  std::array<double, kNumClasses> log_score{};  // log_prob + beta * log_q (Other: log_prob)
  std::array<PrimitiveParams, kNumLibraryPrimitives> x;  // mixture mode, clamped legal
  std::array<double, kNumLibraryPrimitives> log_q{};     // log density at x

  // Best library primitive (Other excluded); ties go to the lower class index.
  PrimitiveType best_library() const;
};

// Throws DimensionMismatch when feature sizes disagree with the model.
ScoreTable idm_score(const IdmModels& models, std::span<const double> s, std::span<const double> s_prime);
// Column-batched scoring. Parameters (modes, densities) are decoded only when
// with_params is set or beta != 0.
std::vector<ScoreTable> idm_score_batch(const IdmModels& models, const nn::Matrix& inputs, bool with_params);

void save_model(const IdmModels& models, const std::string& path);
IdmModels load_model(const std::string& path);

Json classifier_to_json(const Classifier& c);
Classifier classifier_from_json(const Json& j);
Json param_model_to_json(const ParamModel& m);
ParamModel param_model_from_json(const Json& j);

// Unweighted held-out type accuracy and per-class confusion (rows = truth).
struct ClassifierEval {
  double accuracy = 0.0;
  std::size_t total = 0;
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> confusion{};
};
ClassifierEval evaluate_classifier(const Classifier& c, const IdmDataset& data);

}  // namespace prime
