// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "flowmatch/checkpoint.hpp"
#include "flowmatch/path.hpp"
#include "flowmatch/rng.hpp"
#include "flowmatch/tape.hpp"

#include "json.hpp"

namespace flowmatch {

enum class Activation { tanh, silu };
enum class TimeEmbedding { concat, sinusoidal };
enum class Parameterization { vector_field, score, noise };

std::string to_string(Activation a);
std::string to_string(TimeEmbedding e);
std::string to_string(Parameterization p);
Activation activation_from_string(const std::string& s);
TimeEmbedding time_embedding_from_string(const std::string& s);
Parameterization parameterization_from_string(const std::string& s);

struct ModelConfig {
  int dim = 2;
  std::vector<int> hidden = {64, 64, 64};
  Activation activation = Activation::silu;
  TimeEmbedding embedding = TimeEmbedding::concat;
  int fourier_frequencies = 8;
  Parameterization parameterization = Parameterization::vector_field;

  // "paper-2d": 5 hidden layers of 512
  static ModelConfig preset(const std::string& name, int dim = 2);

  int time_feature_width() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Time-conditioned MLP x,t -> R^d. Weights use fan-in uniform init, the final
// layer starts at zero so the initial field is identically zero.
class VectorFieldModel {
 public:
  VectorFieldModel(ModelConfig cfg, Pcg64& init_rng);

  const ModelConfig& config() const { return cfg_; }
  int dim() const { return cfg_.dim; }
  std::size_t n_layers() const { return weights_.size(); }
  std::int64_t n_parameters() const;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;

  // Forward pass on a tape. t_batch has one entry per row of x_batch.
  // When x_requires_grad is set the input leaf tracks gradients (for
  // divergence / vector-Jacobian products w.r.t. x).
  struct TapeBinding {
    std::vector<Var> weights, biases;
    Var x;
    Var out;
  };
  TapeBinding forward(Tape& tape, ConstSpan t_batch, const Tensor& x_batch,
                      bool x_requires_grad = false) const;

  // Tape-free forward used by samplers; scratch grows on demand and is reused.
  struct Workspace {
    std::vector<Tensor> bufs;
  };
  void forward_inference(ConstSpan t_batch, const Tensor& x_batch, Tensor& out,
                         Workspace& ws) const;
  void forward_inference(double t, ConstSpan x, Span out, Workspace& ws) const;

  Tensor time_features(ConstSpan t_batch) const;

  void save(const std::string& path, const nlohmann::json& extra_meta = {}) const;
  static VectorFieldModel load(const std::string& path);
  Checkpoint to_checkpoint() const;
  static VectorFieldModel from_checkpoint(const Checkpoint& ck);

 private:
  VectorFieldModel(ModelConfig cfg, std::vector<Tensor> weights,
                   std::vector<Tensor> biases);

  ModelConfig cfg_;
  std::vector<Tensor> weights_;  // [in x out] per layer
  std::vector<Tensor> biases_;   // [out] per layer
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  const AdamConfig& config() const { return cfg_; }
  void step(const std::vector<Tensor*>& params,
            const std::vector<const Tensor*>& grads);

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
};

enum class ObjectiveKind { cfm, score_matching, score_flow, ddpm };
std::string to_string(ObjectiveKind k);
ObjectiveKind objective_from_string(const std::string& s);

struct TrainConfig {
  ObjectiveKind objective = ObjectiveKind::cfm;
  int steps = 20000;
  int batch = 256;
  AdamConfig adam;
  bool stratified_t = false;   // one t per batch slot, antithetic off
  int checkpoint_every = 0;    // 0: only final
  std::string out_dir;         // empty: no checkpoint files
};

struct TrainResult {
  bool aborted = false;
  int abort_step = -1;
  double final_loss = 0.0;
  std::vector<double> loss_trace;
};

// x1 sampler fills a [B x d] tensor with data draws.
using BatchSampler = std::function<void(Pcg64&, Tensor&)>;

// Loss CSV columns: step,loss,wall_time_s,grad_norm. On a non-finite loss or
// parameter the loop stops and the model is rolled back to the last finite
// checkpoint snapshot.
TrainResult train(VectorFieldModel& model, const PathSchedule& schedule,
                  const BatchSampler& sample_x1, const TrainConfig& cfg,
                  Pcg64& batch_rng, std::ostream* loss_csv = nullptr);

}  // namespace flowmatch
