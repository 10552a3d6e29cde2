// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include "flowmatch/model.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>

#include "flowmatch/kernels.hpp"
#include "flowmatch/objectives.hpp"

namespace flowmatch {

namespace k = kernels;

std::string to_string(Activation a) {
  return a == Activation::tanh ? "tanh" : "silu";
}
std::string to_string(TimeEmbedding e) {
  return e == TimeEmbedding::concat ? "concat" : "sinusoidal";
}
std::string to_string(Parameterization p) {
  switch (p) {
    case Parameterization::vector_field: return "vector_field";
    case Parameterization::score: return "score";
    case Parameterization::noise: return "noise";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "silu") return Activation::silu;
  throw ConfigError("unknown activation '" + s + "' (expected tanh or silu)");
}

TimeEmbedding time_embedding_from_string(const std::string& s) {
  if (s == "concat") return TimeEmbedding::concat;
  if (s == "sinusoidal") return TimeEmbedding::sinusoidal;
  throw ConfigError("unknown time_embedding '" + s +
                    "' (expected concat or sinusoidal)");
}

Parameterization parameterization_from_string(const std::string& s) {
  if (s == "vector_field") return Parameterization::vector_field;
  if (s == "score") return Parameterization::score;
  if (s == "noise") return Parameterization::noise;
  throw ConfigError("unknown parameterization '" + s +
                    "' (expected vector_field, score or noise)");
}

std::string to_string(ObjectiveKind kq) {
  switch (kq) {
    case ObjectiveKind::cfm: return "cfm";
    case ObjectiveKind::score_matching: return "score_matching";
    case ObjectiveKind::score_flow: return "score_flow";
    case ObjectiveKind::ddpm: return "ddpm";
  }
  return "?";
}

ObjectiveKind objective_from_string(const std::string& s) {
  if (s == "cfm") return ObjectiveKind::cfm;
  if (s == "score_matching" || s == "sm") return ObjectiveKind::score_matching;
  if (s == "score_flow" || s == "scoreflow") return ObjectiveKind::score_flow;
  if (s == "ddpm") return ObjectiveKind::ddpm;
  throw ConfigError("unknown objective '" + s +
                    "' (expected cfm, score_matching, score_flow or ddpm)");
}

ModelConfig ModelConfig::preset(const std::string& name, int dim) {
  ModelConfig cfg;
  cfg.dim = dim;
  if (name == "paper-2d") {
    cfg.hidden = {512, 512, 512, 512, 512};
  } else if (name == "desk") {
    cfg.hidden = {64, 64, 64};
  } else {
    throw ConfigError("unknown model preset '" + name + "' (expected paper-2d or desk)");
  }
  return cfg;
}

int ModelConfig::time_feature_width() const {
  return embedding == TimeEmbedding::concat ? 1 : 2 * fourier_frequencies;
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j;
  j["dim"] = dim;
  j["hidden"] = hidden;
  j["activation"] = to_string(activation);
  j["time_embedding"] = to_string(embedding);
  j["fourier_frequencies"] = fourier_frequencies;
  j["parameterization"] = to_string(parameterization);
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  if (j.contains("preset")) cfg = preset(j.at("preset").get<std::string>());
  cfg.dim = j.value("dim", cfg.dim);
  if (j.contains("hidden")) cfg.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("activation"))
    cfg.activation = activation_from_string(j.at("activation").get<std::string>());
  if (j.contains("time_embedding"))
    cfg.embedding =
        time_embedding_from_string(j.at("time_embedding").get<std::string>());
  cfg.fourier_frequencies = j.value("fourier_frequencies", cfg.fourier_frequencies);
  if (j.contains("parameterization"))
    cfg.parameterization =
        parameterization_from_string(j.at("parameterization").get<std::string>());
  FM_CHECK(cfg.dim >= 1, ConfigError, "model dim must be >= 1, got ", cfg.dim);
  FM_CHECK(!cfg.hidden.empty(), ConfigError, "model needs at least one hidden layer");
  return cfg;
}

VectorFieldModel::VectorFieldModel(ModelConfig cfg, Pcg64& init_rng)
    : cfg_(std::move(cfg)) {
  std::vector<int> widths;
  widths.push_back(cfg_.dim + cfg_.time_feature_width());
  for (int h : cfg_.hidden) widths.push_back(h);
  widths.push_back(cfg_.dim);

  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    Tensor w = Tensor::zeros({fan_in, fan_out});
    Tensor b = Tensor::zeros({fan_out});
    const bool last = (l + 2 == widths.size());
    if (!last) {
      const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
      for (std::int64_t i = 0; i < w.numel(); ++i)
        w[i] = init_rng.next_uniform(-bound, bound);
      for (std::int64_t i = 0; i < b.numel(); ++i)
        b[i] = init_rng.next_uniform(-bound, bound);
    }
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
  }
}

VectorFieldModel::VectorFieldModel(ModelConfig cfg, std::vector<Tensor> weights,
                                   std::vector<Tensor> biases)
    : cfg_(std::move(cfg)), weights_(std::move(weights)), biases_(std::move(biases)) {}

std::int64_t VectorFieldModel::n_parameters() const {
  std::int64_t n = 0;
  for (const auto& w : weights_) n += w.numel();
  for (const auto& b : biases_) n += b.numel();
  return n;
}

std::vector<Tensor*> VectorFieldModel::parameters() {
  std::vector<Tensor*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Tensor*> VectorFieldModel::parameters() const {
  std::vector<const Tensor*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<std::string> VectorFieldModel::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    names.push_back("w" + std::to_string(l));
    names.push_back("b" + std::to_string(l));
  }
  return names;
}

Tensor VectorFieldModel::time_features(ConstSpan t_batch) const {
  const auto rows = static_cast<std::int64_t>(t_batch.size());
  if (cfg_.embedding == TimeEmbedding::concat) {
    Tensor f = Tensor::zeros({rows, 1});
    for (std::int64_t r = 0; r < rows; ++r) f[r] = t_batch[r];
    return f;
  }
  const int kf = cfg_.fourier_frequencies;
  Tensor f = Tensor::zeros({rows, 2 * kf});
  for (std::int64_t r = 0; r < rows; ++r) {
    for (int j = 0; j < kf; ++j) {
      const double w = std::ldexp(M_PI, j);  // pi * 2^j
      f.at(r, 2 * j) = std::sin(w * t_batch[r]);
      f.at(r, 2 * j + 1) = std::cos(w * t_batch[r]);
    }
  }
  return f;
}

VectorFieldModel::TapeBinding VectorFieldModel::forward(
    Tape& tape, ConstSpan t_batch, const Tensor& x_batch,
    bool x_requires_grad) const {
  FM_CHECK(x_batch.rank() == 2 && x_batch.cols() == cfg_.dim, ShapeError,
           "model forward: expected [B,", cfg_.dim, "] input, got ",
           x_batch.shape_str());
  FM_CHECK(static_cast<std::int64_t>(t_batch.size()) == x_batch.rows(), ShapeError,
           "model forward: ", t_batch.size(), " times for ", x_batch.rows(),
           " rows");
  TapeBinding bind;
  bind.x = tape.leaf(x_batch, x_requires_grad);
  const Var tf = tape.constant(time_features(t_batch));
  Var h = tape.concat_cols(bind.x, tf);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    bind.weights.push_back(tape.leaf(weights_[l], true));
    bind.biases.push_back(tape.leaf(biases_[l], true));
    h = tape.add(tape.matmul(h, bind.weights[l]), bind.biases[l]);
    if (l + 1 < weights_.size())
      h = cfg_.activation == Activation::tanh ? tape.tanh(h) : tape.silu(h);
  }
  bind.out = h;
  return bind;
}

void VectorFieldModel::forward_inference(ConstSpan t_batch, const Tensor& x_batch,
                                         Tensor& out, Workspace& ws) const {
  FM_CHECK(x_batch.rank() == 2 && x_batch.cols() == cfg_.dim, ShapeError,
           "model forward: expected [B,", cfg_.dim, "] input, got ",
           x_batch.shape_str());
  const std::int64_t rows = x_batch.rows();
  const std::int64_t tfw = cfg_.time_feature_width();
  ws.bufs.resize(weights_.size() + 1);

  Tensor& in = ws.bufs[0];
  if (in.shape() != std::vector<std::int64_t>{rows, cfg_.dim + tfw})
    in = Tensor::zeros({rows, cfg_.dim + tfw});
  const Tensor tf = time_features(t_batch);
  for (std::int64_t r = 0; r < rows; ++r) {
    double* dst = in.data() + r * (cfg_.dim + tfw);
    const double* src = x_batch.data() + r * cfg_.dim;
    for (int c = 0; c < cfg_.dim; ++c) dst[c] = src[c];
    for (std::int64_t c = 0; c < tfw; ++c) dst[cfg_.dim + c] = tf.at(r, c);
  }

  const Tensor* cur = &in;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const bool last = (l + 1 == weights_.size());
    const std::int64_t out_w = weights_[l].cols();
    Tensor& dst = last ? out : ws.bufs[l + 1];
    if (dst.shape() != std::vector<std::int64_t>{rows, out_w})
      dst = Tensor::zeros({rows, out_w});
    k::gemm_nn(rows, out_w, weights_[l].rows(), cur->data(), weights_[l].data(),
               dst.data(), false);
    for (std::int64_t r = 0; r < rows; ++r)
      k::add(dst.data() + r * out_w, biases_[l].data(), dst.data() + r * out_w,
             out_w);
    if (!last) {
      if (cfg_.activation == Activation::tanh)
        k::tanh_map(dst.data(), dst.data(), dst.numel());
      else
        k::silu_map(dst.data(), dst.data(), dst.numel());
    }
    cur = &dst;
  }
}

void VectorFieldModel::forward_inference(double t, ConstSpan x, Span out,
                                         Workspace& ws) const {
  Tensor xb = Tensor::zeros({1, cfg_.dim});
  for (int i = 0; i < cfg_.dim; ++i) xb[i] = x[i];
  Tensor ob;
  const double tb[1] = {t};
  forward_inference(ConstSpan(tb, 1), xb, ob, ws);
  for (int i = 0; i < cfg_.dim; ++i) out[i] = ob[i];
}

Checkpoint VectorFieldModel::to_checkpoint() const {
  Checkpoint ck;
  ck.meta["model"] = cfg_.to_json();
  const auto names = parameter_names();
  const auto params = parameters();
  for (std::size_t i = 0; i < names.size(); ++i)
    ck.tensors.emplace(names[i], *params[i]);
  return ck;
}

VectorFieldModel VectorFieldModel::from_checkpoint(const Checkpoint& ck) {
  FM_CHECK(ck.meta.contains("model"), ConfigError,
           "checkpoint has no 'model' entry in meta");
  ModelConfig cfg = ModelConfig::from_json(ck.meta.at("model"));
  std::vector<Tensor> ws, bs;
  for (std::size_t l = 0;; ++l) {
    const std::string wn = "w" + std::to_string(l);
    const std::string bn = "b" + std::to_string(l);
    const auto wit = ck.tensors.find(wn);
    if (wit == ck.tensors.end()) break;
    const auto bit = ck.tensors.find(bn);
    FM_CHECK(bit != ck.tensors.end(), ConfigError, "checkpoint missing tensor ", bn);
    ws.push_back(wit->second);
    bs.push_back(bit->second);
  }
  FM_CHECK(ws.size() == cfg.hidden.size() + 1, ConfigError,
           "checkpoint layer count does not match model config");
  return VectorFieldModel(std::move(cfg), std::move(ws), std::move(bs));
}

void VectorFieldModel::save(const std::string& path,
                            const nlohmann::json& extra_meta) const {
  Checkpoint ck = to_checkpoint();
  if (!extra_meta.is_null())
    for (const auto& [key, val] : extra_meta.items()) ck.meta[key] = val;
  ck.save(path);
}

VectorFieldModel VectorFieldModel::load(const std::string& path) {
  return from_checkpoint(Checkpoint::load(path));
}

void Adam::step(const std::vector<Tensor*>& params,
                const std::vector<const Tensor*>& grads) {
  FM_CHECK(params.size() == grads.size(), Error, "adam: ", params.size(),
           " params vs ", grads.size(), " grads");
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(Tensor::zeros(p->shape()));
      v_.push_back(Tensor::zeros(p->shape()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    FM_CHECK(p.same_shape(g), ShapeError, "adam: grad shape ", g.shape_str(),
             " != param shape ", p.shape_str());
    for (std::int64_t j = 0; j < p.numel(); ++j) {
      const double gj = g[j] + cfg_.weight_decay * p[j];
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * gj;
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

TrainResult train(VectorFieldModel& model, const PathSchedule& schedule,
                  const BatchSampler& sample_x1, const TrainConfig& cfg,
                  Pcg64& batch_rng, std::ostream* loss_csv) {
  FM_CHECK(cfg.steps >= 0 && cfg.batch >= 1, ConfigError,
           "train: steps must be >= 0 and batch >= 1");
  if (cfg.objective == ObjectiveKind::cfm)
    FM_CHECK(model.config().parameterization == Parameterization::vector_field,
             ConfigError, "cfm objective requires vector_field parameterization");
  if (cfg.objective == ObjectiveKind::score_matching ||
      cfg.objective == ObjectiveKind::score_flow)
    FM_CHECK(model.config().parameterization == Parameterization::score,
             ConfigError, to_string(cfg.objective),
             " objective requires score parameterization");
  if (cfg.objective == ObjectiveKind::ddpm)
    FM_CHECK(model.config().parameterization == Parameterization::noise,
             ConfigError, "ddpm objective requires noise parameterization");

  const int d = model.dim();
  const double t_max = schedule.max_time();
  Adam adam(cfg.adam);
  TrainResult result;
  result.loss_trace.reserve(cfg.steps);

  if (loss_csv) *loss_csv << "step,loss,wall_time_s,grad_norm\n";
  const auto t_start = std::chrono::steady_clock::now();

  // rollback snapshot in case of a non-finite loss
  Checkpoint last_good = model.to_checkpoint();
  int last_good_step = 0;

  const auto save_step_checkpoint = [&](int step) {
    if (cfg.out_dir.empty()) return;
    std::filesystem::create_directories(cfg.out_dir);
    model.save(cfg.out_dir + "/checkpoint_" + std::to_string(step) + ".json");
  };

  Tensor x1 = Tensor::zeros({cfg.batch, d});
  Tensor x0 = Tensor::zeros({cfg.batch, d});
  std::vector<double> t(cfg.batch);

  for (int step = 0; step < cfg.steps; ++step) {
    sample_x1(batch_rng, x1);
    batch_rng.fill_normal(x0.span());
    for (int b = 0; b < cfg.batch; ++b) {
      const double u = batch_rng.next_double();
      const double t01 =
          cfg.stratified_t ? (static_cast<double>(b) + u) / cfg.batch : u;
      t[b] = t01 * t_max;
    }

    Tape tape;
    LossOnTape loss = [&] {
      switch (cfg.objective) {
        case ObjectiveKind::cfm:
          return cfm_loss(tape, model, schedule, x1, x0, t);
        case ObjectiveKind::score_matching:
          return sm_loss(tape, model, schedule, x1, x0, t);
        case ObjectiveKind::score_flow:
          return scoreflow_loss(tape, model, schedule, x1, x0, t);
        case ObjectiveKind::ddpm:
          return ddpm_loss(tape, model, schedule, x1, x0, t);
      }
      throw ConfigError("unhandled objective");
    }();

    const double loss_value = tape.value(loss.loss).value();
    if (!std::isfinite(loss_value)) {
      model = VectorFieldModel::from_checkpoint(last_good);
      result.aborted = true;
      result.abort_step = step;
      result.final_loss = loss_value;
      return result;
    }

    Gradients grads = tape.backward(loss.loss);
    double grad_norm_sq = 0.0;
    auto params = model.parameters();
    std::vector<const Tensor*> grad_ptrs;
    bool grads_finite = true;
    for (std::size_t l = 0; l < loss.binding.weights.size(); ++l) {
      const Tensor& gw = grads.get(loss.binding.weights[l]);
      const Tensor& gb = grads.get(loss.binding.biases[l]);
      grad_ptrs.push_back(&gw);
      grad_ptrs.push_back(&gb);
      grad_norm_sq += kernels::sum_sq(gw.data(), gw.numel());
      grad_norm_sq += kernels::sum_sq(gb.data(), gb.numel());
      grads_finite = grads_finite && gw.all_finite() && gb.all_finite();
    }
    if (!grads_finite) {
      model = VectorFieldModel::from_checkpoint(last_good);
      result.aborted = true;
      result.abort_step = step;
      result.final_loss = loss_value;
      return result;
    }

    adam.step(params, grad_ptrs);
    for (const Tensor* p : params) {
      if (!p->all_finite()) {
        model = VectorFieldModel::from_checkpoint(last_good);
        result.aborted = true;
        result.abort_step = step;
        result.final_loss = loss_value;
        return result;
      }
    }

    result.loss_trace.push_back(loss_value);
    result.final_loss = loss_value;
    if (loss_csv) {
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
              .count();
      *loss_csv << step << "," << loss_value << "," << wall << ","
                << std::sqrt(grad_norm_sq) << "\n";
    }

    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      last_good = model.to_checkpoint();
      last_good_step = step + 1;
      save_step_checkpoint(step + 1);
    }
  }
  (void)last_good_step;
  return result;
}

}  // namespace flowmatch
