// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0

// flowmatch CLI: train, sample, nll, trajectories, raster, verify.
// Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 verification failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "flowmatch/config.hpp"
#include "flowmatch/dataset.hpp"
#include "flowmatch/kernels.hpp"
#include "flowmatch/model.hpp"
#include "flowmatch/objectives.hpp"
#include "flowmatch/ode.hpp"
#include "flowmatch/oracle.hpp"
#include "flowmatch/raster.hpp"
#include "flowmatch/verify.hpp"

namespace fm = flowmatch;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitVerify = 4;

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

struct LoadedModel {
  fm::VectorFieldModel model;
  fm::PathSchedule schedule;
};

LoadedModel load_model(const std::string& checkpoint_path) {
  const fm::Checkpoint ck = fm::Checkpoint::load(checkpoint_path);
  fm::PathSchedule schedule = fm::PathSchedule::ot();
  if (ck.meta.contains("schedule"))
    schedule = fm::PathSchedule::from_json(ck.meta.at("schedule"));
  return {fm::VectorFieldModel::from_checkpoint(ck), schedule};
}

int fixed_arity(fm::SolverCfg::Method m) {
  switch (m) {
    case fm::SolverCfg::Method::euler: return 1;
    case fm::SolverCfg::Method::midpoint: return 2;
    case fm::SolverCfg::Method::rk4: return 4;
    default: return 0;
  }
}

// batched fixed-step sampler (one RHS evaluation per sample per stage)
fm::Tensor sample_fixed_batch(const fm::ModelVectorField& field,
                              const fm::Tensor& x0, fm::SolverCfg::Method method,
                              int steps, double t_end) {
  fm::Tensor y = x0;
  fm::Tensor k1 = fm::Tensor::zeros(x0.shape());
  fm::Tensor k2 = fm::Tensor::zeros(x0.shape());
  fm::Tensor k3 = fm::Tensor::zeros(x0.shape());
  fm::Tensor k4 = fm::Tensor::zeros(x0.shape());
  fm::Tensor tmp = fm::Tensor::zeros(x0.shape());
  const double h = t_end / steps;
  for (int s = 0; s < steps; ++s) {
    const double t = s * h;
    switch (method) {
      case fm::SolverCfg::Method::euler:
        field.eval_batch(t, y, k1);
        for (std::int64_t i = 0; i < y.numel(); ++i) y[i] += h * k1[i];
        break;
      case fm::SolverCfg::Method::midpoint:
        field.eval_batch(t, y, k1);
        for (std::int64_t i = 0; i < y.numel(); ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        field.eval_batch(t + 0.5 * h, tmp, k2);
        for (std::int64_t i = 0; i < y.numel(); ++i) y[i] += h * k2[i];
        break;
      case fm::SolverCfg::Method::rk4:
        field.eval_batch(t, y, k1);
        for (std::int64_t i = 0; i < y.numel(); ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        field.eval_batch(t + 0.5 * h, tmp, k2);
        for (std::int64_t i = 0; i < y.numel(); ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
        field.eval_batch(t + 0.5 * h, tmp, k3);
        for (std::int64_t i = 0; i < y.numel(); ++i) tmp[i] = y[i] + h * k3[i];
        field.eval_batch(t + h, tmp, k4);
        for (std::int64_t i = 0; i < y.numel(); ++i)
          y[i] += (h / 6.0) * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        break;
      default:
        throw fm::ConfigError("fixed-step sampler got an adaptive method");
    }
  }
  return y;
}

void write_samples_csv(const std::string& path, const fm::Tensor& samples,
                       const std::vector<std::int64_t>& nfe) {
  std::ofstream os(path);
  FM_CHECK(os.good(), fm::ConfigError, "cannot write ", path);
  os << "sample_id";
  for (std::int64_t c = 0; c < samples.cols(); ++c) os << ",x" << c;
  os << ",nfe\n";
  os.precision(17);
  for (std::int64_t r = 0; r < samples.rows(); ++r) {
    os << r;
    for (std::int64_t c = 0; c < samples.cols(); ++c) os << "," << samples.at(r, c);
    os << "," << nfe[r] << "\n";
  }
}

int cmd_train(const std::string& config_path, std::uint64_t* seed_override,
              std::string* out_override, int* steps_override) {
  fm::RunConfig cfg = fm::RunConfig::load(config_path);
  if (seed_override) cfg.seed = *seed_override;
  if (out_override) cfg.out_dir = *out_override;
  if (steps_override) cfg.train.steps = *steps_override;

  fs::create_directories(cfg.out_dir);
  cfg.save(cfg.out_dir + "/config.json");

  const fm::ToyDataset data(cfg.dataset);
  const fm::BatchSampler sampler = [&data](fm::Pcg64& rng, fm::Tensor& x1) {
    data.sample(rng, x1);
  };
  fm::Pcg64 init_rng = fm::Pcg64::substream(cfg.seed, fm::Substream::init);
  fm::VectorFieldModel model(cfg.model, init_rng);
  fm::Pcg64 batch_rng = fm::Pcg64::substream(cfg.seed, fm::Substream::batch);

  std::ofstream loss_csv(cfg.out_dir + "/loss.csv");
  cfg.train.out_dir = cfg.out_dir;
  const fm::TrainResult result =
      fm::train(model, cfg.schedule, sampler, cfg.train, batch_rng, &loss_csv);
  if (result.aborted) {
    std::cerr << "training aborted at step " << result.abort_step
              << " (non-finite loss); last good checkpoint kept\n";
    model.save(cfg.out_dir + "/model.json", {{"schedule", cfg.schedule.to_json()},
                                             {"seed", cfg.seed}});
    return kExitNumeric;
  }
  model.save(cfg.out_dir + "/model.json",
             {{"schedule", cfg.schedule.to_json()}, {"seed", cfg.seed}});
  std::cout << "trained " << cfg.train.steps << " steps, final loss "
            << result.final_loss << ", checkpoint " << cfg.out_dir
            << "/model.json\n";
  return kExitOk;
}

int cmd_sample(const std::string& checkpoint, int n, const std::string& method_str,
               int nfe_budget, const std::string& nfe_sweep, double atol,
               double rtol, std::uint64_t seed, const std::string& out_dir) {
  const LoadedModel lm = load_model(checkpoint);
  const fm::ModelVectorField field(lm.model, lm.schedule);
  fs::create_directories(out_dir);

  const auto method = fm::SolverCfg::method_from_string(method_str);
  std::vector<int> budgets;
  if (!nfe_sweep.empty())
    budgets = parse_int_list(nfe_sweep);
  else if (nfe_budget > 0)
    budgets = {nfe_budget};

  fm::Pcg64 noise = fm::Pcg64::substream(seed, fm::Substream::batch);
  fm::Tensor x0 = fm::Tensor::zeros({n, lm.model.dim()});
  noise.fill_normal(x0.span());

  if (method == fm::SolverCfg::Method::dopri5) {
    FM_CHECK(budgets.empty(), fm::ConfigError,
             "--nfe/--nfe-sweep apply to fixed-step methods only");
    fm::SolverCfg cfg;
    cfg.method = method;
    cfg.atol = atol;
    cfg.rtol = rtol;
    fm::Tensor samples = fm::Tensor::zeros(x0.shape());
    std::vector<std::int64_t> nfe(n, 0);
    double mean_nfe = 0.0;
    int failures = 0;
    for (int i = 0; i < n; ++i) {
      fm::ConstSpan xi(x0.data() + i * lm.model.dim(), lm.model.dim());
      const fm::Rhs rhs = [&](double t, fm::ConstSpan y, fm::Span dy) {
        field.eval(t, y, dy);
      };
      const fm::SolveReport rep = fm::integrate(rhs, xi, 0.0, 1.0, cfg);
      if (!rep.ok) {
        ++failures;
        std::cerr << "sample " << i << " solver failure: " << rep.error << "\n";
      }
      for (int c = 0; c < lm.model.dim(); ++c) samples.at(i, c) = rep.y[c];
      nfe[i] = rep.nfe;
      mean_nfe += static_cast<double>(rep.nfe) / n;
    }
    write_samples_csv(out_dir + "/samples.csv", samples, nfe);
    std::cout << "dopri5 atol=" << atol << " rtol=" << rtol << " mean NFE "
              << mean_nfe << " (" << failures << " failures) -> " << out_dir
              << "/samples.csv\n";
    return kExitOk;
  }

  const int arity = fixed_arity(method);
  if (budgets.empty()) budgets = {20 * arity};
  for (int budget : budgets) {
    FM_CHECK(budget % arity == 0, fm::ConfigError, "NFE budget ", budget,
             " not divisible by method arity ", arity);
    const int steps = budget / arity;
    const fm::Tensor samples = sample_fixed_batch(field, x0, method, steps, 1.0);
    const std::vector<std::int64_t> nfe(n, budget);
    const std::string path =
        out_dir + "/samples_nfe" + std::to_string(budget) + ".csv";
    write_samples_csv(path, samples, nfe);
    std::cout << method_str << " NFE=" << budget << " -> " << path << "\n";
  }
  return kExitOk;
}

int cmd_nll(const std::string& checkpoint, const std::string& dataset_kind, int n,
            const std::string& mode_str, int probes, const std::string& probe_dist,
            const std::string& k_sweep, double atol, double rtol,
            std::uint64_t seed, const std::string& out_dir) {
  const LoadedModel lm = load_model(checkpoint);
  const fm::ModelVectorField field(lm.model, lm.schedule);
  fs::create_directories(out_dir);

  fm::LikelihoodCfg cfg;
  cfg.solver.method = fm::SolverCfg::Method::dopri5;
  cfg.solver.atol = atol;
  cfg.solver.rtol = rtol;
  cfg.mode = mode_str == "exact" ? fm::DivergenceMode::exact
                                 : fm::DivergenceMode::hutchinson;
  if (mode_str != "exact" && mode_str != "hutchinson")
    throw fm::ConfigError("--mode must be exact or hutchinson, got '" + mode_str + "'");
  cfg.n_probes = probes;
  if (probe_dist == "rademacher")
    cfg.probe = fm::ProbeDistribution::rademacher;
  else if (probe_dist == "gaussian")
    cfg.probe = fm::ProbeDistribution::gaussian;
  else
    throw fm::ConfigError("--probe-dist must be rademacher or gaussian, got '" +
                          probe_dist + "'");

  if (!k_sweep.empty()) {
    // dequantized BPD table on the quantized synthetic fixture
    const auto ks = parse_int_list(k_sweep);
    fm::Pcg64 data_rng = fm::Pcg64::substream(seed, fm::Substream::data);
    const auto points = fm::quantized_synthetic(lm.model.dim(), n, data_rng);
    const fm::LogDensityFn logp = [&](fm::ConstSpan y) {
      fm::Pcg64 probe_rng = fm::Pcg64::substream(seed, fm::Substream::probes);
      const fm::LogLikelihoodResult r = fm::log_likelihood(
          field, y, cfg, cfg.mode == fm::DivergenceMode::hutchinson ? &probe_rng : nullptr,
          lm.schedule.max_time());
      FM_CHECK(r.ok, fm::NumericError, "likelihood solve failed: ", r.error);
      return r.logp;
    };
    std::ofstream os(out_dir + "/bpd_k.csv");
    os << "model";
    for (int k : ks) os << ",K=" << k;
    os << "\n" << checkpoint;
    std::cout << "BPD (" << n << " points):";
    for (int k : ks) {
      fm::Pcg64 dequant = fm::Pcg64::substream(seed, fm::Substream::dequant);
      double acc = 0.0;
      for (const auto& px : points) acc += fm::bpd(logp, px, k, dequant).bpd;
      const double mean = acc / points.size();
      os << "," << mean;
      std::cout << "  K=" << k << ": " << mean;
    }
    os << "\n";
    std::cout << " -> " << out_dir << "/bpd_k.csv\n";
    return kExitOk;
  }

  const fm::ToyDataset data(fm::toy_kind_from_string(dataset_kind));
  fm::Pcg64 data_rng = fm::Pcg64::substream(seed, fm::Substream::data);
  const fm::Tensor points = data.sample(data_rng, n);
  fm::Pcg64 probe_rng = fm::Pcg64::substream(seed, fm::Substream::probes);

  std::ofstream os(out_dir + "/nll.csv");
  os << "example_id,logp,nfe,mode,seed\n";
  os.precision(17);
  double mean = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    fm::ConstSpan x(points.data() + 2 * i, 2);
    const fm::LogLikelihoodResult r = fm::log_likelihood(
        field, x, cfg,
        cfg.mode == fm::DivergenceMode::hutchinson ? &probe_rng : nullptr,
        lm.schedule.max_time());
    FM_CHECK(r.ok, fm::NumericError, "likelihood solve failed at example ", i,
             ": ", r.error);
    os << i << "," << r.logp << "," << r.nfe << "," << mode_str << "," << seed
       << "\n";
    const double nll = -r.logp;
    const double delta = nll - mean;
    mean += delta / (i + 1);
    m2 += delta * (nll - mean);
  }
  const double stderr_mean =
      n > 1 ? std::sqrt(m2 / (n - 1)) / std::sqrt(double(n)) : 0.0;
  std::cout << "mean NLL " << mean << " +- " << stderr_mean << " nats ("
            << mean / lm.model.dim() << " nats/dim), " << n << " examples -> "
            << out_dir << "/nll.csv\n";
  return kExitOk;
}

int cmd_trajectories(const std::string& checkpoint, const std::string& schedule_str,
                     const std::string& dataset_kind, int n,
                     const std::string& times_str, std::uint64_t seed,
                     const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<double> times = times_str.empty()
                                  ? std::vector<double>{0.0, 0.125, 0.25, 0.375, 0.5,
                                                        0.625, 0.75, 0.875, 1.0}
                                  : parse_double_list(times_str);
  std::sort(times.begin(), times.end());

  fm::Pcg64 noise = fm::Pcg64::substream(seed, fm::Substream::batch);
  fm::Pcg64 data_rng = fm::Pcg64::substream(seed, fm::Substream::data);

  std::ofstream os(out_dir + "/trajectories.csv");
  os << "sample_id,t,x0,x1\n";
  os.precision(17);

  fm::SolverCfg cfg;
  cfg.method = fm::SolverCfg::Method::dopri5;

  std::unique_ptr<LoadedModel> lm;
  if (!checkpoint.empty())
    lm = std::make_unique<LoadedModel>(load_model(checkpoint));

  for (int i = 0; i < n; ++i) {
    std::vector<double> x0(2);
    for (auto& v : x0) v = noise.next_normal();

    std::unique_ptr<fm::VectorField> field;
    if (lm) {
      field = std::make_unique<fm::ModelVectorField>(lm->model, lm->schedule);
    } else {
      const fm::PathSchedule sch = fm::PathSchedule::from_json(
          {{"kind", schedule_str}});
      const fm::ToyDataset data(fm::toy_kind_from_string(dataset_kind));
      const fm::Tensor x1t = data.sample(data_rng, 1);
      field = std::make_unique<fm::ConditionalPathField>(
          sch, std::vector<double>{x1t[0], x1t[1]});
    }

    const double t_end = times.back() > 0 ? std::min(times.back(), 1.0) : 1.0;
    const fm::Rhs rhs = [&](double t, fm::ConstSpan y, fm::Span dy) {
      field->eval(t, y, dy);
    };
    const fm::SolveReport rep = fm::integrate(rhs, x0, 0.0, t_end, cfg, times);
    if (!rep.ok) {
      std::cerr << "trajectory " << i << " solver failure: " << rep.error << "\n";
      continue;
    }
    if (!times.empty() && times.front() <= 0.0)
      os << i << "," << 0.0 << "," << x0[0] << "," << x0[1] << "\n";
    for (std::size_t kdx = 0; kdx < rep.dense_times.size(); ++kdx) {
      if (rep.dense_times[kdx] <= 0.0) continue;  // already emitted
      os << i << "," << rep.dense_times[kdx] << "," << rep.dense_states[kdx][0]
         << "," << rep.dense_states[kdx][1] << "\n";
    }
  }
  std::cout << "wrote " << out_dir << "/trajectories.csv\n";
  return kExitOk;
}

int cmd_raster(const std::string& checkpoint, const std::string& oracle_kind,
               int oracle_points, const std::string& times_str, int res,
               int overlay, double atol, double rtol, std::uint64_t seed,
               const std::string& out_dir) {
  fs::create_directories(out_dir);
  const std::vector<double> times =
      times_str.empty() ? std::vector<double>{0.0, 0.5, 1.0}
                        : parse_double_list(times_str);
  const double lo = -3.0, hi = 3.0;

  if (!oracle_kind.empty()) {
    const fm::ToyDataset data(fm::toy_kind_from_string(oracle_kind));
    fm::Pcg64 data_rng = fm::Pcg64::substream(seed, fm::Substream::data);
    const fm::Tensor pts = data.sample(data_rng, oracle_points);
    std::vector<std::vector<double>> points;
    for (std::int64_t r = 0; r < pts.rows(); ++r)
      points.push_back({pts.at(r, 0), pts.at(r, 1)});
    const fm::MixtureOracle oracle =
        fm::MixtureOracle::uniform(points, fm::PathSchedule::ot(1e-2));
    for (double t : times) {
      const double tc = std::min(t, oracle.schedule().max_time());
      const fm::GrayImage img = fm::rasterize(
          [&](double x, double y) {
            const std::vector<double> p = {x, y};
            return oracle.marginal_density(tc, p);
          },
          res, res, lo, hi, lo, hi);
      std::ostringstream name;
      name << out_dir << "/oracle_t" << t << ".pgm";
      fm::write_pgm(name.str(), img);
      std::cout << "wrote " << name.str() << "\n";

      if (overlay > 0) {
        // sample paths of the oracle's marginal field over the density
        fm::RgbImage rgb = fm::RgbImage::from_gray(img);
        fm::Pcg64 noise = fm::Pcg64::substream(seed, fm::Substream::batch);
        fm::SolverCfg scfg;
        scfg.method = fm::SolverCfg::Method::dopri5;
        const std::vector<double> dts = {0.0, 0.125, 0.25, 0.375, 0.5,
                                         0.625, 0.75, 0.875, 1.0};
        for (int i = 0; i < overlay; ++i) {
          std::vector<double> x0 = {noise.next_normal(), noise.next_normal()};
          const fm::Rhs rhs = [&](double tt, fm::ConstSpan y, fm::Span dy) {
            oracle.marginal_vf(std::min(tt, oracle.schedule().max_time()), y, dy);
          };
          const fm::SolveReport rep = fm::integrate(rhs, x0, 0.0, 1.0, scfg, dts);
          if (!rep.ok) continue;
          std::vector<std::pair<double, double>> poly = {{x0[0], x0[1]}};
          for (const auto& st : rep.dense_states) poly.emplace_back(st[0], st[1]);
          fm::draw_polyline(rgb, poly, lo, hi, lo, hi, 255, 40, 40);
        }
        std::ostringstream pname;
        pname << out_dir << "/oracle_t" << t << "_paths.ppm";
        fm::write_ppm(pname.str(), rgb);
        std::cout << "wrote " << pname.str() << "\n";
      }
    }
    return kExitOk;
  }

  FM_CHECK(!checkpoint.empty(), fm::ConfigError,
           "raster needs --checkpoint or --oracle");
  const LoadedModel lm = load_model(checkpoint);
  FM_CHECK(lm.model.dim() == 2, fm::ConfigError,
           "density rasters are 2-D only, model has dim ", lm.model.dim());
  const fm::ModelVectorField field(lm.model, lm.schedule);
  fm::LikelihoodCfg cfg;
  cfg.solver.atol = atol;
  cfg.solver.rtol = rtol;
  cfg.mode = fm::DivergenceMode::exact;
  for (double t : times) {
    const double tc = std::clamp(t, 1e-3, lm.schedule.max_time());
    const fm::GrayImage img = fm::rasterize(
        [&](double x, double y) {
          const std::vector<double> p = {x, y};
          const fm::LogLikelihoodResult r =
              fm::log_likelihood(field, p, cfg, nullptr, tc);
          return r.ok ? std::exp(r.logp) : 0.0;
        },
        res, res, lo, hi, lo, hi);
    std::ostringstream name;
    name << out_dir << "/model_t" << t << ".pgm";
    fm::write_pgm(name.str(), img);
    std::cout << "wrote " << name.str() << "\n";
  }
  return kExitOk;
}

int cmd_verify(std::uint64_t seed, const std::string& mutation_str,
               const std::string& out_path, const std::string& residual_csv) {
  const fm::Mutation mutation = fm::mutation_from_string(mutation_str);
  const fm::VerifyReport report = fm::run_verify(seed, mutation);
  for (const auto& c : report.checks) {
    std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name
              << "  measured=" << c.measured << " tolerance=" << c.tolerance
              << "  (" << c.seconds << "s)\n";
  }
  std::cout << (report.all_pass ? "all checks passed" : "CHECKS FAILED") << " in "
            << report.seconds << "s\n";
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    os << report.to_json().dump(2) << "\n";
    std::cout << "report -> " << out_path << "\n";
  }
  if (!residual_csv.empty()) {
    std::vector<std::pair<double, fm::ResidualReport>> rows;
    for (const auto& sch : {fm::PathSchedule::ot(1e-5), fm::PathSchedule::vp()}) {
      const fm::MixtureOracle oracle = fm::MixtureOracle::uniform(
          {{1.0, 0.0}, {-1.0, 0.0}}, sch);
      for (int npts : {65, 129}) {
        fm::GridSpec g;
        g.lo = {-2.0, -2.0};
        g.hi = {2.0, 2.0};
        g.n = {npts, npts};
        const double dt = npts == 65 ? 5e-4 : 2.5e-4;
        g.times = {0.2 - 2 * dt, 0.2 - dt, 0.2, 0.2 + dt, 0.2 + 2 * dt};
        rows.emplace_back(0.2, fm::continuity_residual(oracle, g));
      }
    }
    std::ofstream os(residual_csv);
    fm::write_residual_csv(os, rows);
    std::cout << "residuals -> " << residual_csv << "\n";
  }
  return report.all_pass ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "flowmatch: conditional-path generative flows at desk scale\n"
      "exit codes: 0 ok, 2 config error, 3 numeric failure, 4 verification failure"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, out_dir = "out", dataset = "checkerboard";
  std::string method = "dopri5", mode = "exact", nfe_sweep, k_sweep, times;
  std::string mutation = "none", report_path, residual_csv, schedule = "ot";
  std::string oracle_kind;
  std::string probe_dist = "rademacher";
  std::uint64_t seed = 7;
  bool seed_set = false, out_set = false, steps_set = false;
  int n = 256, nfe = 0, probes = 1, steps = 0, res = 128, oracle_points = 8;
  int overlay = 0;
  double atol = 1e-5, rtol = 1e-5;

  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("--config", config_path, "run config JSON")->required();
  train_cmd->add_option("--seed", seed, "override config seed")
      ->each([&](const std::string&) { seed_set = true; });
  train_cmd->add_option("--out", out_dir, "override output directory")
      ->each([&](const std::string&) { out_set = true; });
  train_cmd->add_option("--steps", steps, "override training steps")
      ->each([&](const std::string&) { steps_set = true; });

  auto* sample_cmd = app.add_subcommand("sample", "draw samples from a checkpoint");
  sample_cmd->add_option("--checkpoint", checkpoint)->required();
  sample_cmd->add_option("--n", n, "number of samples");
  sample_cmd->add_option("--solver", method, "euler|midpoint|rk4|dopri5");
  sample_cmd->add_option("--nfe", nfe, "fixed NFE budget (fixed-step methods)");
  sample_cmd->add_option("--nfe-sweep", nfe_sweep, "comma list, e.g. 4,8,10,20");
  sample_cmd->add_option("--atol", atol);
  sample_cmd->add_option("--rtol", rtol);
  sample_cmd->add_option("--seed", seed);
  sample_cmd->add_option("--out", out_dir);

  auto* nll_cmd = app.add_subcommand("nll", "log-likelihood / BPD evaluation");
  nll_cmd->add_option("--checkpoint", checkpoint)->required();
  nll_cmd->add_option("--dataset", dataset, "toy dataset for held-out points");
  nll_cmd->add_option("--n", n, "number of evaluation points");
  nll_cmd->add_option("--mode", mode, "exact|hutchinson");
  nll_cmd->add_option("--probes", probes, "hutchinson probes per solve");
  nll_cmd->add_option("--probe-dist", probe_dist, "rademacher|gaussian");
  nll_cmd->add_option("--k-dequant", k_sweep,
                      "comma list of K values: emit dequantized BPD table");
  nll_cmd->add_option("--atol", atol);
  nll_cmd->add_option("--rtol", rtol);
  nll_cmd->add_option("--seed", seed);
  nll_cmd->add_option("--out", out_dir);

  auto* traj_cmd = app.add_subcommand("trajectories", "export sample paths as CSV");
  traj_cmd->add_option("--checkpoint", checkpoint, "model checkpoint (or use --schedule)");
  traj_cmd->add_option("--schedule", schedule, "conditional path: ot|vp|ve");
  traj_cmd->add_option("--dataset", dataset, "dataset for x1 draws in schedule mode");
  traj_cmd->add_option("--n", n, "number of paths");
  traj_cmd->add_option("--times", times, "comma list of export times");
  traj_cmd->add_option("--seed", seed);
  traj_cmd->add_option("--out", out_dir);

  auto* raster_cmd = app.add_subcommand("raster", "density heatmaps (PGM)");
  raster_cmd->add_option("--checkpoint", checkpoint, "model checkpoint");
  raster_cmd->add_option("--oracle", oracle_kind, "oracle over dataset draws");
  raster_cmd->add_option("--oracle-points", oracle_points);
  raster_cmd->add_option("--times", times, "comma list of times");
  raster_cmd->add_option("--res", res, "pixels per side");
  raster_cmd->add_option("--overlay", overlay, "draw N sample paths (PPM output)");
  raster_cmd->add_option("--atol", atol);
  raster_cmd->add_option("--rtol", rtol);
  raster_cmd->add_option("--seed", seed);
  raster_cmd->add_option("--out", out_dir);

  auto* verify_cmd = app.add_subcommand("verify", "run the numerical check suite");
  verify_cmd->add_option("--seed", seed);
  verify_cmd->add_option("--mutation", mutation,
                         "seeded fault: none|ot-vf-sign|constant-drift|reversal-sign");
  verify_cmd->add_option("--out", report_path, "write JSON report here");
  verify_cmd->add_option("--residual-csv", residual_csv,
                         "write continuity residual table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train_cmd->parsed())
      return cmd_train(config_path, seed_set ? &seed : nullptr,
                       out_set ? &out_dir : nullptr, steps_set ? &steps : nullptr);
    if (sample_cmd->parsed())
      return cmd_sample(checkpoint, n, method, nfe, nfe_sweep, atol, rtol, seed,
                        out_dir);
    if (nll_cmd->parsed())
      return cmd_nll(checkpoint, dataset, n, mode, probes, probe_dist, k_sweep,
                     atol, rtol, seed, out_dir);
    if (traj_cmd->parsed())
      return cmd_trajectories(checkpoint, schedule, dataset, n, times, seed,
                              out_dir);
    if (raster_cmd->parsed())
      return cmd_raster(checkpoint, oracle_kind, oracle_points, times, res,
                        overlay, atol, rtol, seed, out_dir);
    if (verify_cmd->parsed())
      return cmd_verify(seed, mutation, report_path, residual_csv);
  } catch (const fm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitConfig;
}
