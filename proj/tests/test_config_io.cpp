// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <cstring>
#include <fstream>

#include "doctest.h"
#include "flowmatch/checkpoint.hpp"
#include "flowmatch/config.hpp"
#include "flowmatch/raster.hpp"

using namespace flowmatch;

TEST_CASE("run config round trips exactly") {
  RunConfig cfg;
  cfg.seed = 1234;
  cfg.dataset = ToyKind::eight_gaussians;
  cfg.schedule = PathSchedule::vp(0.2, 18.0);
  cfg.model.hidden = {32, 32};
  cfg.model.activation = Activation::tanh;
  cfg.objective = ObjectiveKind::cfm;
  cfg.train.steps = 777;
  cfg.train.batch = 128;
  cfg.train.adam.lr = 5e-4;
  cfg.solver.method = SolverCfg::Method::midpoint;
  cfg.solver.steps = 4;

  const nlohmann::json j1 = cfg.to_json();
  const RunConfig loaded = RunConfig::from_json(j1);
  const nlohmann::json j2 = loaded.to_json();
  CHECK(j1.dump() == j2.dump());
  CHECK(loaded.schedule.kind == PathKind::vp);
  CHECK(loaded.schedule.beta_max == 18.0);
  CHECK(loaded.train.adam.lr == 5e-4);
}

TEST_CASE("config errors name the offending key") {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["objectivve"] = "cfm";  // typo
  CHECK_THROWS_WITH_AS(RunConfig::from_json(j), doctest::Contains("objectivve"),
                       ConfigError);

  nlohmann::json bad_solver = RunConfig().to_json();
  bad_solver["solver"]["atol"] = -1.0;
  CHECK_THROWS_WITH_AS(RunConfig::from_json(bad_solver), doctest::Contains("atol"),
                       ConfigError);

  nlohmann::json bad_sched = RunConfig().to_json();
  bad_sched["schedule"] = {{"kind", "brownian"}};
  CHECK_THROWS_WITH_AS(RunConfig::from_json(bad_sched), doctest::Contains("brownian"),
                       ConfigError);
}

TEST_CASE("schedule json keys are stable") {
  const PathSchedule ot = PathSchedule::ot(3e-4);
  const nlohmann::json j = ot.to_json();
  CHECK(j.at("kind") == "ot");
  CHECK(j.at("sigma_min") == 3e-4);
  const PathSchedule back = PathSchedule::from_json(j);
  CHECK(back.sigma_min == 3e-4);

  const nlohmann::json jvp = PathSchedule::vp(0.15, 19.0).to_json();
  CHECK(jvp.at("beta_min") == 0.15);
  CHECK(jvp.at("beta_max") == 19.0);
  CHECK(jvp.at("t_eps") == 1e-5);

  const nlohmann::json jve = PathSchedule::ve(0.02, 40.0).to_json();
  CHECK(jve.at("sigma_small") == 0.02);
  CHECK(jve.at("sigma_large") == 40.0);
}

TEST_CASE("checkpoint container round trips awkward doubles bitwise") {
  Checkpoint ck;
  ck.meta["note"] = "fixture";
  Tensor t = Tensor::matrix(2, 3, {0.1, 1.0 / 3.0, 1e-300, 6.02214076e23,
                                   -0.0, 2.2250738585072014e-308});
  ck.tensors.emplace("w", t);
  const std::string path = "test_ckpt_container.json";
  ck.save(path);
  const Checkpoint back = Checkpoint::load(path);
  std::remove(path.c_str());
  REQUIRE(back.tensors.count("w") == 1);
  const Tensor& bt = back.tensors.at("w");
  REQUIRE(bt.shape() == t.shape());
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    // bitwise comparison (distinguishes -0.0 from 0.0)
    const double a = bt[i], b = t[i];
    CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
  }
  CHECK(back.meta.at("note") == "fixture");
}

TEST_CASE("checkpoint rejects corrupt files") {
  const std::string path = "test_ckpt_corrupt.json";
  {
    std::ofstream os(path);
    os << "{\"format\": \"something-else\", \"version\": 1, \"tensors\": {}}";
  }
  CHECK_THROWS_AS(Checkpoint::load(path), ConfigError);
  {
    std::ofstream os(path);
    os << "not json";
  }
  CHECK_THROWS_AS(Checkpoint::load(path), ConfigError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(Checkpoint::load("does_not_exist.json"), ConfigError);
}

TEST_CASE("pgm raster of a centered gaussian peaks at the center") {
  const GrayImage img = rasterize(
      [](double x, double y) { return std::exp(-0.5 * (x * x + y * y)); }, 33, 33,
      -3.0, 3.0, -3.0, 3.0);
  CHECK(img.pixels[16 * 33 + 16] == 255);
  CHECK(img.pixels[0] < 10);

  const std::string path = "test_raster.pgm";
  write_pgm(path, img);
  std::ifstream is(path, std::ios::binary);
  std::string magic;
  int w, h, maxval;
  is >> magic >> w >> h >> maxval;
  CHECK(magic == "P5");
  CHECK(w == 33);
  CHECK(h == 33);
  CHECK(maxval == 255);
  is.get();  // single whitespace after header
  std::vector<char> payload(33 * 33);
  is.read(payload.data(), payload.size());
  CHECK(is.gcount() == 33 * 33);
  std::remove(path.c_str());
}

TEST_CASE("ppm overlay writer") {
  GrayImage g;
  g.width = 8;
  g.height = 8;
  g.pixels.assign(64, 0);
  RgbImage img = RgbImage::from_gray(g);
  draw_polyline(img, {{-1.0, -1.0}, {1.0, 1.0}}, -1.0, 1.0, -1.0, 1.0, 255, 0, 0);
  // the diagonal got painted
  CHECK(img.pixels[3 * (7 * 8 + 0)] == 255);      // bottom-left
  CHECK(img.pixels[3 * (0 * 8 + 7)] == 255);      // top-right
  const std::string path = "test_raster.ppm";
  write_ppm(path, img);
  std::ifstream is(path, std::ios::binary);
  std::string magic;
  is >> magic;
  CHECK(magic == "P6");
  std::remove(path.c_str());
}
