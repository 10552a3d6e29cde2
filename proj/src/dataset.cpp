// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include "flowmatch/dataset.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace flowmatch {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kEightGaussSigma = 0.1;
constexpr double kEightGaussRadius = 2.0;
constexpr double kMoonNoise = 0.1;

// the 8 even-parity cells of the 4x4 partition of [-2,2]^2
constexpr int kCheckerCells[8][2] = {{0, 0}, {0, 2}, {1, 1}, {1, 3},
                                     {2, 0}, {2, 2}, {3, 1}, {3, 3}};
}  // namespace

std::string to_string(ToyKind k) {
  switch (k) {
    case ToyKind::checkerboard: return "checkerboard";
    case ToyKind::eight_gaussians: return "eight_gaussians";
    case ToyKind::two_moons: return "two_moons";
  }
  return "?";
}

ToyKind toy_kind_from_string(const std::string& s) {
  if (s == "checkerboard") return ToyKind::checkerboard;
  if (s == "eight_gaussians") return ToyKind::eight_gaussians;
  if (s == "two_moons") return ToyKind::two_moons;
  throw ConfigError("unknown dataset kind '" + s +
                    "' (expected checkerboard, eight_gaussians or two_moons)");
}

void ToyDataset::sample(Pcg64& rng, Tensor& out) const {
  FM_CHECK(out.rank() == 2 && out.cols() == 2, ShapeError,
           "toy sampler fills [n,2] tensors, got ", out.shape_str());
  const std::int64_t n = out.rows();
  switch (kind_) {
    case ToyKind::checkerboard:
      for (std::int64_t r = 0; r < n; ++r) {
        const auto cell = kCheckerCells[rng.next_below(8)];
        out.at(r, 0) = -2.0 + cell[0] + rng.next_double();
        out.at(r, 1) = -2.0 + cell[1] + rng.next_double();
      }
      break;
    case ToyKind::eight_gaussians:
      for (std::int64_t r = 0; r < n; ++r) {
        const auto kcomp = rng.next_below(8);
        const double ang = kTwoPi * static_cast<double>(kcomp) / 8.0;
        out.at(r, 0) = kEightGaussRadius * std::cos(ang) +
                       kEightGaussSigma * rng.next_normal();
        out.at(r, 1) = kEightGaussRadius * std::sin(ang) +
                       kEightGaussSigma * rng.next_normal();
      }
      break;
    case ToyKind::two_moons:
      for (std::int64_t r = 0; r < n; ++r) {
        const double theta = M_PI * rng.next_double();
        double x, y;
        if (rng.next_u64() & 1) {
          x = std::cos(theta);
          y = std::sin(theta);
        } else {
          x = 1.0 - std::cos(theta);
          y = 0.5 - std::sin(theta);
        }
        out.at(r, 0) = x + kMoonNoise * rng.next_normal();
        out.at(r, 1) = y + kMoonNoise * rng.next_normal();
      }
      break;
  }
  // moons have Gaussian jitter; fold the vanishing tail back into bounds so
  // the declared support is a hard guarantee
  if (kind_ == ToyKind::two_moons) {
    const auto b = support_bounds();
    for (std::int64_t r = 0; r < n; ++r) {
      out.at(r, 0) = std::clamp(out.at(r, 0), b[0], b[1]);
      out.at(r, 1) = std::clamp(out.at(r, 1), b[2], b[3]);
    }
  }
}

Tensor ToyDataset::sample(Pcg64& rng, int n) const {
  Tensor out = Tensor::zeros({n, 2});
  sample(rng, out);
  return out;
}

bool ToyDataset::has_exact_density() const {
  return kind_ == ToyKind::checkerboard || kind_ == ToyKind::eight_gaussians;
}

double ToyDataset::log_density(ConstSpan x) const {
  FM_CHECK(x.size() == 2, ShapeError, "toy density expects d=2 points");
  switch (kind_) {
    case ToyKind::checkerboard: {
      const double ix = std::floor(x[0] + 2.0);
      const double iy = std::floor(x[1] + 2.0);
      if (ix < 0 || ix > 3 || iy < 0 || iy > 3)
        return -std::numeric_limits<double>::infinity();
      if ((static_cast<long>(ix) + static_cast<long>(iy)) % 2 != 0)
        return -std::numeric_limits<double>::infinity();
      return -std::log(8.0);
    }
    case ToyKind::eight_gaussians: {
      double best = -std::numeric_limits<double>::infinity();
      double acc = 0.0;
      std::vector<double> logs(8);
      for (int kcomp = 0; kcomp < 8; ++kcomp) {
        const double ang = kTwoPi * kcomp / 8.0;
        const double dx = x[0] - kEightGaussRadius * std::cos(ang);
        const double dy = x[1] - kEightGaussRadius * std::sin(ang);
        logs[kcomp] = -std::log(8.0) -
                      std::log(kTwoPi * kEightGaussSigma * kEightGaussSigma) -
                      0.5 * (dx * dx + dy * dy) /
                          (kEightGaussSigma * kEightGaussSigma);
        best = std::max(best, logs[kcomp]);
      }
      for (double l : logs) acc += std::exp(l - best);
      return best + std::log(acc);
    }
    case ToyKind::two_moons:
      throw DomainError("two_moons has no closed-form density");
  }
  return 0.0;
}

double ToyDataset::density(ConstSpan x) const { return std::exp(log_density(x)); }

double ToyDataset::entropy() const {
  FM_CHECK(kind_ == ToyKind::checkerboard, DomainError,
           "entropy available in closed form for checkerboard only");
  return std::log(8.0);
}

std::array<double, 4> ToyDataset::support_bounds() const {
  switch (kind_) {
    case ToyKind::checkerboard:
      return {-2.0, 2.0, -2.0, 2.0};
    case ToyKind::eight_gaussians:
      // centers at radius 2 plus a generous jitter margin
      return {-3.0, 3.0, -3.0, 3.0};
    case ToyKind::two_moons:
      return {-1.6, 2.6, -1.1, 1.6};
  }
  return {0, 0, 0, 0};
}

std::vector<std::vector<int>> quantized_synthetic(int d, int n, Pcg64& rng,
                                                  double center_scale,
                                                  double sigma) {
  FM_CHECK(d >= 1 && d <= 8, ConfigError, "quantized_synthetic supports d in 1..8, got ",
           d);
  std::vector<std::vector<int>> out(n, std::vector<int>(d));
  for (int r = 0; r < n; ++r) {
    const double c = (rng.next_u64() & 1) ? center_scale : -center_scale;
    for (int j = 0; j < d; ++j) {
      const double y = c + sigma * rng.next_normal();
      const double pix = std::floor(std::ldexp(y + 1.0, 7));
      out[r][j] = static_cast<int>(std::clamp(pix, 0.0, 255.0));
    }
  }
  return out;
}

double quantized_synthetic_log_density(ConstSpan y, double center_scale,
                                       double sigma) {
  const auto d = static_cast<double>(y.size());
  double lp = -std::numeric_limits<double>::infinity();
  double lm = -std::numeric_limits<double>::infinity();
  const double lognorm = -0.5 * d * std::log(kTwoPi * sigma * sigma);
  double qp = 0.0, qm = 0.0;
  for (double v : y) {
    qp += (v - center_scale) * (v - center_scale);
    qm += (v + center_scale) * (v + center_scale);
  }
  lp = lognorm - 0.5 * qp / (sigma * sigma);
  lm = lognorm - 0.5 * qm / (sigma * sigma);
  const double m = std::max(lp, lm);
  return m + std::log(0.5 * std::exp(lp - m) + 0.5 * std::exp(lm - m));
}

void dump_csv(std::ostream& os, ToyKind kind, std::uint64_t seed,
              const Tensor& points) {
  os << "# kind=" << to_string(kind) << ",seed=" << seed << ",n=" << points.rows()
     << "\n";
  os << "x,y\n";
  os.precision(17);
  for (std::int64_t r = 0; r < points.rows(); ++r)
    os << points.at(r, 0) << "," << points.at(r, 1) << "\n";
}

Tensor load_csv(std::istream& is) {
  std::string line;
  std::vector<double> data;
  std::int64_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 'x') continue;
    std::istringstream ls(line);
    std::string cell;
    int cols = 0;
    while (std::getline(ls, cell, ',')) {
      data.push_back(std::stod(cell));
      ++cols;
    }
    FM_CHECK(cols == 2, ConfigError, "dataset CSV row ", rows, " has ", cols,
             " columns, expected 2");
    ++rows;
  }
  return Tensor({rows, 2}, std::move(data));
}

}  // namespace flowmatch
