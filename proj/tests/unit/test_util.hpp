#pragma once

#include <random>
#include <string>
#include <vector>

#include "kinrisk/data_model.hpp"

namespace testutil {

struct Row {
  double y;
  int delta;
  double p;
  std::vector<double> w{};
  std::vector<double> z{};
  double weight = 1.0;
};

inline kinrisk::Dataset make_data(const std::vector<Row>& rows, std::vector<std::string> w_names = {},
                                  std::vector<std::string> z_names = {}) {
  std::vector<kinrisk::RelativeRecord> recs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    kinrisk::RelativeRecord r;
    r.family_id = "F" + std::to_string(i / 2 + 1);
    r.relative_id = std::to_string(i + 1);
    r.y = rows[i].y;
    r.delta = rows[i].delta;
    r.config_probs = {rows[i].p};
    r.w = rows[i].w;
    r.z = rows[i].z;
    r.weight = rows[i].weight;
    recs.push_back(r);
  }
  return kinrisk::Dataset(std::move(recs), std::move(w_names), std::move(z_names));
}

// Small mixture dataset with one W and one Z covariate, random weights when
// `weighted`, drawn from a proportional hazards model.
inline kinrisk::Dataset random_mixture(std::mt19937_64& rng, std::size_t n, bool weighted, bool fully_genotyped = false) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double groups[] = {0.0, 0.02, 0.51, 1.0};
  std::vector<Row> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = fully_genotyped ? (u(rng) < 0.5 ? 0.0 : 1.0) : groups[static_cast<int>(u(rng) * 4) % 4];
    const int x = u(rng) < p ? 1 : 0;
    const double w = u(rng) < 0.5 ? 1.0 : 0.0;
    const double z = u(rng) < 0.5 ? 1.0 : 0.0;
    const double lp = 1.2 * x + 0.5 * w - 0.4 * z;
    const double t = 50.0 * std::pow(-std::log(u(rng)) / std::exp(lp), 1.0 / 3.0);
    const double c = 80.0 * u(rng) + 1.0;
    rows.push_back({std::min(t, c), t <= c ? 1 : 0, p, {w}, {z}, weighted ? 0.2 + 2.0 * u(rng) : 1.0});
  }
  // Guarantee at least one event and two carrier-probability groups.
  rows[0].delta = 1;
  if (!fully_genotyped) {
    rows[0].p = 0.51;
    rows[1].p = 0.02;
  } else {
    rows[0].p = 1.0;
    rows[1].p = 0.0;
  }
  return make_data(rows, {"w"}, {"z"});
}

}  // namespace testutil
